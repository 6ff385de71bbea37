"""Identity embedding head: projection, common-space batch norm, bias-free
classifier.

Both modalities pass through one shared head. The projection (a full linear
layer with bias) realigns the pooled features into a common subspace; the
batch norm recalibrates them to zero mean and unit variance per channel
before the classifier. The norm keeps a learnable per-channel scale; its
shift parameter is registered (so it serializes alongside the scale) but is
dislodged from the emitted embedding, which is scale times the normalized
vector only.

The classifier layer carries no bias, so logits are pure dot products
between embeddings and per-class weight rows.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F


class IdentityHead(nn.Module):
    def __init__(self, feature_dim, num_classes, momentum=0.1):
        super().__init__()
        self.projection = nn.Linear(feature_dim, feature_dim)
        self.common_bn = nn.BatchNorm1d(feature_dim, momentum=momentum, affine=False)
        self.bn_scale = nn.Parameter(torch.ones(feature_dim))
        self.bn_shift = nn.Parameter(torch.zeros(feature_dim))  # excluded from the output
        self.classifier = nn.Linear(feature_dim, num_classes, bias=False)
        nn.init.normal_(self.classifier.weight, std=feature_dim ** -0.5)

    @property
    def num_classes(self):
        return self.classifier.out_features

    def project(self, features):
        return self.projection(features)

    def normalize(self, projected):
        """Batch norm in the common space: scale times the standardized input.

        Training mode uses batch statistics (and updates the running
        estimates); a single-sample batch is rejected because its variance
        is undefined. Eval mode uses running statistics only, so outputs do
        not depend on batch composition.
        """
        if self.training and projected.shape[0] < 2:
            raise ValueError("common-space batch norm needs batch size >= 2 in train mode")
        return self.bn_scale * self.common_bn(projected)

    def classify(self, post_bn):
        return self.classifier(post_bn)

    def embed(self, features):
        """Post-norm embedding (the view the classifier sees)."""
        return self.normalize(self.project(features))

    def forward(self, features):
        return self.classify(self.embed(features))


def identity_loss(logits, labels, per_modality_count=None):
    """Cross-entropy over both modality sets, normalized by the per-modality
    sample count (half the batch for balanced batches)."""
    if labels.min() < 0 or labels.max() >= logits.shape[1]:
        raise ValueError(
            f"labels must lie in [0, {logits.shape[1]}), got "
            f"[{labels.min().item()}, {labels.max().item()}]"
        )
    if per_modality_count is None:
        if logits.shape[0] % 2:
            raise ValueError("odd batch: pass per_modality_count explicitly")
        per_modality_count = logits.shape[0] // 2
    return F.cross_entropy(logits, labels, reduction="sum") / per_modality_count
