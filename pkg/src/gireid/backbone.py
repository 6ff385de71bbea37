"""Staged dual-path feature extractor.

The network is a sequence of stages. The first ``specific_stages`` are
duplicated, one copy per modality, to capture low-level spectrum-specific
patterns; the remaining stages are a single shared trunk holding one
parameter set used by both paths. Pooled trunk outputs are the re-id
features: they feed the ranking losses during training and retrieval at
test time.

Two variants satisfy the same contract: ``resnet50`` wraps a ResNet-50
(stem plus four residual layers, five stages, 2048-dim pooled features) and
``tiny`` is a four-stage plain convnet small enough for CPU-scale tests.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass

import torch
import torch.nn as nn

GRAY = "gray"
IR = "ir"


@dataclass
class StagedExtractorConfig:
    variant: str = "tiny"  # "tiny" or "resnet50"
    specific_stages: int = 2  # leading stages duplicated per modality
    embedding_dim: int = 96  # pooled feature width; 2048 for resnet50
    pretrained: bool = False  # resnet50 only; falls back to random init

    def __post_init__(self):
        if self.variant not in ("tiny", "resnet50"):
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.variant == "resnet50" and self.embedding_dim != 2048:
            self.embedding_dim = 2048
        if self.embedding_dim < 8:
            raise ValueError("embedding_dim must be >= 8")
        if not 0 <= self.specific_stages <= self.stage_count:
            raise ValueError(
                f"specific_stages must lie in [0, {self.stage_count}]"
            )

    @property
    def stage_count(self):
        return 5 if self.variant == "resnet50" else 4


def _tiny_stage(cin, cout, stride):
    return nn.Sequential(
        nn.Conv2d(cin, cout, 3, stride=stride, padding=1, bias=False),
        nn.BatchNorm2d(cout),
        nn.ReLU(inplace=True),
    )


def _tiny_stages(embedding_dim):
    chans = [embedding_dim // 8, embedding_dim // 4, embedding_dim // 2, embedding_dim]
    strides = [2, 2, 2, 1]
    stages = []
    cin = 3
    for cout, stride in zip(chans, strides):
        stages.append(_tiny_stage(cin, cout, stride))
        cin = cout
    return stages


def _resnet50_stages(pretrained):
    from torchvision.models import resnet50

    weights = None
    if pretrained:
        try:
            from torchvision.models import ResNet50_Weights

            weights = ResNet50_Weights.IMAGENET1K_V1
        except Exception:
            weights = None
    try:
        net = resnet50(weights=weights)
    except Exception:
        # weight download unavailable; fall back to random init
        net = resnet50(weights=None)
    stem = nn.Sequential(net.conv1, net.bn1, net.relu, net.maxpool)
    return [stem, net.layer1, net.layer2, net.layer3, net.layer4]


def global_average_pool(feature_map):
    """Mean over the spatial grid: (B, C, H, W) -> (B, C)."""
    return feature_map.mean(dim=(2, 3))


class DualPathExtractor(nn.Module):
    """Two modality-specific entry paths feeding one shared trunk.

    Parameter names start with ``gray_stages``, ``ir_stages``, or
    ``shared_stages`` so checkpoints identify which path owns each array.
    """

    def __init__(self, config):
        super().__init__()
        self.config = config
        if config.variant == "tiny":
            stages = _tiny_stages(config.embedding_dim)
        else:
            stages = _resnet50_stages(config.pretrained)
        split = config.specific_stages
        self.gray_stages = nn.ModuleList(stages[:split])
        self.ir_stages = nn.ModuleList(copy.deepcopy(m) for m in stages[:split])
        self.shared_stages = nn.ModuleList(stages[split:])

    @property
    def embedding_dim(self):
        return self.config.embedding_dim

    def _specific(self, x, modality):
        stages = self.gray_stages if modality == GRAY else self.ir_stages
        for stage in stages:
            x = stage(x)
        return x

    def feature_maps(self, gray=None, ir=None):
        """Run each modality through its own entry stages, then the shared
        trunk once. Returns maps ordered [gray; ir] along the batch axis."""
        parts = []
        if gray is not None:
            parts.append(self._specific(gray, GRAY))
        if ir is not None:
            parts.append(self._specific(ir, IR))
        if not parts:
            raise ValueError("at least one modality input is required")
        x = torch.cat(parts, dim=0) if len(parts) > 1 else parts[0]
        for stage in self.shared_stages:
            x = stage(x)
        return x

    def forward(self, gray=None, ir=None):
        """Pooled embeddings, shape (B, embedding_dim), ordered [gray; ir]."""
        return global_average_pool(self.feature_maps(gray=gray, ir=ir))

    def embed_single(self, images, modality):
        """Embeddings for one modality (evaluation path)."""
        if modality == GRAY:
            return self.forward(gray=images)
        return self.forward(ir=images)
