"""Identity-balanced, modality-balanced mini-batch construction.

Each batch draws P distinct train identities uniformly without replacement
and, for every identity, K grayscale-converted visible images and K
infrared images. Positions are paired: gray_images[i] and ir_images[i]
always share labels[i]. K=1 matches the one-image-per-modality regime; K=2
additionally provides same-modality positive pairs for the intra-modality
ranking term.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import ceil

import numpy as np

from .data import INFRARED, VISIBLE, load_pixels


@dataclass
class MiniBatch:
    gray_images: np.ndarray  # (P*K, H, W, 3) float32
    ir_images: np.ndarray  # (P*K, H, W, 3) float32
    labels: np.ndarray  # (P*K,) int64, shared by position across modalities


def draw_batch_indices(manifest, num_identities, rng, images_per_identity=1):
    """Pick record indices for one batch.

    Returns (gray_record_indices, ir_record_indices, labels), each of length
    num_identities * images_per_identity. Identities are drawn uniformly
    without replacement; images uniformly within each (identity, modality),
    without replacement when enough are available.
    """
    available = sorted(manifest.train_index)
    if num_identities > len(available):
        raise ValueError(
            f"batch wants {num_identities} identities but the train split has "
            f"only {len(available)}"
        )
    chosen = rng.choice(len(available), size=num_identities, replace=False)
    gray_idx, ir_idx, labels = [], [], []
    for c in chosen:
        ident = available[int(c)]
        by_mod = manifest.train_index[ident]
        for mod, sink in ((VISIBLE, gray_idx), (INFRARED, ir_idx)):
            pool = by_mod[mod]
            replace = len(pool) < images_per_identity
            picks = rng.choice(len(pool), size=images_per_identity, replace=replace)
            sink.extend(pool[int(p)] for p in picks)
        labels.extend([ident] * images_per_identity)
    return (
        np.asarray(gray_idx, dtype=np.int64),
        np.asarray(ir_idx, dtype=np.int64),
        np.asarray(labels, dtype=np.int64),
    )


class BatchSampler:
    """Stateful sampler owning its RNG and a cache of ingested pixels.

    Visible images are grayscale-converted once and cached (the conversion
    is deterministic); infrared images are cached as loaded.
    """

    def __init__(
        self,
        manifest,
        num_identities,
        rng,
        images_per_identity=1,
        image_size=None,
        convert_visible=True,
    ):
        self.manifest = manifest
        self.num_identities = num_identities
        self.images_per_identity = images_per_identity
        self.image_size = image_size
        self.convert_visible = convert_visible
        self.rng = rng
        self._cache = {}

    @property
    def batches_per_epoch(self):
        """One epoch covers the train split once in expectation."""
        per_batch = 2 * self.num_identities * self.images_per_identity
        return ceil(self.manifest.num_train_images / per_batch)

    def _pixels(self, record_index):
        if record_index not in self._cache:
            self._cache[record_index] = load_pixels(
                self.manifest.records[record_index],
                size=self.image_size,
                convert_visible=self.convert_visible,
            )
        return self._cache[record_index]

    def sample(self):
        gray_idx, ir_idx, labels = draw_batch_indices(
            self.manifest, self.num_identities, self.rng, self.images_per_identity
        )
        gray = np.stack([self._pixels(i) for i in gray_idx])
        ir = np.stack([self._pixels(i) for i in ir_idx])
        return MiniBatch(gray_images=gray, ir_images=ir, labels=labels)
