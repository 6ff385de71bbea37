"""Dataset manifests, synthetic desk-scale data, and training augmentation.

A dataset is described by a CSV manifest with header
``path,identity,modality,camera,split``. Identities are re-indexed to
contiguous labels at load time, with train-split identities occupying
0..C-1 so they can drive the classifier head directly.

The synthetic generator renders per-identity blob/stripe patterns whose
geometry (not color) carries the identity signal, so the signal survives
grayscale conversion. Visible renderings are colored; infrared renderings
are the luminance of the same pattern, shifted by a configurable spectrum
gap and perturbed with noise.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .grayscale import to_grayscale, visible_to_network_input

VISIBLE = "visible"
INFRARED = "infrared"
MODALITIES = (VISIBLE, INFRARED)
SPLITS = ("train", "query", "gallery")
MANIFEST_COLUMNS = ("path", "identity", "modality", "camera", "split")


@dataclass
class ImageRecord:
    """One sample: pixel source, identity label, modality and camera tags."""

    source: object  # Path to an image file, or an in-memory H x W x 3 float array
    identity: int  # contiguous label assigned at load time
    modality: str
    camera: int
    split: str
    raw_identity: int  # label as given by the manifest / generator

    def key(self):
        src = str(self.source) if isinstance(self.source, (str, Path)) else "<buffer>"
        return (src, self.raw_identity, self.modality, self.camera, self.split)


@dataclass
class DatasetManifest:
    records: list[ImageRecord]
    num_identities: int  # distinct identities in the train split
    # identity -> modality -> indices into records (train split only)
    train_index: dict[int, dict[str, list[int]]] = field(default_factory=dict)

    def split_records(self, split, modality=None):
        out = [
            (i, r)
            for i, r in enumerate(self.records)
            if r.split == split and (modality is None or r.modality == modality)
        ]
        return out

    @property
    def num_train_images(self):
        return sum(1 for r in self.records if r.split == "train")


def _build_index(records):
    index = {}
    for i, rec in enumerate(records):
        if rec.split != "train":
            continue
        index.setdefault(rec.identity, {VISIBLE: [], INFRARED: []})[rec.modality].append(i)
    return index


def _validate_and_index(records):
    if not records:
        raise ValueError("no records")
    train_ids = sorted({r.raw_identity for r in records if r.split == "train"})
    other_ids = sorted({r.raw_identity for r in records} - set(train_ids))
    relabel = {raw: i for i, raw in enumerate(train_ids + other_ids)}
    for rec in records:
        rec.identity = relabel[rec.raw_identity]
    index = _build_index(records)
    for ident, by_mod in sorted(index.items()):
        for mod in MODALITIES:
            if not by_mod[mod]:
                raw = next(r.raw_identity for r in records if r.identity == ident)
                raise ValueError(
                    f"identity {raw} has no {mod} images in the train split"
                )
    return DatasetManifest(records=records, num_identities=len(train_ids), train_index=index)


def load_manifest(source):
    """Parse and validate a CSV manifest.

    Every train identity must own at least one image in each modality;
    violations are reported with the offending identity, malformed rows with
    their row index.
    """
    source = Path(source)
    if not source.exists():
        raise FileNotFoundError(f"manifest not found: {source}")
    records = []
    with open(source, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ValueError("no records")
        missing = set(MANIFEST_COLUMNS) - set(reader.fieldnames)
        if missing:
            raise ValueError(f"manifest missing columns: {sorted(missing)}")
        for row_idx, row in enumerate(reader):
            try:
                identity = int(row["identity"])
                camera = int(row["camera"])
                modality = row["modality"].strip()
                split = row["split"].strip()
                path = row["path"].strip()
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"malformed manifest row {row_idx}: {row}") from exc
            if identity < 0:
                raise ValueError(f"row {row_idx}: negative identity {identity}")
            if modality not in MODALITIES:
                raise ValueError(f"row {row_idx}: unknown modality {modality!r}")
            if split not in SPLITS:
                raise ValueError(f"row {row_idx}: unknown split {split!r}")
            records.append(
                ImageRecord(
                    source=source.parent / path,
                    identity=-1,
                    modality=modality,
                    camera=camera,
                    split=split,
                    raw_identity=identity,
                )
            )
    return _validate_and_index(records)


def save_manifest(manifest, path):
    """Write a manifest back to CSV. Paths are stored relative to the CSV."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_COLUMNS)
        for rec in manifest.records:
            if not isinstance(rec.source, (str, Path)):
                raise ValueError("cannot save a manifest with in-memory image buffers")
            src = Path(rec.source)
            try:
                rel = src.relative_to(path.parent)
            except ValueError:
                rel = src
            writer.writerow([rel.as_posix(), rec.raw_identity, rec.modality, rec.camera, rec.split])


# ---------------------------------------------------------------------------
# Synthetic data
# ---------------------------------------------------------------------------


@dataclass
class SyntheticSpec:
    """Parameters of the synthetic desk-scale dataset."""

    num_identities: int
    images_per_identity_per_modality: int
    image_size: tuple[int, int] = (32, 16)  # (H, W)
    seed: int = 0
    modality_shift: float = 0.1  # intensity offset between spectra
    noise_std: float = 0.02

    def validate(self):
        if self.num_identities < 1 or self.images_per_identity_per_modality < 1:
            raise ValueError("counts must be >= 1")
        if self.image_size[0] < 8 or self.image_size[1] < 8:
            raise ValueError("image size must be at least 8 x 8")


def _identity_pattern(rng, height, width):
    """Random colored stripes and blocks; geometry is the identity signal."""
    base = np.full((height, width, 3), rng.uniform(0.05, 0.15), dtype=np.float64)
    for _ in range(3):
        color = rng.uniform(0.15, 0.85, size=3)
        if rng.random() < 0.5:
            y = rng.integers(0, height)
            h = int(rng.integers(2, max(3, height // 4)))
            base[y : y + h, :, :] = color
        else:
            x = rng.integers(0, width)
            w = int(rng.integers(2, max(3, width // 4)))
            base[:, x : x + w, :] = color
    for _ in range(2):
        color = rng.uniform(0.15, 0.85, size=3)
        y = rng.integers(0, max(1, height - 4))
        x = rng.integers(0, max(1, width - 4))
        bh = int(rng.integers(3, max(4, height // 3)))
        bw = int(rng.integers(3, max(4, width // 3)))
        base[y : y + bh, x : x + bw, :] = color
    return base


def _jittered(pattern, shift_y, shift_x, gain):
    out = np.roll(pattern, (shift_y, shift_x), axis=(0, 1)) * gain
    return np.clip(out, 0.0, 1.0)


def generate_synthetic(spec):
    """Build an in-memory manifest of rendered synthetic images.

    Deterministic for a fixed seed. Visible image k and infrared image k of
    an identity share the same geometric jitter, so with zero modality shift
    they differ only by rendering (color vs luminance) and noise. Image
    buffers are float32 H x W x 3 in [0, 1].

    Per identity and modality the last two images go to the query and
    gallery splits (both modalities in each, so either query direction can
    run); the rest are train. With fewer than three images everything is
    train.
    """
    spec.validate()
    height, width = spec.image_size
    records = []
    for ident in range(spec.num_identities):
        pattern_rng = np.random.default_rng([spec.seed, ident])
        pattern = _identity_pattern(pattern_rng, height, width)
        for k in range(spec.images_per_identity_per_modality):
            img_rng = np.random.default_rng([spec.seed, ident, k])
            shift_y = int(img_rng.integers(-2, 3))
            shift_x = int(img_rng.integers(-2, 3))
            gain = img_rng.uniform(0.9, 1.1)
            colored = _jittered(pattern, shift_y, shift_x, gain)

            gray3 = visible_to_network_input(colored)
            noise = img_rng.normal(0.0, spec.noise_std, size=gray3.shape)
            infrared = np.clip(gray3 + spec.modality_shift + noise, 0.0, 1.0)

            if spec.images_per_identity_per_modality >= 3:
                split = {
                    spec.images_per_identity_per_modality - 2: "query",
                    spec.images_per_identity_per_modality - 1: "gallery",
                }.get(k, "train")
            else:
                split = "train"
            for modality, pixels in ((VISIBLE, colored), (INFRARED, infrared)):
                camera = (0 if modality == VISIBLE else 2) + k % 2
                records.append(
                    ImageRecord(
                        source=pixels.astype(np.float32),
                        identity=-1,
                        modality=modality,
                        camera=camera,
                        split=split,
                        raw_identity=ident,
                    )
                )
    return _validate_and_index(records)


def write_synthetic_dataset(spec, out_dir):
    """Render a synthetic dataset to PNG files plus a manifest.csv."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = generate_synthetic(spec)
    for i, rec in enumerate(manifest.records):
        name = f"{rec.raw_identity:04d}_{rec.modality}_{i:05d}.png"
        path = out_dir / name
        as_u8 = np.floor(np.asarray(rec.source) * 255.0 + 0.5).astype(np.uint8)
        Image.fromarray(as_u8).save(path)
        rec.source = path
    save_manifest(manifest, out_dir / "manifest.csv")
    return out_dir / "manifest.csv"


# ---------------------------------------------------------------------------
# Pixel access and augmentation
# ---------------------------------------------------------------------------


def load_pixels(record, size=None, convert_visible=True):
    """Materialize a record as float32 H x W x 3 in [0, 1].

    Visible images are grayscale-converted (then channel-expanded) unless
    ``convert_visible`` is off; single-channel infrared files are channel
    expanded. ``size`` is (H, W); file images are resized bilinearly.
    """
    if isinstance(record.source, (str, Path)):
        img = Image.open(record.source).convert("RGB")
        if size is not None and (img.height, img.width) != tuple(size):
            img = img.resize((size[1], size[0]), Image.BILINEAR)
        pixels = np.asarray(img, dtype=np.float32) / 255.0
    else:
        pixels = np.asarray(record.source, dtype=np.float32)
        if pixels.ndim == 2 or pixels.shape[2] == 1:
            pixels = np.repeat(pixels.reshape(*pixels.shape[:2], 1), 3, axis=2)
        if size is not None and pixels.shape[:2] != tuple(size):
            img = Image.fromarray(np.floor(pixels * 255.0 + 0.5).astype(np.uint8))
            img = img.resize((size[1], size[0]), Image.BILINEAR)
            pixels = np.asarray(img, dtype=np.float32) / 255.0
    if convert_visible and record.modality == VISIBLE:
        pixels = visible_to_network_input(pixels).astype(np.float32)
    return pixels


def augment_train(image, rng, flip_prob=0.5, pad=10, crop_size=None):
    """Training augmentation: random horizontal flip, then a random crop
    from a zero-padded canvas back to the crop size.

    Draw order is fixed: one uniform draw decides the flip, then two integer
    draws pick the crop offsets (top, left) in [0, 2*pad]. Output shape
    equals ``crop_size`` (default: input shape).
    """
    image = np.asarray(image)
    if image.ndim != 3:
        raise ValueError(f"expected H x W x C image, got shape {image.shape}")
    height, width = image.shape[:2]
    if crop_size is None:
        crop_size = (height, width)
    crop_h, crop_w = crop_size
    if pad < 0:
        raise ValueError("pad must be >= 0")
    if crop_h > height + 2 * pad or crop_w > width + 2 * pad:
        raise ValueError(
            f"crop window {crop_size} exceeds padded image "
            f"({height + 2 * pad}, {width + 2 * pad})"
        )
    if rng.random() < flip_prob:
        image = image[:, ::-1, :]
    padded = np.zeros((height + 2 * pad, width + 2 * pad, image.shape[2]), dtype=image.dtype)
    padded[pad : pad + height, pad : pad + width, :] = image
    top = int(rng.integers(0, height + 2 * pad - crop_h + 1))
    left = int(rng.integers(0, width + 2 * pad - crop_w + 1))
    return padded[top : top + crop_h, left : left + crop_w, :].copy()
