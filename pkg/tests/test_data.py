import numpy as np
import pytest

from gireid import (
    SyntheticSpec,
    augment_train,
    generate_synthetic,
    load_manifest,
    save_manifest,
    to_grayscale,
    write_synthetic_dataset,
)
from gireid.data import VISIBLE, INFRARED, load_pixels


def write_csv(path, rows):
    lines = ["path,identity,modality,camera,split"] + rows
    path.write_text("\n".join(lines) + "\n")
    return path


def test_load_small_manifest(tmp_path):
    rows = []
    for ident in (0, 1):
        for mod in (VISIBLE, INFRARED):
            for k in (0, 1):
                rows.append(f"img_{ident}_{mod}_{k}.png,{ident},{mod},{k},train")
    m = load_manifest(write_csv(tmp_path / "m.csv", rows))
    assert m.num_identities == 2
    assert len(m.records) == 8


def test_missing_modality_names_identity(tmp_path):
    rows = [
        f"a.png,5,visible,0,train",
        f"b.png,5,visible,1,train",
        f"c.png,6,visible,0,train",
        f"d.png,6,infrared,2,train",
    ]
    with pytest.raises(ValueError, match="identity 5"):
        load_manifest(write_csv(tmp_path / "m.csv", rows))


def test_empty_manifest(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text("path,identity,modality,camera,split\n")
    with pytest.raises(ValueError, match="no records"):
        load_manifest(path)


def test_missing_file():
    with pytest.raises(FileNotFoundError):
        load_manifest("/nonexistent/manifest.csv")


def test_malformed_row_reports_index(tmp_path):
    rows = [
        "a.png,0,visible,0,train",
        "b.png,0,infrared,0,train",
        "c.png,notanint,visible,0,train",
    ]
    with pytest.raises(ValueError, match="row 2"):
        load_manifest(write_csv(tmp_path / "m.csv", rows))


def test_identity_reindexing_contiguous(tmp_path):
    rows = []
    for ident in (17, 3, 42):
        rows.append(f"v{ident}.png,{ident},visible,0,train")
        rows.append(f"i{ident}.png,{ident},infrared,2,train")
    m = load_manifest(write_csv(tmp_path / "m.csv", rows))
    assert sorted({r.identity for r in m.records}) == [0, 1, 2]
    assert m.num_identities == 3


def test_manifest_round_trip(tmp_path):
    spec = SyntheticSpec(num_identities=3, images_per_identity_per_modality=4, seed=5)
    csv_path = write_synthetic_dataset(spec, tmp_path / "ds")
    m1 = load_manifest(csv_path)
    save_manifest(m1, tmp_path / "copy.csv")
    m2 = load_manifest(tmp_path / "copy.csv")
    assert [r.key() for r in m1.records] == [r.key() for r in m2.records]
    assert m1.num_identities == m2.num_identities


def test_synthetic_counts():
    spec = SyntheticSpec(num_identities=8, images_per_identity_per_modality=8,
                         image_size=(32, 16), seed=7)
    m = generate_synthetic(spec)
    assert len(m.records) == 8 * 8 * 2
    assert m.num_identities == 8
    # per identity and modality: last two images are query/gallery
    assert m.num_train_images == 8 * 6 * 2


def test_synthetic_deterministic():
    spec = SyntheticSpec(num_identities=4, images_per_identity_per_modality=3, seed=11)
    m1 = generate_synthetic(spec)
    m2 = generate_synthetic(spec)
    for r1, r2 in zip(m1.records, m2.records):
        assert np.array_equal(np.asarray(r1.source), np.asarray(r2.source))
        assert r1.key() == r2.key()


def test_synthetic_seed_changes_pixels():
    base = dict(num_identities=4, images_per_identity_per_modality=3)
    m1 = generate_synthetic(SyntheticSpec(seed=1, **base))
    m2 = generate_synthetic(SyntheticSpec(seed=2, **base))
    assert not np.array_equal(np.asarray(m1.records[0].source), np.asarray(m2.records[0].source))


def test_zero_modality_shift_leaves_only_noise():
    noise_std = 0.02
    spec = SyntheticSpec(
        num_identities=4, images_per_identity_per_modality=4,
        seed=3, modality_shift=0.0, noise_std=noise_std,
    )
    m = generate_synthetic(spec)
    by_key = {}
    for r in m.records:
        by_key.setdefault((r.raw_identity, r.modality), []).append(np.asarray(r.source))
    for ident in range(4):
        vis = by_key[(ident, VISIBLE)]
        ir = by_key[(ident, INFRARED)]
        for v, t in zip(vis, ir):
            gray = np.repeat(to_grayscale(v.astype(np.float64)), 3, axis=2)
            diff = np.abs(gray - t).mean()
            # mean |N(0, s)| is about 0.8 s; allow clipping slack
            assert 0.2 * noise_std < diff < 3 * noise_std


def test_pixels_in_range(toy_manifest):
    for r in toy_manifest.records[:16]:
        px = np.asarray(r.source)
        assert px.min() >= 0.0 and px.max() <= 1.0
        assert px.shape == (32, 16, 3)


def test_load_pixels_converts_visible(toy_manifest):
    rec = next(r for r in toy_manifest.records if r.modality == VISIBLE)
    px = load_pixels(rec)
    assert px.shape == (32, 16, 3)
    # all three channels equal after conversion
    assert np.allclose(px[..., 0], px[..., 1]) and np.allclose(px[..., 1], px[..., 2])
    raw = load_pixels(rec, convert_visible=False)
    assert not np.allclose(raw[..., 0], raw[..., 1])


class ForcedRng:
    """Stub random stream with scripted flip and offset draws."""

    def __init__(self, uniform, ints):
        self._uniform = uniform
        self._ints = list(ints)

    def random(self):
        return self._uniform

    def integers(self, low, high):
        return self._ints.pop(0)


def test_augment_identity_when_neutral():
    img = np.random.default_rng(0).random((32, 16, 3)).astype(np.float32)
    out = augment_train(img, ForcedRng(0.9, [10, 10]), pad=10)  # no flip, centered
    assert np.array_equal(out, img)


def test_augment_flip_mirrors_columns():
    img = np.random.default_rng(1).random((8, 6, 3)).astype(np.float32)
    out = augment_train(img, ForcedRng(0.0, [4, 4]), pad=4)  # flip, centered
    assert np.array_equal(out, img[:, ::-1, :])


def test_augment_preserves_shape_and_range():
    rng = np.random.default_rng(2)
    img = rng.random((32, 16, 3)).astype(np.float32)
    for _ in range(20):
        out = augment_train(img, rng)
        assert out.shape == img.shape
        assert out.min() >= 0.0 and out.max() <= 1.0


def test_augment_flip_frequency():
    rng = np.random.default_rng(3)
    img = np.zeros((8, 8, 3), dtype=np.float32)
    img[:, 0, 0] = 1.0  # marker column
    flips = 0
    n = 10_000
    for _ in range(n):
        out = augment_train(img, rng, pad=0)
        flips += bool(out[:, -1, 0].any())
    assert abs(flips / n - 0.5) < 0.02


def test_augment_rejects_oversized_crop():
    img = np.zeros((8, 8, 3), dtype=np.float32)
    with pytest.raises(ValueError):
        augment_train(img, np.random.default_rng(0), pad=1, crop_size=(16, 16))


def test_spec_validation():
    with pytest.raises(ValueError):
        SyntheticSpec(num_identities=0, images_per_identity_per_modality=1).validate()
    with pytest.raises(ValueError):
        SyntheticSpec(num_identities=1, images_per_identity_per_modality=1,
                      image_size=(4, 4)).validate()
