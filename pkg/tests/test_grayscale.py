import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gireid import expand_channels, to_grayscale
from oracles import luminance


def pixel(r, g, b, dtype=np.float64):
    return np.array([[[r, g, b]]], dtype=dtype)


def test_white_is_fixed_point():
    assert to_grayscale(pixel(255, 0, 0, np.uint8) * 0 + 255)[0, 0, 0] == 255.0


def test_black_maps_to_zero():
    assert to_grayscale(pixel(0, 0, 0, np.uint8))[0, 0, 0] == 0.0


def test_pure_red():
    assert to_grayscale(pixel(255, 0, 0, np.uint8))[0, 0, 0] == pytest.approx(76.245, abs=1e-9)


def test_gray_input_is_identity():
    assert to_grayscale(pixel(100, 100, 100, np.uint8))[0, 0, 0] == 100.0


def test_matches_direct_formula():
    rng = np.random.default_rng(0)
    img = rng.integers(0, 256, size=(17, 13, 3)).astype(np.uint8)
    got = to_grayscale(img)
    for i in range(17):
        for j in range(13):
            r, g, b = (int(v) for v in img[i, j])
            assert got[i, j, 0] == pytest.approx(luminance(r, g, b), abs=1e-6)


def test_integer_output_rounds_half_up():
    # 76.245 -> 76; construct a .5 case: (0.299*5 + 0.587*0 + 0.114*0) = 1.495
    assert to_grayscale(pixel(255, 0, 0, np.uint8), integer_output=True)[0, 0, 0] == 76
    # 0.299*50 = 14.95 -> 15
    assert to_grayscale(pixel(50, 0, 0, np.uint8), integer_output=True)[0, 0, 0] == 15
    assert to_grayscale(pixel(50, 0, 0, np.uint8), integer_output=True).dtype == np.uint8


def test_integer_output_rejects_float_input():
    with pytest.raises(ValueError):
        to_grayscale(pixel(0.5, 0.5, 0.5), integer_output=True)


def test_wrong_channel_count_rejected():
    with pytest.raises(ValueError):
        to_grayscale(np.zeros((4, 4, 1)))
    with pytest.raises(ValueError):
        to_grayscale(np.zeros((4, 4)))


def test_out_of_range_rejected():
    with pytest.raises(ValueError):
        to_grayscale(pixel(1.5, 0.0, 0.0))
    with pytest.raises(ValueError):
        to_grayscale(pixel(-1, 0, 0, np.int32))


def test_expand_channels_copies():
    img = np.full((3, 2, 1), 42, dtype=np.uint8)
    out = expand_channels(img)
    assert out.shape == (3, 2, 3)
    assert (out == 42).all()


def test_expand_channels_zero():
    out = expand_channels(np.zeros((5, 4, 1)))
    assert out.shape == (5, 4, 3)
    assert (out == 0).all()


def test_expand_channels_rejects_multichannel():
    with pytest.raises(ValueError):
        expand_channels(np.zeros((4, 4, 3)))


def test_round_trip_is_exact():
    rng = np.random.default_rng(1)
    g = rng.random((20, 10, 1))
    assert np.array_equal(to_grayscale(expand_channels(g)), g)


@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
def test_range_preserved(r, g, b):
    out = to_grayscale(pixel(r, g, b))[0, 0, 0]
    assert 0.0 <= out <= 1.0


@given(
    st.floats(0, 1), st.floats(0, 1), st.floats(0, 1),
    st.floats(0, 1), st.sampled_from([0, 1, 2]),
)
@settings(max_examples=200)
def test_monotone_in_each_channel(r, g, b, bump_to, channel):
    base = [r, g, b]
    bumped = list(base)
    bumped[channel] = max(base[channel], bump_to)
    lo = to_grayscale(pixel(*base))[0, 0, 0]
    hi = to_grayscale(pixel(*bumped))[0, 0, 0]
    assert hi >= lo


def test_deterministic():
    rng = np.random.default_rng(2)
    img = rng.random((8, 8, 3))
    assert np.array_equal(to_grayscale(img), to_grayscale(img))
