"""Grayscale-spectrum conversion for visible images.

Visible (RGB) training images are replaced by their luminance renderings so
that both input streams look like single-spectrum intensity images. The
conversion is deterministic, so it runs once at ingestion time; the result
is re-expanded to three identical channels to keep the network input layout
uniform across modalities.
"""

import numpy as np

# BT.601 luma weights for the R, G, B channels.
LUMA_RED = 0.299
LUMA_GREEN = 0.587
LUMA_BLUE = 0.114


def value_range(pixels):
    """Declared intensity range of an image array.

    Integer arrays carry 8-bit style values in [0, 255]; floating arrays are
    normalized to [0, 1].
    """
    if np.issubdtype(pixels.dtype, np.integer):
        return 0, 255
    return 0.0, 1.0


def _check_range(pixels):
    lo, hi = value_range(pixels)
    if pixels.size and (pixels.min() < lo or pixels.max() > hi):
        raise ValueError(
            f"pixel values outside declared range [{lo}, {hi}] for dtype {pixels.dtype}"
        )


def to_grayscale(image, integer_output=False):
    """Convert an H x W x 3 image to a single-channel H x W x 1 luminance image.

    Each pixel becomes 0.299 R + 0.587 G + 0.114 B. The expression is
    evaluated as R + 0.587 (G - R) + 0.114 (B - R), which is algebraically
    identical but makes gray pixels (R = G = B) exact fixed points in
    floating point.

    Float mode (default) returns float64 values. ``integer_output`` is only
    valid for integer inputs and quantizes with round-half-up.
    """
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"expected an H x W x 3 image, got shape {image.shape}")
    _check_range(image)
    r = image[..., 0].astype(np.float64)
    g = image[..., 1].astype(np.float64)
    b = image[..., 2].astype(np.float64)
    gray = r + LUMA_GREEN * (g - r) + LUMA_BLUE * (b - r)
    gray = gray[..., np.newaxis]
    if integer_output:
        if not np.issubdtype(image.dtype, np.integer):
            raise ValueError("integer output requires an integer-valued input image")
        return np.floor(gray + 0.5).astype(image.dtype)
    return gray


def expand_channels(image):
    """Copy a single-channel image into three identical channels.

    Accepts H x W or H x W x 1 arrays and returns H x W x 3 with every
    channel equal to the input.
    """
    image = np.asarray(image)
    if image.ndim == 2:
        image = image[..., np.newaxis]
    if image.ndim != 3 or image.shape[2] != 1:
        raise ValueError(f"expected a single-channel image, got shape {image.shape}")
    _check_range(image)
    return np.repeat(image, 3, axis=2)


def visible_to_network_input(image):
    """Full ingestion path for a visible image: luminance then channel copy."""
    return expand_channels(to_grayscale(image))
