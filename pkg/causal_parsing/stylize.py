"""Deterministic appearance filters for the three render styles.

Every filter maps a flat-shaded base render (H x W x 3 floats in [0, 1]) to
a styled image of the same shape and range. Filters never look at labels,
so geometry is identical across styles by construction.
"""

from __future__ import annotations

import cv2
import numpy as np
from numpy.typing import NDArray

from .const import DEFAULT_NOISE_STD, STYLE_CARTOON, STYLE_NATURAL, STYLE_SKETCH, STYLES

FloatImage = NDArray[np.float32]

_CARTOON_LEVELS = 4
_CARTOON_SATURATION = 1.6
_SKETCH_BLUR_KSIZE = 21


def to_uint8(image: FloatImage) -> NDArray[np.uint8]:
    """Convert a float image in [0, 1] to uint8 with rounding."""
    return np.clip(np.rint(image * 255.0), 0, 255).astype(np.uint8)


def to_float(image: NDArray[np.uint8]) -> FloatImage:
    """Convert a uint8 image to float32 in [0, 1]."""
    return image.astype(np.float32) / 255.0


def quantize(image: FloatImage) -> FloatImage:
    """Snap a float image to the 8-bit grid of saved PNGs."""
    return to_float(to_uint8(image))


def render_natural(base: FloatImage, seed: int, noise_std: float = DEFAULT_NOISE_STD) -> FloatImage:
    """Filled colors plus seeded Gaussian pixel noise."""
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, noise_std, size=base.shape).astype(np.float32)
    return np.clip(base + noise, 0.0, 1.0).astype(np.float32)


def render_cartoon(base: FloatImage) -> FloatImage:
    """Color quantization, boosted saturation and dark outlines."""
    img = to_uint8(base)
    img = cv2.bilateralFilter(img, 5, 40, 5)

    hsv = cv2.cvtColor(img, cv2.COLOR_RGB2HSV).astype(np.float32)
    hsv[..., 1] = np.clip(hsv[..., 1] * _CARTOON_SATURATION, 0, 255)
    img = cv2.cvtColor(hsv.astype(np.uint8), cv2.COLOR_HSV2RGB)

    step = 256 // _CARTOON_LEVELS
    img = (img // step) * step + step // 2

    gray = cv2.cvtColor(to_uint8(base), cv2.COLOR_RGB2GRAY)
    edges = cv2.Canny(gray, 20, 60)
    edges = cv2.dilate(edges, np.ones((2, 2), np.uint8))
    img[edges > 0] = 20
    return to_float(img)


def render_sketch(base: FloatImage) -> FloatImage:
    """Pencil-sketch edge map on white (color dodge of the inverted blur)."""
    gray = cv2.cvtColor(to_uint8(base), cv2.COLOR_RGB2GRAY)
    inverted = 255 - gray
    blurred = cv2.GaussianBlur(inverted, (_SKETCH_BLUR_KSIZE, _SKETCH_BLUR_KSIZE), 0)
    sketch = cv2.divide(gray, 255 - blurred, scale=256)

    edges = cv2.Canny(gray, 20, 60)
    sketch[edges > 0] = np.minimum(sketch[edges > 0], 60)
    return to_float(np.repeat(sketch[..., None], 3, axis=2))


def stylize(base: FloatImage, style: str, seed: int) -> FloatImage:
    """Apply the filter for ``style`` to a base render."""
    if style == STYLE_NATURAL:
        return render_natural(base, seed)
    if style == STYLE_CARTOON:
        return render_cartoon(base)
    if style == STYLE_SKETCH:
        return render_sketch(base)
    raise ValueError(f"Unknown style '{style}', expected one of {STYLES}")
