"""sRGB <-> CIELAB conversion with channels rescaled to the unit interval.

All tiles in the corpus and every tensor fed to the networks use the scaled
encoding (L/100, (a+128)/255, (b+128)/255), which keeps each channel inside
[0, 1] for any in-gamut sRGB input.
"""
from __future__ import annotations

import numpy as np

# sRGB (D65, 2deg observer) primaries -> XYZ, and the D65 white point.
_RGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
_XYZ_TO_RGB = np.linalg.inv(_RGB_TO_XYZ)
# White point taken from the matrix's own row sums (= matrix @ [1,1,1]) so
# pure white lands exactly on L=100 with neutral chroma and the scaled
# channels never leave [0, 1].
_WHITE = _RGB_TO_XYZ.sum(axis=1)

# CIE f() transition point and linear-branch slope, delta = 6/29.
_DELTA3 = (6.0 / 29.0) ** 3
_LIN_SLOPE = (29.0 / 6.0) ** 2 / 3.0


def _check_3ch(pixels: np.ndarray) -> None:
    if pixels.ndim != 3 or pixels.shape[2] != 3:
        raise ValueError(f"expected an HxWx3 array, got shape {pixels.shape!r}")


def rgb_to_lab(pixels: np.ndarray) -> np.ndarray:
    """Convert H x W x 3 sRGB (0-255) to unit-scaled LAB (float64 in [0, 1])."""
    _check_3ch(pixels)
    rgb = np.asarray(pixels, dtype=np.float64) / 255.0

    lin = np.where(rgb > 0.04045, ((rgb + 0.055) / 1.055) ** 2.4, rgb / 12.92)
    xyz = lin @ _RGB_TO_XYZ.T
    t = xyz / _WHITE
    f = np.where(t > _DELTA3, np.cbrt(t), _LIN_SLOPE * t + 4.0 / 29.0)

    lum = 116.0 * f[..., 1] - 16.0
    a = 500.0 * (f[..., 0] - f[..., 1])
    b = 200.0 * (f[..., 1] - f[..., 2])
    return np.stack([lum / 100.0, (a + 128.0) / 255.0, (b + 128.0) / 255.0], axis=-1)


def lab_to_rgb(pixels: np.ndarray) -> np.ndarray:
    """Invert :func:`rgb_to_lab`; out-of-gamut values are clamped to [0, 255].

    Zero lightness decodes to black regardless of the chroma channels: no
    in-gamut color has L = 0 with non-neutral chroma, and a zero tensor should
    render as black rather than as the gamut-clipped blue the raw math yields.
    """
    _check_3ch(pixels)
    lab = np.asarray(pixels, dtype=np.float64)

    lum = lab[..., 0] * 100.0
    a = lab[..., 1] * 255.0 - 128.0
    b = lab[..., 2] * 255.0 - 128.0

    fy = (lum + 16.0) / 116.0
    fx = fy + a / 500.0
    fz = fy - b / 200.0
    f = np.stack([fx, fy, fz], axis=-1)
    t = np.where(f > 6.0 / 29.0, f**3, (f - 4.0 / 29.0) / _LIN_SLOPE)
    xyz = t * _WHITE

    lin = xyz @ _XYZ_TO_RGB.T
    lin = np.where(lum[..., None] <= 0.0, 0.0, lin)
    rgb = np.where(lin > 0.0031308, 1.055 * np.clip(lin, 0.0, None) ** (1.0 / 2.4) - 0.055, 12.92 * lin)
    return np.clip(np.round(rgb * 255.0), 0.0, 255.0).astype(np.uint8)
