"""Image containers and elementary image operations.

Images are float64 numpy arrays in planar layout, shape ``(channels, height,
width)``.  Raw Bayer mosaics are 2-D arrays ``(height, width)`` with a fixed
RGGB phase: the top-left pixel is red.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy import ndimage

from .errors import ConfigError

RED, GREEN, BLUE = 0, 1, 2

# channel index at (row % 2, col % 2) for the RGGB pattern
_RGGB = np.array([[RED, GREEN], [GREEN, BLUE]])


@dataclass
class BayerFrame:
    """A single raw frame of a burst.

    ``noise`` is an optional ``(shot_gain, read_variance)`` pair describing the
    heteroscedastic noise the frame was captured (or synthesized) with.
    """

    data: np.ndarray
    pattern: str = "RGGB"
    noise: Optional[Tuple[float, float]] = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2:
            raise ConfigError(f"Bayer frame must be 2-D, got shape {self.data.shape}")
        h, w = self.data.shape
        if h % 2 or w % 2:
            raise ConfigError(f"Bayer frame dimensions must be even, got {w}x{h}")
        if self.pattern != "RGGB":
            raise ConfigError(f"unsupported Bayer pattern {self.pattern!r}")

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)


def as_planar(img) -> np.ndarray:
    """Return ``img`` as a float64 ``(C, H, W)`` array; 2-D input gets C = 1."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3:
        raise ConfigError(f"expected a planar image, got shape {arr.shape}")
    return arr


def raw_data(frame) -> np.ndarray:
    """Return the 2-D mosaic of a :class:`BayerFrame` or array-like."""
    arr = np.asarray(frame, dtype=np.float64)
    if arr.ndim != 2:
        raise ConfigError(f"expected a 2-D mosaic, got shape {arr.shape}")
    return arr


def channel_of(u: int, v: int) -> int:
    """Colour channel sampled at column ``u``, row ``v`` of an RGGB mosaic."""
    return int(_RGGB[v % 2, u % 2])


def bayer_channel_map(height: int, width: int) -> np.ndarray:
    """``(H, W)`` integer map of the channel sampled at each mosaic pixel."""
    return np.tile(_RGGB, (height // 2, width // 2))


_K_GREEN = np.array([[0.0, 1.0, 0.0], [1.0, 4.0, 1.0], [0.0, 1.0, 0.0]]) / 4.0
_K_REDBLUE = np.array([[1.0, 2.0, 1.0], [2.0, 4.0, 2.0], [1.0, 2.0, 1.0]]) / 4.0


def demosaic_bilinear(frame) -> np.ndarray:
    """Bilinear demosaicking of an RGGB mosaic into a 3-channel image.

    Measured samples are copied exactly; missing ones are averages of the
    nearest same-channel neighbours.  Borders are mirrored about the edge
    pixel, which preserves the Bayer phase.
    """
    raw = raw_data(frame)
    h, w = raw.shape
    if h % 2 or w % 2:
        raise ConfigError(f"mosaic dimensions must be even, got {w}x{h}")
    cmap = bayer_channel_map(h, w)
    out = np.empty((3, h, w))
    for c, kernel in ((RED, _K_REDBLUE), (GREEN, _K_GREEN), (BLUE, _K_REDBLUE)):
        sel = cmap == c
        plane = np.where(sel, raw, 0.0)
        interp = ndimage.convolve(plane, kernel, mode="mirror")
        out[c] = np.where(sel, raw, interp)
    return out


def to_grayscale(img) -> np.ndarray:
    """Unweighted channel mean of a 3-channel image, returned as ``(1, H, W)``."""
    arr = as_planar(img)
    if arr.shape[0] != 3:
        raise ConfigError(f"to_grayscale needs 3 channels, got {arr.shape[0]}")
    return (arr.sum(axis=0) / 3.0)[None]


def gaussian_kernel5(sigma: float = 1.0) -> np.ndarray:
    k = np.exp(-0.5 * (np.arange(-2, 3) / sigma) ** 2)
    return k / k.sum()


def build_pyramid(img, levels: int, sigma: float = 1.0) -> list:
    """Gaussian pyramid, level 0 being the input itself.

    Each level is blurred with a separable 5-tap Gaussian (replicated borders)
    and decimated by two, so level ``i + 1`` has ``ceil`` of half the size.
    """
    arr = as_planar(img)
    if levels < 1:
        raise ConfigError("pyramid needs at least one level")
    _, h, w = arr.shape
    if min(h, w) / 2 ** (levels - 1) < 8:
        raise ConfigError(f"{w}x{h} image too small for a {levels}-level pyramid")
    kernel = gaussian_kernel5(sigma)
    pyramid = [arr]
    for _ in range(levels - 1):
        cur = pyramid[-1]
        blurred = ndimage.correlate1d(cur, kernel, axis=1, mode="nearest")
        blurred = ndimage.correlate1d(blurred, kernel, axis=2, mode="nearest")
        pyramid.append(np.ascontiguousarray(blurred[:, ::2, ::2]))
    return pyramid


def spatial_gradient(img) -> Tuple[np.ndarray, np.ndarray]:
    """Per-channel ``(gx, gy)``: central differences inside, one-sided at borders.

    ``gx`` differentiates along columns (image x axis), ``gy`` along rows.
    """
    arr = as_planar(img)
    gy, gx = np.gradient(arr, axis=(1, 2))
    return gx, gy


def _linear_weights(n_in: int, n_out: int) -> np.ndarray:
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    i0 = np.minimum(np.floor(src).astype(int), max(n_in - 2, 0))
    frac = src - i0
    m = np.zeros((n_out, n_in))
    rows = np.arange(n_out)
    np.add.at(m, (rows, i0), 1.0 - frac)
    np.add.at(m, (rows, np.minimum(i0 + 1, n_in - 1)), frac)
    return m


def catmull_rom(t: np.ndarray) -> np.ndarray:
    """Keys cubic convolution kernel with a = -0.5."""
    t = np.abs(t)
    return np.where(
        t < 1.0,
        1.5 * t**3 - 2.5 * t**2 + 1.0,
        np.where(t < 2.0, -0.5 * t**3 + 2.5 * t**2 - 4.0 * t + 2.0, 0.0),
    )


def _cubic_weights(n_in: int, n_out: int) -> np.ndarray:
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    base = np.floor(src).astype(int)
    m = np.zeros((n_out, n_in))
    rows = np.arange(n_out)
    for k in range(-1, 3):
        idx = base + k
        np.add.at(m, (rows, np.clip(idx, 0, n_in - 1)), catmull_rom(src - idx))
    return m


def _separable_resize(arr: np.ndarray, out_w: int, out_h: int, weights) -> np.ndarray:
    _, h, w = arr.shape
    ry = weights(h, out_h)
    rx = weights(w, out_w)
    return np.einsum("ij,cjk,lk->cil", ry, arr, rx)


def resize_bilinear(img, out_w: int, out_h: int) -> np.ndarray:
    """Pixel-centre aligned bilinear resize with replicated borders."""
    return _separable_resize(as_planar(img), out_w, out_h, _linear_weights)


def resize_bicubic(img, out_w: int, out_h: int) -> np.ndarray:
    """Pixel-centre aligned Catmull-Rom resize with replicated borders."""
    return _separable_resize(as_planar(img), out_w, out_h, _cubic_weights)
