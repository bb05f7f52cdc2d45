"""Isotropic total variation and its proximal operator."""
from __future__ import annotations

import numpy as np

from .image import as_planar


def grad(u: np.ndarray):
    """Forward differences with Neumann boundary (zero at the last row/column)."""
    gx = np.zeros_like(u)
    gy = np.zeros_like(u)
    gx[..., :, :-1] = u[..., :, 1:] - u[..., :, :-1]
    gy[..., :-1, :] = u[..., 1:, :] - u[..., :-1, :]
    return gx, gy


def div(px: np.ndarray, py: np.ndarray) -> np.ndarray:
    """Negative adjoint of :func:`grad`."""
    d = np.zeros_like(px)
    # a length-1 axis has no differences, so it contributes nothing
    if px.shape[-1] > 1:
        d[..., :, 0] = px[..., :, 0]
        d[..., :, 1:-1] = px[..., :, 1:-1] - px[..., :, :-2]
        d[..., :, -1] = -px[..., :, -2]
    if py.shape[-2] > 1:
        d[..., 0, :] += py[..., 0, :]
        d[..., 1:-1, :] += py[..., 1:-1, :] - py[..., :-2, :]
        d[..., -1, :] += -py[..., -2, :]
    return d


def tv_value(img) -> float:
    """Isotropic TV summed over channels."""
    gx, gy = grad(as_planar(img))
    return float(np.sum(np.sqrt(gx**2 + gy**2)))


def prox_tv(v, tau: float, inner_iters: int = 30) -> np.ndarray:
    """``argmin_x 0.5 * ||x - v||^2 + tau * TV(x)`` per channel.

    Chambolle's dual fixed-point iteration with step 1/8.
    """
    v = as_planar(v)
    if tau <= 0:
        return v.copy()
    step = 0.125
    px = np.zeros_like(v)
    py = np.zeros_like(v)
    for _ in range(inner_iters):
        gx, gy = grad(div(px, py) - v / tau)
        norm = np.sqrt(gx**2 + gy**2)
        denom = 1.0 + step * norm
        px = (px + step * gx) / denom
        py = (py + step * gy) / denom
    return v - tau * div(px, py)
