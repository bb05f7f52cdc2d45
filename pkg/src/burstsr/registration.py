"""Burst registration: coarse Lucas-Kanade and Gauss-Newton motion refinement."""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from .errors import ConfigError, NumericalError, RegistrationError
from .forward import (
    AffineMotion,
    DegradeConfig,
    FrameOperator,
    make_sampler,
    norm_scale,
    normalized_grid,
    raw_or_rgb,
)
from .image import as_planar, build_pyramid, demosaic_bilinear, spatial_gradient, to_grayscale

log = logging.getLogger(__name__)

MOTION_MODELS = ("translation", "euclidean", "affine")
LK_MIN_LEVEL = 32  # smallest pyramid level side LK will use, pixels


@dataclass(frozen=True)
class LkOptions:
    pyramid_levels: int = 3
    max_iters_per_level: int = 50
    step_tolerance: float = 1e-7
    damping: float = 1e-4
    motion_model: str = "euclidean"
    presmooth: float = 1.0  # Gaussian sigma applied to both images, pixels
    search_radius: int = 3  # integer-shift search before LK, pixels; 0 disables

    def __post_init__(self):
        if self.max_iters_per_level < 1:
            raise ConfigError("max_iters_per_level must be >= 1")
        if self.damping < 0:
            raise ConfigError("damping must be nonnegative")
        if self.search_radius < 0:
            raise ConfigError("search_radius must be nonnegative")
        if self.motion_model not in MOTION_MODELS:
            raise ConfigError(f"unknown motion model {self.motion_model!r}")


def damped_solve(hess: np.ndarray, rhs: np.ndarray, damping: float) -> np.ndarray:
    """Solve ``(H + damping * diag(H)) dp = rhs``, raising on a singular system."""
    diag = np.diag(hess)
    scale = np.trace(hess)
    if not np.isfinite(hess).all() or not np.isfinite(rhs).all():
        raise NumericalError("non-finite Gauss-Newton system")
    if scale <= 0 or diag.min() <= 1e-12 * scale:
        raise RegistrationError("singular Gauss-Newton system (untextured input?)")
    system = hess + damping * np.diag(diag)
    # equilibrate before judging conditioning
    d = 1.0 / np.sqrt(np.diag(system))
    scaled = system * d[:, None] * d[None, :]
    if np.linalg.cond(scaled) > 1e12:
        raise RegistrationError("ill-conditioned Gauss-Newton system")
    return np.linalg.solve(system, rhs)


def _model_basis(p: AffineMotion, model: str) -> np.ndarray:
    """``d(affine params) / d(model params)`` at ``p``, shape ``(6, n)``."""
    if model == "affine":
        return np.eye(6)
    if model == "translation":
        return np.eye(6)[:, 4:]
    theta = p.angle
    c, s = math.cos(theta), math.sin(theta)
    basis = np.zeros((6, 3))
    basis[:4, 0] = (-s, -c, c, -s)
    basis[4, 1] = basis[5, 2] = 1.0
    return basis


def _project(p: AffineMotion, model: str) -> AffineMotion:
    if model == "affine":
        return p
    if model == "translation":
        return AffineMotion.translation(*p.shift)
    return AffineMotion.euclidean(p.angle, *p.shift)


def _advance(p: AffineMotion, delta: np.ndarray, model: str) -> AffineMotion:
    if model == "euclidean":
        return AffineMotion.euclidean(p.angle + delta[0], p.shift[0] + delta[1], p.shift[1] + delta[2])
    return AffineMotion.from_vector(p.vector + _model_basis(p, model) @ delta)


def _warp_jacobian_fields(h: int, w: int) -> Tuple[np.ndarray, np.ndarray]:
    c = norm_scale(h, w)
    nx, ny = normalized_grid(h, w)
    zero = np.zeros((h, w))
    one = np.full((h, w), c)
    jx = np.stack([nx * c, ny * c, zero, zero, one, zero])
    jy = np.stack([zero, zero, nx * c, ny * c, zero, one])
    return jx, jy


def _lk_level(template, moving, p, opts: LkOptions) -> AffineMotion:
    hw = template.shape[1:]
    gx, gy = spatial_gradient(template)
    jx, jy = _warp_jacobian_fields(*hw)
    target = moving[0]
    for _ in range(opts.max_iters_per_level):
        sampler = make_sampler(p, hw, hw)
        mask = sampler.mask
        warped = sampler.sample(template)[0]
        r = (warped - target)[mask]
        if not np.isfinite(r).all():
            raise NumericalError("non-finite residual in Lucas-Kanade")
        dx = sampler.sample(gx)[0][mask]
        dy = sampler.sample(gy)[0][mask]
        steep = (dx * jx[:, mask] + dy * jy[:, mask]).T @ _model_basis(p, opts.motion_model)
        hess = steep.T @ steep
        delta = damped_solve(hess, -steep.T @ r, opts.damping)
        if not delta.any():
            break
        p = _advance(p, delta, opts.motion_model)
        if np.linalg.norm(delta) < opts.step_tolerance:
            break
    return p


def shift_search(template, moving, p: AffineMotion, radius: int) -> AffineMotion:
    """Best integer-pixel translation offset of ``p`` by masked mean squared error.

    Gives LK a start inside the right basin when aliasing makes the SSD
    landscape rough far from the optimum.
    """
    hw = template.shape[1:]
    c = norm_scale(*hw)
    best, best_err = p, math.inf
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            cand = AffineMotion.from_vector(p.vector + np.array([0, 0, 0, 0, dx / c, dy / c]))
            sampler = make_sampler(cand, hw, hw)
            if sampler.mask.mean() < 0.5:
                continue
            err = float(np.mean((sampler.sample(template)[0] - moving[0])[sampler.mask] ** 2))
            if err < best_err:
                best, best_err = cand, err
    return best


def lk_align(template, moving, p0: Optional[AffineMotion] = None, opts: Optional[LkOptions] = None) -> AffineMotion:
    """Multiscale forward-additive Lucas-Kanade.

    Returns ``p`` such that ``warp_affine(template, p)`` matches ``moving``,
    i.e. the motion of the observation model that maps the reference frame
    onto the other one.  Motions are in normalized coordinates, so they carry
    over between pyramid levels unchanged.
    """
    opts = opts or LkOptions()
    template = as_planar(template)
    moving = as_planar(moving)
    if template.shape != moving.shape or template.shape[0] != 1:
        raise ConfigError("lk_align needs two single-channel images of equal size")
    p = _project(p0 or AffineMotion.identity(), opts.motion_model)
    if opts.presmooth > 0:
        sig = (0, opts.presmooth, opts.presmooth)
        template = ndimage.gaussian_filter(template, sig, mode="nearest")
        moving = ndimage.gaussian_filter(moving, sig, mode="nearest")
    if opts.search_radius > 0:
        p = shift_search(template, moving, p, opts.search_radius)
    levels = max(1, min(opts.pyramid_levels, int(math.log2(min(template.shape[1:]) / LK_MIN_LEVEL)) + 1))
    pyr_t = build_pyramid(template, levels)
    pyr_m = build_pyramid(moving, levels)
    for level in reversed(range(levels)):
        try:
            p = _lk_level(pyr_t[level], pyr_m[level], p, opts)
        except RegistrationError:
            # tiny coarse levels may lack texture; only the finest level must succeed
            if level == 0:
                raise
            log.debug("LK level %d skipped", level)
    return p


def raw_to_gray(frame) -> np.ndarray:
    arr = np.asarray(frame, dtype=np.float64)
    if arr.ndim == 2:
        return to_grayscale(demosaic_bilinear(arr))
    arr = as_planar(arr)
    return to_grayscale(arr) if arr.shape[0] == 3 else arr


def alignment_residual(template, moving, p: AffineMotion) -> float:
    """Root-mean-square difference between ``moving`` and the warped template."""
    hw = template.shape[1:]
    sampler = make_sampler(p, hw, hw)
    if not sampler.mask.any():
        return math.inf
    diff = (sampler.sample(template)[0] - moving[0])[sampler.mask]
    return float(np.sqrt(np.mean(diff**2)))


def coarse_align_burst(burst: Sequence, opts: Optional[LkOptions] = None, threads: int = 1,
                       outlier_factor: float = 3.0) -> List[Optional[AffineMotion]]:
    """Align every frame to frame 0; failed frames come back as ``None``.

    A frame also counts as failed when its alignment residual exceeds
    ``outlier_factor`` times the burst median (0 disables the check).
    """
    if len(burst) == 0:
        raise ConfigError("empty burst")
    opts = opts or LkOptions()
    ref = raw_to_gray(burst[0])

    def align(frame):
        moving = raw_to_gray(frame)
        try:
            p = lk_align(ref, moving, AffineMotion.identity(), opts)
        except NumericalError as exc:
            log.warning("coarse alignment failed: %s", exc)
            return None, math.inf
        return p, alignment_residual(ref, moving, p)

    rest = list(burst[1:])
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(align, rest))
    else:
        results = [align(f) for f in rest]
    motions = [p for p, _ in results]
    errs = np.array([e for p, e in results if p is not None])
    if outlier_factor > 0 and errs.size >= 3:
        limit = outlier_factor * float(np.median(errs))
        for k, (p, e) in enumerate(results):
            if p is not None and e > limit:
                log.warning("frame %d excluded: alignment residual %.3g > %.3g", k + 1, e, limit)
                motions[k] = None
    return [AffineMotion.identity()] + motions


@dataclass
class RefineResult:
    motion: AffineMotion
    accepted: bool
    ssd_before: float
    ssd_after: float
    operator: Optional[FrameOperator] = None


def gn_step(z, y, p: AffineMotion, cfg: DegradeConfig, damping: float = 1e-4,
            op: Optional[FrameOperator] = None) -> RefineResult:
    """One damped Gauss-Newton step on ``0.5 * ||M (U_p z - y)||^2`` over ``p``.

    The step is rejected, and ``p`` returned unchanged, when it raises the
    masked SSD measured on the pixels valid under both motions.  ``op`` may
    pass a prebuilt operator for ``p``; the result carries the operator of
    the returned motion.
    """
    z = as_planar(z)
    y = raw_or_rgb(y, cfg)
    if op is None:
        op = FrameOperator(p, cfg, z.shape[1:])
    r = op.masked(op.apply(z) - y)
    jac = op.jacobian(z)
    hess = jac.T @ jac
    delta = damped_solve(hess, -jac.T @ r.ravel(), damping)
    candidate = AffineMotion.from_vector(p.vector + delta)
    try:
        new = FrameOperator(candidate, cfg, z.shape[1:])
    except NumericalError:
        return RefineResult(p, False, float("nan"), float("nan"), op)
    common = op.mask & new.mask
    before = float(np.sum((r * common) ** 2))
    after = float(np.sum(((new.apply(z) - y) * common) ** 2))
    if after <= before:
        return RefineResult(candidate, True, before, after, new)
    return RefineResult(p, False, before, before, op)


def gn_refine(z, y, p: AffineMotion, cfg: DegradeConfig, damping: float = 1e-4) -> AffineMotion:
    """Refine the motion of observation ``y`` against the HR estimate ``z``."""
    return gn_step(z, y, p, cfg, damping).motion


def geometric_error(p_est: AffineMotion, p_true: AffineMotion, w: int, h: int) -> float:
    """Mean displacement, in pixels of a ``w`` x ``h`` grid, between two warps."""
    nx, ny = normalized_grid(h, w)
    ex, ey = p_est.apply(nx, ny)
    tx, ty = p_true.apply(nx, ny)
    return float(np.mean(np.hypot(ex - tx, ey - ty)) * norm_scale(h, w))
