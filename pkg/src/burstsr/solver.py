"""Half-quadratic splitting solver for joint super-resolution and registration.

The energy is ``0.5 * ||y - U_p z||^2 + mu/2 * ||z - x||^2 + lam * TV(x)``,
minimized by alternating one gradient step on ``z``, one Gauss-Newton step
per frame on ``p`` and an exact TV proximal step on ``x``, with ``mu``
growing geometrically.
"""
from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ConfigError, NumericalError
from .forward import AffineMotion, BurstOperator, DegradeConfig, raw_or_rgb
from .image import as_planar, demosaic_bilinear, resize_bicubic, resize_bilinear
from .registration import LkOptions, coarse_align_burst, geometric_error, gn_step
from .tv import prox_tv, tv_value

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class HqsConfig:
    """Solver schedules.  ``mu_t = mu0 * rho**t``; ``eta`` is ``"auto"``, a
    constant step, or a per-iteration sequence."""

    iters: int = 30
    mu0: float = 0.01
    rho: float = 1.2
    eta: Union[str, float, Tuple[float, ...]] = "auto"
    lam: float = 0.002
    tv_iters: int = 30
    refine_motion: bool = True
    scale: int = 2
    damping: float = 1e-4
    power_iters: int = 20
    power_iters_warm: int = 3

    def __post_init__(self):
        if self.iters < 1:
            raise ConfigError("iters must be >= 1")
        if self.mu0 <= 0 or self.rho < 1:
            raise ConfigError("need mu0 > 0 and rho >= 1")
        if self.lam < 0:
            raise ConfigError("lam must be nonnegative")
        if not isinstance(self.eta, str):
            etas = np.atleast_1d(np.asarray(self.eta, dtype=float))
            if (etas <= 0).any():
                raise ConfigError("step sizes must be positive")
            if etas.size > 1 and etas.size < self.iters:
                raise ConfigError("eta schedule shorter than iters")
        elif self.eta != "auto":
            raise ConfigError(f"eta must be 'auto' or numeric, got {self.eta!r}")

    def mu(self, t: int) -> float:
        return self.mu0 * self.rho**t

    def step_for(self, t: int) -> Optional[float]:
        if isinstance(self.eta, str):
            return None
        etas = np.atleast_1d(np.asarray(self.eta, dtype=float))
        return float(etas[min(t, etas.size - 1)])


@dataclass
class SolverState:
    x: np.ndarray
    z: np.ndarray
    p: List[Optional[AffineMotion]]
    t: int = 0


@dataclass
class SolverTrace:
    """Per-iteration diagnostics; every list has one entry per iteration."""

    data: List[float] = field(default_factory=list)
    coupling: List[float] = field(default_factory=list)
    tv: List[float] = field(default_factory=list)
    mu: List[float] = field(default_factory=list)
    step: List[float] = field(default_factory=list)
    energy_before_z: List[float] = field(default_factory=list)
    energy_after_z: List[float] = field(default_factory=list)
    geom_error: List[Optional[List[float]]] = field(default_factory=list)
    refine_ssd: List[List[Tuple[float, float]]] = field(default_factory=list)
    time_z: List[float] = field(default_factory=list)
    time_refine: List[float] = field(default_factory=list)
    time_prox: List[float] = field(default_factory=list)

    COLUMNS = ("iter", "mu", "step", "data", "coupling", "tv",
               "e_before_z", "e_after_z", "geom_px", "t_z", "t_refine", "t_prox")

    def __len__(self):
        return len(self.data)

    def mean_geom(self, t: int = -1) -> Optional[float]:
        g = self.geom_error[t] if self.geom_error else None
        if not g:
            return None
        vals = [v for v in g if v is not None]
        return float(np.mean(vals)) if vals else None

    def rows(self):
        for t in range(len(self)):
            geom = self.mean_geom(t)
            yield (t, self.mu[t], self.step[t], self.data[t], self.coupling[t], self.tv[t],
                   self.energy_before_z[t], self.energy_after_z[t],
                   "NA" if geom is None else geom,
                   self.time_z[t], self.time_refine[t], self.time_prox[t])

    def to_tsv(self) -> str:
        lines = ["\t".join(self.COLUMNS)]
        for row in self.rows():
            lines.append("\t".join(v if isinstance(v, str) else repr(float(v)) if isinstance(v, float) else str(v) for v in row))
        return "\n".join(lines) + "\n"


def is_raw_burst(burst: Sequence) -> bool:
    return np.asarray(burst[0]).ndim == 2


def degrade_config(burst: Sequence, scale: int) -> DegradeConfig:
    return DegradeConfig(scale=scale, mosaic=is_raw_burst(burst))


def hr_shape(burst: Sequence, scale: int) -> Tuple[int, int]:
    lh, lw = np.asarray(burst[0]).shape[-2:]
    return lh * scale, lw * scale


def init_state(burst: Sequence, p_init: Sequence[Optional[AffineMotion]], cfg: HqsConfig) -> SolverState:
    """``x0 = z0`` = bilinear upsampling of the (demosaicked) reference frame."""
    if len(burst) == 0:
        raise ConfigError("empty burst")
    if len(p_init) != len(burst):
        raise ConfigError(f"{len(p_init)} motions for {len(burst)} frames")
    ref = np.asarray(burst[0], dtype=np.float64)
    rgb = demosaic_bilinear(ref) if ref.ndim == 2 else as_planar(ref)
    h, w = hr_shape(burst, cfg.scale)
    x0 = rgb.copy() if cfg.scale == 1 else resize_bilinear(rgb, w, h)
    return SolverState(x=x0, z=x0.copy(), p=list(p_init), t=0)


def _half_sq(residuals) -> float:
    return 0.5 * sum(float(np.vdot(r, r)) for r in residuals if r is not None)


def data_energy(z, burst, op: BurstOperator) -> float:
    """Masked data term ``0.5 * sum_k ||M_k (U_k z - y_k)||^2``."""
    return _half_sq(op.residuals(z, burst))


def power_iteration(op: BurstOperator, iters: int = 20, start: Optional[np.ndarray] = None) -> Tuple[float, np.ndarray]:
    """Largest eigenvalue of ``sum_k U_k^T M_k U_k`` and its eigenvector estimate."""
    if start is None:
        start = np.random.default_rng(0).standard_normal((3,) + op.hr_hw)
    v = start / np.linalg.norm(start)
    lam = 0.0
    for _ in range(iters):
        w = op.normal(v)
        lam = float(np.vdot(v, w))
        nrm = np.linalg.norm(w)
        if nrm == 0:
            return 0.0, v
        v = w / nrm
    return lam, v


def estimate_step_size(motions, cfg: HqsConfig, dims, mosaic: bool = True, mu: float = 0.0, iters: int = 20) -> float:
    """``1 / L`` with ``L = lambda_max(U^T U) + mu`` from power iteration.

    ``dims`` is the ``(height, width)`` of the HR grid.
    """
    op = BurstOperator(motions, DegradeConfig(scale=cfg.scale, mosaic=mosaic), dims)
    lam, _ = power_iteration(op, iters)
    return 1.0 / (lam + mu)


def z_step(state: SolverState, burst, op: BurstOperator, mu: float, step: float) -> SolverState:
    """One gradient step on ``0.5||y - U z||^2 + mu/2 ||z - x||^2`` in ``z``."""
    grad = op.adjoint(op.residuals(state.z, burst)) + mu * (state.z - state.x)
    if not np.isfinite(grad).all():
        raise NumericalError("non-finite gradient in z update")
    return replace(state, z=state.z - step * grad)


def _refine_all(z, burst, op: BurstOperator, motions, cfg: HqsConfig, threads: int):
    """One Gauss-Newton step for every non-reference frame; updates ``op`` in place."""

    def work(k):
        p = motions[k]
        if k == 0 or p is None:
            return None
        try:
            return gn_step(z, burst[k], p, op.cfg, cfg.damping, op=op.frames[k])
        except NumericalError as exc:
            log.debug("refinement of frame %d skipped: %s", k, exc)
            return None

    idx = range(len(motions))
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(work, idx))
    else:
        results = [work(k) for k in idx]
    new_p = list(motions)
    ssd = []
    changed = False
    for k, res in enumerate(results):
        if res is None:
            continue
        ssd.append((res.ssd_before, res.ssd_after))
        if res.accepted:
            new_p[k] = res.motion
            op.frames[k] = res.operator
            changed = True
    return new_p, ssd, changed


def hqs_run(
    burst: Sequence,
    p_init: Sequence[Optional[AffineMotion]],
    cfg: HqsConfig,
    ground_truth: Optional[Sequence[AffineMotion]] = None,
    x_init: Optional[np.ndarray] = None,
    threads: int = 1,
) -> Tuple[np.ndarray, List[Optional[AffineMotion]], SolverTrace]:
    """Run ``cfg.iters`` HQS iterations; returns ``(x, motions, trace)``.

    Frames whose motion is ``None`` are left out of the data term.
    """
    state = init_state(burst, p_init, cfg)
    if x_init is not None:
        x0 = as_planar(x_init)
        if x0.shape != state.x.shape:
            raise ConfigError(f"x_init shape {x0.shape} != {state.x.shape}")
        state = replace(state, x=x0.copy(), z=x0.copy())
    dcfg = degrade_config(burst, cfg.scale)
    hw = state.x.shape[1:]
    lh, lw = hw[0] // cfg.scale, hw[1] // cfg.scale
    op = BurstOperator(state.p, dcfg, hw)
    if not op.active:
        raise ConfigError("no usable frames in burst")
    trace = SolverTrace()
    lam_data, vec = power_iteration(op, cfg.power_iters)
    residuals = op.residuals(state.z, burst)
    stale = False
    for t in range(cfg.iters):
        mu = cfg.mu(t)
        t0 = time.perf_counter()
        if stale:
            residuals = op.residuals(state.z, burst)
            if cfg.step_for(t) is None:
                lam_data, vec = power_iteration(op, cfg.power_iters_warm, vec)
        step = cfg.step_for(t) or 1.0 / (lam_data + mu)
        gap = state.z - state.x
        e_before = _half_sq(residuals) + 0.5 * mu * float(np.sum(gap**2))
        grad = op.adjoint(residuals) + mu * gap
        if not np.isfinite(grad).all():
            raise NumericalError("non-finite gradient in z update")
        with np.errstate(over="ignore", invalid="ignore"):
            z = state.z - step * grad
            residuals = op.residuals(z, burst)
            data = _half_sq(residuals)
            e_after = data + 0.5 * mu * float(np.sum((z - state.x) ** 2))
        if not np.isfinite(e_after):
            raise NumericalError(f"z diverged at iteration {t} (step {step:g})")
        state = replace(state, z=z)
        t1 = time.perf_counter()

        ssd = []
        stale = False
        if cfg.refine_motion:
            new_p, ssd, stale = _refine_all(state.z, burst, op, state.p, cfg, threads)
            state = replace(state, p=new_p)
        t2 = time.perf_counter()

        x = prox_tv(state.z, cfg.lam / mu, cfg.tv_iters)
        state = replace(state, x=x, t=t + 1)
        t3 = time.perf_counter()

        trace.mu.append(mu)
        trace.step.append(step)
        trace.energy_before_z.append(e_before)
        trace.energy_after_z.append(e_after)
        trace.data.append(data)
        trace.coupling.append(0.5 * mu * float(np.sum((state.z - state.x) ** 2)))
        trace.tv.append(tv_value(state.x))
        trace.refine_ssd.append(ssd)
        if ground_truth is not None:
            trace.geom_error.append([
                None if p is None else geometric_error(p, g, lw, lh)
                for p, g in zip(state.p, ground_truth)
            ])
        else:
            trace.geom_error.append(None)
        trace.time_z.append(t1 - t0)
        trace.time_refine.append(t2 - t1)
        trace.time_prox.append(t3 - t2)
    return state.x, state.p, trace


def coarse_to_fine_run(
    burst: Sequence,
    chain: Sequence[HqsConfig],
    p_init: Optional[Sequence[Optional[AffineMotion]]] = None,
    ground_truth: Optional[Sequence[AffineMotion]] = None,
    lk: Optional[LkOptions] = None,
    threads: int = 1,
):
    """Solve at growing factors; each stage's ``scale`` is relative to the previous.

    Stage ``i`` works at the cumulative factor and starts from the previous
    stage's ``x`` (bilinearly upsampled) and motions; motions are normalized,
    so they carry over unchanged.  Returns ``(x, motions, traces)``.
    """
    if not chain:
        raise ConfigError("empty coarse-to-fine chain")
    motions = list(p_init) if p_init is not None else coarse_align_burst(burst, lk, threads)
    total = 1
    x = None
    traces = []
    for stage in chain:
        total *= stage.scale
        cfg = replace(stage, scale=total)
        h, w = hr_shape(burst, total)
        x_init = None if x is None else resize_bilinear(x, w, h)
        x, motions, trace = hqs_run(burst, motions, cfg, ground_truth, x_init, threads)
        traces.append(trace)
    return x, motions, traces


def baseline_bicubic(frame, s: int) -> np.ndarray:
    """Single-frame baseline: bilinear demosaic, then Catmull-Rom upsampling by ``s``."""
    arr = np.asarray(frame, dtype=np.float64)
    rgb = demosaic_bilinear(arr) if arr.ndim == 2 else as_planar(arr)
    if s == 1:
        return rgb
    _, h, w = rgb.shape
    return resize_bicubic(rgb, w * s, h * s)


def solve(burst, cfg: HqsConfig, motions=None, lk: Optional[LkOptions] = None,
          ground_truth=None, threads: int = 1):
    """Coarse alignment (unless ``motions`` given) followed by :func:`hqs_run`."""
    if motions is None:
        motions = coarse_align_burst(burst, lk, threads)
    return hqs_run(burst, motions, cfg, ground_truth, threads=threads)
