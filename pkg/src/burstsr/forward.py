"""Degradation operator: affine warp, block-average blur/decimation, Bayer sampling.

Coordinates are normalized: the origin sits at the image centre and the
longer side spans [-1, 1] from edge to edge.  Because the normalization uses
pixel edges, a low-resolution frame and its ``s``-times larger counterpart
share the same normalized coordinates, and a motion estimated at one
resolution applies unchanged at the other.

An :class:`AffineMotion` maps normalized coordinates of an *output* grid to
the source image: ``out(n) = src(A @ n + t)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import sparse

from .errors import ConfigError, DegenerateWarpError
from .image import as_planar, bayer_channel_map, raw_data

MIN_DET = 0.1
_SNAP = 1e-9


@dataclass(frozen=True)
class AffineMotion:
    """Six-parameter affine warp stored as offsets from the identity.

    ``params = (a11 - 1, a12, a21, a22 - 1, t1, t2)``; translations are in
    normalized units (multiply by half the longer side to get pixels).
    """

    params: Tuple[float, float, float, float, float, float] = (0.0,) * 6

    def __post_init__(self):
        p = tuple(float(v) for v in self.params)
        if len(p) != 6:
            raise ConfigError(f"affine motion needs 6 parameters, got {len(p)}")
        object.__setattr__(self, "params", p)

    @classmethod
    def identity(cls) -> "AffineMotion":
        return cls()

    @classmethod
    def from_vector(cls, vec) -> "AffineMotion":
        return cls(tuple(np.asarray(vec, dtype=np.float64).ravel()))

    @classmethod
    def from_matrix(cls, a, t) -> "AffineMotion":
        a = np.asarray(a, dtype=np.float64)
        return cls((a[0, 0] - 1.0, a[0, 1], a[1, 0], a[1, 1] - 1.0, t[0], t[1]))

    @classmethod
    def translation(cls, t1: float, t2: float) -> "AffineMotion":
        return cls((0.0, 0.0, 0.0, 0.0, t1, t2))

    @classmethod
    def euclidean(cls, theta: float, t1: float, t2: float) -> "AffineMotion":
        """Rotation by ``theta`` radians about the image centre, then translation."""
        c, s = math.cos(theta), math.sin(theta)
        return cls((c - 1.0, -s, s, c - 1.0, t1, t2))

    @property
    def vector(self) -> np.ndarray:
        return np.array(self.params)

    @property
    def matrix(self) -> np.ndarray:
        p = self.params
        return np.array([[1.0 + p[0], p[1]], [p[2], 1.0 + p[3]]])

    @property
    def shift(self) -> np.ndarray:
        return np.array(self.params[4:])

    @property
    def det(self) -> float:
        a = self.matrix
        return float(a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0])

    @property
    def angle(self) -> float:
        """Rotation angle of the closest rotation to the linear part."""
        a = self.matrix
        return math.atan2(a[1, 0] - a[0, 1], a[0, 0] + a[1, 1])

    def is_identity(self) -> bool:
        return all(v == 0.0 for v in self.params)

    def compose(self, other: "AffineMotion") -> "AffineMotion":
        """The map ``n -> self(other(n))``."""
        a1, a2 = self.matrix, other.matrix
        return AffineMotion.from_matrix(a1 @ a2, a1 @ other.shift + self.shift)

    def inverse(self) -> "AffineMotion":
        check_motion(self)
        ainv = np.linalg.inv(self.matrix)
        return AffineMotion.from_matrix(ainv, -ainv @ self.shift)

    def apply(self, nx, ny):
        p = self.params
        return (
            (1.0 + p[0]) * nx + p[1] * ny + p[4],
            p[2] * nx + (1.0 + p[3]) * ny + p[5],
        )

    def to_record(self) -> list:
        return list(self.params)

    @classmethod
    def from_record(cls, rec: Sequence[float]) -> "AffineMotion":
        return cls(tuple(rec))


def check_motion(p: AffineMotion) -> None:
    det = p.det
    if not np.isfinite(p.vector).all() or det <= MIN_DET:
        raise DegenerateWarpError(f"degenerate affine motion (det={det:.4g}): {p.params}")


def norm_scale(h: int, w: int) -> float:
    """Pixels per normalized unit for an ``h`` x ``w`` grid."""
    return max(h, w) / 2.0


def normalized_grid(h: int, w: int) -> Tuple[np.ndarray, np.ndarray]:
    """Normalized coordinates ``(nx, ny)`` of the pixel centres, each ``(h, w)``."""
    c = norm_scale(h, w)
    nx = (np.arange(w) + 0.5 - w / 2.0) / c
    ny = (np.arange(h) + 0.5 - h / 2.0) / c
    return np.broadcast_to(nx, (h, w)), np.broadcast_to(ny[:, None], (h, w))


def source_coords(p: AffineMotion, in_hw, out_hw) -> Tuple[np.ndarray, np.ndarray]:
    """Source pixel coordinates (column, row) sampled by each output pixel."""
    check_motion(p)
    hi, wi = in_hw
    ho, wo = out_hw
    nx, ny = normalized_grid(ho, wo)
    sx, sy = p.apply(nx, ny)
    c = norm_scale(hi, wi)
    sx = sx * c + (wi / 2.0 - 0.5)
    sy = sy * c + (hi / 2.0 - 0.5)
    # round-off must not push exact grid samples off the image or off-grid
    for s in (sx, sy):
        r = np.round(s)
        near = np.abs(s - r) < _SNAP
        s[near] = r[near]
    return sx, sy


class BilinearSampler:
    """Sparse bilinear sampling of an ``in_hw`` image at given source coordinates.

    Samples whose 2x2 footprint is not entirely inside the image are invalid:
    they read as zero and are excluded from the adjoint.
    """

    def __init__(self, sx: np.ndarray, sy: np.ndarray, in_hw):
        hi, wi = in_hw
        if hi < 2 or wi < 2:
            raise ConfigError("bilinear sampling needs images of at least 2x2")
        self.in_hw = (hi, wi)
        self.out_shape = sx.shape
        sx = sx.ravel()
        sy = sy.ravel()
        self.valid = (sx >= 0) & (sx <= wi - 1) & (sy >= 0) & (sy <= hi - 1)
        sxc = np.where(self.valid, sx, 0.0)
        syc = np.where(self.valid, sy, 0.0)
        i0 = np.minimum(np.floor(sxc).astype(np.int64), wi - 2)
        j0 = np.minimum(np.floor(syc).astype(np.int64), hi - 2)
        a = sxc - i0
        b = syc - j0
        v = self.valid.astype(np.float64)
        base = j0 * wi + i0
        self.index = np.stack([base, base + 1, base + wi, base + wi + 1])
        self.weight = np.stack([(1 - a) * (1 - b), a * (1 - b), (1 - a) * b, a * b]) * v
        self.frac = (a, b, v)
        n = sx.size
        # exactly four distinct columns per row, so the CSR arrays can be written directly
        self.matrix = sparse.csr_matrix(
            (self.weight.T.ravel(), self.index.T.ravel(), np.arange(0, 4 * n + 1, 4)),
            shape=(n, hi * wi),
        )

    @property
    def mask(self) -> np.ndarray:
        return self.valid.reshape(self.out_shape)

    def sample(self, img: np.ndarray) -> np.ndarray:
        arr = as_planar(img)
        flat = arr.reshape(arr.shape[0], -1)
        out = (self.matrix @ flat.T).T
        return out.reshape((arr.shape[0],) + self.out_shape)

    def sample_adjoint(self, img: np.ndarray) -> np.ndarray:
        arr = as_planar(img)
        flat = arr.reshape(arr.shape[0], -1)
        out = (self.matrix.T @ flat.T).T
        return out.reshape((arr.shape[0],) + self.in_hw)

    def derivatives(self, img: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Exact partial derivatives of the bilinear interpolant at the samples."""
        arr = as_planar(img)
        flat = arr.reshape(arr.shape[0], -1)
        a, b, v = self.frac
        f00, f10, f01, f11 = (flat[:, self.index[k]] for k in range(4))
        dx = ((1 - b) * (f10 - f00) + b * (f11 - f01)) * v
        dy = ((1 - a) * (f01 - f00) + a * (f11 - f10)) * v
        shape = (arr.shape[0],) + self.out_shape
        return dx.reshape(shape), dy.reshape(shape)


def make_sampler(p: AffineMotion, in_hw, out_hw) -> BilinearSampler:
    sx, sy = source_coords(p, in_hw, out_hw)
    return BilinearSampler(sx, sy, in_hw)


def warp_affine(img, p: AffineMotion, out_w: int, out_h: int) -> Tuple[np.ndarray, np.ndarray]:
    """Resample ``img`` at ``A @ n + t`` for every output pixel centre ``n``.

    Returns the warped image and its validity mask; out-of-bounds samples are 0.
    """
    arr = as_planar(img)
    sampler = make_sampler(p, arr.shape[1:], (out_h, out_w))
    return sampler.sample(arr), sampler.mask


def warp_adjoint(img, mask, p: AffineMotion, out_w: int, out_h: int) -> np.ndarray:
    """Transpose of :func:`warp_affine` applied to ``img * mask``.

    ``out_w`` x ``out_h`` is the size of the *source* image of the forward warp.
    """
    arr = as_planar(img)
    sampler = make_sampler(p, (out_h, out_w), arr.shape[1:])
    if mask is not None:
        arr = arr * np.asarray(mask, dtype=np.float64)
    return sampler.sample_adjoint(arr)


def blur_downsample(img, s: int) -> np.ndarray:
    """Non-overlapping ``s`` x ``s`` block means."""
    arr = as_planar(img)
    c, h, w = arr.shape
    if h % s or w % s:
        raise ConfigError(f"{w}x{h} image not divisible by scale {s}")
    return arr.reshape(c, h // s, s, w // s, s).mean(axis=(2, 4))


def blur_downsample_adjoint(img, s: int) -> np.ndarray:
    arr = as_planar(img)
    return np.repeat(np.repeat(arr, s, axis=1), s, axis=2) / (s * s)


def block_all(mask: np.ndarray, s: int) -> np.ndarray:
    h, w = mask.shape
    return mask.reshape(h // s, s, w // s, s).all(axis=(1, 3))


def mosaic(img) -> np.ndarray:
    """Select the RGGB channel at every pixel of a 3-channel image."""
    arr = as_planar(img)
    c, h, w = arr.shape
    if c != 3:
        raise ConfigError(f"mosaic needs 3 channels, got {c}")
    if h % 2 or w % 2:
        raise ConfigError(f"mosaic needs even dimensions, got {w}x{h}")
    cmap = bayer_channel_map(h, w)
    return np.take_along_axis(arr, cmap[None], axis=0)[0]


def mosaic_adjoint(frame) -> np.ndarray:
    raw = raw_data(frame)
    h, w = raw.shape
    cmap = bayer_channel_map(h, w)
    out = np.zeros((3, h, w))
    for c in range(3):
        out[c] = np.where(cmap == c, raw, 0.0)
    return out


@dataclass(frozen=True)
class DegradeConfig:
    """Parameters of the observation model: integer scale and raw vs RGB output."""

    scale: int = 2
    mosaic: bool = True
    blur: str = "average"
    bayer_pattern: str = "RGGB"

    def __post_init__(self):
        if int(self.scale) != self.scale or self.scale < 1:
            raise ConfigError(f"scale must be a positive integer, got {self.scale}")
        if self.blur != "average":
            raise ConfigError(f"unsupported blur {self.blur!r}; only block averaging")
        if self.bayer_pattern != "RGGB":
            raise ConfigError(f"unsupported Bayer pattern {self.bayer_pattern!r}")

    def lr_shape(self, hr_hw) -> Tuple[int, int]:
        h, w = hr_hw
        s = self.scale
        if h % s or w % s:
            raise ConfigError(f"HR size {w}x{h} not divisible by scale {s}")
        lh, lw = h // s, w // s
        if self.mosaic and (lh % 2 or lw % 2):
            raise ConfigError(f"raw LR size {lw}x{lh} must be even")
        return lh, lw


class FrameOperator:
    """The linear map ``x -> D B W_p x`` for one frame, assembled as a sparse matrix.

    Observations are ``(H, W)`` mosaics in raw mode and ``(3, H, W)`` images
    otherwise.  ``mask`` marks observed pixels whose whole footprint lies in
    the HR image.
    """

    def __init__(self, p: AffineMotion, cfg: DegradeConfig, hr_hw):
        self.p = p
        self.cfg = cfg
        self.hr_hw = tuple(hr_hw)
        self.lr_hw = cfg.lr_shape(self.hr_hw)
        self.sampler = make_sampler(p, self.hr_hw, self.hr_hw)
        self.mask = block_all(self.sampler.mask, cfg.scale)
        self.obs_shape = self.lr_hw if cfg.mosaic else (3,) + self.lr_hw
        self.matrix = self._assemble()

    def _assemble(self) -> sparse.csr_matrix:
        h, w = self.hr_hw
        lh, lw = self.lr_hw
        s = self.cfg.scale
        n_hr = h * w
        rows = (np.arange(h)[:, None] // s) * lw + np.arange(w)[None, :] // s
        avg = sparse.csr_matrix(
            (np.full(n_hr, 1.0 / (s * s)), (rows.ravel(), np.arange(n_hr))),
            shape=(lh * lw, n_hr),
        )
        self.avg = avg
        u = (avg @ self.sampler.matrix).tocsr()
        u.sort_indices()
        if self.cfg.mosaic:
            cmap = bayer_channel_map(lh, lw).ravel()
            offset = np.repeat(cmap, np.diff(u.indptr)) * n_hr
            return sparse.csr_matrix((u.data, u.indices + offset, u.indptr), shape=(lh * lw, 3 * n_hr))
        return sparse.block_diag([u, u, u], format="csr")

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (self.matrix @ as_planar(x).ravel()).reshape(self.obs_shape)

    def adjoint(self, r: np.ndarray) -> np.ndarray:
        out = self.matrix.T @ np.asarray(r, dtype=np.float64).ravel()
        return out.reshape((3,) + self.hr_hw)

    def masked(self, r: np.ndarray) -> np.ndarray:
        return r * self.mask

    def jacobian(self, z: np.ndarray, gradient: str = "bilinear") -> np.ndarray:
        """Derivative of ``apply(z)`` w.r.t. the six motion parameters.

        Returns an ``(n_obs, 6)`` matrix with zero rows at masked pixels.
        ``gradient="bilinear"`` differentiates the interpolant exactly;
        ``"central"`` samples central-difference image gradients instead.
        """
        z = as_planar(z)
        if gradient == "bilinear":
            dx, dy = self.sampler.derivatives(z)
        elif gradient == "central":
            from .image import spatial_gradient

            gx, gy = spatial_gradient(z)
            dx, dy = self.sampler.sample(gx), self.sampler.sample(gy)
        else:
            raise ConfigError(f"unknown gradient mode {gradient!r}")
        h, w = self.hr_hw
        c = norm_scale(h, w)
        nx, ny = (g.ravel() for g in normalized_grid(h, w))
        dx = dx.reshape(3, -1) * c
        dy = dy.reshape(3, -1) * c
        # d(source pixel)/d(param): x depends on a11, a12, t1 and y on a21, a22, t2
        fields = np.concatenate([dx * nx, dx * ny, dy * nx, dy * ny, dx, dy])
        lr = (self.avg @ fields.T).T.reshape(6, 3, -1)
        if self.cfg.mosaic:
            cmap = bayer_channel_map(*self.lr_hw).ravel()
            cols = np.take_along_axis(lr, cmap[None, None, :], axis=1)[:, 0]
        else:
            cols = lr.reshape(6, -1)
        return (cols * np.broadcast_to(self.mask, self.obs_shape).ravel()).T


def forward_apply(x, p: AffineMotion, cfg: DegradeConfig) -> Tuple[np.ndarray, np.ndarray]:
    """Noiseless observation of HR image ``x`` under motion ``p`` plus its mask.

    Chains the component operators; :class:`FrameOperator` is the assembled
    equivalent used inside the solver.
    """
    x = as_planar(x)
    _, h, w = x.shape
    cfg.lr_shape((h, w))
    warped, hr_mask = warp_affine(x, p, w, h)
    y = blur_downsample(warped, cfg.scale)
    mask = block_all(hr_mask, cfg.scale)
    return (mosaic(y) if cfg.mosaic else y), mask


def adjoint_apply(r, p: AffineMotion, cfg: DegradeConfig, mask=None, hr_hw=None) -> np.ndarray:
    """Transpose of :func:`forward_apply` applied to ``r * mask``.

    ``hr_hw`` defaults to the observation size times the scale.
    """
    r = np.asarray(r, dtype=np.float64)
    if hr_hw is None:
        lh, lw = r.shape[-2:]
        hr_hw = (lh * cfg.scale, lw * cfg.scale)
    if mask is not None:
        r = r * np.asarray(mask, dtype=np.float64)
    r = mosaic_adjoint(r) if cfg.mosaic else as_planar(r)
    up = blur_downsample_adjoint(r, cfg.scale)
    h, w = hr_hw
    return warp_adjoint(up, None, p, w, h)


def motion_jacobian(z, p: AffineMotion, cfg: DegradeConfig, gradient: str = "bilinear") -> np.ndarray:
    z = as_planar(z)
    return FrameOperator(p, cfg, z.shape[1:]).jacobian(z, gradient=gradient)


class BurstOperator:
    """Stacked operator over a burst; ``None`` motions mark excluded frames."""

    def __init__(self, motions: Sequence[Optional[AffineMotion]], cfg: DegradeConfig, hr_hw):
        self.cfg = cfg
        self.hr_hw = tuple(hr_hw)
        self.frames = [None if p is None else FrameOperator(p, cfg, hr_hw) for p in motions]

    def __len__(self):
        return len(self.frames)

    @property
    def active(self):
        return [(k, op) for k, op in enumerate(self.frames) if op is not None]

    def update(self, k: int, p: AffineMotion) -> None:
        self.frames[k] = FrameOperator(p, self.cfg, self.hr_hw)

    def residuals(self, z, burst) -> list:
        """Masked residuals ``M_k (U_k z - y_k)``; ``None`` for excluded frames."""
        out = [None] * len(self.frames)
        for k, op in self.active:
            out[k] = op.masked(op.apply(z) - raw_or_rgb(burst[k], self.cfg))
        return out

    def apply(self, x) -> list:
        return [None if op is None else op.masked(op.apply(x)) for op in self.frames]

    def adjoint(self, rs) -> np.ndarray:
        out = np.zeros((3,) + self.hr_hw)
        for k, op in self.active:
            out += op.adjoint(op.masked(rs[k]))
        return out

    def normal(self, x) -> np.ndarray:
        """``sum_k U_k^T M_k U_k x``."""
        out = np.zeros((3,) + self.hr_hw)
        for _, op in self.active:
            out += op.adjoint(op.masked(op.apply(x)))
        return out


def raw_or_rgb(frame, cfg: DegradeConfig) -> np.ndarray:
    return raw_data(frame) if cfg.mosaic else as_planar(frame)
