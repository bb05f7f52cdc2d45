"""Synthetic bursts with known motions, for testing and benchmarking."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from .errors import ConfigError
from .forward import AffineMotion, DegradeConfig, forward_apply, mosaic, norm_scale, warp_affine
from .image import BayerFrame, as_planar, resize_bilinear
from . import io


@dataclass(frozen=True)
class NoiseModel:
    """Heteroscedastic Gaussian noise: variance = shot_gain * signal + read_variance."""

    shot_gain: float = 1e-3
    read_variance: float = 1e-4
    enabled: bool = True

    def __post_init__(self):
        if self.shot_gain < 0 or self.read_variance < 0:
            raise ConfigError("noise coefficients must be nonnegative")

    @classmethod
    def off(cls) -> "NoiseModel":
        return cls(0.0, 0.0, False)


@dataclass(frozen=True)
class SynthConfig:
    k: int = 14
    motion_model: str = "euclidean"
    max_translation: float = 2.0  # LR pixels
    max_rotation: float = 2.0  # degrees
    max_affine_perturb: float = 0.0
    scale: int = 4
    noise: NoiseModel = field(default_factory=NoiseModel)
    seed: int = 0
    mosaic: bool = True
    white: float = 1.0
    bilinear_downsample: bool = False

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError("burst length must be >= 1")
        if min(self.max_translation, self.max_rotation, self.max_affine_perturb) < 0:
            raise ConfigError("motion bounds must be nonnegative")
        if self.motion_model not in ("euclidean", "affine"):
            raise ConfigError(f"unknown motion model {self.motion_model!r}")

    @property
    def degrade(self) -> DegradeConfig:
        return DegradeConfig(scale=self.scale, mosaic=self.mosaic)

    def streams(self) -> Tuple[np.random.Generator, List[np.random.Generator]]:
        """Independent generators for the motions and for each frame's noise."""
        motion_seq, noise_seq = np.random.SeedSequence(self.seed).spawn(2)
        return (
            np.random.default_rng(motion_seq),
            [np.random.default_rng(s) for s in noise_seq.spawn(self.k)],
        )

    def to_kv(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "noise"}
        out.update(
            noise_enabled=self.noise.enabled,
            shot_gain=self.noise.shot_gain,
            read_variance=self.noise.read_variance,
        )
        return out

    @classmethod
    def from_kv(cls, kv: dict) -> "SynthConfig":
        conv = {
            "k": int, "scale": int, "seed": int,
            "max_translation": float, "max_rotation": float,
            "max_affine_perturb": float, "white": float,
            "mosaic": _parse_bool, "bilinear_downsample": _parse_bool,
            "motion_model": str,
        }
        args = {}
        for key, fn in conv.items():
            if key in kv:
                try:
                    args[key] = fn(kv[key])
                except ValueError as exc:
                    raise ConfigError(f"bad value for {key}: {kv[key]!r}") from exc
        noise = NoiseModel(
            float(kv.get("shot_gain", 1e-3)),
            float(kv.get("read_variance", 1e-4)),
            _parse_bool(kv.get("noise_enabled", "true")),
        )
        return cls(noise=noise, **args)


def _parse_bool(v) -> bool:
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def sample_motions(cfg: SynthConfig, lr_hw) -> List[AffineMotion]:
    """Frame 0 is the identity; others are uniform within the configured bounds.

    Translations are drawn in LR pixels and converted to normalized units for
    an ``lr_hw`` frame.
    """
    rng, _ = cfg.streams()
    c = norm_scale(*lr_hw)
    motions = [AffineMotion.identity()]
    for _ in range(cfg.k - 1):
        theta = math.radians(rng.uniform(-cfg.max_rotation, cfg.max_rotation))
        t = rng.uniform(-cfg.max_translation, cfg.max_translation, 2) / c
        p = AffineMotion.euclidean(theta, t[0], t[1])
        if cfg.motion_model == "affine":
            jitter = rng.uniform(-cfg.max_affine_perturb, cfg.max_affine_perturb, 4)
            p = AffineMotion.from_vector(p.vector + np.concatenate([jitter, [0.0, 0.0]]))
        motions.append(p)
    return motions


def degrade_to_burst(hr, motions: Sequence[AffineMotion], cfg: SynthConfig) -> List[BayerFrame]:
    """Observe ``hr`` under each motion, add noise, clip to ``[0, white]``.

    RGB-mode configs return ``(3, h, w)`` arrays instead of Bayer frames.
    """
    hr = as_planar(hr)
    _, noise_rngs = cfg.streams()
    dcfg = cfg.degrade
    lh, lw = dcfg.lr_shape(hr.shape[1:])
    frames = []
    for k, p in enumerate(motions):
        if cfg.bilinear_downsample:
            warped, _ = warp_affine(hr, p, hr.shape[2], hr.shape[1])
            y = resize_bilinear(warped, lw, lh)
            y = mosaic(y) if cfg.mosaic else y
        else:
            y, _ = forward_apply(hr, p, dcfg)
        if cfg.noise.enabled:
            var = cfg.noise.shot_gain * np.maximum(y, 0.0) + cfg.noise.read_variance
            y = y + np.sqrt(var) * noise_rngs[k].standard_normal(y.shape)
        y = np.clip(y, 0.0, cfg.white)
        noise = (cfg.noise.shot_gain, cfg.noise.read_variance) if cfg.noise.enabled else None
        frames.append(BayerFrame(y, noise=noise) if cfg.mosaic else y)
    return frames


def srgb_to_linear(img: np.ndarray) -> np.ndarray:
    return np.clip(img, 0.0, None) ** 2.2


def textured_image(h: int, w: int, seed: int = 0, shapes: int = 40, texture: float = 0.03) -> np.ndarray:
    """Procedural RGB test scene: smooth shading, sharp-edged shapes, fine texture.

    Values lie in roughly [0.05, 0.95]; edges are antialiased by 4x supersampling.
    ``texture`` is the standard deviation of the fine noise-like texture; zero
    gives a piecewise-smooth cartoon.
    """
    rng = np.random.default_rng(seed)
    ss = 4
    yy, xx = np.mgrid[0 : h * ss, 0 : w * ss].astype(np.float64)
    xx = (xx + 0.5) / ss
    yy = (yy + 0.5) / ss
    base = rng.uniform(0.2, 0.8, 3)
    grad = rng.uniform(-0.3, 0.3, (3, 2))
    img = base[:, None, None] + grad[:, 0, None, None] * (xx / w - 0.5) + grad[:, 1, None, None] * (yy / h - 0.5)
    for _ in range(shapes):
        color = rng.uniform(0.05, 0.95, 3)
        cx, cy = rng.uniform(0, w), rng.uniform(0, h)
        kind = rng.integers(3)
        if kind == 0:
            rx, ry = rng.uniform(0.03, 0.2) * w, rng.uniform(0.03, 0.2) * h
            ang = rng.uniform(0, math.pi)
            u = (xx - cx) * math.cos(ang) + (yy - cy) * math.sin(ang)
            v = -(xx - cx) * math.sin(ang) + (yy - cy) * math.cos(ang)
            sel = (u / rx) ** 2 + (v / ry) ** 2 <= 1.0
        elif kind == 1:
            half = rng.uniform(0.03, 0.15, 2) * (w, h)
            ang = rng.uniform(0, math.pi)
            u = (xx - cx) * math.cos(ang) + (yy - cy) * math.sin(ang)
            v = -(xx - cx) * math.sin(ang) + (yy - cy) * math.cos(ang)
            sel = (np.abs(u) <= half[0]) & (np.abs(v) <= half[1])
        else:
            # bar grating inside a disc
            radius = rng.uniform(0.05, 0.15) * min(w, h)
            period = rng.uniform(2.5, 6.0)
            ang = rng.uniform(0, math.pi)
            u = (xx - cx) * math.cos(ang) + (yy - cy) * math.sin(ang)
            sel = ((xx - cx) ** 2 + (yy - cy) ** 2 <= radius**2) & (np.mod(u, period) < period / 2)
        img = np.where(sel[None], color[:, None, None], img)
    img = img.reshape(3, h, ss, w, ss).mean(axis=(2, 4))
    fine = ndimage.gaussian_filter(rng.standard_normal((h, w)), 0.7)
    img = img + texture * fine / fine.std()
    return np.clip(img, 0.05, 0.95)


@dataclass
class Fixture:
    hr: np.ndarray
    frames: list
    motions: List[AffineMotion]
    config: SynthConfig

    @property
    def noise(self) -> Optional[Tuple[float, float]]:
        n = self.config.noise
        return (n.shot_gain, n.read_variance) if n.enabled else None


def make_burst(hr, cfg: SynthConfig) -> Fixture:
    """Sample motions and degrade ``hr``; everything is 16-bit quantized so that
    a fixture written to disk reads back bit-identically."""
    hr = io.quantize16(as_planar(hr), cfg.white)
    lh, lw = cfg.degrade.lr_shape(hr.shape[1:])
    motions = sample_motions(cfg, (lh, lw))
    frames = degrade_to_burst(hr, motions, cfg)
    frames = [
        BayerFrame(io.quantize16(f.data, cfg.white), noise=f.noise) if isinstance(f, BayerFrame)
        else io.quantize16(f, cfg.white)
        for f in frames
    ]
    return Fixture(hr, frames, motions, cfg)


def make_fixture(hr, cfg: SynthConfig, out_dir, srgb: bool = False) -> Fixture:
    """Write a synthetic burst fixture directory.

    ``hr`` is an array or a path to a PGM/PPM; with ``srgb`` the reference is
    linearized with an inverse 2.2 gamma first.  Layout: ``hr.ppm``,
    ``frame_%02d.pgm`` (``.ppm`` in RGB mode), ``motions.json-lines``,
    ``noise.txt``, ``config.txt``.
    """
    if isinstance(hr, (str, Path)):
        hr, _ = io.read_netpbm(hr)
    hr = as_planar(hr)
    if hr.shape[0] == 1:
        hr = np.repeat(hr, 3, axis=0)
    if srgb:
        hr = srgb_to_linear(hr)
    fx = make_burst(hr, cfg)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    io.write_netpbm(out / "hr.ppm", fx.hr, cfg.white)
    ext = "pgm" if cfg.mosaic else "ppm"
    for k, f in enumerate(fx.frames):
        io.write_netpbm(out / f"frame_{k:02d}.{ext}", np.asarray(f), cfg.white)
    io.write_motions(out / "motions.json-lines", fx.motions)
    n = cfg.noise
    (out / "noise.txt").write_text(
        f"{n.shot_gain!r} {n.read_variance!r}\n" if n.enabled else "0.0 0.0\n"
    )
    (out / "config.txt").write_text(io.format_kv(cfg.to_kv()))
    return fx


def load_fixture(path) -> Fixture:
    d = Path(path)
    cfg = SynthConfig.from_kv(io.parse_kv((d / "config.txt").read_text()))
    hr, _ = io.read_netpbm(d / "hr.ppm") if (d / "hr.ppm").exists() else (None, None)
    frames = read_burst(d)
    motions = io.read_motions(d / "motions.json-lines") if (d / "motions.json-lines").exists() else None
    return Fixture(hr, frames, motions, cfg)


def read_burst(path) -> list:
    """Read ``frame_*.pgm`` (raw) or ``frame_*.ppm`` (RGB) files in name order."""
    d = Path(path)
    noise = None
    if (d / "noise.txt").exists():
        vals = [float(v) for v in (d / "noise.txt").read_text().split()]
        if len(vals) == 2 and any(vals):
            noise = (vals[0], vals[1])
    raw = sorted(d.glob("frame_*.pgm"))
    if raw:
        return [BayerFrame(io.read_netpbm(f)[0][0], noise=noise) for f in raw]
    rgb = sorted(d.glob("frame_*.ppm"))
    if not rgb:
        raise FileNotFoundError(f"no frame_*.pgm or frame_*.ppm files in {d}")
    return [io.read_netpbm(f)[0] for f in rgb]
