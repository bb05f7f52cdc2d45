"""Reconstruction and registration quality measures."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import List, Optional, Sequence

import numpy as np
from scipy import ndimage

from .errors import ConfigError
from .image import as_planar, to_grayscale
from .registration import geometric_error

INF_PSNR = math.inf


def _crop(a: np.ndarray, border: int) -> np.ndarray:
    if border <= 0:
        return a
    if 2 * border >= min(a.shape[-2:]):
        raise ConfigError(f"border {border} leaves nothing of a {a.shape[-1]}x{a.shape[-2]} image")
    return a[..., border:-border, border:-border]


def _pair(a, b):
    a = as_planar(a)
    b = as_planar(b)
    if a.shape != b.shape:
        raise ConfigError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b, peak: float = 1.0, border: int = 0) -> float:
    """Peak signal-to-noise ratio in dB over an interior crop; ``inf`` if identical."""
    a, b = _pair(a, b)
    mse = float(np.mean((_crop(a, border) - _crop(b, border)) ** 2))
    if mse == 0.0:
        return INF_PSNR
    return 10.0 * math.log10(peak**2 / mse)


def ssim(a, b, peak: float = 1.0, window: int = 8, border: int = 0) -> float:
    """Mean SSIM over all ``window`` x ``window`` windows (uniform weights).

    Three-channel inputs are converted to grayscale first.  The mean is
    clipped to [0, 1].
    """
    a, b = _pair(a, b)
    if a.shape[0] == 3:
        a, b = to_grayscale(a), to_grayscale(b)
    a = _crop(a[0], border)
    b = _crop(b[0], border)
    c1 = (0.01 * peak) ** 2
    c2 = (0.03 * peak) ** 2

    def local_mean(img):
        # 'valid' windows only: the filter is centred, so trim the half-widths
        m = ndimage.uniform_filter(img, window, mode="constant")
        lo = window // 2
        hi = window - lo - 1
        return m[lo : m.shape[0] - hi, lo : m.shape[1] - hi]

    mu_a, mu_b = local_mean(a), local_mean(b)
    var_a = local_mean(a * a) - mu_a**2
    var_b = local_mean(b * b) - mu_b**2
    cov = local_mean(a * b) - mu_a * mu_b
    s = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / ((mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2))
    return float(np.clip(np.mean(s), 0.0, 1.0))


@dataclass
class EvalReport:
    psnr: float
    ssim: float
    geom_error_px: Optional[float] = None
    per_frame_geom: Optional[List[Optional[float]]] = None

    def to_line(self) -> str:
        geom = "NA" if self.geom_error_px is None else repr(self.geom_error_px)
        return f"{self.psnr!r}\t{self.ssim!r}\t{geom}"

    @classmethod
    def from_line(cls, line: str) -> "EvalReport":
        a, b, c = line.strip().split("\t")
        return cls(float(a), float(b), None if c == "NA" else float(c))

    def to_json(self) -> str:
        d = asdict(self)
        if math.isinf(d["psnr"]):
            d["psnr"] = "inf"
        return json.dumps(d)

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        d = json.loads(text)
        d["psnr"] = float(d["psnr"])
        return cls(**d)


def evaluate(
    x_hat,
    hr,
    p_hat: Optional[Sequence] = None,
    p_true: Optional[Sequence] = None,
    scale: int = 1,
    lr_hw=None,
    peak: float = 1.0,
) -> EvalReport:
    """PSNR (border ``scale + 2`` excluded), SSIM, and mean geometric error.

    ``lr_hw`` gives the LR grid for the geometric error; it defaults to the HR
    size divided by ``scale``.
    """
    x_hat, hr = _pair(x_hat, hr)
    border = scale + 2 if scale > 1 else 0
    rep = EvalReport(psnr(x_hat, hr, peak, border), ssim(x_hat, hr, peak, border=border))
    if p_hat is not None and p_true is not None:
        if lr_hw is None:
            lr_hw = (hr.shape[1] // scale, hr.shape[2] // scale)
        per = [
            None if a is None else geometric_error(a, b, lr_hw[1], lr_hw[0])
            for a, b in zip(p_hat, p_true)
        ]
        vals = [v for v in per if v is not None]
        rep.geom_error_px = float(np.mean(vals)) if vals else None
        rep.per_frame_geom = per
    return rep
