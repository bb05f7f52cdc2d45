"""Multi-frame super-resolution of raw bursts with joint motion refinement."""

from .errors import BurstSRError, ConfigError, DegenerateWarpError, FileFormatError, NumericalError, RegistrationError
from .forward import AffineMotion, BurstOperator, DegradeConfig, FrameOperator, adjoint_apply, forward_apply
from .image import BayerFrame, demosaic_bilinear, to_grayscale
from .metrics import EvalReport, evaluate, psnr, ssim
from .registration import LkOptions, coarse_align_burst, geometric_error, gn_refine, lk_align
from .solver import HqsConfig, SolverTrace, baseline_bicubic, coarse_to_fine_run, hqs_run
from .synth import NoiseModel, SynthConfig, make_burst, make_fixture, textured_image
from .tv import prox_tv

__version__ = "0.1.0"

__all__ = [
    "AffineMotion", "BayerFrame", "BurstOperator", "BurstSRError", "ConfigError",
    "DegenerateWarpError", "DegradeConfig", "FileFormatError", "EvalReport", "FrameOperator", "HqsConfig",
    "LkOptions", "NoiseModel", "NumericalError", "RegistrationError", "SolverTrace",
    "SynthConfig", "adjoint_apply", "baseline_bicubic", "coarse_align_burst",
    "coarse_to_fine_run", "demosaic_bilinear", "evaluate", "forward_apply",
    "geometric_error", "gn_refine", "hqs_run", "lk_align", "make_burst", "make_fixture",
    "prox_tv", "psnr", "ssim", "textured_image", "to_grayscale",
]
