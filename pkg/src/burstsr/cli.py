"""Command-line interface: synth, align, sr, eval, bench.

Exit codes: 0 success, 2 I/O failure, 3 bad configuration, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import io
from .errors import ConfigError, NumericalError
from .metrics import evaluate, psnr
from .registration import LkOptions, alignment_residual, coarse_align_burst, geometric_error, raw_to_gray
from .solver import HqsConfig, baseline_bicubic, coarse_to_fine_run, hqs_run
from .synth import NoiseModel, SynthConfig, _parse_bool, load_fixture, make_burst, make_fixture, read_burst, textured_image

log = logging.getLogger("burstsr")

# config-file key -> (HqsConfig field, converter)
HQS_KEYS = {
    "scale": ("scale", int),
    "iters": ("iters", int),
    "mu0": ("mu0", float),
    "rho": ("rho", float),
    "lambda": ("lam", float),
    "lam": ("lam", float),
    "tv_iters": ("tv_iters", int),
    "refine": ("refine_motion", _parse_bool),
    "damping": ("damping", float),
    "power_iters": ("power_iters", int),
}
LK_KEYS = {
    "lk_levels": ("pyramid_levels", int),
    "lk_iters": ("max_iters_per_level", int),
    "lk_model": ("motion_model", str),
    "lk_search": ("search_radius", int),
    "lk_presmooth": ("presmooth", float),
}


def _parse_eta(v: str):
    v = v.strip()
    if v == "auto":
        return "auto"
    vals = tuple(float(s) for s in v.split(","))
    return vals[0] if len(vals) == 1 else vals


def load_settings(args) -> dict:
    """Merge the config file and ``--set`` overrides into one key-value dict."""
    kv = {}
    if getattr(args, "config", None):
        kv.update(io.parse_kv(Path(args.config).read_text()))
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        kv[key.strip()] = value.strip()
    return kv


def hqs_from_settings(kv: dict, base: HqsConfig = HqsConfig()) -> HqsConfig:
    args = {}
    for key, value in kv.items():
        if key in HQS_KEYS:
            name, fn = HQS_KEYS[key]
            try:
                args[name] = fn(value)
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {value!r}") from exc
        elif key == "eta":
            try:
                args["eta"] = _parse_eta(value)
            except ValueError as exc:
                raise ConfigError(f"bad value for eta: {value!r}") from exc
        elif key not in LK_KEYS:
            raise ConfigError(f"unknown config key {key!r}")
    return replace(base, **args)


def lk_from_settings(kv: dict) -> LkOptions:
    args = {}
    for key, (name, fn) in LK_KEYS.items():
        if key in kv:
            try:
                args[name] = fn(kv[key])
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {kv[key]!r}") from exc
    return LkOptions(**args)


def _read_image(path) -> np.ndarray:
    path = Path(path)
    if path.suffix == ".bsr":
        return io.read_bsr(path)
    return io.read_netpbm(path)[0]


# -- synth -------------------------------------------------------------------


def cmd_synth(args) -> int:
    kv = load_settings(args)
    cfg = SynthConfig.from_kv(kv) if kv else SynthConfig()
    noise = NoiseModel.off() if args.no_noise else cfg.noise
    cfg = replace(
        cfg,
        k=args.k if args.k is not None else cfg.k,
        scale=args.scale if args.scale is not None else cfg.scale,
        seed=args.seed if args.seed is not None else cfg.seed,
        mosaic=False if args.rgb else cfg.mosaic,
        bilinear_downsample=args.bilinear_downsample or cfg.bilinear_downsample,
        noise=noise,
    )
    if args.hr:
        hr = args.hr
    else:
        hr = textured_image(args.size, args.size, seed=cfg.seed)
    fx = make_fixture(hr, cfg, args.out, srgb=args.srgb)
    lh, lw = np.asarray(fx.frames[0]).shape[-2:]
    mode = "raw" if cfg.mosaic else "rgb"
    print(f"fixture\t{args.out}\tframes={len(fx.frames)}\tlr={lw}x{lh}\thr={fx.hr.shape[2]}x{fx.hr.shape[1]}"
          f"\tscale={cfg.scale}\tmode={mode}\tnoise={'on' if cfg.noise.enabled else 'off'}\tseed={cfg.seed}")
    return 0


# -- align -------------------------------------------------------------------


def cmd_align(args) -> int:
    """Print one line per frame: index, six motion parameters, alignment
    residual, and (with ``--report-error``) the geometric error in LR pixels."""
    kv = load_settings(args)
    burst = read_burst(args.burst)
    motions = coarse_align_burst(burst, lk_from_settings(kv), args.threads)
    if args.out:
        io.write_motions(args.out, motions)
    truth = None
    if args.report_error:
        truth = io.read_motions(Path(args.burst) / "motions.json-lines")
    ref = raw_to_gray(burst[0])
    lh, lw = np.asarray(burst[0]).shape[-2:]
    for k, p in enumerate(motions):
        if p is None:
            fields = ["NA"] * 7
        else:
            res = alignment_residual(ref, raw_to_gray(burst[k]), p)
            fields = [repr(float(v)) for v in p.vector] + [repr(res)]
        if truth is not None:
            fields.append("NA" if p is None else repr(geometric_error(p, truth[k], lw, lh)))
        print("\t".join([str(k)] + fields))
    return 0


# -- sr ----------------------------------------------------------------------


def _sr_inputs(args, kv):
    """Burst, fixture metadata (if any) and the effective solver config."""
    src = Path(args.fixture or args.burst)
    burst = read_burst(src)
    fixture = load_fixture(src) if (src / "config.txt").exists() else None
    cfg = hqs_from_settings(kv)
    if args.no_refine:
        cfg = replace(cfg, refine_motion=False)
    chain = [int(s) for s in args.chain.split(",")] if args.chain else None
    total = int(np.prod(chain)) if chain else None
    if fixture is not None:
        fx_scale = fixture.config.scale
        if "scale" in kv and cfg.scale != fx_scale:
            raise ConfigError(f"config scale {cfg.scale} disagrees with fixture scale {fx_scale}")
        if total is not None and total != fx_scale:
            raise ConfigError(f"chain factor {total} disagrees with fixture scale {fx_scale}")
        cfg = replace(cfg, scale=fx_scale)
    elif total is not None:
        if "scale" in kv and cfg.scale != total:
            raise ConfigError(f"chain factor {total} disagrees with scale {cfg.scale}")
        cfg = replace(cfg, scale=total)
    return burst, fixture, cfg, chain


def cmd_sr(args) -> int:
    kv = load_settings(args)
    burst, fixture, cfg, chain = _sr_inputs(args, kv)
    truth = fixture.motions if fixture is not None else None
    if args.use_gt_motions:
        if truth is None:
            raise ConfigError("--use-gt-motions needs a fixture with motions.json-lines")
        motions = list(truth)
    elif args.motions:
        motions = io.read_motions(args.motions)
    else:
        motions = coarse_align_burst(burst, lk_from_settings(kv), args.threads)
    if len(motions) != len(burst):
        raise ConfigError(f"{len(motions)} motions for {len(burst)} frames")

    if chain:
        stages = [replace(cfg, scale=s) for s in chain]
        x, p, traces = coarse_to_fine_run(burst, stages, motions, truth, threads=args.threads)
    else:
        x, p, trace = hqs_run(burst, motions, cfg, truth, threads=args.threads)
        traces = [trace]

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    white = fixture.config.white if fixture is not None else 1.0
    io.write_netpbm(out / "result.ppm", np.clip(x, 0, white), white)
    io.write_bsr(out / "result.bsr", x)
    io.write_motions(out / "motions.json-lines", p)
    lines = []
    for i, tr in enumerate(traces):
        body = tr.to_tsv().splitlines()
        if i == 0:
            lines.append("stage\t" + body[0])
        lines.extend(f"{i}\t{row}" for row in body[1:])
    (out / "trace.tsv").write_text("\n".join(lines) + "\n")
    if not args.no_plot:
        from .plotting import plot_trace

        plot_trace(traces[-1], out / "trace.png", title=f"x{cfg.scale}, {len(burst)} frames")
    if args.compare:
        if fixture is None or fixture.hr is None:
            raise ConfigError("--compare needs a fixture with hr.ppm")
        from .plotting import plot_comparison

        base = baseline_bicubic(burst[0], cfg.scale)
        border = cfg.scale + 2
        plot_comparison({
            f"bicubic {psnr(base, fixture.hr, border=border):.2f} dB": base,
            f"burst {psnr(x, fixture.hr, border=border):.2f} dB": x,
            "reference": fixture.hr,
        }, out / "comparison.png")
    last = traces[-1]
    geom = last.mean_geom()
    print(f"result\t{out / 'result.ppm'}\titers={sum(len(t) for t in traces)}"
          f"\tdata={last.data[-1]!r}\tgeom_px={'NA' if geom is None else repr(geom)}")
    return 0


# -- eval --------------------------------------------------------------------


def cmd_eval(args) -> int:
    x = _read_image(args.result)
    hr = _read_image(args.hr)
    p_hat = io.read_motions(args.motions) if args.motions else None
    p_true = io.read_motions(args.true_motions) if args.true_motions else None
    scale = args.scale
    cfg_file = Path(args.hr).parent / "config.txt"
    if scale is None and cfg_file.exists():
        scale = SynthConfig.from_kv(io.parse_kv(cfg_file.read_text())).scale
    if scale is None:
        scale = 1
    rep = evaluate(x, hr, p_hat, p_true, scale=scale, peak=args.peak)
    print(rep.to_json() if args.json else rep.to_line())
    return 0


# -- bench -------------------------------------------------------------------


def cmd_bench(args) -> int:
    kv = load_settings(args)
    cfg = hqs_from_settings(kv, HqsConfig(iters=args.iters, scale=args.scale))
    syn = SynthConfig(k=args.k, scale=cfg.scale, seed=args.seed)
    fx = make_burst(textured_image(args.size * cfg.scale, args.size * cfg.scale, seed=args.seed), syn)
    t0 = time.perf_counter()
    motions = coarse_align_burst(fx.frames, lk_from_settings(kv), args.threads)
    t1 = time.perf_counter()
    x, _, trace = hqs_run(fx.frames, motions, cfg, threads=args.threads)
    t2 = time.perf_counter()
    parts = {
        "z_step": float(np.sum(trace.time_z)),
        "refine": float(np.sum(trace.time_refine)),
        "prox": float(np.sum(trace.time_prox)),
    }
    loop = sum(parts.values())
    pct = {k: 100.0 * v / loop for k, v in parts.items()}
    print(f"wall\t{t2 - t0:.4f}\talign\t{t1 - t0:.4f}\tsolve\t{t2 - t1:.4f}"
          f"\tframes\t{args.k}\tlr\t{args.size}\tscale\t{cfg.scale}\titers\t{len(trace)}")
    print(f"per_iter\t{loop / len(trace):.6f}\tz_step_per_iter\t{parts['z_step'] / len(trace):.6f}")
    for name, share in pct.items():
        print(f"breakdown\t{name}\t{share:.2f}")
    if args.out:
        from .plotting import plot_breakdown

        Path(args.out).mkdir(parents=True, exist_ok=True)
        plot_breakdown(pct, Path(args.out) / "bench.png", title=f"{args.k} frames, x{cfg.scale}")
    return 0


# -- entry point -------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value config file")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    common.add_argument("--threads", type=int, default=1, help="worker threads (1 = reproducible reference)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="burstsr", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic burst fixture")
    p.add_argument("--out", required=True, help="fixture directory")
    p.add_argument("--hr", help="HR reference PPM/PGM (default: procedural scene)")
    p.add_argument("--size", type=int, default=128, help="procedural HR side, pixels")
    p.add_argument("--k", type=int)
    p.add_argument("--scale", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--no-noise", action="store_true")
    p.add_argument("--bilinear-downsample", action="store_true")
    p.add_argument("--srgb", action="store_true", help="linearize the HR reference first")
    p.add_argument("--rgb", action="store_true", help="RGB frames instead of Bayer mosaics")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("align", parents=[common], help="coarse Lucas-Kanade alignment of a burst")
    p.add_argument("--burst", required=True)
    p.add_argument("--out", help="motion file to write")
    p.add_argument("--report-error", action="store_true", help="append geometric error vs fixture motions")
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("sr", parents=[common], help="super-resolve a burst")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--burst", help="directory of frame_*.pgm/ppm")
    src.add_argument("--fixture", help="synth fixture directory (enables ground-truth diagnostics)")
    p.add_argument("--out", required=True)
    p.add_argument("--motions", help="initial motions instead of coarse alignment")
    p.add_argument("--use-gt-motions", action="store_true")
    p.add_argument("--no-refine", action="store_true")
    p.add_argument("--chain", help="coarse-to-fine factors, e.g. 2,2,2,2")
    p.add_argument("--no-plot", action="store_true")
    p.add_argument("--compare", action="store_true", help="also write comparison.png against the fixture HR")
    p.add_argument("--seed", type=int, default=0, help="accepted for uniformity; sr draws no random numbers")
    p.set_defaults(func=cmd_sr)

    p = sub.add_parser("eval", help="compare a result against the HR reference")
    p.add_argument("--result", required=True, help="result .ppm or .bsr")
    p.add_argument("--hr", required=True)
    p.add_argument("--motions")
    p.add_argument("--true-motions")
    p.add_argument("--scale", type=int, help="upsampling factor (PSNR border, LR grid); default from the fixture config")
    p.add_argument("--peak", type=float, default=1.0)
    p.add_argument("--json", action="store_true")
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", parents=[common], help="time the solver on a synthetic burst")
    p.add_argument("--k", type=int, default=14)
    p.add_argument("--size", type=int, default=32, help="LR side, pixels")
    p.add_argument("--scale", type=int, default=4)
    p.add_argument("--iters", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="directory for bench.png")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 4
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
