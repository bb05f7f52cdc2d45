import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from burstsr import io
from burstsr.cli import main

GOLDEN = Path(__file__).parent / "golden"
SMOKE_SYNTH = ["synth", "--size", "64", "--k", "4", "--scale", "2", "--seed", "1"]
SMOKE_SR = ["--set", "iters=5"]


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def smoke(tmp_path_factory):
    root = tmp_path_factory.mktemp("smoke")
    assert main(SMOKE_SYNTH + ["--out", str(root / "fx")]) == 0
    return root / "fx"


def test_synth_layout(capsys, tmp_path):
    code, out, _ = run(capsys, "synth", "--out", tmp_path / "fx", "--size", 384, "--k", 14, "--scale", 4, "--seed", 3)
    assert code == 0
    assert "frames=14" in out and "lr=96x96" in out and "mode=raw" in out
    frames = sorted((tmp_path / "fx").glob("frame_*.pgm"))
    assert len(frames) == 14
    img, _ = io.read_netpbm(frames[0])
    assert img.shape == (1, 96, 96)
    assert len(io.read_motions(tmp_path / "fx" / "motions.json-lines")) == 14


def test_align_reports_small_errors(capsys, smoke, tmp_path):
    code, out, _ = run(capsys, "align", "--burst", smoke, "--out", tmp_path / "m.json-lines", "--report-error")
    assert code == 0
    rows = [line.split("\t") for line in out.strip().splitlines()]
    assert len(rows) == 4 and all(len(r) == 9 for r in rows)
    assert [int(r[0]) for r in rows] == [0, 1, 2, 3]
    assert all(float(r[8]) < 0.5 for r in rows)
    assert len(io.read_motions(tmp_path / "m.json-lines")) == 4


def test_sr_eval_round_trip(capsys, smoke, tmp_path):
    out_dir = tmp_path / "out"
    code, out, _ = run(capsys, "sr", "--fixture", smoke, "--out", out_dir, "--compare", *SMOKE_SR)
    assert code == 0 and out.startswith("result\t")
    names = {p.name for p in out_dir.iterdir()}
    assert names == {"result.ppm", "result.bsr", "motions.json-lines", "trace.tsv", "trace.png", "comparison.png"}
    header, *rows = (out_dir / "trace.tsv").read_text().splitlines()
    assert header.split("\t")[:3] == ["stage", "iter", "mu"] and len(rows) == 5

    code, out, _ = run(capsys, "eval", "--result", out_dir / "result.bsr", "--hr", smoke / "hr.ppm",
                       "--motions", out_dir / "motions.json-lines", "--true-motions", smoke / "motions.json-lines")
    psnr_db, ssim_v, geom = (float(v) for v in out.split())
    assert code == 0 and psnr_db > 15 and 0 < ssim_v <= 1 and geom < 0.5
    code, out, _ = run(capsys, "eval", "--result", smoke / "hr.ppm", "--hr", smoke / "hr.ppm", "--json")
    rep = json.loads(out)
    assert rep["psnr"] == "inf" and rep["geom_error_px"] is None
    assert rep["ssim"] == pytest.approx(1.0)


def test_sr_chain_and_gt_motions(capsys, tmp_path):
    assert main(["synth", "--out", str(tmp_path / "fx"), "--size", "64", "--k", "3", "--scale", "4", "--no-noise"]) == 0
    code, out, _ = run(capsys, "sr", "--fixture", tmp_path / "fx", "--out", tmp_path / "o", "--chain", "2,2",
                       "--use-gt-motions", "--no-refine", "--no-plot", "--set", "iters=3")
    assert code == 0 and "iters=6" in out
    assert io.read_bsr(tmp_path / "o" / "result.bsr").shape == (3, 64, 64)
    stages = {line.split("\t")[0] for line in (tmp_path / "o" / "trace.tsv").read_text().splitlines()[1:]}
    assert stages == {"0", "1"}


def test_exit_codes(capsys, smoke, tmp_path):
    assert run(capsys, "sr", "--burst", tmp_path / "missing", "--out", tmp_path / "o")[0] == 2
    (tmp_path / "bad.bsr").write_bytes(b"junk")
    assert run(capsys, "eval", "--result", tmp_path / "bad.bsr", "--hr", smoke / "hr.ppm")[0] == 2
    assert run(capsys, "sr", "--fixture", smoke, "--out", tmp_path / "o", "--set", "bogus=1")[0] == 3
    assert run(capsys, "sr", "--fixture", smoke, "--out", tmp_path / "o", "--set", "scale=3")[0] == 3
    assert run(capsys, "sr", "--fixture", smoke, "--out", tmp_path / "o", "--chain", "2,2")[0] == 3
    assert run(capsys, "sr", "--burst", smoke, "--out", tmp_path / "o", "--use-gt-motions")[0] == 0
    code, _, err = run(capsys, "sr", "--fixture", smoke, "--out", tmp_path / "o", "--no-refine",
                       "--set", "iters=3", "--set", "eta=1e200")
    assert code == 4 and "diverged" in err


def test_config_file_and_overrides(capsys, smoke, tmp_path):
    (tmp_path / "cfg.txt").write_text("iters = 2\nlambda = 0.01\nlk_levels = 2\n")
    code, out, _ = run(capsys, "sr", "--fixture", smoke, "--out", tmp_path / "o", "--config", tmp_path / "cfg.txt",
                       "--set", "iters=3", "--no-plot")
    assert code == 0 and "iters=3" in out


def test_sr_is_deterministic(smoke, tmp_path):
    for name in ("a", "b"):
        assert main(["sr", "--fixture", str(smoke), "--out", str(tmp_path / name)] + SMOKE_SR) == 0
    for f in ("result.ppm", "result.bsr", "motions.json-lines", "trace.png"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes(), f
    # timing columns differ run to run; everything else must not
    def untimed(d):
        return [line.split("\t")[:-3] for line in (d / "trace.tsv").read_text().splitlines()]

    assert untimed(tmp_path / "a") == untimed(tmp_path / "b")


def test_golden_smoke_result(smoke, tmp_path):
    assert main(["sr", "--fixture", str(smoke), "--out", str(tmp_path / "o"), "--no-plot"] + SMOKE_SR) == 0
    digest = hashlib.sha256((tmp_path / "o" / "result.bsr").read_bytes()).hexdigest()
    assert digest == (GOLDEN / "smoke_result.sha256").read_text().split()[0]


def _bench(capsys, *extra, iters=4):
    code, out, _ = run(capsys, "bench", "--size", 32, "--scale", 2, "--iters", iters, *extra)
    assert code == 0
    lines = [line.split("\t") for line in out.strip().splitlines()]
    return {row[0]: row[1:] for row in lines if row[0] != "breakdown"}, {
        row[1]: float(row[2]) for row in lines if row[0] == "breakdown"}


def test_bench_breakdown(capsys, tmp_path):
    head, parts = _bench(capsys, "--k", 6, "--out", tmp_path)
    assert set(parts) == {"z_step", "refine", "prox"}
    assert sum(parts.values()) == pytest.approx(100.0, abs=1.0)
    assert (tmp_path / "bench.png").exists()
    first = float(head["per_iter"][0])
    second = float(_bench(capsys, "--k", 6)[0]["per_iter"][0])
    assert 1 / 3 < first / second < 3


def test_bench_z_step_scales_linearly_in_frames(capsys):
    # millisecond timings: take the best of several longer runs
    def z_time(k):
        return min(float(_bench(capsys, "--k", k, iters=10)[0]["per_iter"][2]) for _ in range(5))

    t4, t8, t16 = z_time(4), z_time(8), z_time(16)
    assert t8 / t4 == pytest.approx(2.0, rel=0.3)
    assert t16 / t4 == pytest.approx(4.0, rel=0.3)


def test_synth_identity_fixture_is_mosaic_of_reference(capsys, tmp_path):
    from burstsr.forward import mosaic

    hr = np.random.default_rng(0).random((3, 16, 20))
    io.write_netpbm(tmp_path / "img.ppm", io.quantize16(hr))
    code, _, _ = run(capsys, "synth", "--hr", tmp_path / "img.ppm", "--k", 1, "--scale", 1, "--no-noise",
                     "--out", tmp_path / "fx")
    assert code == 0
    ref, _ = io.read_netpbm(tmp_path / "fx" / "hr.ppm")
    frame, _ = io.read_netpbm(tmp_path / "fx" / "frame_00.pgm")
    np.testing.assert_array_equal(frame[0], mosaic(ref))


def test_synth_same_seed_gives_identical_directories(tmp_path):
    for name in ("a", "b"):
        assert main(["synth", "--out", str(tmp_path / name), "--size", "64", "--k", "3", "--seed", "5"]) == 0
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert files == sorted(p.name for p in (tmp_path / "b").iterdir())
    assert all((tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes() for f in files)


def test_refinement_lowers_reported_geometric_error(capsys, tmp_path):
    geoms = {}
    for seed in (1, 2, 3):
        fx = tmp_path / f"fx{seed}"
        assert main(["synth", "--out", str(fx), "--size", "128", "--k", "6", "--scale", "4", "--seed", str(seed)]) == 0
        for flag in ("--no-refine", None):
            extra = [flag] if flag else []
            code, out, _ = run(capsys, "sr", "--fixture", fx, "--out", tmp_path / "o", "--no-plot",
                               "--set", "iters=10", *extra)
            assert code == 0
            geom = float(out.split("geom_px=")[1])
            geoms.setdefault(flag, []).append(geom)
    assert np.mean(geoms[None]) < np.mean(geoms["--no-refine"])
