from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from burstsr import io
from burstsr.forward import AffineMotion, forward_apply, norm_scale
from burstsr.image import BayerFrame
from burstsr.metrics import psnr
from burstsr.synth import (
    NoiseModel,
    SynthConfig,
    degrade_to_burst,
    load_fixture,
    make_burst,
    make_fixture,
    sample_motions,
    textured_image,
)

GOLDEN = Path(__file__).parent / "golden"


def test_single_frame_is_identity():
    assert sample_motions(SynthConfig(k=1), (32, 32)) == [AffineMotion.identity()]


def test_zero_bounds_give_identities():
    cfg = SynthConfig(k=5, max_translation=0.0, max_rotation=0.0)
    assert all(p.is_identity() for p in sample_motions(cfg, (32, 32)))


def test_motions_respect_bounds():
    cfg = SynthConfig(k=50, max_translation=2.0, max_rotation=2.0, seed=3)
    c = norm_scale(48, 64)
    for p in sample_motions(cfg, (48, 64))[1:]:
        assert abs(np.degrees(p.angle)) <= 2.0 + 1e-12
        assert np.all(np.abs(p.shift * c) <= 2.0 + 1e-12)


def test_golden_motion_file(tmp_path):
    cfg = SynthConfig(k=4, seed=42)
    out = tmp_path / "motions.json-lines"
    io.write_motions(out, sample_motions(cfg, (96, 96)))
    assert out.read_bytes() == (GOLDEN / "motions_seed42_k4.json-lines").read_bytes()


def test_noiseless_frames_equal_forward_model_bitwise():
    rng = np.random.default_rng(0)
    hr = rng.random((3, 32, 32))
    cfg = SynthConfig(k=4, scale=2, noise=NoiseModel.off(), seed=1)
    motions = sample_motions(cfg, (16, 16))
    frames = degrade_to_burst(hr, motions, cfg)
    for f, p in zip(frames, motions):
        y, _ = forward_apply(hr, p, cfg.degrade)
        np.testing.assert_array_equal(np.asarray(f), y)
    assert isinstance(frames[0], BayerFrame)


def test_constant_scene_gives_constant_sites():
    hr = np.stack([np.full((16, 16), v) for v in (0.2, 0.5, 0.7)])
    cfg = SynthConfig(k=3, scale=2, noise=NoiseModel.off(), max_rotation=0.0, max_translation=0.0)
    for f in degrade_to_burst(hr, sample_motions(cfg, (8, 8)), cfg):
        y = np.asarray(f)
        assert np.all(y[0::2, 0::2] == 0.2) and np.all(y[1::2, 1::2] == 0.7)
        assert np.all(y[0::2, 1::2] == 0.5) and np.all(y[1::2, 0::2] == 0.5)


def test_noise_variance_monte_carlo():
    c = 0.4
    noise = NoiseModel(shot_gain=1e-3, read_variance=1e-4)
    hr = np.full((3, 4, 4), c)
    samples = []
    for seed in range(1000):
        cfg = SynthConfig(k=1, scale=2, noise=noise, seed=seed)
        samples.append(np.asarray(degrade_to_burst(hr, [AffineMotion.identity()], cfg)[0]))
    var = np.var(np.array(samples), axis=0).mean()
    expect = noise.shot_gain * c + noise.read_variance
    assert abs(var - expect) < 0.1 * expect


def test_determinism():
    hr = textured_image(64, 64, seed=2)
    a = make_burst(hr, SynthConfig(k=3, scale=2, seed=9))
    b = make_burst(hr, SynthConfig(k=3, scale=2, seed=9))
    for fa, fb in zip(a.frames, b.frames):
        np.testing.assert_array_equal(np.asarray(fa), np.asarray(fb))


def test_aliasing_signal_exceeds_noise_floor():
    # a chirp whose frequency passes the LR Nyquist rate
    n = 128
    xx = np.arange(n) / n
    chirp = 0.5 + 0.4 * np.sin(2 * np.pi * (4 * xx + 60 * xx**2))
    hr = np.tile(chirp, (3, n, 1))
    cfg = SynthConfig(k=1, scale=4, noise=NoiseModel.off(), mosaic=False)
    c = norm_scale(32, 32)
    y0, _ = forward_apply(hr, AffineMotion.identity(), cfg.degrade)
    y1, m1 = forward_apply(hr, AffineMotion.translation(0.5 / c, 0.0), cfg.degrade)
    diff = (y1 - y0)[:, m1]
    read_sd = np.sqrt(NoiseModel().read_variance)
    assert np.sqrt(np.mean(diff**2)) > 10 * read_sd


def test_fixture_round_trip(tmp_path):
    hr = textured_image(64, 64, seed=4)
    cfg = SynthConfig(k=3, scale=2, seed=5)
    fx = make_fixture(hr, cfg, tmp_path / "fx")
    files = sorted(p.name for p in (tmp_path / "fx").iterdir())
    assert files == ["config.txt", "frame_00.pgm", "frame_01.pgm", "frame_02.pgm",
                     "hr.ppm", "motions.json-lines", "noise.txt"]
    back = load_fixture(tmp_path / "fx")
    assert back.config == cfg
    np.testing.assert_array_equal(back.hr, fx.hr)
    for a, b in zip(fx.frames, back.frames):
        np.testing.assert_array_equal(np.asarray(a), np.asarray(b))
    assert back.frames[0].noise == (cfg.noise.shot_gain, cfg.noise.read_variance)
    assert [m.params for m in back.motions] == [m.params for m in fx.motions]


def test_rgb_fixture_and_self_eval(tmp_path):
    hr = textured_image(32, 32, seed=6)
    cfg = SynthConfig(k=1, scale=1, noise=NoiseModel.off(), mosaic=False)
    fx = make_fixture(hr, cfg, tmp_path / "fx")
    back = load_fixture(tmp_path / "fx")
    assert back.frames[0].shape == (3, 32, 32)
    assert psnr(back.frames[0], back.hr) == float("inf")
    np.testing.assert_array_equal(fx.frames[0], back.hr)


def test_srgb_and_bilinear_modes(tmp_path):
    hr = textured_image(32, 32, seed=7)
    cfg = SynthConfig(k=2, scale=2, noise=NoiseModel.off(), bilinear_downsample=True)
    fx = make_fixture(hr, cfg, tmp_path / "fx", srgb=True)
    assert fx.hr.max() < hr.max()  # gamma 2.2 darkens mid-tones
    y, _ = forward_apply(fx.hr, AffineMotion.identity(), cfg.degrade)
    assert not np.array_equal(np.asarray(fx.frames[0]), y)


def test_config_kv_round_trip():
    cfg = SynthConfig(k=7, scale=3, seed=11, mosaic=False, noise=NoiseModel(2e-3, 3e-4))
    back = SynthConfig.from_kv(io.parse_kv(io.format_kv(cfg.to_kv())))
    assert back == cfg
    assert replace(cfg, k=2).k == 2


def test_bad_config_rejected():
    from burstsr.errors import ConfigError

    with pytest.raises(ConfigError):
        SynthConfig(k=0)
    with pytest.raises(ConfigError):
        SynthConfig(max_translation=-1)
    with pytest.raises(ConfigError):
        NoiseModel(shot_gain=-1)
