import numpy as np
import pytest

from burstsr.errors import ConfigError
from burstsr.forward import mosaic
from burstsr.image import (
    BayerFrame,
    bayer_channel_map,
    build_pyramid,
    channel_of,
    demosaic_bilinear,
    resize_bicubic,
    resize_bilinear,
    spatial_gradient,
    to_grayscale,
)


def neighbour_oracle(raw, v, u, c):
    """Average of same-channel samples in the 3x3 neighbourhood, with the
    bilinear weights: 4-neighbours for green, axis then diagonal pairs for
    red and blue."""
    if channel_of(u, v) == c:
        return raw[v, u]
    same = [(dv, du) for dv in (-1, 0, 1) for du in (-1, 0, 1)
            if (dv or du) and channel_of(u + du, v + dv) == c]
    if c == 1:
        same = [(dv, du) for dv, du in same if abs(dv) + abs(du) == 1]
    return np.mean([raw[v + dv, u + du] for dv, du in same])


def test_bayer_frame_validation():
    with pytest.raises(ConfigError):
        BayerFrame(np.zeros((3, 4)))
    with pytest.raises(ConfigError):
        BayerFrame(np.zeros((4, 4, 1)))
    f = BayerFrame(np.ones((4, 6)), noise=(1e-3, 1e-4))
    assert (f.width, f.height) == (6, 4)
    assert np.asarray(f).shape == (4, 6)


def test_channel_map_rggb():
    assert [channel_of(0, 0), channel_of(1, 0), channel_of(0, 1), channel_of(1, 1)] == [0, 1, 1, 2]
    cmap = bayer_channel_map(4, 4)
    for v in range(4):
        for u in range(4):
            assert cmap[v, u] == channel_of(u, v) == channel_of(u + 2, v + 4)


def test_demosaic_constant():
    out = demosaic_bilinear(np.full((6, 8), 0.3))
    np.testing.assert_allclose(out, 0.3, atol=1e-15)


def test_demosaic_channel_constants():
    rgb = np.stack([np.full((4, 4), v) for v in (1.0, 2.0, 3.0)])
    out = demosaic_bilinear(mosaic(rgb))
    np.testing.assert_allclose(out, rgb, atol=1e-12)


def test_demosaic_matches_stencil_oracle():
    raw = np.random.default_rng(0).random((8, 8))
    out = demosaic_bilinear(raw)
    for v in range(1, 7):
        for u in range(1, 7):
            for c in range(3):
                assert out[c, v, u] == pytest.approx(neighbour_oracle(raw, v, u, c), abs=1e-12)


def test_demosaic_copies_measured_samples():
    raw = np.random.default_rng(1).random((6, 6))
    out = demosaic_bilinear(raw)
    np.testing.assert_array_equal(mosaic(out), raw)


def test_grayscale():
    np.testing.assert_allclose(to_grayscale(np.ones((3, 2, 2))), 1.0)
    px = np.array([0.0, 3.0, 0.0]).reshape(3, 1, 1)
    assert to_grayscale(px)[0, 0, 0] == pytest.approx(1.0)
    img = np.random.default_rng(2).random((3, 5, 4))
    np.testing.assert_allclose(to_grayscale(img)[0], img.sum(0) / 3, atol=1e-15)
    with pytest.raises(ConfigError):
        to_grayscale(np.ones((2, 3, 3)))


def test_pyramid_shapes_and_constants():
    img = np.full((1, 33, 40), 0.7)
    pyr = build_pyramid(img, 3)
    assert [p.shape[1:] for p in pyr] == [(33, 40), (17, 20), (9, 10)]
    for level in pyr:
        np.testing.assert_allclose(level, 0.7, atol=1e-14)
    assert build_pyramid(img, 1)[0] is not None and len(build_pyramid(img, 1)) == 1
    with pytest.raises(ConfigError):
        build_pyramid(np.zeros((1, 16, 16)), 3)


def test_gradient_of_ramp():
    yy, xx = np.mgrid[0:6, 0:7].astype(float)
    gx, gy = spatial_gradient(2 * xx - 3 * yy)
    np.testing.assert_allclose(gx, 2.0)
    np.testing.assert_allclose(gy, -3.0)


def test_resize_preserves_constants_and_identity():
    img = np.random.default_rng(3).random((3, 6, 8))
    np.testing.assert_allclose(resize_bilinear(img, 8, 6), img, atol=1e-14)
    np.testing.assert_allclose(resize_bicubic(img, 8, 6), img, atol=1e-14)
    np.testing.assert_allclose(resize_bicubic(np.full((1, 4, 4), 0.2), 12, 12), 0.2, atol=1e-14)
