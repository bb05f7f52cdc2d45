"""Randomized invariants over small random instances."""
import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from burstsr.forward import AffineMotion, DegradeConfig, FrameOperator
from burstsr.metrics import psnr
from burstsr.registration import geometric_error
from burstsr.tv import div, grad, prox_tv

small = st.floats(-0.05, 0.05)
seeds = st.integers(0, 2**31 - 1)
motions = st.builds(lambda a, b, c, d, e, f: AffineMotion.from_vector([a, b, c, d, e, f]),
                    small, small, small, small, small, small)


@settings(max_examples=30, deadline=None)
@given(motions, st.sampled_from([1, 2, 3]), st.booleans(), seeds)
def test_frame_operator_adjointness(p, s, raw, seed):
    n = 12 * s
    op = FrameOperator(p, DegradeConfig(scale=s, mosaic=raw and s != 3), (n, n))
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((3, n, n))
    y = rng.standard_normal(op.obs_shape)
    lhs = np.vdot(op.apply(x), y)
    rhs = np.vdot(x, op.adjoint(y))
    assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs))


@settings(max_examples=30, deadline=None)
@given(seeds, st.integers(1, 9), st.integers(1, 9))
def test_grad_div_adjoint(seed, h, w):
    rng = np.random.default_rng(seed)
    u = rng.standard_normal((2, h, w))
    px, py = rng.standard_normal((2, 2, h, w))
    gx, gy = grad(u)
    assert np.isclose(np.vdot(gx, px) + np.vdot(gy, py), -np.vdot(u, div(px, py)))


@settings(max_examples=25, deadline=None)
@given(seeds, st.floats(0.01, 0.5))
def test_prox_is_nonexpansive(seed, tau):
    rng = np.random.default_rng(seed)
    a, b = rng.random((2, 1, 8, 8))
    pa, pb = prox_tv(a, tau, 200), prox_tv(b, tau, 200)
    assert np.linalg.norm(pa - pb) <= np.linalg.norm(a - b) * (1 + 1e-3)
    # the mean is preserved by the TV prox
    assert np.isclose(pa.mean(), a.mean(), atol=1e-9)


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_psnr_symmetric(seed):
    a, b = np.random.default_rng(seed).random((2, 3, 6, 6))
    assert psnr(a, b) == psnr(b, a)


@settings(max_examples=40, deadline=None)
@given(motions, motions)
def test_geometric_error_metric_properties(p, q):
    assert geometric_error(p, p, 32, 24) == 0.0
    assert np.isclose(geometric_error(p, q, 32, 24), geometric_error(q, p, 32, 24))


@settings(max_examples=40, deadline=None)
@given(motions, motions)
def test_compose_inverse(p, q):
    ident = p.compose(p.inverse())
    assert np.allclose(ident.vector, 0, atol=1e-12)
    lhs = p.compose(q).inverse()
    rhs = q.inverse().compose(p.inverse())
    assert np.allclose(lhs.vector, rhs.vector, atol=1e-12)
