"""Reference implementations shared by the unit and acceptance tests."""
import numpy as np

from burstsr.tv import div, grad, tv_value


def prox_oracle(v, tau, gap_tol=1e-11, max_iter=500000):
    """Accelerated projected gradient on the dual of the TV prox.

    Minimizes ``0.5 * ||v + tau * div p||^2`` over ``|p_ij| <= 1``; the primal
    point is ``v + tau * div p``.  Stops on the duality gap, which bounds the
    primal error by ``sqrt(2 * gap)`` (the primal is 1-strongly convex).
    Independent of the library's Chambolle fixed point.
    """
    primal = lambda x: 0.5 * np.sum((x - v) ** 2) + tau * tv_value(x)  # noqa: E731
    px = np.zeros_like(v)
    py = np.zeros_like(v)
    qx, qy = px, py
    step = 1.0 / (8.0 * tau)
    t = 1.0
    for _ in range(max_iter):
        gx, gy = grad(v + tau * div(qx, qy))
        nx, ny = qx + step * gx, qy + step * gy
        norm = np.maximum(1.0, np.sqrt(nx**2 + ny**2))
        nx, ny = nx / norm, ny / norm
        t_new = 0.5 * (1 + np.sqrt(1 + 4 * t * t))
        qx = nx + (t - 1) / t_new * (nx - px)
        qy = ny + (t - 1) / t_new * (ny - py)
        px, py, t = nx, ny, t_new
        x = v + tau * div(px, py)
        dual = 0.5 * np.sum(v**2) - 0.5 * np.sum(x**2)
        if primal(x) - dual < gap_tol:
            return x
    raise AssertionError("oracle did not converge")
