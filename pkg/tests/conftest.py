import numpy as np
import pytest

from spdsgd import manifold


def random_spd(rng: np.random.Generator, d: int, *, cond: float | None = None) -> np.ndarray:
    """Random SPD matrix; with ``cond`` given, its condition number is exact."""
    q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    if cond is None:
        lam = np.exp(rng.uniform(-1.0, 1.0, size=d))
    else:
        loglam = np.sort(rng.uniform(0.0, np.log(cond), size=d))
        loglam[0], loglam[-1] = 0.0, np.log(cond)
        lam = np.exp(loglam)
    return 0.5 * ((q * lam) @ q.T + ((q * lam) @ q.T).T)


def random_tangent(rng: np.random.Generator, d: int, max_norm: float) -> np.ndarray:
    g = rng.standard_normal((d, d))
    g = 0.5 * (g + g.T)
    fro = np.sqrt(np.sum(g * g))
    return g * (max_norm / fro) * rng.uniform(0.1, 1.0)


def random_invertible(rng: np.random.Generator, d: int) -> np.ndarray:
    q1, _ = np.linalg.qr(rng.standard_normal((d, d)))
    q2, _ = np.linalg.qr(rng.standard_normal((d, d)))
    return q1 @ np.diag(np.exp(rng.uniform(-0.7, 0.7, size=d))) @ q2


def triangle_slacks(
    rng: np.random.Generator, n_triangles: int, d: int, max_tangent_norm: float
) -> np.ndarray:
    """Slack of the curvature-corrected law of cosines on random triangles.

    Vertices: a base point, and two exponential-map images of random
    tangents at it.  The slack (right side minus left side) must be
    nonnegative up to roundoff when the correction factor uses the cone's
    curvature lower bound of -1/2.
    """
    slacks = []
    while len(slacks) < n_triangles:
        base = random_spd(rng, d)
        u = random_tangent(rng, d, max_tangent_norm)
        v = random_tangent(rng, d, max_tangent_norm)
        p1 = manifold.exp_map(base, u)
        p2 = manifold.exp_map(base, v)
        side_a = manifold.distance(p1, p2)
        log1 = manifold.log_map(base, p1)
        log2 = manifold.log_map(base, p2)
        side_b = manifold.norm(base, log1)
        side_c = manifold.norm(base, log2)
        if side_b < 1e-14 or side_c < 1e-14:
            continue
        cos_theta = manifold.inner(base, log1, log2) / (side_b * side_c)
        zeta = manifold.curvature_factor(manifold.SPD_CURVATURE_LOWER_BOUND, side_c)
        rhs = zeta * side_b**2 + side_c**2 - 2.0 * side_b * side_c * cos_theta
        slacks.append(rhs - side_a**2)
    return np.asarray(slacks)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
