"""Riemannian centroid loss over a set of SPD matrices.

The objective is the mean squared geodesic distance

    f(M) = (1/N) sum_i d(M, A_i)^2,

whose Riemannian gradient at ``M`` is ``-(2/N) sum_i log_map(M, A_i)``.
Mini-batch gradients sample the terms i.i.d. uniformly with replacement, so
they are unbiased estimators of the full gradient with per-sample variance
shrinking as ``1/b`` in the batch size ``b``.

Everything funnels through one whitened eigendecomposition of the stack
``M^{-1/2} A_i M^{-1/2}``, so evaluating the loss, the full gradient, its
norm, and the per-sample gradient variance at the same point costs a single
stacked ``eigh``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import manifold
from .symmat import _eigh, symmetrize


@dataclass(frozen=True)
class Dataset:
    """An immutable stack of SPD matrices of common dimension.

    ``points`` has shape ``(n, d, d)``; every matrix is validated as SPD at
    construction and the storage is marked read-only, so datasets can be
    shared freely across threads.
    """

    points: np.ndarray

    def __post_init__(self):
        pts = np.ascontiguousarray(np.asarray(self.points, dtype=np.float64))
        if pts.ndim != 3 or pts.shape[-1] != pts.shape[-2]:
            raise ValueError(f"points must have shape (n, d, d), got {pts.shape}")
        if pts.shape[0] < 1:
            raise ValueError("dataset must contain at least one matrix")
        for i, a in enumerate(pts):
            try:
                manifold.validate_spd(a, name=f"matrix {i}")
            except ValueError as exc:
                raise ValueError(f"dataset invalid at index {i}: {exc}") from exc
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[-1]


@dataclass(frozen=True)
class ObjectiveSummary:
    """All per-point quantities at one base point, from one stacked eigh.

    ``whitened_logs[i] = log(M^{-1/2} A_i M^{-1/2})`` determines everything:
    squared distances are its squared Frobenius norms, the whitened full
    gradient is ``-2`` times its mean, and metric norms of tangents at ``M``
    equal Frobenius norms of their whitened forms.
    """

    value: float
    grad_norm: float
    sigma2: float
    whitened_logs: np.ndarray = field(repr=False)
    sqdists: np.ndarray = field(repr=False)
    base_sqrt: np.ndarray = field(repr=False)


def _whitened_logs(m: np.ndarray, points: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Whitened log stack for a base point: ``log(M^-1/2 A_i M^-1/2)``.

    Returns ``(logs, sqdists, m_half)``.
    """
    half, inv_half = manifold.sqrt_and_inv_sqrt(m)
    s = symmetrize(inv_half @ points @ inv_half)
    w, v = _eigh(s)
    if not np.all(w > 0.0):
        raise ValueError("dataset matrix not SPD relative to base point")
    lw = np.log(w)
    logs = np.einsum("nik,nk,njk->nij", v, lw, v)
    sqdists = np.einsum("nk,nk->n", lw, lw)
    return logs, sqdists, half


def _check_base(m: np.ndarray, data: Dataset) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    if m.shape != (data.dim, data.dim):
        raise ValueError(
            f"base point shape {m.shape} does not match dataset dimension {data.dim}"
        )
    return m


def loss(m: np.ndarray, data: Dataset) -> float:
    """Mean squared geodesic distance from ``m`` to the dataset."""
    m = _check_base(m, data)
    _, sqdists, _ = _whitened_logs(m, data.points)
    return float(np.mean(sqdists))


def point_gradient(m: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Riemannian gradient of ``d(., a)^2`` at ``m``: ``-2 log_map(m, a)``."""
    return -2.0 * manifold.log_map(m, a)


def full_gradient(m: np.ndarray, data: Dataset) -> np.ndarray:
    """Riemannian gradient of the centroid loss; zero exactly at the centroid."""
    m = _check_base(m, data)
    logs, _, half = _whitened_logs(m, data.points)
    return symmetrize(half @ (-2.0 * logs.mean(axis=0)) @ half)


def sample_batch(
    rng: np.random.Generator, n: int, b: int, *, replace: bool = True
) -> np.ndarray:
    """Draw a batch of ``b`` indices uniform over ``[0, n)``.

    With replacement by default (i.i.d. samples); ``replace=False`` requires
    ``b <= n``.  Deterministic given the generator state.
    """
    if n < 1:
        raise ValueError("dataset size must be positive")
    if b < 1:
        raise ValueError("batch size must be positive")
    if replace:
        return rng.integers(0, n, size=b)
    if b > n:
        raise ValueError(f"cannot draw {b} distinct indices from {n} points")
    return rng.choice(n, size=b, replace=False)


def batch_gradient(m: np.ndarray, data: Dataset, batch: np.ndarray) -> np.ndarray:
    """Mini-batch gradient: the mean of per-point gradients over ``batch``.

    Unbiased for :func:`full_gradient` under uniform sampling; duplicates in
    the batch are allowed (sampling is with replacement).
    """
    m = _check_base(m, data)
    batch = np.asarray(batch)
    if batch.ndim != 1 or batch.size < 1:
        raise ValueError("batch must be a nonempty 1-d index array")
    if batch.min() < 0 or batch.max() >= data.n:
        raise ValueError(f"batch index out of range [0, {data.n})")
    logs, _, half = _whitened_logs(m, data.points[batch])
    return symmetrize(half @ (-2.0 * logs.mean(axis=0)) @ half)


def gradient_variance(m: np.ndarray, data: Dataset) -> float:
    """Exact variance of a single-sample stochastic gradient at ``m``.

    ``(1/N) sum_i ||g_i - g_bar||_M^2`` where ``g_i`` is the per-point
    gradient; this is the tightest variance bound valid at ``m`` for uniform
    single-point sampling, and the batch-gradient deviation is exactly this
    divided by the batch size.
    """
    m = _check_base(m, data)
    logs, _, _ = _whitened_logs(m, data.points)
    centered = logs - logs.mean(axis=0)
    return float(4.0 * np.einsum("nij,nij->", centered, centered) / data.n)


def max_gradient_norm(trace) -> float:
    """Largest gradient norm over a trace of ``(point, gradient)`` pairs.

    A surrogate upper bound for the expected gradient norm along a run;
    nondecreasing as the trace extends.
    """
    trace = list(trace)
    if not trace:
        raise ValueError("trace must be nonempty")
    return max(float(manifold.norm(p, g)) for p, g in trace)


def objective_summary(m: np.ndarray, data: Dataset) -> ObjectiveSummary:
    """Loss, gradient norm and single-sample variance at ``m`` in one pass.

    The whitened log stack is retained so callers can form mini-batch
    gradients by averaging a subset (see :func:`batch_gradient_from_summary`)
    without a second eigendecomposition.
    """
    m = _check_base(m, data)
    logs, sqdists, half = _whitened_logs(m, data.points)
    mean_log = logs.mean(axis=0)
    grad_norm = 2.0 * float(np.sqrt(np.einsum("ij,ij->", mean_log, mean_log)))
    centered = logs - mean_log
    sigma2 = float(4.0 * np.einsum("nij,nij->", centered, centered) / data.n)
    return ObjectiveSummary(
        value=float(np.mean(sqdists)),
        grad_norm=grad_norm,
        sigma2=sigma2,
        whitened_logs=logs,
        sqdists=sqdists,
        base_sqrt=half,
    )


def batch_gradient_from_summary(summary: ObjectiveSummary, batch: np.ndarray) -> np.ndarray:
    """Mini-batch gradient reusing a precomputed :class:`ObjectiveSummary`.

    Bit-identical to :func:`batch_gradient` at the same point: the stacked
    eigendecomposition is computed per matrix, so selecting rows before or
    after decomposing yields the same floats.
    """
    logs = summary.whitened_logs[np.asarray(batch)]
    half = summary.base_sqrt
    return symmetrize(half @ (-2.0 * logs.mean(axis=0)) @ half)


@dataclass(frozen=True)
class Ball:
    """A geodesic ball: sampling region for the smoothness estimator."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(
            self, "center", manifold.validate_spd(self.center, name="ball center")
        )
        if not self.radius > 0.0:
            raise ValueError("ball radius must be positive")


def _random_tangent(rng: np.random.Generator, dim: int, max_norm: float) -> np.ndarray:
    """Symmetric direction with Frobenius norm uniform in (0, max_norm]."""
    g = rng.standard_normal((dim, dim))
    g = 0.5 * (g + g.T)
    fro = np.sqrt(np.sum(g * g))
    if fro == 0.0:
        return g
    return g * (max_norm * rng.uniform() / fro)


def smoothness_ratio(data: Dataset, x: np.ndarray, y: np.ndarray) -> float:
    """Gradient-Lipschitz ratio between two points.

    ``||grad f(x) - transport(grad f(y))||_x / d(x, y)`` with the transport
    taken along the connecting geodesic; the supremum of this ratio over a
    region is the geodesic smoothness constant of the loss there.
    """
    gx = full_gradient(x, data)
    gy = full_gradient(y, data)
    gap = gx - manifold.parallel_transport(y, x, gy)
    dxy = manifold.distance(x, y)
    if dxy < 1e-12:
        raise ValueError("points too close for a smoothness ratio")
    return float(manifold.norm(x, gap)) / float(dxy)


def estimate_smoothness(
    data: Dataset, probes: int, rng: np.random.Generator, region: Ball
) -> float:
    """Empirical geodesic smoothness constant of the loss on a ball.

    Samples ``probes`` point pairs inside ``region`` and returns the largest
    observed :func:`smoothness_ratio`.  A lower bound on the true constant;
    nondecreasing in ``probes`` for a fixed generator seed.  Degenerate pairs
    (distance below 1e-12) are skipped; if every pair degenerates, raises.
    """
    if probes < 1:
        raise ValueError("probes must be positive")
    dim = data.dim
    best = -1.0
    for _ in range(probes):
        x = manifold.exp_map(region.center, _random_tangent(rng, dim, region.radius))
        y = manifold.exp_map(x, _random_tangent(rng, dim, region.radius))
        if manifold.distance(x, y) < 1e-12:
            continue
        best = max(best, smoothness_ratio(data, x, y))
    if best < 0.0:
        raise RuntimeError("all sampled pairs were degenerate; cannot estimate smoothness")
    return best
