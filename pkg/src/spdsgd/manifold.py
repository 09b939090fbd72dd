"""Geometry of the symmetric positive definite cone.

The metric is the affine-invariant one, ``<X, Y>_P = tr(X P^-1 Y P^-1)``,
under which the SPD matrices form a complete, simply connected manifold of
nonpositive sectional curvature.  Exponential and logarithm maps are exact
(no retraction approximations), and all operations broadcast over leading
axes: ``log_map(P, Q)`` with ``Q`` of shape ``(n, d, d)`` returns ``n``
tangent vectors in one call.

Tangent vectors at ``P`` are represented as plain symmetric matrices; the
base point is always passed explicitly.
"""

from __future__ import annotations

import numpy as np

from .symmat import (
    DomainError,
    check_symmetric,
    symmetrize,
    _eigh,
)

# Sectional curvature of the SPD cone under this metric is bounded below
# by -1/2, independent of dimension.
SPD_CURVATURE_LOWER_BOUND = -0.5


def validate_spd(p: np.ndarray, *, name: str = "matrix") -> np.ndarray:
    """Check that ``p`` is symmetric with strictly positive eigenvalues.

    Returns the validated float64 array; raises ``ValueError`` otherwise.
    """
    p = check_symmetric(p, name=name)
    w = np.linalg.eigvalsh(symmetrize(p))
    if not np.all(w > 0.0):
        raise ValueError(
            f"{name} is not positive definite (min eigenvalue {float(w.min()):.6e})"
        )
    return p


def is_spd(p: np.ndarray) -> bool:
    try:
        validate_spd(p)
        return True
    except ValueError:
        return False


def sqrt_and_inv_sqrt(p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Both ``P^{1/2}`` and ``P^{-1/2}`` from a single eigendecomposition."""
    w, v = _eigh(p)
    if not np.all(w > 0.0):
        bad = float(w[w <= 0.0].ravel()[0])
        raise DomainError(f"eigenvalue {bad:.6e} is not positive", bad)
    r = np.sqrt(w)
    half = symmetrize(np.einsum("...ik,...k,...jk->...ij", v, r, v))
    inv_half = symmetrize(np.einsum("...ik,...k,...jk->...ij", v, 1.0 / r, v))
    return half, inv_half


def _check_tangent(p: np.ndarray, x: np.ndarray, *, name: str = "tangent") -> np.ndarray:
    x = check_symmetric(x, name=name)
    if x.shape[-1] != p.shape[-1]:
        raise ValueError(
            f"{name} dimension {x.shape[-1]} does not match base dimension {p.shape[-1]}"
        )
    return x


def inner(p: np.ndarray, x: np.ndarray, y: np.ndarray) -> float | np.ndarray:
    """Affine-invariant inner product ``tr(X P^-1 Y P^-1)`` at base point ``p``.

    Computed as the Frobenius inner product of the whitened tangents
    ``P^-1/2 X P^-1/2`` and ``P^-1/2 Y P^-1/2``, which is numerically
    symmetric in its arguments.
    """
    p = np.asarray(p, dtype=np.float64)
    x = _check_tangent(p, x, name="X")
    y = _check_tangent(p, y, name="Y")
    _, w = sqrt_and_inv_sqrt(p)
    xw = w @ x @ w
    yw = w @ y @ w
    val = np.einsum("...ij,...ij->...", xw, yw)
    return float(val) if val.ndim == 0 else val


def norm(p: np.ndarray, x: np.ndarray) -> float | np.ndarray:
    """Norm induced by the affine-invariant metric at ``p``."""
    p = np.asarray(p, dtype=np.float64)
    x = _check_tangent(p, x, name="X")
    _, w = sqrt_and_inv_sqrt(p)
    xw = w @ x @ w
    val = np.sqrt(np.einsum("...ij,...ij->...", xw, xw))
    return float(val) if val.ndim == 0 else val


def exp_map(p: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Geodesic endpoint ``P^{1/2} exp(P^{-1/2} X P^{-1/2}) P^{1/2}``.

    Maps a tangent vector at ``p`` to the manifold; always lands strictly
    inside the cone.
    """
    p = np.asarray(p, dtype=np.float64)
    x = _check_tangent(p, x, name="X")
    half, inv_half = sqrt_and_inv_sqrt(p)
    s = symmetrize(inv_half @ x @ inv_half)
    w, v = _eigh(s)
    e = np.einsum("...ik,...k,...jk->...ij", v, np.exp(w), v)
    return symmetrize(half @ e @ half)


def _whitened_log(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """``log(P^{-1/2} Q P^{-1/2})`` with a positivity guard on the spectrum."""
    _, inv_half = sqrt_and_inv_sqrt(p)
    s = symmetrize(inv_half @ q @ inv_half)
    w, v = _eigh(s)
    if not np.all(w > 0.0):
        bad = float(w[w <= 0.0].ravel()[0])
        raise DomainError(
            f"relative eigenvalue {bad:.6e} is not positive; argument not SPD", bad
        )
    return np.einsum("...ik,...k,...jk->...ij", v, np.log(w), v)


def log_map(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Inverse of :func:`exp_map`: the tangent at ``p`` pointing to ``q``.

    Closed form ``P^{1/2} log(P^{-1/2} Q P^{-1/2}) P^{1/2}``; globally
    defined because the cone has nonpositive curvature.
    """
    p = np.asarray(p, dtype=np.float64)
    q = check_symmetric(q, name="Q")
    if q.shape[-1] != p.shape[-1]:
        raise ValueError(
            f"dimension mismatch: P has dim {p.shape[-1]}, Q has dim {q.shape[-1]}"
        )
    half, _ = sqrt_and_inv_sqrt(p)
    return symmetrize(half @ _whitened_log(p, q) @ half)


def distance(p: np.ndarray, q: np.ndarray) -> float | np.ndarray:
    """Geodesic distance ``||log(P^{-1/2} Q P^{-1/2})||_F``.

    Symmetric in its arguments and invariant under congruence by any
    invertible matrix.
    """
    p = np.asarray(p, dtype=np.float64)
    q = check_symmetric(q, name="Q")
    if q.shape[-1] != p.shape[-1]:
        raise ValueError(
            f"dimension mismatch: P has dim {p.shape[-1]}, Q has dim {q.shape[-1]}"
        )
    lw = _whitened_log(p, q)
    val = np.sqrt(np.einsum("...ij,...ij->...", lw, lw))
    return float(val) if val.ndim == 0 else val


def parallel_transport(p: np.ndarray, q: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Transport the tangent ``x`` at ``p`` along the geodesic to ``q``.

    Uses ``E X E^T`` with ``E = P^{1/2} (P^{-1/2} Q P^{-1/2})^{1/2} P^{-1/2}``,
    an isometry of the tangent spaces: the norm at ``q`` of the result equals
    the norm of ``x`` at ``p``.
    """
    p = np.asarray(p, dtype=np.float64)
    q = validate_spd(q, name="Q")
    x = _check_tangent(p, x, name="X")
    half, inv_half = sqrt_and_inv_sqrt(p)
    s = symmetrize(inv_half @ q @ inv_half)
    w, v = _eigh(s)
    if not np.all(w > 0.0):
        bad = float(w[w <= 0.0].ravel()[0])
        raise DomainError(f"relative eigenvalue {bad:.6e} is not positive", bad)
    s_half = np.einsum("...ik,...k,...jk->...ij", v, np.sqrt(w), v)
    e = half @ s_half @ inv_half
    return symmetrize(e @ x @ np.swapaxes(e, -1, -2))


def curvature_factor(kappa: float, c: float | np.ndarray) -> float | np.ndarray:
    """Comparison factor ``sqrt(|kappa|) c / tanh(sqrt(|kappa|) c)`` for
    geodesic triangles on a manifold with curvature bounded below by ``kappa``.

    Always >= 1; extended continuously to 1 at ``kappa == 0`` (the flat
    limit, where the law of cosines is exact).
    """
    if kappa > 0.0:
        raise ValueError(f"curvature lower bound must be <= 0, got {kappa}")
    c = np.asarray(c, dtype=np.float64)
    if not np.all(c > 0.0):
        raise ValueError("comparison length c must be positive")
    if kappa == 0.0:
        out = np.ones_like(c)
        return float(out) if out.ndim == 0 else out
    t = np.sqrt(-kappa) * c
    out = t / np.tanh(t)
    return float(out) if out.ndim == 0 else out
