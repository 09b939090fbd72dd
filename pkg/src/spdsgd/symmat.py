"""Dense symmetric linear algebra: eigendecomposition and spectral functions.

Matrices are plain float64 arrays of shape ``(..., d, d)``; every function
broadcasts over leading axes, so a stack of matrices is handled in one call.
Eigenvalues are returned in descending order and eigenvector signs follow a
fixed convention (first nonzero component positive), which makes repeated
calls on identical input bit-identical even in the presence of degenerate
eigenvalues.
"""

from __future__ import annotations

from typing import Callable, NamedTuple

import numpy as np


class DomainError(ValueError):
    """An eigenvalue fell outside the domain of the requested scalar function."""

    def __init__(self, message: str, eigenvalue: float):
        super().__init__(message)
        self.eigenvalue = eigenvalue


class NumericalError(RuntimeError):
    """The eigensolver failed to converge."""


class EigenDecomp(NamedTuple):
    """Spectral decomposition ``V @ diag(w) @ V.T`` of a symmetric matrix.

    ``eigenvalues`` has shape ``(..., d)`` in descending order;
    ``eigenvectors`` has shape ``(..., d, d)`` with column ``i`` paired with
    eigenvalue ``i``.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def symmetrize(a: np.ndarray) -> np.ndarray:
    """Return the symmetric part ``(a + a.T) / 2`` (transposing the last two axes)."""
    a = np.asarray(a, dtype=np.float64)
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def check_symmetric(a: np.ndarray, *, name: str = "matrix") -> np.ndarray:
    """Validate that ``a`` is a finite, square, (numerically) symmetric array.

    Returns the array as float64. Asymmetry beyond a small multiple of the
    matrix scale is an input error; exact storage symmetry is not required
    because downstream code symmetrizes.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise ValueError(f"{name} must be square, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    scale = max(1.0, float(np.max(np.abs(a))))
    skew = np.max(np.abs(a - np.swapaxes(a, -1, -2)))
    if skew > 1e-10 * scale:
        raise ValueError(f"{name} is not symmetric (max asymmetry {skew:.3e})")
    return a


def _eigh(s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Descending eigh of the symmetrized input, without sign normalization."""
    try:
        w, v = np.linalg.eigh(symmetrize(s))
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"symmetric eigensolver did not converge: {exc}") from exc
    return w[..., ::-1], v[..., ::-1]


def sym_eigen(s: np.ndarray) -> EigenDecomp:
    """Eigendecomposition of a symmetric matrix (or stack of them).

    Output is deterministic for bit-identical input: eigenvalues descending,
    and each eigenvector scaled so its first nonzero component is positive.
    """
    s = check_symmetric(s, name="input")
    w, v = _eigh(s)
    # Fix column signs: first nonzero component of each eigenvector positive.
    nonzero = v != 0.0
    first = np.argmax(nonzero, axis=-2)
    lead = np.take_along_axis(v, first[..., None, :], axis=-2)[..., 0, :]
    v = v * np.where(lead < 0.0, -1.0, 1.0)[..., None, :]
    return EigenDecomp(w, v)


def sym_apply_fn(
    s: np.ndarray,
    fn: Callable[[np.ndarray], np.ndarray],
    domain_guard: Callable[[np.ndarray], np.ndarray] | None = None,
    *,
    fn_name: str = "function",
) -> np.ndarray:
    """Apply a scalar function to a symmetric matrix through its spectrum.

    Returns ``V @ diag(fn(w)) @ V.T``, symmetric, so the eigenvalues of the
    output are exactly ``fn`` of the eigenvalues of the input.  When
    ``domain_guard`` is given, every eigenvalue must satisfy it; the first
    offender is reported in a :class:`DomainError`.
    """
    s = check_symmetric(s, name="input")
    w, v = _eigh(s)
    if domain_guard is not None:
        ok = np.asarray(domain_guard(w))
        if not np.all(ok):
            bad = float(w[~ok].ravel()[0])
            raise DomainError(
                f"eigenvalue {bad:.6e} outside the domain of {fn_name}", bad
            )
    fw = fn(w)
    return symmetrize(np.einsum("...ik,...k,...jk->...ij", v, fw, v))


def sym_exp(s: np.ndarray) -> np.ndarray:
    """Matrix exponential of a symmetric matrix."""
    return sym_apply_fn(s, np.exp, fn_name="exp")


def sym_log(s: np.ndarray) -> np.ndarray:
    """Matrix logarithm; requires all eigenvalues strictly positive."""
    return sym_apply_fn(s, np.log, lambda w: w > 0.0, fn_name="log")


def sym_sqrt(s: np.ndarray) -> np.ndarray:
    """Symmetric positive square root; requires all eigenvalues strictly positive."""
    return sym_apply_fn(s, np.sqrt, lambda w: w > 0.0, fn_name="sqrt")


def sym_inv_sqrt(s: np.ndarray) -> np.ndarray:
    """Inverse symmetric square root; requires all eigenvalues strictly positive."""
    return sym_apply_fn(s, lambda w: 1.0 / np.sqrt(w), lambda w: w > 0.0, fn_name="inv-sqrt")


def congruence(g: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Congruence transform ``G @ S @ G.T`` of a symmetric matrix.

    ``g`` must be invertible (not checked); the result is symmetrized.  By
    Sylvester's law of inertia this preserves positive definiteness.
    """
    g = np.asarray(g, dtype=np.float64)
    s = check_symmetric(s, name="S")
    if g.shape[-1] != s.shape[-2]:
        raise ValueError(
            f"dimension mismatch: G has shape {g.shape}, S has shape {s.shape}"
        )
    return symmetrize(g @ s @ np.swapaxes(g, -1, -2))
