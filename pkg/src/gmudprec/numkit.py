"""
Small dense complex linear algebra.

Matrices are plain 2D numpy arrays of dtype complex128. Everything here is
tuned for the tiny shapes used by the precoder (at most 8x8): the SVD is a
one-sided Jacobi sweep, which converges to full double precision on such
matrices in a handful of sweeps.
"""

from typing import NamedTuple

import numpy as np

__all__ = [
    "InvalidArgumentError",
    "NumericalDegeneracyError",
    "SvdResult",
    "as_cmatrix",
    "identity",
    "adjoint",
    "matmul",
    "frobenius_norm",
    "diag_embed",
    "svd",
    "hermitian_solve",
    "condition_number",
]

# Off-diagonal Gram entries below this (relative) are treated as converged.
_JACOBI_TOL = 32 * np.finfo(float).eps
_MAX_SWEEPS = 60
_TINY = 1e-200


class InvalidArgumentError(ValueError):
    """Raised for malformed, non-finite or dimensionally inconsistent input."""


class NumericalDegeneracyError(ArithmeticError):
    """Raised when a factorization breaks down (e.g. matrix not positive definite)."""


class SvdResult(NamedTuple):
    """Full SVD ``A = U @ diag_embed(s, A.shape) @ V^H``."""

    U: np.ndarray
    singular_values: np.ndarray
    V: np.ndarray


def as_cmatrix(a, name="matrix"):
    """Return `a` as a finite 2D complex128 array (1D input becomes a column)."""
    arr = np.asarray(a, dtype=np.complex128)
    if arr.ndim == 1:
        arr = arr[:, np.newaxis]
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise InvalidArgumentError(f"{name} must be a non-empty 2D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError(f"{name} contains non-finite entries")
    return arr


def identity(n):
    return np.eye(n, dtype=np.complex128)


def adjoint(a):
    return np.conj(np.asarray(a)).T


def matmul(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape[-1] != b.shape[0]:
        raise InvalidArgumentError(f"cannot multiply shapes {a.shape} and {b.shape}")
    return a @ b


def frobenius_norm(a):
    return float(np.linalg.norm(np.asarray(a)))


def diag_embed(values, shape):
    """Place the real sequence `values` on the main diagonal of a zero matrix of `shape`."""
    values = np.asarray(values, dtype=float)
    rows, cols = shape
    if values.ndim != 1 or len(values) > min(rows, cols):
        raise InvalidArgumentError(f"{len(values)} diagonal values do not fit shape {shape}")
    out = np.zeros((rows, cols), dtype=np.complex128)
    idx = np.arange(len(values))
    out[idx, idx] = values
    return out


def _complete_basis(Q, n):
    """Extend the orthonormal columns of `Q` (n x k) to an n x n unitary.

    Candidates are the standard basis vectors e_1, e_2, ... in order, so the
    completion is deterministic.
    """
    cols = [Q[:, i] for i in range(Q.shape[1])]
    for i in range(n):
        if len(cols) == n:
            break
        v = np.zeros(n, dtype=np.complex128)
        v[i] = 1.0
        # two Gram-Schmidt passes for numerical orthogonality
        for _ in range(2):
            for c in cols:
                v = v - c * np.vdot(c, v)
        nv = np.linalg.norm(v)
        if nv > 1e-8:
            cols.append(v / nv)
    return np.column_stack(cols)


def _jacobi_tall(A):
    """One-sided Jacobi on a tall matrix (rows >= cols).

    Returns (U, s, V) with U of full size rows x rows.
    """
    m, n = A.shape
    # scale to unit max entry to keep Gram entries clear of under/overflow
    amax = float(np.max(np.abs(A)))
    W = A / amax if amax > 0 else A.copy()
    V = np.eye(n, dtype=np.complex128)
    for _ in range(_MAX_SWEEPS):
        rotated = False
        # cyclic row-by-row pair order; this order also fixes the tie-break
        # for repeated singular values
        for i in range(n - 1):
            for j in range(i + 1, n):
                wi = W[:, i].copy()
                wj = W[:, j].copy()
                alpha = np.vdot(wi, wi).real
                beta = np.vdot(wj, wj).real
                g = np.vdot(wi, wj)
                ag = abs(g)
                # columns below _TINY (matrix is unit-scaled) count as zero
                if min(alpha, beta) < _TINY or ag <= _JACOBI_TOL * np.sqrt(alpha) * np.sqrt(beta):
                    continue
                rotated = True
                phase = g / ag
                zeta = (beta - alpha) / (2.0 * ag)
                if abs(zeta) > 1e150:
                    t = 0.5 / zeta
                else:
                    t = np.copysign(1.0, zeta) / (abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                # rotate (w_i, e^{-j phi} w_j) as a real Jacobi pair
                wj_ph = wj * np.conj(phase)
                W[:, i] = c * wi - s * wj_ph
                W[:, j] = (s * wi + c * wj_ph) * phase
                vi = V[:, i].copy()
                vj_ph = V[:, j] * np.conj(phase)
                V[:, i] = c * vi - s * vj_ph
                V[:, j] = (s * vi + c * vj_ph) * phase
        if not rotated:
            break
    else:  # pragma: no cover
        raise NumericalDegeneracyError("Jacobi SVD did not converge")

    sv = np.linalg.norm(W, axis=0)
    if amax > 0:
        W = W * amax
        sv = sv * amax
    # stable sort keeps sweep order for exact ties
    order = np.argsort(-sv, kind="stable")
    sv = sv[order]
    W = W[:, order]
    V = V[:, order]

    scale = sv[0] if sv[0] > 0 else 1.0
    nonzero = sv > 1e-14 * scale
    U_cols = W[:, nonzero] / sv[nonzero]
    sv[~nonzero] = 0.0

    # phase convention: first nonzero entry of each V column real, >= 0
    for k in range(n):
        col = V[:, k]
        idx = np.flatnonzero(np.abs(col) > 1e-14)
        if len(idx) == 0:
            continue
        ph = col[idx[0]] / abs(col[idx[0]])
        V[:, k] = col * np.conj(ph)
        if k < U_cols.shape[1]:
            U_cols[:, k] = U_cols[:, k] * np.conj(ph)

    U = _complete_basis(U_cols, m)
    return U, sv, V


def svd(A):
    """
    Full singular value decomposition of a small complex matrix.

    Parameters
    ----------
    A : array_like
        Complex matrix of shape (P, M).

    Returns
    -------
    SvdResult
        ``U`` (P x P unitary), ``singular_values`` (length min(P, M),
        descending) and ``V`` (M x M unitary) with
        ``A = U @ diag_embed(s, (P, M)) @ V^H``.

    Notes
    -----
    Each column of ``V`` is rotated so its first nonzero entry is real and
    non-negative; ``U`` absorbs the conjugate phase. Exactly repeated
    singular values keep the order produced by the cyclic Jacobi sweep.
    """
    A = as_cmatrix(A, "A")
    P, M = A.shape
    if P >= M:
        return SvdResult(*_jacobi_tall(A))
    # wide: factor A^H = V' S U'^H, so A = U' S V'^H, then re-apply the
    # convention on V (the left factor of A^H)
    Uh, s, Vh = _jacobi_tall(adjoint(A))
    U, V = Vh, Uh
    for k in range(len(s)):
        col = V[:, k]
        idx = np.flatnonzero(np.abs(col) > 1e-14)
        if len(idx) == 0:
            continue
        ph = col[idx[0]] / abs(col[idx[0]])
        V[:, k] = col * np.conj(ph)
        U[:, k] = U[:, k] * np.conj(ph)
    return SvdResult(U, s, V)


def hermitian_solve(A, b):
    """
    Solve ``A x = b`` for Hermitian positive definite `A`.

    Accepts stacks of systems (``A`` of shape (..., n, n), ``b`` of shape
    (..., n, k)) so the link simulator can solve one system per block.

    Raises
    ------
    NumericalDegeneracyError
        If the Cholesky factorization fails.
    """
    A = np.asarray(A, dtype=np.complex128)
    b = np.asarray(b, dtype=np.complex128)
    if A.shape[-1] != A.shape[-2] or A.shape[-1] != b.shape[-2]:
        raise InvalidArgumentError(f"incompatible shapes {A.shape} and {b.shape}")
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:
        raise NumericalDegeneracyError("matrix is not positive definite") from exc
    y = np.linalg.solve(L, b)
    return np.linalg.solve(np.conj(np.swapaxes(L, -1, -2)), y)


def condition_number(A):
    """Ratio of largest to smallest singular value; ``inf`` when rank deficient."""
    A = as_cmatrix(A, "A")
    s = svd(A).singular_values
    if s[0] == 0.0:
        raise InvalidArgumentError("condition number of the zero matrix is undefined")
    if s[-1] == 0.0:
        return float("inf")
    return float(s[0] / s[-1])
