"""
Generalized multi-unitary decomposition (GMUD).

A P x M matrix with singular values ``lam_1 >= ... >= lam_M`` is factored as
``H = P_{theta,r} R_r Q_{theta,r}^H`` where ``R_r`` is lower triangular in its
leading M x M block with a prescribed leading entry ``r`` and zero rows below.
The unitary pair is built from the SVD, a Givens pair ``(W, X)`` that maps
``diag(lam)`` onto ``R_r``, and a phase rotation ``diag(e^{j theta}, 1, ...)``
applied on both sides. For a fixed ``r`` the triangular factor does not depend
on ``theta`` while the unitary pair does, which gives a one-parameter family
of transmit beams per gain value.
"""

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .numkit import InvalidArgumentError, adjoint, as_cmatrix, svd

__all__ = [
    "InvalidParameterError",
    "GmudParams",
    "RotationCoeffs",
    "GmudFactors",
    "rotation_coeffs",
    "r_elements",
    "givens_pair",
    "phase_rotation",
    "gmud_2x2",
    "gmud_general",
    "beam",
    "beam_from_svd",
]

TWO_PI = 2.0 * np.pi
# Width below which two singular values are treated as equal.
DEGENERATE_TOL = 1e-12
# Slack allowed when checking r against [lam_2, lam_1].
R_TOL = 1e-12


class InvalidParameterError(ValueError):
    """A decomposition parameter lies outside its admissible range."""


@dataclass(frozen=True)
class GmudParams:
    """Leading gain ``r`` of the triangular factor and phase direction ``theta``."""

    r: float
    theta: float = 0.0

    def __post_init__(self):
        r = float(self.r)
        if not np.isfinite(r) or r <= 0.0:
            raise InvalidParameterError(f"r must be a positive real, got {self.r!r}")
        theta = float(self.theta)
        if not np.isfinite(theta):
            raise InvalidParameterError(f"theta must be finite, got {self.theta!r}")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "theta", float(np.mod(theta, TWO_PI)))


class RotationCoeffs(NamedTuple):
    a: float
    b: float
    c: float
    s: float


@dataclass(frozen=True)
class GmudFactors:
    """``H = P @ R @ Q^H`` together with the parameters that produced it."""

    P: np.ndarray
    R: np.ndarray
    Q: np.ndarray
    params: Optional[GmudParams]
    singular_values: np.ndarray

    @property
    def z1(self):
        return float(self.R[1, 0].real)

    @property
    def z2(self):
        return float(self.R[1, 1].real)

    def reconstruct(self):
        return self.P @ self.R @ adjoint(self.Q)


def _check_r(lambda1, lambda2, r):
    if not np.isfinite(lambda1) or lambda1 <= 0.0:
        raise InvalidArgumentError(f"largest singular value must be positive, got {lambda1!r}")
    if lambda2 < 0.0 or lambda2 > lambda1 * (1 + R_TOL):
        raise InvalidArgumentError(f"need 0 <= lambda2 <= lambda1, got ({lambda1!r}, {lambda2!r})")
    if r <= 0.0:
        raise InvalidParameterError(f"r must be positive, got {r!r}")
    tol = R_TOL * max(1.0, lambda1)
    if r > lambda1 + tol or r < lambda2 - tol:
        raise InvalidParameterError(
            f"r={r!r} outside the singular-value interval [{lambda2!r}, {lambda1!r}]"
        )
    return min(max(r, lambda2), lambda1)


def _coeffs_nondegenerate(lambda1, lambda2, r):
    # Factored into bounded ratios of directly computed differences, so that
    # neither near-equal singular values nor tiny r lose accuracy.
    r = np.asarray(r, dtype=float)
    d = lambda1 - lambda2
    tot = lambda1 + lambda2
    ra = np.maximum(r - lambda2, 0.0) / d
    rb = np.maximum(lambda1 - r, 0.0) / d
    a = np.sqrt(ra) * np.sqrt((r + lambda2) / tot)
    b = np.sqrt(rb) * np.sqrt((lambda1 + r) / tot)
    c2 = (np.maximum(r - lambda2, 0.0) / r) * (lambda1 / d) * ((r + lambda2) / r) * (lambda1 / tot)
    c = np.minimum(np.sqrt(c2), 1.0)
    s = np.minimum((lambda2 / r) * np.sqrt(rb * ((lambda1 + r) / tot)), 1.0)
    # the interval endpoints are exact: identity at lambda1, full swap at lambda2
    top = r >= lambda1
    low = r <= lambda2
    a = np.where(top, 1.0, np.where(low, 0.0, a))
    b = np.where(top, 0.0, np.where(low, 1.0, b))
    c = np.where(top, 1.0, np.where(low, 0.0, c))
    s = np.where(top, 0.0, np.where(low, 1.0, s))
    return a, b, c, s


def rotation_coeffs(lambda1, lambda2, r):
    """
    Givens coefficients that move ``r`` onto the (1, 1) entry.

    Solves ``a c lam1 + b s lam2 = r`` and ``a s lam1 - b c lam2 = 0`` with
    ``a^2 + b^2 = c^2 + s^2 = 1``, all coefficients on the non-negative branch.

    Parameters
    ----------
    lambda1, lambda2 : float
        Largest and smallest singular value of a 2-column matrix.
    r : float
        Prescribed leading gain, ``lambda2 <= r <= lambda1``.

    Returns
    -------
    RotationCoeffs
    """
    lambda1 = float(lambda1)
    lambda2 = float(lambda2)
    r = _check_r(lambda1, lambda2, float(r))
    if lambda1 - lambda2 <= DEGENERATE_TOL * max(1.0, lambda1):
        if abs(r - lambda1) > 1e-9:
            raise InvalidParameterError(
                f"equal singular values admit only r = {lambda1!r}, got {r!r}"
            )
        return RotationCoeffs(1.0, 0.0, 1.0, 0.0)
    a, b, c, s = _coeffs_nondegenerate(lambda1, lambda2, r)
    return RotationCoeffs(float(a), float(b), float(c), float(s))


def r_elements(coeffs, lambda1, lambda2):
    """Second-row entries ``(z1, z2)`` of the 2 x 2 triangular block."""
    a, b, c, s = coeffs
    z1 = b * c * lambda1 - a * s * lambda2
    z2 = b * s * lambda1 + a * c * lambda2
    return float(z1), float(z2)


def givens_pair(coeffs, p_dim):
    """Left rotation ``W`` (p_dim x p_dim) and right rotation ``X`` (2 x 2)."""
    a, b, c, s = coeffs
    W = np.eye(p_dim, dtype=np.complex128)
    W[:2, :2] = [[a, b], [-b, a]]
    X = np.array([[c, s], [-s, c]], dtype=np.complex128)
    return W, X


def phase_rotation(theta, n):
    """``diag(e^{j theta}, 1, ..., 1)`` of size n."""
    M = np.eye(n, dtype=np.complex128)
    M[0, 0] = np.exp(1j * theta)
    return M


def _triangular_block(r, z1, z2, shape):
    R = np.zeros(shape, dtype=np.complex128)
    R[0, 0] = r
    R[1, 0] = z1
    R[1, 1] = z2
    return R


def gmud_2x2(H, params):
    """
    GMUD of a two-column matrix.

    Parameters
    ----------
    H : array_like
        P_dim x 2 complex matrix, P_dim >= 2.
    params : GmudParams
        Leading gain ``r`` in ``[lam_2, lam_1]`` and phase ``theta``.

    Returns
    -------
    GmudFactors
        ``P = U M1 W``, ``R`` with first column ``(r, z1, 0, ...)`` and second
        column ``(0, z2, 0, ...)``, and ``Q = V M2 X``.
    """
    H = as_cmatrix(H, "H")
    p_dim, m = H.shape
    if m != 2 or p_dim < 2:
        raise InvalidArgumentError(f"gmud_2x2 needs a P x 2 matrix with P >= 2, got {H.shape}")
    U, lam, V = svd(H)
    return _gmud_2x2_from_svd(U, lam, V, params)


def _gmud_2x2_from_svd(U, lam, V, params):
    p_dim = U.shape[0]
    coeffs = rotation_coeffs(lam[0], lam[1], params.r)
    z1, z2 = r_elements(coeffs, lam[0], lam[1])
    # R is fixed before theta enters anywhere
    R = _triangular_block(params.r, z1, z2, (p_dim, 2))
    W, X = givens_pair(coeffs, p_dim)
    P = U @ phase_rotation(params.theta, p_dim) @ W
    Q = V @ phase_rotation(params.theta, 2) @ X
    return GmudFactors(P=P, R=R, Q=Q, params=params, singular_values=lam.copy())


def _check_majorization(targets, lam):
    t = np.sort(np.abs(targets))[::-1]
    tp = np.cumprod(t)
    lp = np.cumprod(lam)
    k = len(lam)
    for n in range(k - 1):
        if tp[n] > lp[n] * (1 + 1e-10) + 1e-300:
            raise InvalidParameterError(
                f"diagonal targets are not majorized by the singular values: product of the "
                f"{n + 1} largest targets {tp[n]!r} exceeds {lp[n]!r}"
            )
    if abs(tp[-1] - lp[-1]) > 1e-9 * max(1.0, lp[-1]):
        raise InvalidParameterError(
            f"product of all {k} targets {tp[-1]!r} must equal the product of the singular "
            f"values {lp[-1]!r}"
        )


def _gmud_recursive(H, targets, thetas):
    """Returns (P, R, Q) with H = P R Q^H and diag(R) = targets."""
    p_dim, m = H.shape
    U, lam, V = svd(H)
    if m == 1:
        R = np.zeros((p_dim, 1), dtype=np.complex128)
        R[0, 0] = lam[0]
        return U, R, V
    r = float(targets[0])
    tol = R_TOL * max(1.0, lam[0])
    if r > lam[0] + tol or r < lam[-1] - tol:
        raise InvalidParameterError(
            f"target {r!r} outside the running singular-value interval [{lam[-1]!r}, {lam[0]!r}]"
        )
    # adjacent pair lam[p] >= r >= lam[p + 1]; p = 0 whenever r >= lam[1]
    p = 0
    while p < m - 2 and lam[p + 1] > r:
        p += 1
    perm = [p, p + 1] + [i for i in range(m) if i not in (p, p + 1)]
    rperm = perm + list(range(m, p_dim))
    U = U[:, rperm]
    V = V[:, perm]
    lam_p = lam[perm]

    coeffs = rotation_coeffs(lam_p[0], lam_p[1], r)
    z1, z2 = r_elements(coeffs, lam_p[0], lam_p[1])
    W, X2 = givens_pair(coeffs, p_dim)
    X = np.eye(m, dtype=np.complex128)
    X[:2, :2] = X2
    theta = float(thetas[0]) if len(thetas) else 0.0
    P1 = U @ phase_rotation(theta, p_dim) @ W
    Q1 = V @ phase_rotation(theta, m) @ X

    # trailing block after pinning r: diag(z2, remaining singular values)
    B = np.zeros((p_dim - 1, m - 1), dtype=np.complex128)
    B[0, 0] = z2
    for i, v in enumerate(lam_p[2:], start=1):
        B[i, i] = v
    Pb, Rb, Qb = _gmud_recursive(B, targets[1:], thetas[1:])

    R = np.zeros((p_dim, m), dtype=np.complex128)
    R[0, 0] = r
    col = np.zeros(p_dim - 1, dtype=np.complex128)
    col[0] = z1
    R[1:, 0] = adjoint(Pb) @ col
    R[1:, 1:] = Rb
    P = P1.copy()
    P[:, 1:] = P1[:, 1:] @ Pb
    Q = Q1.copy()
    Q[:, 1:] = Q1[:, 1:] @ Qb
    return P, R, Q


def gmud_general(H, diag_targets, thetas=None):
    """
    GMUD with a fully prescribed lower-triangular diagonal.

    Each step pins the next diagonal target with a 2 x 2 rotation between the
    adjacent singular values that bracket it, then recurses on the
    (P - 1) x (M - 1) trailing block with a fresh SVD.

    Parameters
    ----------
    H : array_like
        P x M complex matrix with M <= P.
    diag_targets : sequence of float
        Length-M diagonal for ``R``; must be multiplicatively majorized by the
        singular values of ``H``.
    thetas : sequence of float, optional
        Phase parameter for each rotation step (length M - 1). Defaults to 0.

    Returns
    -------
    GmudFactors
        ``params`` holds ``(diag_targets[0], thetas[0])`` when M >= 2.
    """
    H = as_cmatrix(H, "H")
    p_dim, m = H.shape
    if m > p_dim:
        raise InvalidArgumentError(f"gmud_general needs M <= P, got shape {H.shape}")
    targets = np.asarray(diag_targets, dtype=float)
    if targets.shape != (m,):
        raise InvalidArgumentError(f"expected {m} diagonal targets, got {targets.shape}")
    if np.any(targets <= 0):
        raise InvalidParameterError("diagonal targets must be positive")
    thetas = np.zeros(max(m - 1, 0)) if thetas is None else np.asarray(thetas, dtype=float)
    if len(thetas) < m - 1:
        raise InvalidArgumentError(f"expected {m - 1} phase parameters, got {len(thetas)}")
    lam = svd(H).singular_values
    _check_majorization(targets, lam)
    P, R, Q = _gmud_recursive(H, targets, np.mod(thetas, TWO_PI))
    params = GmudParams(targets[0], thetas[0]) if m >= 2 else None
    return GmudFactors(P=P, R=R, Q=Q, params=params, singular_values=lam)


def beam_from_svd(V, lambda1, lambda2, r, theta):
    """First column of ``Q = V M2 X``, i.e. ``V @ (c e^{j theta}, -s)``.

    `r` and `theta` may be arrays of equal shape; the result then has that
    shape plus a trailing axis of length 2.
    """
    r = np.asarray(r, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if np.ndim(r) == 0 and np.ndim(theta) == 0:
        a, b, c, s = rotation_coeffs(lambda1, lambda2, float(r))
        return V @ np.array([np.exp(1j * theta) * c, -s])
    lambda1 = float(lambda1)
    lambda2 = float(lambda2)
    if lambda1 - lambda2 <= DEGENERATE_TOL * max(1.0, lambda1):
        c = np.ones_like(r)
        s = np.zeros_like(r)
    else:
        _, _, c, s = _coeffs_nondegenerate(lambda1, lambda2, r)
    coords = np.stack(np.broadcast_arrays(np.exp(1j * theta) * c, -s + 0j), axis=-1)
    return coords @ V.T


def beam(H, params):
    """Transmit beam of a user: the first column of ``Q_{theta,r}``, unit norm."""
    f = gmud_2x2(H, params)
    return f.Q[:, 0].copy()
