"""
Block transmission through precoded multi-user channels and linear MMSE
reception.

One block carries one symbol per user: ``u`` is K x 1, the transmit vector
``x = G u / sqrt(gamma)`` is M x 1 and user k observes
``y_k = H_k x + n_k``. Many blocks are processed at once by stacking them as
columns (``u`` of shape K x B).
"""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .numkit import InvalidArgumentError, hermitian_solve
from .precoder import normalize_and_transmit

__all__ = [
    "Modulation",
    "Constellation",
    "LinkResult",
    "modulate",
    "demodulate",
    "transmit_block",
    "mmse_filter",
    "mmse_estimate",
    "rotated_received",
    "simulate_blocks",
    "measure",
]


class Modulation(str, Enum):
    QPSK = "qpsk"
    QAM16 = "qam16"


# Gray-coded amplitude levels for a pair of bits, MSB first.
_QAM16_LEVELS = {(0, 0): 3.0, (0, 1): 1.0, (1, 1): -1.0, (1, 0): -3.0}


@dataclass(frozen=True)
class Constellation:
    """Gray-labelled unit-energy constellation.

    ``labels[i]`` holds the bits of ``points[i]``, MSB first. QPSK maps bit
    pair ``(b0, b1)`` to ``((1 - 2 b0) + j (1 - 2 b1)) / sqrt(2)``; 16QAM
    uses the per-axis Gray levels ``00 -> 3, 01 -> 1, 11 -> -1, 10 -> -3``
    (in-phase from the first two bits), scaled by ``1 / sqrt(10)``.
    """

    kind: Modulation
    points: np.ndarray
    labels: np.ndarray

    @property
    def bits_per_symbol(self):
        return self.labels.shape[1]

    @classmethod
    def make(cls, kind):
        kind = Modulation(kind)
        if kind is Modulation.QPSK:
            labels = np.array([[0, 0], [0, 1], [1, 0], [1, 1]], dtype=np.int8)
            points = ((1 - 2 * labels[:, 0]) + 1j * (1 - 2 * labels[:, 1])) / np.sqrt(2)
        else:
            labels = np.array(
                [[(i >> s) & 1 for s in (3, 2, 1, 0)] for i in range(16)], dtype=np.int8
            )
            re = np.array([_QAM16_LEVELS[(b[0], b[1])] for b in labels])
            im = np.array([_QAM16_LEVELS[(b[2], b[3])] for b in labels])
            points = (re + 1j * im) / np.sqrt(10)
        return cls(kind, points.astype(np.complex128), labels)


@dataclass
class LinkResult:
    """Error counts and per-user sufficient statistics for the output SINR.

    The empirical SINR of user k fits ``u_hat = a u + e`` by least squares
    over all its blocks and reports ``|a|^2 E|u|^2 / E|e|^2``; the sums kept
    here make results from several runs additive.
    """

    bit_errors: int = 0
    bits_sent: int = 0
    symbol_errors: int = 0
    symbols_sent: int = 0
    s_uu: np.ndarray = field(default_factory=lambda: np.zeros(0))
    s_yu: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=complex))
    s_yy: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def ber(self):
        return self.bit_errors / self.bits_sent if self.bits_sent else float("nan")

    @property
    def ser(self):
        return self.symbol_errors / self.symbols_sent if self.symbols_sent else float("nan")

    @property
    def measured_sinr_per_user(self):
        num = np.abs(self.s_yu) ** 2
        den = self.s_uu * self.s_yy - num
        with np.errstate(divide="ignore"):
            return np.where(den > 0, num / np.where(den > 0, den, 1.0), np.inf)


def modulate(bits, constellation):
    """Map a flat bit array onto symbols (MSB first within each symbol)."""
    bits = np.asarray(bits, dtype=np.int64).ravel()
    bps = constellation.bits_per_symbol
    if len(bits) % bps:
        raise InvalidArgumentError(f"bit count {len(bits)} is not a multiple of {bps}")
    weights = 1 << np.arange(bps - 1, -1, -1)
    idx = bits.reshape(-1, bps) @ weights
    return constellation.points[idx]


def _nearest(estimates, constellation):
    est = np.asarray(estimates, dtype=np.complex128)
    d = np.abs(est[..., None] - constellation.points) ** 2
    return np.argmin(d, axis=-1)


def demodulate(estimates, constellation):
    """Minimum-distance hard decisions, returned as a flat bit array."""
    idx = _nearest(estimates, constellation)
    return constellation.labels[np.ravel(idx)].ravel()


def transmit_block(channels, G, u, sigma2, rng):
    """
    Send precoded blocks through every user's channel.

    Parameters
    ----------
    channels : sequence of (P, M) arrays
    G : (M, K) array
    u : (K,) or (K, B) array
        Symbols, one column per block.
    sigma2 : float
        Noise variance per complex receive sample.
    rng : numpy.random.Generator

    Returns
    -------
    ys : list of arrays
        ``y_k`` with shape (P, B) (or (P,) for a single block).
    gamma : float or (B,) array
        Instantaneous normalization ``||G u||^2`` of each block.
    """
    if sigma2 < 0:
        raise InvalidArgumentError("sigma2 must be non-negative")
    x, gamma = normalize_and_transmit(G, u)
    ys = []
    for H in channels:
        H = np.asarray(H, dtype=np.complex128)
        clean = H @ x
        if sigma2 > 0:
            n = np.sqrt(sigma2 / 2.0) * (
                rng.standard_normal(clean.shape) + 1j * rng.standard_normal(clean.shape)
            )
            clean = clean + n
        ys.append(clean)
    return ys, gamma


def mmse_filter(H, G, gamma, sigma2):
    """
    Linear MMSE filter ``W = (Ht^H Ht + sigma2 I)^-1 Ht^H`` per block, with
    ``Ht = H G / sqrt(gamma)``.

    Returns
    -------
    W : (B, K, P) array
    Ht : (B, P, K) array
    """
    gamma = np.atleast_1d(np.asarray(gamma, dtype=float))
    if np.any(gamma <= 0):
        raise InvalidArgumentError("gamma must be positive")
    HG = np.asarray(H, dtype=np.complex128) @ np.asarray(G, dtype=np.complex128)
    Ht = HG[None, :, :] / np.sqrt(gamma)[:, None, None]
    K = HG.shape[1]
    Ht_h = np.conj(np.swapaxes(Ht, -1, -2))
    A = Ht_h @ Ht + sigma2 * np.eye(K)
    W = hermitian_solve(A, Ht_h)
    return W, Ht


def mmse_estimate(y, H, G, gamma, sigma2):
    """
    MMSE estimate of all K symbols from one user's observation.

    Parameters
    ----------
    y : (P,) or (P, B) array
    H : (P, M) array
    G : (M, K) array
    gamma : float or (B,) array
    sigma2 : float

    Returns
    -------
    (K,) or (K, B) array
        Estimates; user k keeps row k.

    Raises
    ------
    NumericalDegeneracyError
        When ``sigma2 = 0`` and ``H G`` is rank deficient.
    """
    y = np.asarray(y, dtype=np.complex128)
    squeeze = y.ndim == 1
    Y = y[:, None] if squeeze else y
    W, _ = mmse_filter(H, G, gamma, sigma2)
    est = np.einsum("bkp,pb->kb", W, Y)
    return est[:, 0] if squeeze else est


def rotated_received(factors, G, u, gamma):
    """
    Noiseless received vector of one user rebuilt from its GMUD factors.

    With ``H = P R Q^H`` and ``q1, q2`` the columns of ``Q``, the user sees
    ``P @ [r c1 u, (z1 c1 + z2 c2) u, 0, ...] / sqrt(gamma)`` where
    ``c_i = q_i^H G``. Only valid for two transmit dimensions.
    """
    Q = factors.Q
    R = factors.R
    if Q.shape != (2, 2):
        raise InvalidArgumentError("rotated form is defined for two transmit dimensions")
    u = np.asarray(u, dtype=np.complex128)
    c1 = np.conj(Q[:, 0]) @ G
    c2 = np.conj(Q[:, 1]) @ G
    r, z1, z2 = R[0, 0], R[1, 0], R[1, 1]
    inner = np.zeros((R.shape[0],) + u.shape[1:], dtype=np.complex128)
    inner[0] = r * (c1 @ u)
    inner[1] = (z1 * c1 + z2 * c2) @ u
    return factors.P @ inner / np.sqrt(gamma)


def simulate_blocks(channels, G, sigma2, constellation, n_blocks, rng):
    """
    Transmit `n_blocks` random blocks and detect each user's own symbol.

    Decisions are taken on the MMSE estimate divided by its own effective
    gain (the k-th diagonal entry of ``W Ht``), which removes the MMSE
    shrinkage before minimum-distance slicing.

    Returns
    -------
    LinkResult
    """
    K = np.asarray(G).shape[1]
    bps = constellation.bits_per_symbol
    bits = rng.integers(0, 2, size=(K, n_blocks, bps), dtype=np.int8)
    weights = 1 << np.arange(bps - 1, -1, -1)
    sym_idx = bits.astype(np.int64) @ weights
    u = constellation.points[sym_idx]
    ys, gamma = transmit_block(channels, G, u, sigma2, rng)
    gamma = np.atleast_1d(gamma)

    res = LinkResult(
        s_uu=np.zeros(K), s_yu=np.zeros(K, dtype=np.complex128), s_yy=np.zeros(K)
    )
    for k in range(K):
        W, Ht = mmse_filter(channels[k], G, gamma, sigma2)
        est = np.einsum("bp,pb->b", W[:, k, :], ys[k])
        gain = np.einsum("bp,bp->b", W[:, k, :], Ht[:, :, k]).real
        dec = _nearest(est / gain, constellation)
        res.symbol_errors += int(np.count_nonzero(dec != sym_idx[k]))
        res.bit_errors += int(np.count_nonzero(constellation.labels[dec] != bits[k]))
        uk = u[k]
        res.s_uu[k] = np.sum(np.abs(uk) ** 2)
        res.s_yu[k] = np.sum(est * np.conj(uk))
        res.s_yy[k] = np.sum(np.abs(est) ** 2)
    res.symbols_sent = K * n_blocks
    res.bits_sent = K * n_blocks * bps
    return res


def measure(runs):
    """Sum a sequence of :class:`LinkResult` into one."""
    runs = list(runs)
    if not runs:
        raise InvalidArgumentError("need at least one run")
    out = LinkResult(
        s_uu=np.zeros_like(runs[0].s_uu),
        s_yu=np.zeros_like(runs[0].s_yu),
        s_yy=np.zeros_like(runs[0].s_yy),
    )
    for r in runs:
        out.bit_errors += r.bit_errors
        out.bits_sent += r.bits_sent
        out.symbol_errors += r.symbol_errors
        out.symbols_sent += r.symbols_sent
        out.s_uu = out.s_uu + r.s_uu
        out.s_yu = out.s_yu + r.s_yu
        out.s_yy = out.s_yy + r.s_yy
    return out
