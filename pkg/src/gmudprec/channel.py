"""
Channel models: multipath SISO channels as convolution (Toeplitz) matrices
and flat-fading MIMO matrices, with seeded per-(trial, user) draws.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.linalg import convolution_matrix

from .numkit import InvalidArgumentError, condition_number

__all__ = [
    "ChannelKind",
    "MultipathChannel",
    "ChannelEnsembleSpec",
    "stream_rng",
    "toeplitz",
    "draw_siso_multipath",
    "draw_mimo_flat",
    "draw_channel_matrices",
    "condition_stats",
]

# Stream tags keep channel, data and noise randomness in separate families.
STREAM_SISO = 1
STREAM_MIMO = 2
STREAM_LINK = 3


class ChannelKind(str, Enum):
    SISO_MULTIPATH = "siso_multipath"
    MIMO_FLAT = "mimo_flat"


@dataclass(frozen=True)
class MultipathChannel:
    taps: np.ndarray
    user_index: int = 0

    def __post_init__(self):
        taps = np.atleast_1d(np.asarray(self.taps, dtype=np.complex128))
        if taps.ndim != 1 or len(taps) < 1:
            raise InvalidArgumentError("a multipath channel needs at least one tap")
        if not np.all(np.isfinite(taps)):
            raise InvalidArgumentError("channel taps must be finite")
        object.__setattr__(self, "taps", taps)

    @property
    def paths(self):
        return len(self.taps)

    def matrix(self):
        return toeplitz(self)


@dataclass(frozen=True)
class ChannelEnsembleSpec:
    """Random channel ensemble.

    ``paths`` is used for SISO multipath, ``(n_tx, n_rx)`` for flat MIMO.
    """

    kind: ChannelKind = ChannelKind.SISO_MULTIPATH
    users: int = 2
    paths: int = 2
    n_tx: int = 2
    n_rx: int = 2
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", ChannelKind(self.kind))
        if self.users < 1:
            raise InvalidArgumentError("need at least one user")
        if self.kind is ChannelKind.SISO_MULTIPATH and self.paths < self.users:
            raise InvalidArgumentError(
                f"multipath mode needs paths >= users (M >= K), got M={self.paths}, K={self.users}"
            )
        if self.kind is ChannelKind.MIMO_FLAT and min(self.n_tx, self.n_rx) < 1:
            raise InvalidArgumentError("antenna counts must be positive")
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidArgumentError("seed must be an unsigned 64-bit integer")


def stream_rng(seed, *key):
    """Generator for the counter-addressed stream ``(seed, *key)``.

    The stream depends only on its key, never on call order, so trials can be
    evaluated in any order or process.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def _cn(rng, shape, var):
    return np.sqrt(var / 2.0) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def toeplitz(ch):
    """(2M - 1) x M convolution matrix: column j is the tap vector delayed by j."""
    taps = ch.taps if isinstance(ch, MultipathChannel) else MultipathChannel(ch).taps
    m = len(taps)
    return convolution_matrix(taps, m, mode="full").astype(np.complex128)


def draw_siso_multipath(spec, trial):
    """K independent M-tap channels, each tap CN(0, 1/M)."""
    if spec.kind is not ChannelKind.SISO_MULTIPATH:
        raise InvalidArgumentError("ensemble is not multipath")
    out = []
    for k in range(spec.users):
        rng = stream_rng(spec.seed, STREAM_SISO, trial, k)
        out.append(MultipathChannel(_cn(rng, spec.paths, 1.0 / spec.paths), k))
    return out


def draw_mimo_flat(spec, trial):
    """K independent n_rx x n_tx matrices with CN(0, 1) entries."""
    if spec.kind is not ChannelKind.MIMO_FLAT:
        raise InvalidArgumentError("ensemble is not flat MIMO")
    out = []
    for k in range(spec.users):
        rng = stream_rng(spec.seed, STREAM_MIMO, trial, k)
        out.append(_cn(rng, (spec.n_rx, spec.n_tx), 1.0))
    return out


def draw_channel_matrices(spec, trial):
    """Per-user channel matrices for either ensemble kind."""
    if spec.kind is ChannelKind.SISO_MULTIPATH:
        return [toeplitz(ch) for ch in draw_siso_multipath(spec, trial)]
    return draw_mimo_flat(spec, trial)


def condition_stats(spec, trials):
    """
    Median and mean condition number over `trials` draws of every user's
    channel matrix.

    Returns
    -------
    dict
        ``median``, ``mean`` and ``count``.
    """
    if trials < 1:
        raise InvalidArgumentError("trials must be >= 1")
    conds = [
        condition_number(H)
        for t in range(trials)
        for H in draw_channel_matrices(spec, t)
    ]
    conds = np.asarray(conds)
    return {"median": float(np.median(conds)), "mean": float(np.mean(conds)), "count": len(conds)}
