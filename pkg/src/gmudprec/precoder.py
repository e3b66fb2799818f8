"""
Multi-user precoding from GMUD transmit beams.

Each user k contributes one beam, the first column of its ``Q_{theta_k,r_k}``,
scaled by a power factor ``alpha_k`` with ``sum(alpha_k**2) = 1``. The beams
are chosen to minimize the sum over users of the inverse SINR seen on the
leading GMUD component:

    1/SINR_k = sum_{l != k} alpha_l^2 |q_k^H q_l|^2 / alpha_k^2
               + sigma^2 * gamma_bar / (alpha_k^2 r_k^2)

where ``gamma_bar = sum(alpha**2)`` is the expected transmit normalization for
unit-energy symbols.
"""

from dataclasses import dataclass, field
from enum import Enum
from itertools import product
from typing import List, NamedTuple

import numpy as np

from .gmud import (
    DEGENERATE_TOL,
    _coeffs_nondegenerate,
    TWO_PI,
    GmudParams,
    InvalidParameterError,
    beam,
)
from .numkit import InvalidArgumentError, as_cmatrix, svd

__all__ = [
    "Objective",
    "OptimizerConfig",
    "UserParams",
    "PrecoderSolution",
    "BeamSearch",
    "inv_sinr_terms",
    "inv_sinr_sum",
    "optimize",
    "svd_baseline",
    "normalize_and_transmit",
    "power_grid",
]

# Largest cost tensor the exhaustive grid is allowed to materialize.
MAX_GRID_POINTS = 20_000_000


class Objective(str, Enum):
    SUM_INV_SINR = "sum_inv_sinr"
    MAX_MIN_SINR = "max_min_sinr"
    SUM_SINR = "sum_sinr"


@dataclass(frozen=True)
class OptimizerConfig:
    n_r: int = 8
    n_theta: int = 16
    n_power: int = 9
    refine_iters: int = 2
    refine_shrink: float = 0.25

    def __post_init__(self):
        for name in ("n_r", "n_theta", "n_power"):
            if int(getattr(self, name)) < 2:
                raise InvalidArgumentError(f"{name} must be >= 2")
        if self.refine_iters < 0:
            raise InvalidArgumentError("refine_iters must be >= 0")
        if not 0.0 < self.refine_shrink < 1.0:
            raise InvalidArgumentError("refine_shrink must lie in (0, 1)")


class UserParams(NamedTuple):
    r: float
    theta: float
    power: float


@dataclass
class PrecoderSolution:
    """Precoding matrix and the per-user parameters that built it.

    ``per_user[k].power`` is the amplitude factor alpha_k, so column k of
    ``G`` has norm alpha_k.
    """

    G: np.ndarray
    per_user: List[UserParams]
    gamma_avg: float
    predicted_inv_sinr: np.ndarray
    cost: float
    objective: Objective = Objective.SUM_INV_SINR
    history: List[float] = field(default_factory=list)


def _user_svd(H):
    H = as_cmatrix(H, "H")
    if H.shape[1] < 1:
        raise InvalidArgumentError("channel needs at least one column")
    U, lam, V = svd(H)
    if lam[0] <= 0.0:
        raise InvalidArgumentError("channel matrix is zero")
    return lam, V


def _beams(lam, V, r, theta):
    """Vectorized first column of Q for arrays of (r, theta).

    For more than two columns the leading gain r is pinned with the adjacent
    singular-value pair that brackets it, as in the first step of
    ``gmud_general``.
    """
    r = np.asarray(r, dtype=float)
    theta = np.asarray(theta, dtype=float)
    r, theta = np.broadcast_arrays(r, theta)
    m = len(lam)
    if m == 1:
        return np.broadcast_to(np.exp(1j * theta)[..., None] * V[:, 0], r.shape + (1,)).copy()
    p = np.zeros(r.shape, dtype=int)
    for i in range(1, m - 1):
        p += lam[i] > r
    l1 = lam[p]
    l2 = lam[p + 1]
    degenerate = (l1 - l2) <= DEGENERATE_TOL * np.maximum(1.0, l1)
    with np.errstate(divide="ignore", invalid="ignore"):
        _, _, c, s = _coeffs_nondegenerate(l1, l2, r)
    c = np.where(degenerate, 1.0, c)
    s = np.where(degenerate, 0.0, s)
    vp = V.T[p]
    vq = V.T[p + 1]
    return (np.exp(1j * theta) * c)[..., None] * vp - s[..., None] * vq


def power_grid(k, n_power):
    """Power splits ``w = alpha**2`` on the simplex, lexicographic order.

    Parts are ``i / (n_power + 1)`` with positive integers ``i`` summing to
    ``n_power + 1``; for two users this gives `n_power` interior points. The
    equal split is appended when it is not on the lattice.
    """
    if k == 1:
        return np.ones((1, 1))
    n = n_power + 1
    rows = [c for c in product(range(1, n), repeat=k - 1) if sum(c) < n]
    grid = np.array([list(c) + [n - sum(c)] for c in rows], dtype=float) / n
    eq = np.full(k, 1.0 / k)
    if not np.any(np.all(np.abs(grid - eq) < 1e-12, axis=1)):
        grid = np.vstack([grid, eq])
    return grid


def _inv_from_parts(w, r, rho2, sigma2):
    """Per-user inverse SINR.

    ``w`` (..., K) power splits, ``r`` (..., K) gains, ``rho2`` (..., K, K)
    squared beam inner products (diagonal ignored).
    """
    k = w.shape[-1]
    gamma_bar = np.sum(w, axis=-1, keepdims=True)
    off = rho2 * (1.0 - np.eye(k))
    interf = np.einsum("...kl,...l->...k", off, w)
    return interf / w + sigma2 * gamma_bar / (w * r * r)


def _objective_value(inv, objective):
    if objective is Objective.SUM_INV_SINR:
        return np.sum(inv, axis=-1)
    if objective is Objective.MAX_MIN_SINR:
        return np.max(inv, axis=-1)
    with np.errstate(divide="ignore"):
        return -np.sum(1.0 / inv, axis=-1)


def _check_user_params(params):
    out = []
    for p in params:
        r, theta, alpha = (float(x) for x in p)
        if r <= 0.0:
            raise InvalidParameterError(f"r must be positive, got {r!r}")
        if alpha <= 0.0:
            raise InvalidParameterError(f"power factor must be positive, got {alpha!r}")
        out.append(UserParams(r, theta, alpha))
    return out


def inv_sinr_terms(channels, params, sigma2):
    """
    Per-user inverse SINR of the leading GMUD component.

    Parameters
    ----------
    channels : sequence of array_like
        Channel matrix of each user (P x M).
    params : sequence of (r, theta, alpha)
        GMUD gain, phase and amplitude factor per user.
    sigma2 : float
        Noise variance.

    Returns
    -------
    ndarray
        Inverse SINR of each user.
    """
    if sigma2 < 0:
        raise InvalidArgumentError("sigma2 must be non-negative")
    params = _check_user_params(params)
    if len(params) != len(channels):
        raise InvalidArgumentError("need one parameter triple per user")
    beams = []
    for H, p in zip(channels, params):
        H = as_cmatrix(H, "H")
        if H.shape[1] == 2:
            beams.append(beam(H, GmudParams(p.r, p.theta)))
        else:
            lam, V = _user_svd(H)
            beams.append(_beams(lam, V, p.r, p.theta))
    B = np.column_stack(beams)
    rho2 = np.abs(np.conj(B.T) @ B) ** 2
    w = np.array([p.power ** 2 for p in params])
    r = np.array([p.r for p in params])
    return _inv_from_parts(w, r, rho2, float(sigma2))


def inv_sinr_sum(channels, params, sigma2):
    """Sum over users of the inverse SINR, the precoder design cost."""
    return float(np.sum(inv_sinr_terms(channels, params, sigma2)))


def _assemble(beams, r, theta, w, sigma2, objective, history=None):
    alpha = np.sqrt(w)
    G = np.column_stack(beams) * alpha
    rho2 = np.abs(np.conj(np.column_stack(beams).T) @ np.column_stack(beams)) ** 2
    inv = _inv_from_parts(w, r, rho2, sigma2)
    per_user = [UserParams(float(r[k]), float(theta[k]), float(alpha[k])) for k in range(len(w))]
    return PrecoderSolution(
        G=G,
        per_user=per_user,
        gamma_avg=float(np.sum(w)),
        predicted_inv_sinr=inv,
        cost=float(_objective_value(inv, objective)),
        objective=objective,
        history=list(history or []),
    )


class BeamSearch:
    """
    Grid-plus-refinement search over per-user ``(r, theta)`` and power split.

    The beam grids and their cross inner products do not depend on the noise
    level, so they are computed once per channel set and reused by
    :meth:`solve` for every SNR.
    """

    def __init__(self, channels, config=None):
        self.config = config or OptimizerConfig()
        self.channels = [as_cmatrix(H, "H") for H in channels]
        if not self.channels:
            raise InvalidArgumentError("need at least one user")
        m = self.channels[0].shape[1]
        if any(H.shape[1] != m for H in self.channels):
            raise InvalidArgumentError("all users must share the transmit dimension")
        self.K = len(self.channels)
        self.svds = [_user_svd(H) for H in self.channels]
        cfg = self.config
        self.r_grids = [np.linspace(lam[0], lam[-1], cfg.n_r) for lam, _ in self.svds]
        self.theta_grid = np.linspace(0.0, TWO_PI, cfg.n_theta, endpoint=False)
        self.w_grid = power_grid(self.K, cfg.n_power)
        n_pts = (cfg.n_r * cfg.n_theta) ** self.K * len(self.w_grid)
        if n_pts > MAX_GRID_POINTS:
            raise InvalidArgumentError(
                f"exhaustive grid of {n_pts} points is too large; reduce the grid sizes"
            )
        rr, tt = np.meshgrid(np.arange(cfg.n_r), np.arange(cfg.n_theta), indexing="ij")
        self.grid_beams = [
            _beams(lam, V, self.r_grids[k][rr], self.theta_grid[tt])
            for k, (lam, V) in enumerate(self.svds)
        ]
        self._rho2 = self._grid_rho2()

    def _grid_rho2(self):
        """Squared inner products for every user pair, broadcast over the
        joint axes ``(r_1, t_1, ..., r_K, t_K)``."""
        K = self.K
        out = {}
        for k in range(K):
            for l in range(k + 1, K):
                ip = np.einsum("abm,cdm->abcd", np.conj(self.grid_beams[k]), self.grid_beams[l])
                shape = [1] * (2 * K)
                shape[2 * k: 2 * k + 2] = ip.shape[:2]
                shape[2 * l: 2 * l + 2] = ip.shape[2:]
                out[(k, l)] = (np.abs(ip) ** 2).reshape(shape)
        return out

    def _grid_cost(self, sigma2, objective):
        K = self.K
        cfg = self.config
        nw = len(self.w_grid)
        w_shape = [1] * (2 * K) + [nw]
        gamma_bar = np.sum(self.w_grid, axis=1)
        total = None
        for k in range(K):
            wk = self.w_grid[:, k]
            r_shape = [1] * (2 * K) + [1]
            r_shape[2 * k] = cfg.n_r
            rk = self.r_grids[k].reshape(r_shape)
            term = (sigma2 * gamma_bar / wk).reshape(w_shape) / (rk * rk)
            for l in range(K):
                if l != k:
                    rho2 = self._rho2[(min(k, l), max(k, l))][..., None]
                    term = term + rho2 * (self.w_grid[:, l] / wk).reshape(w_shape)
            # fold users one at a time instead of stacking a (..., K) tensor
            if objective is Objective.SUM_INV_SINR:
                total = term if total is None else total + term
            elif objective is Objective.MAX_MIN_SINR:
                total = term if total is None else np.maximum(total, term)
            else:
                total = -1.0 / term if total is None else total - 1.0 / term
        full_shape = [cfg.n_r, cfg.n_theta] * K + [nw]
        return np.broadcast_to(total, full_shape)

    def _point(self, idx):
        """Unravel a flat grid index into (r, theta, w) arrays."""
        cfg = self.config
        shape = [cfg.n_r, cfg.n_theta] * self.K + [len(self.w_grid)]
        sub = np.unravel_index(idx, shape)
        r = np.array([self.r_grids[k][sub[2 * k]] for k in range(self.K)])
        theta = np.array([self.theta_grid[sub[2 * k + 1]] for k in range(self.K)])
        w = self.w_grid[sub[-1]].copy()
        return r, theta, w

    def _eval(self, r, theta, w, sigma2, objective):
        """Objective for a batch of candidate points, shapes (N, K)."""
        beams = np.stack(
            [_beams(self.svds[k][0], self.svds[k][1], r[:, k], theta[:, k]) for k in range(self.K)],
            axis=1,
        )
        rho2 = np.abs(np.einsum("nkm,nlm->nkl", np.conj(beams), beams)) ** 2
        inv = _inv_from_parts(w, r, rho2, sigma2)
        return _objective_value(inv, objective)

    def _refine(self, r, theta, w, cost, sigma2, objective, history):
        cfg = self.config
        K = self.K
        for it in range(1, cfg.refine_iters + 1):
            frac = cfg.refine_shrink ** it
            coords = [c for k in range(K) for c in (("r", k), ("theta", k))]
            coords += [("w", k) for k in range(K - 1)]
            for kind, k in coords:
                if kind == "r":
                    lam = self.svds[k][0]
                    h = 0.5 * frac * (lam[0] - lam[-1])
                    if h <= 0.0:
                        continue
                    vals = np.clip(np.linspace(r[k] - h, r[k] + h, cfg.n_r), lam[-1], lam[0])
                elif kind == "theta":
                    h = 0.5 * frac * TWO_PI
                    vals = np.mod(np.linspace(theta[k] - h, theta[k] + h, cfg.n_theta), TWO_PI)
                else:
                    h = 0.5 * frac
                    vals = np.clip(np.linspace(w[k] - h, w[k] + h, cfg.n_power), 1e-6, 1 - 1e-6)
                n = len(vals)
                R = np.tile(r, (n, 1))
                T = np.tile(theta, (n, 1))
                Wt = np.tile(w, (n, 1))
                if kind == "r":
                    R[:, k] = vals
                elif kind == "theta":
                    T[:, k] = vals
                else:
                    rest = 1.0 - w[k]
                    others = [i for i in range(K) if i != k]
                    Wt[:, k] = vals
                    for i in others:
                        Wt[:, i] = w[i] / rest * (1.0 - vals) if rest > 0 else (1.0 - vals) / (K - 1)
                costs = self._eval(R, T, Wt, sigma2, objective)
                j = int(np.argmin(costs))
                if costs[j] < cost:
                    cost = float(costs[j])
                    r, theta, w = R[j].copy(), T[j].copy(), Wt[j].copy()
            history.append(cost)
        return r, theta, w, cost

    def solve(self, sigma2, objective=Objective.SUM_INV_SINR):
        """Optimized precoder at noise variance `sigma2`."""
        if sigma2 < 0:
            raise InvalidArgumentError("sigma2 must be non-negative")
        objective = Objective(objective)
        with np.errstate(divide="ignore", invalid="ignore"):
            costs = self._grid_cost(float(sigma2), objective).ravel()
        costs = np.where(np.isnan(costs), np.inf, costs)
        idx = int(np.argmin(costs))
        r, theta, w = self._point(idx)
        cost = float(costs[idx])
        history = [cost]
        if self.config.refine_iters:
            with np.errstate(divide="ignore", invalid="ignore"):
                r, theta, w, cost = self._refine(r, theta, w, cost, float(sigma2), objective, history)
        beams = [_beams(self.svds[k][0], self.svds[k][1], r[k], theta[k]) for k in range(self.K)]
        with np.errstate(divide="ignore", invalid="ignore"):
            return _assemble(beams, r, theta, w, float(sigma2), objective, history)

    def grid_points(self):
        """All grid points in evaluation order, as (r, theta, w) arrays."""
        cfg = self.config
        n = (cfg.n_r * cfg.n_theta) ** self.K * len(self.w_grid)
        for idx in range(n):
            yield self._point(idx)


def optimize(channels, sigma2, config=None, objective=Objective.SUM_INV_SINR):
    """
    Choose per-user GMUD beams and power split by grid search.

    Parameters
    ----------
    channels : sequence of array_like
        Channel matrix of each user.
    sigma2 : float
        Noise variance the design is optimized for.
    config : OptimizerConfig, optional
    objective : Objective or str
        ``sum_inv_sinr`` (default), ``max_min_sinr`` or ``sum_sinr``.

    Returns
    -------
    PrecoderSolution

    Notes
    -----
    The grid visits ``r`` from the largest singular value downwards, ``theta``
    from 0 upwards, axes ordered ``(r_1, theta_1, ..., r_K, theta_K, power)``;
    the first minimum in that order wins. The SVD point (``r = lam_1``,
    ``theta = 0``, equal power) is always on the grid. Refinement only
    accepts strict improvements.
    """
    return BeamSearch(channels, config).solve(sigma2, objective)


def svd_baseline(channels, sigma2=0.0, objective=Objective.SUM_INV_SINR):
    """Principal right singular vector per user, equal power."""
    svds = [_user_svd(H) for H in channels]
    K = len(svds)
    r = np.array([lam[0] for lam, _ in svds])
    theta = np.zeros(K)
    w = np.full(K, 1.0 / K)
    beams = [V[:, 0].copy() for _, V in svds]
    with np.errstate(divide="ignore", invalid="ignore"):
        return _assemble(beams, r, theta, w, float(sigma2), Objective(objective))


def normalize_and_transmit(G, u):
    """
    Transmit block ``x = G u / sqrt(gamma)`` with ``gamma = ||G u||^2``.

    `u` may hold several blocks as columns; `gamma` then has one entry per
    block.
    """
    G = np.asarray(G, dtype=np.complex128)
    u = np.asarray(u, dtype=np.complex128)
    squeeze = u.ndim == 1
    if squeeze:
        u = u[:, None]
    if G.shape[1] != u.shape[0]:
        raise InvalidArgumentError(f"cannot precode {u.shape[0]} symbols with G of shape {G.shape}")
    Gu = G @ u
    gamma = np.sum(np.abs(Gu) ** 2, axis=0)
    if np.any(gamma == 0.0):
        raise InvalidArgumentError("precoded block has zero energy (u = 0 or G u = 0)")
    x = Gu / np.sqrt(gamma)
    if squeeze:
        return x[:, 0], float(gamma[0])
    return x, gamma
