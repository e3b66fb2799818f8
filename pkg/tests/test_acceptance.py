"""Acceptance criteria. Each test carries a ``criterion`` marker; the
terminal summary prints one PASS/FAIL line per criterion."""

from functools import lru_cache

import numpy as np
import pytest

from gmudprec.channel import ChannelEnsembleSpec, condition_stats, draw_channel_matrices, stream_rng
from gmudprec.gmud import GmudParams, beam, gmud_2x2, r_elements, rotation_coeffs
from gmudprec.link import Constellation, rotated_received, simulate_blocks
from gmudprec.numkit import adjoint, svd
from gmudprec.precoder import BeamSearch, OptimizerConfig, inv_sinr_sum, optimize, svd_baseline
from gmudprec.simcli import format_csv, parse_config, run_sweep

from conftest import crandn

criterion = pytest.mark.criterion


@criterion(1, "GMUD correctness on random 3x2 and 2x2 ensembles")
@pytest.mark.parametrize("shape", [(3, 2), (2, 2)])
def test_c1_gmud_correctness(shape):
    rng = np.random.default_rng(1000 + shape[0])
    worst = dict(recon=0.0, unit=0.0, r=0.0, det=0.0, energy=0.0)
    for _ in range(1000):
        H = crandn(rng, *shape) / np.sqrt(2)
        lam = svd(H).singular_values
        l1, l2 = lam
        nh = np.linalg.norm(H)
        for _ in range(10):
            r = rng.uniform(l2, l1)
            f = gmud_2x2(H, GmudParams(r, rng.uniform(0, 2 * np.pi)))
            g = gmud_2x2(H, GmudParams(r, rng.uniform(0, 2 * np.pi)))
            assert np.array_equal(f.R, g.R)
            worst["recon"] = max(worst["recon"], np.linalg.norm(f.reconstruct() - H) / nh)
            worst["unit"] = max(
                worst["unit"],
                np.linalg.norm(adjoint(f.P) @ f.P - np.eye(shape[0])),
                np.linalg.norm(adjoint(f.Q) @ f.Q - np.eye(2)),
            )
            worst["r"] = max(worst["r"], abs(f.R[0, 0] - r))
            z1, z2 = f.z1, f.z2
            worst["det"] = max(worst["det"], abs(r * z2 - l1 * l2))
            worst["energy"] = max(worst["energy"], abs(r * r + z1 * z1 + z2 * z2 - l1 * l1 - l2 * l2))
    print(f"criterion 1 {shape}: worst {worst}")
    assert worst["recon"] <= 1e-9
    assert worst["unit"] <= 1e-10
    assert worst["r"] <= 1e-10
    assert worst["det"] <= 1e-10
    assert worst["energy"] <= 1e-10


@criterion(2, "closed-form rotation at (2, 1, sqrt 2)")
def test_c2_closed_form_rotation():
    l1, l2, r = 2.0, 1.0, np.sqrt(2.0)
    a, b, c, s = rotation_coeffs(l1, l2, r)
    expected = np.sqrt([1 / 3, 2 / 3, 2 / 3, 1 / 3])
    assert np.max(np.abs(np.array([a, b, c, s]) - expected)) <= 1e-12
    # direct substitution into the defining equations
    assert abs(a * c * l1 + b * s * l2 - r) <= 1e-12
    assert abs(a * s * l1 - b * c * l2) <= 1e-12
    assert abs(a * a + b * b - 1) <= 1e-12 and abs(c * c + s * s - 1) <= 1e-12
    z1, z2 = r_elements((a, b, c, s), l1, l2)
    assert abs(z1 - 1.0) <= 1e-12 and abs(z2 - np.sqrt(2.0)) <= 1e-12
    assert abs(b * c * l1 - a * s * l2 - z1) <= 1e-12
    assert abs(b * s * l1 + a * c * l2 - z2) <= 1e-12


@criterion(3, "direct and rotated received vectors agree")
def test_c3_algebra_chain():
    rng = np.random.default_rng(3)
    qpsk = Constellation.make("qpsk").points
    worst = 0.0
    for _ in range(1000):
        chans = [crandn(rng, 3, 2) / np.sqrt(2) for _ in range(2)]
        params = []
        for H in chans:
            l1, l2 = svd(H).singular_values
            params.append(GmudParams(rng.uniform(l2, l1), rng.uniform(0, 2 * np.pi)))
        w1 = rng.uniform(0.05, 0.95)
        alpha = np.sqrt([w1, 1 - w1])
        G = np.column_stack([beam(H, p) for H, p in zip(chans, params)]) * alpha
        u = rng.choice(qpsk, 2)
        gamma = np.linalg.norm(G @ u) ** 2
        for H, p in zip(chans, params):
            direct = H @ G @ u / np.sqrt(gamma)
            rotated = rotated_received(gmud_2x2(H, p), G, u, gamma)
            worst = max(worst, np.max(np.abs(direct - rotated)))
    print(f"criterion 3: worst deviation {worst:.3e}")
    assert worst <= 1e-10


@criterion(4, "grid oracle, dominance over SVD, monotone refinement")
def test_c4_grid_oracle():
    rng = np.random.default_rng(4)
    cfg = OptimizerConfig(n_r=3, n_theta=4, n_power=3, refine_iters=0)
    for _ in range(50):
        chans = [crandn(rng, 3, 2) / np.sqrt(2) for _ in range(2)]
        s2 = 10 ** rng.uniform(-2.4, 0)
        search = BeamSearch(chans, cfg)
        costs = [
            inv_sinr_sum(chans, [(r[k], t[k], np.sqrt(w[k])) for k in range(2)], s2)
            for r, t, w in search.grid_points()
        ]
        sol = search.solve(s2)
        assert sol.cost == pytest.approx(min(costs), rel=1e-9)


@criterion(4, "grid oracle, dominance over SVD, monotone refinement")
def test_c4_dominance_and_monotone():
    spec = ChannelEnsembleSpec(users=2, paths=2, seed=4)
    rng = np.random.default_rng(44)
    for trial in range(1000):
        chans = draw_channel_matrices(spec, trial)
        s2 = 10 ** rng.uniform(-2.4, 0)
        sol = optimize(chans, s2)
        base = svd_baseline(chans, s2)
        assert sol.cost <= base.cost
        assert all(b <= a for a, b in zip(sol.history, sol.history[1:]))


@criterion(5, "predicted vs measured SINR at 10 dB within 5%")
def test_c5_sinr_prediction():
    spec = ChannelEnsembleSpec(users=2, paths=2, seed=5)
    sigma2 = 0.1
    qpsk = Constellation.make("qpsk")
    worst = 0.0
    for trial in range(3):
        chans = draw_channel_matrices(spec, trial)
        sol = optimize(chans, sigma2)
        res = simulate_blocks(chans, sol.G, sigma2, qpsk, 200_000, stream_rng(5, 3, 0, trial))
        measured_inv = 1.0 / res.measured_sinr_per_user
        rel = np.abs(measured_inv - sol.predicted_inv_sinr) / sol.predicted_inv_sinr
        print(f"criterion 5 pair {trial}: predicted {sol.predicted_inv_sinr} measured {measured_inv}")
        worst = max(worst, rel.max())
    print(f"criterion 5: worst relative error {worst:.4f}")
    assert worst <= 0.05


@lru_cache(maxsize=None)
def _sweep(modulation, precoder, mode):
    # full default experiment: 2 users, 2 paths, 0..24 dB, 2000 trials x 50 blocks
    cfg = parse_config(None, {"modulation": modulation, "precoder": precoder, "mode": mode})
    return run_sweep(cfg)


def _check_gmud_beats_svd(modulation):
    gmud = _sweep(modulation, "gmud", "siso_multipath")
    svd_ = _sweep(modulation, "svd", "siso_multipath")
    for g, s in zip(gmud, svd_):
        print(f"{modulation} {g.snr_db:5.1f} dB  gmud {g.ber:.4e}  svd {s.ber:.4e}  bits {g.bits}")
    assert all(g.bits >= 4e5 for g in gmud)
    bad = [g.snr_db for g, s in zip(gmud, svd_) if g.snr_db >= 8 and not g.ber < s.ber]
    assert not bad, f"GMUD not below SVD at {bad} dB"


def _check_siso_beats_mimo(modulation):
    siso = _sweep(modulation, "gmud", "siso_multipath")
    mimo = _sweep(modulation, "gmud", "mimo_flat")
    for a, b in zip(siso, mimo):
        print(f"{modulation} {a.snr_db:5.1f} dB  siso {a.ber:.4e}  mimo {b.ber:.4e}")
    assert all(a.bits == b.bits for a, b in zip(siso, mimo))
    bad = [a.snr_db for a, b in zip(siso, mimo) if not a.ber <= b.ber]
    assert not bad, f"siso-multipath BER above mimo-flat at {bad} dB"


@pytest.mark.slow
@criterion(6, "QPSK orderings: GMUD < SVD (>= 8 dB), siso <= mimo")
def test_c6_qpsk_gmud_vs_svd():
    _check_gmud_beats_svd("qpsk")


@pytest.mark.slow
@criterion(6, "QPSK orderings: GMUD < SVD (>= 8 dB), siso <= mimo")
def test_c6_qpsk_siso_vs_mimo():
    _check_siso_beats_mimo("qpsk")


@pytest.mark.slow
@criterion(7, "16QAM orderings: GMUD < SVD (>= 8 dB), siso <= mimo")
def test_c7_qam16_gmud_vs_svd():
    _check_gmud_beats_svd("qam16")


@pytest.mark.slow
@criterion(7, "16QAM orderings: GMUD < SVD (>= 8 dB), siso <= mimo")
def test_c7_qam16_siso_vs_mimo():
    _check_siso_beats_mimo("qam16")


@criterion(8, "Toeplitz ensemble better conditioned than 2x2 Gaussian")
def test_c8_condition_numbers():
    siso = condition_stats(ChannelEnsembleSpec(kind="siso_multipath", users=1, paths=2, seed=8), 10_000)
    mimo = condition_stats(ChannelEnsembleSpec(kind="mimo_flat", users=1, n_tx=2, n_rx=2, seed=8), 10_000)
    print(f"criterion 8: siso median {siso['median']:.4f}, mimo median {mimo['median']:.4f}, "
          f"ratio {mimo['median'] / siso['median']:.3f}")
    assert siso["median"] < mimo["median"]


@criterion(9, "byte-identical CSV across reruns and worker counts")
def test_c9_determinism():
    for mode in ("siso_multipath", "mimo_flat"):
        cfg = parse_config(None, {"trials": 16, "blocks_per_trial": 10, "snr_db_max": 12,
                                  "snr_db_step": 6, "mode": mode, "modulation": "qam16"})
        ref = format_csv(run_sweep(cfg, workers=1)).encode()
        assert format_csv(run_sweep(cfg, workers=1)).encode() == ref
        for workers in (2, 8):
            assert format_csv(run_sweep(cfg, workers=workers)).encode() == ref


@criterion(10, "degenerate inputs")
def test_c10_equal_singular_values():
    H = np.array([[1, 1j], [1j, 1], [0, 0]]) / np.sqrt(2)  # orthonormal columns
    l1, l2 = svd(H).singular_values
    assert l1 - l2 <= 1e-12
    f = gmud_2x2(H, GmudParams(l1, 0.7))
    assert np.linalg.norm(f.reconstruct() - H) <= 1e-12
    H2 = np.array([[0.6, 0], [0.8j, 0.6], [0, 0.8j]])
    sol = optimize([H, H2], 0.1)
    assert np.isfinite(sol.cost) and sol.cost <= svd_baseline([H, H2], 0.1).cost


@criterion(10, "degenerate inputs")
def test_c10_interval_endpoints():
    rng = np.random.default_rng(10)
    for _ in range(100):
        H = crandn(rng, 3, 2)
        U, lam, V = svd(H)
        top = gmud_2x2(H, GmudParams(lam[0], 0.0))
        assert np.allclose(top.R[:2], np.diag(lam), atol=1e-12)
        assert np.array_equal(top.Q, V)
        low = gmud_2x2(H, GmudParams(lam[1], 1.0))
        assert abs(low.R[0, 0] - lam[1]) <= 1e-12
        assert abs(low.z1) <= 1e-10 and abs(low.z2 - lam[0]) <= 1e-10
        assert np.linalg.norm(low.reconstruct() - H) <= 1e-9 * np.linalg.norm(H)


@criterion(10, "degenerate inputs")
def test_c10_single_user():
    rng = np.random.default_rng(11)
    H = crandn(rng, 3, 2)
    sol = optimize([H], 0.1)
    assert sol.per_user[0].r == pytest.approx(svd(H).singular_values[0])
    cfg = parse_config(None, "users=1 trials=5 blocks_per_trial=10 snr_db_min=0 snr_db_max=10 snr_db_step=10")
    pts = run_sweep(cfg)
    assert all(p.bits == 5 * 10 * 2 for p in pts)


@criterion(10, "degenerate inputs")
def test_c10_very_low_snr():
    for mod in ("qpsk", "qam16"):
        cfg = parse_config(None, {"snr_db_min": -60, "snr_db_max": -60, "trials": 200,
                                  "blocks_per_trial": 50, "modulation": mod})
        (pt,) = run_sweep(cfg)
        print(f"criterion 10: {mod} BER at -60 dB = {pt.ber:.4f}")
        assert abs(pt.ber - 0.5) <= 0.01
