import numpy as np
import pytest
from scipy import integrate
from scipy.stats import norm

from gmudprec.channel import ChannelEnsembleSpec, draw_channel_matrices, stream_rng
from gmudprec.gmud import GmudParams, gmud_2x2
from gmudprec.link import (
    Constellation,
    LinkResult,
    Modulation,
    demodulate,
    measure,
    mmse_estimate,
    mmse_filter,
    modulate,
    rotated_received,
    simulate_blocks,
    transmit_block,
)
from gmudprec.numkit import InvalidArgumentError, NumericalDegeneracyError

from conftest import crandn


@pytest.mark.parametrize("kind", list(Modulation))
def test_constellation_gray_and_unit_energy(kind):
    c = Constellation.make(kind)
    assert np.mean(np.abs(c.points) ** 2) == pytest.approx(1.0)
    assert len(set(map(tuple, c.labels))) == len(c.points)
    d = np.abs(c.points[:, None] - c.points[None, :])
    dmin = d[d > 0].min()
    for i, j in zip(*np.nonzero(np.isclose(d, dmin))):
        assert np.sum(c.labels[i] != c.labels[j]) == 1


def test_qpsk_mapping():
    c = Constellation.make("qpsk")
    np.testing.assert_allclose(modulate([0, 0, 0, 1, 1, 0, 1, 1], c), np.array([1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j]) / np.sqrt(2))


def test_qam16_mapping_corner():
    c = Constellation.make("qam16")
    np.testing.assert_allclose(modulate([0, 0, 0, 0], c), [(3 + 3j) / np.sqrt(10)])
    np.testing.assert_allclose(modulate([1, 0, 1, 1], c), [(-3 - 1j) / np.sqrt(10)])


@pytest.mark.parametrize("kind", list(Modulation))
def test_modulation_round_trip(rng, kind):
    c = Constellation.make(kind)
    bits = rng.integers(0, 2, 400 * c.bits_per_symbol)
    sym = modulate(bits, c)
    np.testing.assert_array_equal(demodulate(sym, c), bits)
    noisy = sym + 0.05 * crandn(rng, len(sym))
    np.testing.assert_array_equal(demodulate(noisy, c), bits)
    with pytest.raises(InvalidArgumentError):
        modulate(bits[:-1], c)


def test_transmit_block_noiseless(rng):
    H = [crandn(rng, 3, 2), crandn(rng, 3, 2)]
    G = crandn(rng, 2, 2)
    u = np.array([1, 1j]) / np.sqrt(2)
    ys, gamma = transmit_block(H, G, u, 0.0, rng)
    assert gamma == pytest.approx(np.linalg.norm(G @ u) ** 2)
    for Hk, yk in zip(H, ys):
        np.testing.assert_allclose(yk, Hk @ G @ u / np.sqrt(gamma), atol=1e-14)
    with pytest.raises(InvalidArgumentError):
        transmit_block(H, G, u, -1.0, rng)


def test_transmit_block_noise_variance(rng):
    H = [np.eye(2, dtype=complex)]
    G = np.eye(2, dtype=complex)
    u = np.ones((2, 50_000), dtype=complex)
    ys, gamma = transmit_block(H, G, u, 0.3, rng)
    noise = ys[0] - u / np.sqrt(gamma)
    assert np.mean(np.abs(noise) ** 2) == pytest.approx(0.3, rel=0.02)
    assert np.mean(noise.real**2) == pytest.approx(0.15, rel=0.03)


def test_rotated_form_matches_direct(rng):
    for _ in range(100):
        H = crandn(rng, 3, 2)
        lam = np.linalg.svd(H, compute_uv=False)
        f = gmud_2x2(H, GmudParams(rng.uniform(lam[1], lam[0]), rng.uniform(0, 2 * np.pi)))
        G = crandn(rng, 2, 2)
        u = crandn(rng, 2, 4)
        gamma = np.sum(np.abs(G @ u) ** 2, axis=0)
        np.testing.assert_allclose(
            rotated_received(f, G, u, gamma), H @ G @ u / np.sqrt(gamma), atol=1e-12
        )


def test_mmse_wiener_scaling():
    W, Ht = mmse_filter(np.eye(2), np.eye(2), 1.0, 1.0)
    np.testing.assert_allclose(W[0], 0.5 * np.eye(2))
    est = mmse_estimate(np.array([2.0, 4.0j]), np.eye(2), np.eye(2), 1.0, 1.0)
    np.testing.assert_allclose(est, [1.0, 2.0j])


def test_mmse_two_by_two_oracle(rng):
    for _ in range(50):
        H = crandn(rng, 2, 2)
        G = crandn(rng, 2, 2)
        gamma, s2 = rng.uniform(0.5, 2), rng.uniform(0.01, 1)
        A = H @ G / np.sqrt(gamma)
        M = A.conj().T @ A + s2 * np.eye(2)
        inv = np.array([[M[1, 1], -M[0, 1]], [-M[1, 0], M[0, 0]]]) / (M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0])
        W, _ = mmse_filter(H, G, gamma, s2)
        np.testing.assert_allclose(W[0], inv @ A.conj().T, atol=1e-12)


def test_mmse_zero_forcing_limit(rng):
    H = crandn(rng, 3, 2)
    G = crandn(rng, 2, 2)
    W, Ht = mmse_filter(H, G, 1.3, 1e-12)
    np.testing.assert_allclose(W[0], np.linalg.pinv(Ht[0]), atol=1e-8)
    W0, _ = mmse_filter(H, G, 1.3, 0.0)
    np.testing.assert_allclose(W0[0] @ Ht[0], np.eye(2), atol=1e-12)


def test_mmse_degenerate():
    H = np.array([[1, 0], [0, 1], [0, 0]], dtype=complex)
    G = np.array([[1, 1], [0, 0]], dtype=complex)
    with pytest.raises(NumericalDegeneracyError):
        mmse_filter(H, G, 1.0, 0.0)
    with pytest.raises(InvalidArgumentError):
        mmse_filter(H, G, 0.0, 0.1)


def test_noiseless_link_is_error_free(rng):
    spec = ChannelEnsembleSpec(users=2, paths=2, seed=1)
    for trial in range(20):
        chans = draw_channel_matrices(spec, trial)
        G = crandn(rng, 2, 2)
        for kind in Modulation:
            res = simulate_blocks(chans, G, 0.0, Constellation.make(kind), 100, rng)
            assert res.bit_errors == 0 and res.symbol_errors == 0
            assert res.bits_sent == 2 * 100 * Constellation.make(kind).bits_per_symbol


def test_very_low_snr_ber_is_one_half(rng):
    chans = [crandn(rng, 3, 2) for _ in range(2)]
    G = crandn(rng, 2, 2)
    res = simulate_blocks(chans, G, 1e6, Constellation.make("qpsk"), 20_000, rng)
    assert res.ber == pytest.approx(0.5, abs=0.01)


def test_measure_is_additive(rng):
    chans = [crandn(rng, 3, 2) for _ in range(2)]
    G = crandn(rng, 2, 2)
    c = Constellation.make("qpsk")
    runs = [simulate_blocks(chans, G, 0.2, c, 50, rng) for _ in range(3)]
    tot = measure(runs)
    assert tot.bit_errors == sum(r.bit_errors for r in runs)
    assert tot.bits_sent == 3 * 50 * 2 * 2
    np.testing.assert_allclose(tot.s_yu, sum(r.s_yu for r in runs))
    with pytest.raises(InvalidArgumentError):
        measure([])
    assert np.isnan(LinkResult().ber)


def test_single_user_qpsk_matches_analytic_ber():
    # One user, two taps, beam on v1: post-combining SNR is lam1^2 / sigma2 with
    # lam1^2 = x1 + x2 + sqrt(x1 x2), x_i = |h_i|^2 ~ Exp(mean 1/2).
    sigma2 = 0.1  # 10 dB

    def integrand(x2, x1):
        lam1sq = x1 + x2 + np.sqrt(x1 * x2)
        return norm.sf(np.sqrt(lam1sq / sigma2)) * 4 * np.exp(-2 * (x1 + x2))

    analytic, _ = integrate.dblquad(integrand, 0, np.inf, 0, np.inf)

    spec = ChannelEnsembleSpec(users=1, paths=2, seed=9)
    c = Constellation.make("qpsk")
    runs = []
    for trial in range(3000):
        (H,) = draw_channel_matrices(spec, trial)
        v1 = np.linalg.svd(H)[2][0].conj()
        runs.append(simulate_blocks([H], v1[:, None], sigma2, c, 60, stream_rng(9, 3, trial)))
    ber = measure(runs).ber
    assert ber == pytest.approx(analytic, rel=0.15)


def test_identity_channel_noiseless(rng):
    u = np.array([3.0 + 0j])
    ys, gamma = transmit_block([np.eye(1)], np.eye(1), u, 0.0, rng)
    np.testing.assert_allclose(ys[0], u / np.linalg.norm(u))
    u2 = np.array([3.0, 4.0j])
    ys, gamma = transmit_block([np.eye(2)], np.eye(2), u2, 0.0, rng)
    np.testing.assert_allclose(ys[0], u2 / 5.0)
    assert gamma == pytest.approx(25.0)


def test_zero_forcing_recovers_symbols(rng):
    for _ in range(20):
        H = crandn(rng, 3, 2)
        G = crandn(rng, 2, 2)
        u = crandn(rng, 2)
        ys, gamma = transmit_block([H], G, u, 0.0, rng)
        est = mmse_estimate(ys[0], H, G, gamma, 1e-12)
        np.testing.assert_allclose(est, u, atol=1e-8 * np.linalg.norm(u))
        Ht = H @ G / np.sqrt(gamma)
        zf = np.linalg.pinv(Ht) @ ys[0]
        assert np.linalg.norm(est - zf) <= 1e-6 * np.linalg.norm(zf)


def test_error_counts_bounded(rng):
    chans = [crandn(rng, 3, 2) for _ in range(2)]
    res = simulate_blocks(chans, crandn(rng, 2, 2), 10.0, Constellation.make("qam16"), 500, rng)
    assert 0 < res.bit_errors <= res.bits_sent
    assert 0 < res.symbol_errors <= res.symbols_sent
    assert res.symbol_errors <= res.bit_errors


def test_ber_decreases_with_snr():
    from gmudprec.simcli import parse_config, run_sweep

    cfg = parse_config(None, "trials=60 blocks_per_trial=50 snr_db_min=0 snr_db_max=16 snr_db_step=4")
    pts = run_sweep(cfg)
    inversions = 0
    for lo, hi in zip(pts, pts[1:]):
        if hi.ber > lo.ber:
            sd = np.sqrt(lo.ber * (1 - lo.ber) / lo.bits + hi.ber * (1 - hi.ber) / hi.bits)
            assert hi.ber - lo.ber <= 2 * sd
            inversions += 1
    assert inversions <= 1


def test_orthogonal_users_see_single_user_performance():
    from gmudprec.precoder import optimize

    H1 = np.array([[2, 0], [0, 1], [0, 0]], dtype=complex)
    H2 = np.array([[1, 0], [0, 2], [0, 0]], dtype=complex)
    c = Constellation.make("qpsk")
    for sigma2 in (1.0, 0.4, 0.2):
        sol = optimize([H1, H2], sigma2)
        G = sol.G
        assert abs(np.vdot(G[:, 0], G[:, 1])) < 1e-6
        res = simulate_blocks([H1, H2], G, sigma2, c, 100_000, stream_rng(1, 3, int(10 * sigma2)))
        # QPSK has |u|^2 = 1 so gamma = sum alpha^2 = 1 on every block; each
        # user then sees an interference-free scalar channel
        gains = [np.linalg.norm(H @ G[:, k]) ** 2 for k, H in enumerate([H1, H2])]
        single = np.mean([norm.sf(np.sqrt(g / sigma2)) for g in gains])
        sd = np.sqrt(single * (1 - single) / res.bits_sent)
        assert abs(res.ber - single) <= 4 * sd
