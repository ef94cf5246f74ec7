import numpy as np
import pytest

from crsma.channel import (ChannelSet, generate_channels, ladder_channels, ladder_tau,
                           mrc_coefficients)
from crsma.config import ConfigError, SystemConfig, dbm_to_watts


def test_dbm_conversion():
    assert dbm_to_watts(30.0) == pytest.approx(1.0)
    assert dbm_to_watts(23.0) == pytest.approx(0.19952623)
    assert dbm_to_watts(-np.inf) == 0.0


def test_ladder_tau_k6():
    tau = ladder_tau(6)
    np.testing.assert_allclose(tau, 1 - np.arange(6) / 6)
    # the ladder is often quoted rounded to a 0.17 step
    np.testing.assert_allclose(tau, [1, 0.83, 0.66, 0.49, 0.32, 0.15], atol=0.02)


def test_ladder_ids_by_descending_tau():
    ch = generate_channels(SystemConfig(channel_mode="disparity-ladder"), seed=3)
    assert np.all(np.diff(ch.tau) < 0)


def test_two_users_unit_fading():
    ch = ladder_channels(np.ones((2, 1), dtype=complex), np.ones((2, 2), dtype=complex))
    np.testing.assert_allclose(ch.tau, [1.0, 0.5])
    np.testing.assert_allclose(ch.h[:, 0], [1.0, np.sqrt(0.5)])
    # cross link carries the geometric-mean path loss
    assert abs(ch.h_cross[0, 1]) ** 2 == pytest.approx(np.sqrt(0.5))


@pytest.mark.parametrize("mode", ["disparity-ladder", "exponential-mean"])
def test_generation_is_deterministic(mode):
    cfg = SystemConfig(channel_mode=mode)
    a = generate_channels(cfg, seed=7)
    b = generate_channels(cfg, seed=7)
    assert a.same_as(b)
    assert not a.same_as(generate_channels(cfg, seed=8))


def test_channel_set_invariants():
    ch = generate_channels(SystemConfig(), seed=1)
    assert ch.h.shape == (6, 8)
    np.testing.assert_array_equal(ch.h_cross, ch.h_cross.T)
    assert np.all(np.diag(ch.h_cross) == 0)
    assert np.all((ch.tau > 0) & (ch.tau <= 1))
    with pytest.raises(ValueError):
        ch.h[0, 0] = 0


def test_exponential_mean_gains():
    cfg = SystemConfig(channel_mode="exponential-mean", N=4)
    g_u, g_v, g_c = [], [], []
    for s in range(400):
        ch = generate_channels(cfg, seed=s)
        g_u.append(np.mean(np.abs(ch.h[:3]) ** 2))
        g_v.append(np.mean(np.abs(ch.h[3:]) ** 2))
        g_c.append(np.mean(np.abs(ch.h_cross[:3, 3:]) ** 2))
    assert np.mean(g_u) == pytest.approx(10 ** 1.5, rel=0.05)
    assert np.mean(g_v) == pytest.approx(10 ** 0.7, rel=0.05)
    assert np.mean(g_c) == pytest.approx(10 ** 1.2, rel=0.05)


@pytest.mark.parametrize("kwargs", [{"K": 5}, {"K": 0}, {"N": 0}, {"theta": 1.0}, {"eps": 0.0},
                                    {"delta_grid": (0.0, 0.5)}, {"p_u_max": float("nan")}])
def test_invalid_config_rejected(kwargs):
    with pytest.raises(ConfigError):
        SystemConfig(**kwargs)


def test_mrc_all_ones():
    ch = ChannelSet(np.ones((2, 4), dtype=complex), np.zeros((2, 2), dtype=complex), np.ones(2))
    co = mrc_coefficients(ch, SystemConfig(K=2, N=4, sigma2=1.0))
    np.testing.assert_allclose(co.self_gain, [1.0, 1.0])
    np.testing.assert_allclose(co.noise_gain, [0.25, 0.25])


def test_mrc_orthogonal_cross_gain_zero():
    h = np.array([[1, 0], [0, 1]], dtype=complex)
    co = mrc_coefficients(ChannelSet(h, np.zeros((2, 2), complex), np.ones(2)), SystemConfig(K=2, N=2))
    assert co.cross_gain[0, 1] == 0.0


def test_mrc_against_scalar_loops():
    cfg = SystemConfig(sigma2=0.3)
    ch = generate_channels(cfg, seed=11)
    co = mrc_coefficients(ch, cfg)
    K, N = ch.K, ch.N
    for k in range(K):
        n2 = sum(abs(ch.h[k, n]) ** 2 for n in range(N))
        assert co.self_gain[k] == pytest.approx(n2**2 / N**2)
        assert co.noise_gain[k] == pytest.approx(n2 * cfg.sigma2 / N**2)
        for j in range(K):
            inner = sum(np.conj(ch.h[k, n]) * ch.h[j, n] for n in range(N))
            assert co.cross_gain[k, j] == pytest.approx(abs(inner) ** 2 / N**2)
            assert co.cross_gain[k, j] == pytest.approx(co.cross_gain[j, k])
    np.testing.assert_allclose(np.diag(co.cross_gain), co.self_gain)
    assert np.all(co.cross_gain >= 0)


def test_channel_hardening():
    cfg = SystemConfig(N=256, channel_mode="disparity-ladder")
    ratios = np.mean([generate_channels(cfg, seed=s).norms2() / 256 for s in range(200)], axis=0)
    np.testing.assert_allclose(ratios, ladder_tau(6), rtol=0.05)


def test_quasi_orthogonality_trend():
    means = []
    for N in (4, 8, 16, 32, 64):
        cfg = SystemConfig(N=N, channel_mode="disparity-ladder")
        vals = []
        for s in range(100):
            co = mrc_coefficients(generate_channels(cfg, seed=s), cfg)
            off = ~np.eye(6, dtype=bool)
            vals.append(np.mean((co.cross_gain / co.self_gain[:, None])[off]))
        means.append(np.mean(vals))
    assert all(b < a for a, b in zip(means, means[1:]))


def test_dump_one_line_per_user():
    ch = generate_channels(SystemConfig(channel_mode="disparity-ladder"), seed=0)
    lines = ch.dump().splitlines()
    assert len(lines) == 6
    k, tau, n2 = lines[1].split()
    assert int(k) == 1 and float(tau) == pytest.approx(ch.tau[1], abs=1e-6)
    assert float(n2) == pytest.approx(ch.norms2()[1], abs=1e-6)
