import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from unisac.baselines import (SingularCrlbError, aloha_singleton_weight, collision_lower_bound, crlb_aoa,
                              crlb_single_user, evaluate_ideal_model, finite_blocklength_bler, lrt_misdetection,
                              mse_single_user_printed, required_ebn0_baseline)
from unisac.channel import steering_vector
from unisac.config import SystemConfig, per_user_energy

from .conftest import crandn


def mp_q(x):
    return mp.erfc(mp.mpf(x) / mp.sqrt(2)) / 2


def test_bler_examples():
    for s, n in [(1.0, 1000), (3.0, 200)]:
        r = math.log2(1 + s) + math.log2(n) / (2 * n)
        assert finite_blocklength_bler(s, r, n) == pytest.approx(0.5, abs=1e-12)
    assert finite_blocklength_bler(1.0, 1e-6, 1000) < 1e-12
    mp.mp.dps = 30
    s, n, r = mp.mpf(1), 1000, mp.mpf("0.5")
    v = s * (s + 2) / (2 * (s + 1) ** 2) * mp.log(mp.e, 2) ** 2
    ref = mp_q((mp.log(1 + s, 2) - r + mp.log(n, 2) / (2 * n)) / mp.sqrt(v / n))
    assert abs(finite_blocklength_bler(1.0, 0.5, 1000) - float(ref)) <= 1e-10
    with pytest.raises(ValueError):
        finite_blocklength_bler(0.0, 0.5, 10)


def test_lrt_examples():
    assert lrt_misdetection(0.0, 10, 1.0) == pytest.approx(0.5)
    assert abs(lrt_misdetection(1.0, 50, 25.0) - float(mp_q(1))) <= 1e-10
    assert lrt_misdetection(1.0, 200, 25.0) < lrt_misdetection(1.0, 50, 25.0)


def fisher_fd_crlb(thetas, signals, m, noise_var, h=1e-6):
    """theta-block of the inverse full Fisher matrix (angles plus complex signals), finite differences."""
    k, n = signals.shape
    params = np.r_[thetas, signals.real.ravel(), signals.imag.ravel()]

    def mean(p):
        th = p[:k]
        s = p[k:k + k * n].reshape(k, n) + 1j * p[k + k * n:].reshape(k, n)
        return (steering_vector(th, m) @ s).ravel()

    jac = np.empty((m * n, params.size), dtype=complex)
    for i in range(params.size):
        e = np.zeros(params.size)
        e[i] = h
        jac[:, i] = (mean(params + e) - mean(params - e)) / (2 * h)
    fisher = 2.0 / noise_var * np.real(jac.conj().T @ jac)
    return np.diag(np.linalg.inv(fisher))[:k]


def test_crlb_matches_finite_difference_fisher():
    rng = np.random.default_rng(0)
    thetas = np.array([-0.4, 0.35])
    sig = crandn(rng, 2, 6)
    assert np.allclose(crlb_aoa(thetas, sig, 5, 0.7), fisher_fd_crlb(thetas, sig, 5, 0.7), rtol=1e-6)


@given(st.floats(-1, 1), st.integers(2, 8), st.integers(1, 64))
def test_crlb_single_user_closed_form(theta, m, n):
    sig = np.full((1, n), 0.8 + 0.6j)
    assert crlb_aoa([theta], sig, m, 2.0)[0] == pytest.approx(crlb_single_user(m, n, 1.0, 2.0), rel=1e-8)


def test_crlb_scaling_and_permutation():
    rng = np.random.default_rng(1)
    th = np.array([-0.7, 0.1, 0.6])
    sig = crandn(rng, 3, 10)
    base = crlb_aoa(th, sig, 6, 1.0)
    assert np.allclose(crlb_aoa(th, 3.0 * sig, 6, 1.0), base / 9.0)
    perm = [2, 0, 1]
    assert np.allclose(crlb_aoa(th[perm], sig[perm], 6, 1.0), base[perm])


def test_crlb_singular_cases():
    with pytest.raises(SingularCrlbError):
        crlb_aoa([0.1, 0.2], np.ones((2, 4)), 2, 1.0)
    with pytest.raises(SingularCrlbError):
        crlb_aoa([0.3, 0.3], np.eye(2, 4), 5, 1.0)


def test_printed_mse_exceeds_closed_form_crlb():
    # the printed expression omits the mean-centering term, so it is optimistic
    for m in range(2, 9):
        assert mse_single_user_printed(m, 512, 1.0, 1.0) < crlb_single_user(m, 512, 1.0, 1.0)
    assert mse_single_user_printed(1, 512, 1.0, 1.0) == math.inf


def test_collision_lower_bound_examples():
    assert collision_lower_bound(1, 5) == 0.0
    assert collision_lower_bound(2, 1) == pytest.approx(0.5)


def test_aloha_weight_against_occupancy_simulation():
    k, t, draws = 2000, 4000, 100_000
    rng = np.random.default_rng(2)
    ratios = np.empty(draws)
    chunk = 500
    for c in range(0, draws, chunk):
        picks = rng.integers(0, t, size=(chunk, k)) + (np.arange(chunk) * t)[:, None]
        occ = np.bincount(picks.ravel(), minlength=chunk * t).reshape(chunk, t)
        ratios[c:c + chunk] = (occ == 1).sum(axis=1) / (occ > 0).sum(axis=1)
    se = ratios.std(ddof=1) / math.sqrt(draws)
    q = 1.0 / t
    exact = k * q * (1 - q) ** (k - 1) / (1 - (1 - q) ** k)  # finite-population value the Poisson form approximates
    w = aloha_singleton_weight(k / t)
    assert abs(ratios.mean() - exact) <= 3 * se + 1e-4  # ratio-of-means vs mean-of-ratios bias is O(1/T)
    assert abs(w - ratios.mean()) <= 3 * se + abs(w - exact)


def ideal_cfg(**kw):
    base = dict(n=5000, m=5, k_c=50, k_s=50, b_c=100, b_s=13, eps_target=0.1, delta_target=5e-4)
    base.update(kw)
    return SystemConfig(**base)


def test_tin_without_interference_matches_tdma_single_user():
    cfg = ideal_cfg(k_c=1, k_s=0)
    tin = evaluate_ideal_model("tin_ideal", cfg, 0.0)
    tdma = evaluate_ideal_model("tdma_ideal", cfg, 0.0, n_c=cfg.n, n_s=cfg.n)
    assert tin.pupe == pytest.approx(tdma.pupe, rel=1e-9)
    cfg = ideal_cfg(k_c=0, k_s=1)
    tin = evaluate_ideal_model("tin_ideal", cfg, 0.0)
    tdma = evaluate_ideal_model("tdma_ideal", cfg, 0.0, n_c=cfg.n, n_s=cfg.n)
    # one active user still self-interferes in the TIN denominator; equality needs zero power overhead
    assert tin.mseaoa >= tdma.mseaoa


def test_tdma_music_infeasible_when_sensing_users_reach_m():
    assert not evaluate_ideal_model("tdma_music_ideal", ideal_cfg(k_s=5), 20.0).feasible
    rep = required_ebn0_baseline("tdma_music_ideal", ideal_cfg())
    assert not rep.feasible and math.isinf(rep.ebn0_db)
    assert evaluate_ideal_model("tdma_music_ideal", ideal_cfg(k_c=4, k_s=2), 20.0).feasible


def test_ideal_models_monotone_in_power():
    cfg = ideal_cfg(k_c=10, k_s=10)
    for kind in ("tdma_ideal", "tin_ideal", "aloha_ideal"):
        reps = [evaluate_ideal_model(kind, cfg, db, t=20) if kind == "aloha_ideal"
                else evaluate_ideal_model(kind, cfg, db) for db in np.linspace(-5, 30, 8)]
        p = [r.pupe for r in reps]
        assert all(b <= a + 1e-12 for a, b in zip(p, p[1:])), kind


def test_required_rejects_bad_kind():
    with pytest.raises(ValueError):
        required_ebn0_baseline("tin_practical", ideal_cfg())
    with pytest.raises(ValueError):
        required_ebn0_baseline("tdma_ideal", ideal_cfg(k_c=0, k_s=0))


def test_per_user_energy_examples():
    assert per_user_energy(0.2, 0.2, 3, 4, 100, 100, 1.0) == pytest.approx(20.0)
    assert per_user_energy(0.2, 0.2, 3, 4, 100, 100, 2.0) == pytest.approx(10.0)
    # mixed slot lengths, hand expansion
    assert per_user_energy(0.5, 0.25, 10, 10, 512, 1024, 1.0) == pytest.approx((0.5 * 10 * 512 + 0.25 * 10 * 1024) / 20)
    with pytest.raises(ValueError):
        per_user_energy(1, 1, 0, 0, 1, 1, 1.0)
