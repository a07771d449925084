import numpy as np
import pytest
from scipy import stats

from unisac.config import SystemConfig
from unisac.tx import (FrameLayout, SensingCodebook, assemble_scenario, build_sensing_codebook, draw_truth,
                       encode_comm_user, encode_sensing_user, make_codec)


def test_layout():
    lay = FrameLayout(1024, 2, 4)
    assert (lay.n_c, lay.n_s) == (512, 256)
    assert lay.comm_slot(1) == slice(512, 1024)
    assert lay.sens_slot(3) == slice(768, 1024)
    with pytest.raises(IndexError):
        lay.comm_slot(2)
    with pytest.raises(ValueError):
        FrameLayout(1024, 3, 1)


def test_codebook_energy_and_seeds():
    cb = build_sensing_codebook(8, FrameLayout(128), 0.7, seed=1)
    assert np.allclose(np.sum(np.abs(cb.rows) ** 2, axis=1), 0.7 * 128, rtol=1e-12)
    other = build_sensing_codebook(8, FrameLayout(128), 0.7, seed=2)
    assert not np.allclose(cb.rows, other.rows)


def test_codebook_cross_correlation_magnitude():
    n_s = 256
    cb = SensingCodebook(14, n_s, 1.0, seed=3)
    rng = np.random.default_rng(0)
    i = rng.integers(0, cb.size, 10_000)
    j = (i + rng.integers(1, cb.size, 10_000)) % cb.size
    c = np.abs(np.sum(cb.rows[i] * cb.rows[j].conj(), axis=1)) / n_s
    # |<a_i, a_j>| / n_s is Rayleigh with mean sqrt(pi/4) / sqrt(n_s)
    assert np.mean(c) == pytest.approx(np.sqrt(np.pi / 4) / np.sqrt(n_s), rel=0.03)


def test_lazy_codebook_equals_materialized():
    eager = SensingCodebook(13, 64, 2.0, seed=5)
    lazy = SensingCodebook(13, 64, 2.0, seed=5, lazy=True)
    for r in (0, 4095, 4096, 8191):
        assert np.array_equal(eager.row(r), lazy.row(r))
    chunks = np.concatenate([b for _, b in lazy.iter_chunks()])
    assert np.array_equal(chunks, eager.rows)
    with pytest.raises(MemoryError):
        _ = lazy.rows


def test_codebook_cap_and_errors():
    with pytest.raises(MemoryError):
        SensingCodebook(25, 8, 1.0, seed=0)
    big = SensingCodebook(30, 8, 1.0, seed=0, lazy=True)
    assert np.sum(np.abs(big.row(2**30 - 1)) ** 2) == pytest.approx(8.0)
    with pytest.raises(IndexError):
        big.row(2**30)


def test_codebook_rescale():
    cb = SensingCodebook(6, 32, 1.0, seed=9)
    r = cb.rescaled(4.0)
    assert np.allclose(r.rows, 2.0 * cb.rows)
    assert r.power == 4.0 and cb.power == 1.0


def test_comm_user_examples():
    cfg = SystemConfig(n=1024, s_c=2, b_c=50)
    lay = FrameLayout.from_config(cfg)
    codec = make_codec(cfg)
    msg = np.random.default_rng(0).integers(0, 2, 50, dtype=np.uint8)
    rec = encode_comm_user(msg, lay, codec, 0.3, slot=1, aoa=0.2)
    assert not rec.signal[:512].any() and np.all(rec.signal[512:] != 0)
    assert np.sum(np.abs(rec.signal) ** 2) == pytest.approx(512 * 0.3)
    twin = encode_comm_user(msg, lay, codec, 0.3, slot=1, aoa=-0.5)
    assert np.array_equal(rec.signal, twin.signal)


def test_sensing_user_examples():
    lay = FrameLayout(256, 1, 4)
    cb = SensingCodebook(5, 64, 0.5, seed=0)
    rec = encode_sensing_user(cb, lay, 7, 2, aoa=0.1)
    assert np.flatnonzero(rec.signal).min() == 128 and np.flatnonzero(rec.signal).max() == 191
    assert np.sum(np.abs(rec.signal) ** 2) == pytest.approx(0.5 * 64)
    with pytest.raises(IndexError):
        encode_sensing_user(cb, lay, 32, 0)
    with pytest.raises(IndexError):
        encode_sensing_user(cb, lay, 0, 4)
    with pytest.raises(ValueError):
        encode_sensing_user(cb, FrameLayout(256, 1, 2), 0, 0)


def test_row_slot_draws_uniform():
    cfg = SystemConfig(n=64, k_c=0, k_s=100_000, b_s=3, s_s=4, b_c=20, crc_bits=8, crc_poly=0x107)
    t = draw_truth(cfg, np.random.default_rng(1))
    counts = np.bincount(t.sens_rows * 4 + t.sens_slots, minlength=32)
    assert stats.chisquare(counts).pvalue > 1e-3


def test_assemble_examples():
    cfg = SystemConfig(n=128, k_c=0, k_s=0, b_c=20, b_s=4, crc_bits=8, crc_poly=0x107)
    recs, truth = assemble_scenario(cfg, np.random.default_rng(0), make_codec(cfg), None, 1.0)
    assert recs == [] and truth.k_c == truth.k_s == 0

    cfg = SystemConfig(n=128, k_c=3, k_s=4, b_c=20, b_s=4, s_c=2, s_s=4, crc_bits=8, crc_poly=0x107)
    codec = make_codec(cfg)
    cb = SensingCodebook(4, cfg.n_s, 1.0, seed=0)
    a, ta = assemble_scenario(cfg, np.random.default_rng(7), codec, cb, 1.0)
    b, tb = assemble_scenario(cfg, np.random.default_rng(7), codec, cb, 1.0)
    assert all(np.array_equal(x.signal, y.signal) for x, y in zip(a, b))
    assert np.array_equal(ta.sens_rows, tb.sens_rows)
    lay = FrameLayout.from_config(cfg)
    for rec in a:
        sl = lay.comm_slot(rec.slot) if rec.role == "communication" else lay.sens_slot(rec.slot)
        outside = np.ones(cfg.n, bool)
        outside[sl] = False
        assert not rec.signal[outside].any()
    assert all(-1 <= r.aoa < 1 for r in a)


def test_two_user_one_bit_collision_rate():
    cfg = SystemConfig(n=64, k_c=0, k_s=2, b_s=1, b_c=20, crc_bits=8, crc_poly=0x107)
    rng = np.random.default_rng(2)
    hits = 0
    trials = 100_000
    for _ in range(trials):
        rows = rng.integers(0, 2, 2)
        hits += rows[0] == rows[1]
    assert abs(hits / trials - 0.5) < 4 * np.sqrt(0.25 / trials)
    # the scenario sampler draws rows the same way
    t = [draw_truth(cfg, np.random.default_rng(i)).sens_rows for i in range(4000)]
    rate = np.mean([r[0] == r[1] for r in t])
    assert abs(rate - 0.5) < 4 * np.sqrt(0.25 / 4000)


def test_invalid_config_lists_problems():
    from unisac.config import ConfigError

    with pytest.raises(ConfigError) as err:
        SystemConfig(n=100, s_c=3, s_s=7, k_c=-1)
    assert len(err.value.problems) >= 3
