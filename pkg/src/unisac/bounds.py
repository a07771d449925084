"""Achievable PUPE / MSEAOA evaluator (deviation terms dropped), B_s selection and the
required-E/N0 search built on it."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from dataclasses import replace as _replace

import numpy as np

from .channel import f_e_kernel, steering_vector
from .config import per_user_energy, split_powers
from .numerics import chi2_inv, chi2_logcdf, log_binomial_table

log = logging.getLogger(__name__)

EBN0_BRACKET = (-10.0, 60.0)


class BracketError(RuntimeError):
    """Target not reachable inside the search bracket."""


@dataclass(frozen=True)
class AchievabilityConfig:
    n: int
    m: int
    k_c: int
    k_s: int
    b_c: int
    b_s: int
    p_c: float  # P'_c, average transmit power of the random codebook
    p_s: float
    pbar_c: float  # power constraints
    pbar_s: float
    noise_var: float = 1.0
    n_theta: int = 2048
    mc_trials: int = 1000
    seed: int = 0
    weight_floor: float = 1e-12  # cells below this weight are skipped in the MSE sum

    def __post_init__(self):
        problems = []
        if self.n < 1 or self.m < 1:
            problems.append("n and m must be >= 1")
        if self.k_c < 0 or self.k_s < 0:
            problems.append("user counts must be >= 0")
        if self.p_c <= 0 or self.p_s <= 0 or self.noise_var <= 0:
            problems.append("powers and noise variance must be positive")
        if self.p_c > self.pbar_c * (1 + 1e-12) or self.p_s > self.pbar_s * (1 + 1e-12):
            problems.append("average power must not exceed the power constraint")
        if problems:
            raise ValueError("; ".join(problems))

    @property
    def k_total(self):
        return self.k_c + self.k_s

    def scaled(self, factor):
        """All four powers multiplied by ``factor`` (the E/N0 search variable)."""
        return _replace(self, p_c=self.p_c * factor, p_s=self.p_s * factor,
                        pbar_c=self.pbar_c * factor, pbar_s=self.pbar_s * factor)

    def ebn0(self):
        """Per-user E/N0 (linear) evaluated at the power constraints over the whole frame."""
        return per_user_energy(self.pbar_c, self.pbar_s, self.k_c, self.k_s, self.n, self.n, self.noise_var)


def headroom(n, k_total, eps_target):
    """P_bar / P' = F^-1(q, 2n) / 2n with q such that P_cons = 0.01 eps_target."""
    if k_total == 0:
        return 1.0
    q = (1.0 - 0.01 * eps_target) ** (1.0 / k_total)
    return float(chi2_inv(q, 2 * n)) / (2 * n)


def achievability_config(cfg, ebn0_db, **kw):
    """AchievabilityConfig at a given E/N0 from a SystemConfig (full-frame signals, headroom rule)."""
    k = cfg.k_total
    ratio = headroom(cfg.n, k, cfg.eps_target)
    pbar_c, pbar_s = split_powers(ebn0_db, cfg.k_c, cfg.k_s, cfg.n, cfg.n, cfg.noise_var, cfg.power_ratio)
    params = dict(n=cfg.n, m=cfg.m, k_c=cfg.k_c, k_s=cfg.k_s, b_c=cfg.b_c, b_s=cfg.b_s,
                  p_c=pbar_c / ratio, p_s=pbar_s / ratio, pbar_c=pbar_c, pbar_s=pbar_s,
                  noise_var=cfg.noise_var, n_theta=cfg.n_theta, mc_trials=cfg.mc_trials, seed=cfg.seed)
    params.update(kw)
    return AchievabilityConfig(**params)


# ---------------------------------------------------------------------------
# PUPE components


def p_cons(cfg):
    """1 - F(2n Pbar_s/P'_s, 2n)^K_s F(2n Pbar_c/P'_c, 2n)^K_c, in the log domain."""
    if cfg.k_total == 0:
        return 0.0
    ls = chi2_logcdf(2 * cfg.n * cfg.pbar_s / cfg.p_s, 2 * cfg.n)
    lc = chi2_logcdf(2 * cfg.n * cfg.pbar_c / cfg.p_c, 2 * cfg.n)
    return float(min(1.0, max(0.0, -math.expm1(cfg.k_s * ls + cfg.k_c * lc))))


def expected_collisions(k, bits):
    """sum_{i>=2} i C(k, i) / 2^{bits (i-1)}, exact finite sum (terms vanish past i = k)."""
    if k < 2:
        return 0.0
    lb = log_binomial_table(k, k)
    i = np.arange(2, k + 1)
    return float(np.sum(np.exp(np.log(i) + lb[2:] - bits * (i - 1) * math.log(2.0))))


def p_coll_bound(cfg):
    if cfg.k_total == 0:
        return 0.0
    total = expected_collisions(cfg.k_s, cfg.b_s) + expected_collisions(cfg.k_c, cfg.b_c)
    return float(min(1.0, total / cfg.k_total))


def log_p_table(cfg):
    """log of the (unclamped) bound on P_{K_s,K_c} for K_s = 0..|A_s|, K_c = 0..|A_c|."""
    ks = np.arange(cfg.k_s + 1)[:, None]
    kc = np.arange(cfg.k_c + 1)[None, :]
    l_sc = (log_binomial_table(2 ** cfg.b_s, cfg.k_s)[:, None] + log_binomial_table(cfg.k_s, cfg.k_s)[:, None]
            + log_binomial_table(2 ** cfg.b_c, cfg.k_c)[None, :] + log_binomial_table(cfg.k_c, cfg.k_c)[None, :])
    sigma_t2 = kc * cfg.p_c + ks * cfg.p_s
    return l_sc - cfg.n * cfg.m * np.log1p(0.25 * sigma_t2 / cfg.noise_var)


def p_kskc_bound(cfg, k_s, k_c):
    if not (0 <= k_s <= cfg.k_s and 0 <= k_c <= cfg.k_c):
        raise ValueError("k_s, k_c outside the active-user range")
    lp = log_p_table(cfg)[k_s, k_c]
    return float(min(1.0, math.exp(min(lp, 0.0))))


def p_table(cfg):
    return np.exp(np.minimum(log_p_table(cfg), 0.0))


def p_md_bound(cfg, table=None):
    """sum (K_c + K_s)/K min(1, P_{K_s,K_c}), evaluated over the full table."""
    if cfg.k_total == 0:
        return 0.0
    table = p_table(cfg) if table is None else table
    ks = np.arange(cfg.k_s + 1)[:, None]
    kc = np.arange(cfg.k_c + 1)[None, :]
    return float(min(1.0, np.sum((ks + kc) / cfg.k_total * table)))


def mse_weights(table):
    """Clamped table with (0,0) taking the deficit; renormalized if the rest already exceeds 1."""
    w = np.array(table, dtype=float)
    w[0, 0] = 0.0
    rest = w.sum()
    if rest >= 1.0:
        return w / rest
    w[0, 0] = 1.0 - rest
    return w


# ---------------------------------------------------------------------------
# MSEAOA


def aoa_sq_error_draws(m, z_var, n_theta, z_std):
    """Squared argmax of f_e(theta) + Re(b_theta^H z) over F(-1, 1, n_theta) for each draw.

    ``z_std`` holds standard CN(0, 1) draws (trials x m); they are scaled by sqrt(z_var)
    so that every call shares the same underlying randomness.
    """
    grid = np.linspace(-1.0, 1.0, n_theta)
    fe = f_e_kernel(grid, m)
    b = steering_vector(grid, m)  # m x n_theta
    z = np.sqrt(z_var) * z_std
    score = fe[None, :] + np.real(z @ b.conj())
    idx = np.argmax(score, axis=1)
    ties = score == score[np.arange(len(idx)), idx][:, None]
    rows = np.nonzero(ties.sum(axis=1) > 1)[0]
    if rows.size:  # exact ties (e.g. M = 1) resolved uniformly over the maximizers
        rng = np.random.default_rng(n_theta)
        for r in rows:
            idx[r] = rng.choice(np.nonzero(ties[r])[0])
    return grid[idx] ** 2


def standard_draws(seed, trials, m):
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xA0A, int(m)]))
    return (rng.standard_normal((trials, m)) + 1j * rng.standard_normal((trials, m))) / np.sqrt(2.0)


def delta_achievable(cfg, weights=None):
    """(estimate, standard error) of the weighted Monte Carlo MSEAOA.

    ``weights`` defaults to the normalized P table; pass "genie" for P_{0,0} = 1.
    """
    if cfg.mc_trials < 100:
        raise ValueError("mc_trials must be >= 100")
    if weights is None:
        weights = mse_weights(p_table(cfg))
    elif isinstance(weights, str) and weights == "genie":
        weights = np.zeros((cfg.k_s + 1, cfg.k_c + 1))
        weights[0, 0] = 1.0
    z_std = standard_draws(cfg.seed, cfg.mc_trials, cfg.m)
    est, var = 0.0, 0.0
    for ks, kc in zip(*np.nonzero(weights > cfg.weight_floor)):
        sigma_s2 = kc * cfg.p_c + ks * cfg.p_s + cfg.noise_var
        sq = aoa_sq_error_draws(cfg.m, sigma_s2 / (cfg.n * cfg.p_s), cfg.n_theta, z_std)
        w = weights[ks, kc]
        est += w * sq.mean()
        var += w * w * sq.var(ddof=1) / sq.size
    return float(est), float(math.sqrt(var))


# ---------------------------------------------------------------------------
# report, B_s selection, required E/N0


@dataclass
class AchievabilityReport:
    p_cons: float
    p_coll: float
    p_md: float
    epsilon: float
    delta: float
    delta_se: float
    table: np.ndarray = field(repr=False)


def evaluate(cfg, with_delta=True):
    table = p_table(cfg)
    pc, pl, pm = p_cons(cfg), p_coll_bound(cfg), p_md_bound(cfg, table)
    eps = min(1.0, pc + pl + pm)
    d, dse = delta_achievable(cfg) if with_delta else (math.nan, math.nan)
    return AchievabilityReport(pc, pl, pm, eps, d, dse, table)


@dataclass(frozen=True)
class BsSelection:
    b_s: int
    p_coll: float
    unbounded: bool = False  # collision-free for any B_s (fewer than two sensing users)


def select_bs(cfg, eps_target, cap=24):
    """Smallest B_s whose collision bound stays below half the PUPE target."""
    if eps_target <= 0:
        raise ValueError("eps_target must be positive")
    if cfg.k_s <= 1:
        return BsSelection(cap, p_coll_bound(_replace(cfg, b_s=cap)), unbounded=True)
    for b in range(1, cap + 1):
        pc = p_coll_bound(_replace(cfg, b_s=b))
        if pc < 0.5 * eps_target:
            return BsSelection(b, pc)
    raise BracketError(f"collision bound stays >= {0.5 * eps_target} for every B_s <= {cap}")


def _meets(cfg, eps_target, delta_target, need_delta):
    rep = evaluate(cfg, with_delta=False)
    if rep.epsilon > eps_target:
        return False, rep
    if need_delta:
        rep.delta, rep.delta_se = delta_achievable(cfg)
        return rep.delta <= delta_target, rep
    return True, rep


def required_ebn0_achievable(cfg, eps_target, delta_target, tol_db=0.1, bracket=EBN0_BRACKET):
    """Smallest E/N0 (dB) on the tolerance grid meeting both targets, by bisection.

    ``cfg`` is an AchievabilityConfig at 0 dB whose powers are scaled by the search.
    """
    if not 0 < eps_target or not delta_target > 0:
        raise ValueError("targets must be positive")
    base = cfg.scaled(1.0 / cfg.ebn0())
    need_delta = cfg.k_s > 0 and np.isfinite(delta_target)

    def at(db):
        return base.scaled(10.0 ** (db / 10.0))

    lo, hi = bracket
    ok_lo, _ = _meets(at(lo), eps_target, delta_target, need_delta)
    if ok_lo:
        return lo
    ok_hi, _ = _meets(at(hi), eps_target, delta_target, need_delta)
    if not ok_hi:
        raise BracketError(f"targets not met at {hi} dB")
    seen = []
    while hi - lo > tol_db:
        mid = 0.5 * (lo + hi)
        ok, rep = _meets(at(mid), eps_target, delta_target, need_delta)
        seen.append((mid, rep.epsilon))
        if ok:
            hi = mid
        else:
            lo = mid
    seen.sort()
    eps_seq = [e for _, e in seen]
    if any(b > a + 1e-12 for a, b in zip(eps_seq, eps_seq[1:])):
        log.warning("epsilon not monotone in power along the search: %s", seen)
    return hi
