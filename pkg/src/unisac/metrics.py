"""Ground-truth scoring: per-user probability of error and AOA mean squared error."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, fields

import numpy as np
from scipy import stats

from .channel import aoa_error


@dataclass(frozen=True)
class TrialScore:
    md_comm: int = 0
    md_sens: int = 0
    coll_comm: int = 0
    coll_sens: int = 0
    detected_sens: int = 0  # collision-free, correctly detected sensing users
    sum_sq_aoa: float = 0.0
    k_c: int = 0
    k_s: int = 0

    def __add__(self, other):
        return TrialScore(*(getattr(self, f.name) + getattr(other, f.name) for f in fields(self)))

    def as_array(self):
        return np.array([getattr(self, f.name) for f in fields(self)], dtype=float)


def _collided(keys):
    counts = Counter(keys)
    return [counts[k] > 1 for k in keys]


def score_trial(truth, report):
    """Tally misdetections, collisions and squared AOA errors for one frame.

    Users sharing an identical transmit signal (same message or codeword, same slot)
    are counted as collided and never also as misdetected.
    """
    c_keys = [(int(s), m.tobytes()) for s, m in zip(truth.comm_slots, truth.comm_messages)]
    decoded = report.message_keys()
    c_coll = _collided(c_keys)
    md_c = sum(1 for k, col in zip(c_keys, c_coll) if not col and k not in decoded)

    s_keys = [(int(r), int(t)) for r, t in zip(truth.sens_rows, truth.sens_slots)]
    s_coll = _collided(s_keys)
    est = {pair: float(a) for pair, a in zip(report.sensing_pairs, report.aoas)}
    md_s, hits, sq = 0, 0, 0.0
    for k, col, theta in zip(s_keys, s_coll, truth.sens_aoas):
        if col:
            continue
        if k in est:
            hits += 1
            sq += float(aoa_error(est[k], theta)) ** 2
        else:
            md_s += 1
    return TrialScore(md_c, md_s, sum(c_coll), sum(s_coll), hits, sq, len(c_keys), len(s_keys))


@dataclass
class Aggregate:
    trials: int
    pupe: float
    p_md: float
    p_coll: float
    pupe_comm: float
    pupe_sens: float
    mseaoa: float  # nan when no sensing user was ever detected
    pupe_se: float
    mseaoa_se: float
    errors: int
    users: int

    @property
    def mseaoa_defined(self):
        return not np.isnan(self.mseaoa)


def _ratios(t):
    md_c, md_s, co_c, co_s, det, sq, kc, ks = t
    k = kc + ks
    pupe = (md_c + md_s + co_c + co_s) / k if k else 0.0
    mse = sq / det if det else np.nan
    return pupe, mse


def aggregate(scores, n_boot=200, seed=0):
    """Ratio-of-sums estimators with bootstrap standard errors (resampling trials)."""
    if not scores:
        raise ValueError("need at least one trial")
    arr = np.stack([s.as_array() for s in scores])
    tot = arr.sum(axis=0)
    md_c, md_s, co_c, co_s, det, sq, kc, ks = tot
    k = kc + ks
    pupe, mse = _ratios(tot)
    rng = np.random.default_rng(seed)
    boot_p, boot_m = [], []
    for _ in range(n_boot):
        idx = rng.integers(0, len(scores), len(scores))
        p, m_ = _ratios(arr[idx].sum(axis=0))
        boot_p.append(p)
        boot_m.append(m_)
    boot_m = np.array(boot_m)
    boot_m = boot_m[~np.isnan(boot_m)]
    return Aggregate(
        trials=len(scores),
        pupe=pupe,
        p_md=(md_c + md_s) / k if k else 0.0,
        p_coll=(co_c + co_s) / k if k else 0.0,
        pupe_comm=(md_c + co_c) / kc if kc else 0.0,
        pupe_sens=(md_s + co_s) / ks if ks else 0.0,
        mseaoa=mse,
        pupe_se=float(np.std(boot_p, ddof=1)) if n_boot > 1 else 0.0,
        mseaoa_se=float(np.std(boot_m, ddof=1)) if boot_m.size > 1 else np.nan,
        errors=int(md_c + md_s + co_c + co_s),
        users=int(k),
    )


def clopper_pearson_upper(errors, total, confidence=0.95):
    """One-sided upper confidence limit for a binomial proportion."""
    if total <= 0:
        raise ValueError("total must be positive")
    if errors >= total:
        return 1.0
    return float(stats.beta.ppf(confidence, errors + 1, total - errors))


def max_errors_within(total, target, confidence=0.95):
    """Largest error count whose Clopper-Pearson upper limit stays at or below ``target``."""
    lo, hi = -1, total
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if clopper_pearson_upper(mid, total, confidence) <= target:
            lo = mid
        else:
            hi = mid
    return lo
