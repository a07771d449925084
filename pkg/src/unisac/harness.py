"""Experiment orchestration: Monte Carlo trials, required-E/N0 searches, figure recipes, export."""

from __future__ import annotations

import csv
import io
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import __version__
from .baselines import mse_single_user_printed, required_ebn0_baseline
from .bounds import (BracketError, achievability_config, delta_achievable, required_ebn0_achievable,
                     select_bs)
from .channel import simulate_uplink, trial_rng
from .config import SystemConfig, powers_for_ebn0
from .metrics import TrialScore, aggregate, clopper_pearson_upper, max_errors_within, score_trial
from .rx import DetectionReport, Receiver, RxState, run_receiver, run_tin_practical
from .tx import SensingCodebook, assemble_scenario, make_codec

log = logging.getLogger(__name__)

MODELS = ("unisac_practical", "tin_practical", "genie_aoa")
EBN0_BRACKET = (-10.0, 60.0)
BATCH = 20  # trials per early-abort checkpoint
CONFIDENCE = 0.95
Z_ONE_SIDED = 1.6448536269514722


class TrialError(RuntimeError):
    """A single trial raised; ``seed`` and ``index`` replay it via ``trial_rng``."""

    def __init__(self, seed, index, cause):
        self.seed, self.index = seed, index
        super().__init__(f"trial {index} (seed {seed}) failed: {cause!r}")


# ---------------------------------------------------------------------------
# trial execution


@dataclass
class _Context:
    cfg: SystemConfig
    p_c: float
    p_s: float
    codec: object
    codebook: object


@lru_cache(maxsize=4)
def _codec(cfg_key):
    return make_codec(cfg_key)


@lru_cache(maxsize=2)
def _base_codebook(b_s, n_s, seed):
    # unit power; rescaled per operating point (rows are a fixed direction times sqrt(power))
    return SensingCodebook(b_s, n_s, 1.0, seed)


@lru_cache(maxsize=1)
def _context(cfg, ebn0_db):
    codec = _codec(cfg.replace(ebn0_db=0.0, trials=1, seed=0))
    p_c, p_s = powers_for_ebn0(cfg, ebn0_db, n_c=codec.block_length)
    codebook = _base_codebook(cfg.b_s, cfg.n_s, cfg.seed).rescaled(p_s) if cfg.k_s else None
    return _Context(cfg, p_c, p_s, codec, codebook)


def _genie_report(ctx, truth, y):
    """Detection sets handed over by a genie; C-SIC, LS and SIR run as in the receiver."""
    cfg = ctx.cfg
    rx = Receiver(cfg, ctx.p_c, ctx.p_s, ctx.codec, ctx.codebook)
    amp = np.sqrt(ctx.p_c)
    decoded = [[] for _ in range(cfg.s_c)]
    for msg, slot in zip(truth.comm_messages, truth.comm_slots):
        if not any(np.array_equal(msg, m) for m, _ in decoded[slot]):
            decoded[slot].append((msg, ctx.codec.modulate(msg, amp)))
    detected = [[] for _ in range(cfg.s_s)]
    for row, slot in zip(truth.sens_rows, truth.sens_slots):
        if int(row) not in detected[slot]:
            detected[slot].append(int(row))
    state = RxState(decoded, detected, y, y)
    state.y_c = rx.c_sic(y, state)
    pairs, aoas = rx.estimate_aoas(state)
    return DetectionReport([m for d in decoded for m, _ in d], [i for i, d in enumerate(decoded) for _ in d],
                           pairs, aoas, iterations=1, truncated=False)


def run_one(ctx, model, seed, index):
    rng = trial_rng(seed, index)
    records, truth = assemble_scenario(ctx.cfg, rng, ctx.codec, ctx.codebook, ctx.p_c)
    y = simulate_uplink([r.transmission() for r in records], ctx.cfg.m, ctx.cfg.noise_var, rng, n=ctx.cfg.n)
    if model == "unisac_practical":
        report = run_receiver(y, ctx.cfg, ctx.p_c, ctx.p_s, ctx.codec, ctx.codebook)
    elif model == "tin_practical":
        report = run_tin_practical(y, ctx.cfg, ctx.p_c, ctx.p_s, ctx.codec, ctx.codebook)
    elif model == "genie_aoa":
        report = _genie_report(ctx, truth, y)
    else:
        raise ValueError(f"unknown model {model!r}; expected one of {MODELS}")
    return score_trial(truth, report)


def _run_range(args):
    cfg, ebn0_db, model, seed, start, stop = args
    ctx = _context(cfg, ebn0_db)
    out = []
    for i in range(start, stop):
        try:
            out.append(run_one(ctx, model, seed, i))
        except Exception as exc:  # noqa: BLE001 - re-raised with replay info
            raise TrialError(seed, i, exc) from exc
    return out


def _scores(cfg, ebn0_db, model, seed, start, stop, workers, pool=None):
    if workers <= 1 or stop - start < 2:
        return _run_range((cfg, ebn0_db, model, seed, start, stop))
    bounds = np.linspace(start, stop, min(workers, stop - start) + 1).astype(int)
    jobs = [(cfg, ebn0_db, model, seed, int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:])]
    out = []
    for part in pool.map(_run_range, jobs):
        out += part
    return out


@dataclass
class TrialBatch:
    scores: list
    aborted: bool = False

    def summary(self):
        return aggregate(self.scores)


def run_trials(cfg, model="unisac_practical", trials=None, seed=None, ebn0_db=None, workers=1,
               max_errors=None):
    """Independent end-to-end trials at one operating point.

    Trial ``i`` draws everything from ``trial_rng(seed, i)``, so results do not depend on the
    worker count. With ``max_errors`` set, the run stops at the first batch boundary where the
    accumulated user errors exceed it (``TrialBatch.aborted``).
    """
    trials = cfg.trials if trials is None else int(trials)
    seed = cfg.seed if seed is None else int(seed)
    ebn0_db = cfg.ebn0_db if ebn0_db is None else float(ebn0_db)
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if model not in MODELS:
        raise ValueError(f"unknown model {model!r}; expected one of {MODELS}")
    pool = ProcessPoolExecutor(workers) if workers > 1 else None
    try:
        scores = []
        step = trials if max_errors is None else BATCH
        for start in range(0, trials, step):
            stop = min(trials, start + step)
            scores += _scores(cfg, ebn0_db, model, seed, start, stop, workers, pool)
            if max_errors is not None:
                tot = sum(scores, TrialScore())
                if tot.md_comm + tot.md_sens + tot.coll_comm + tot.coll_sens > max_errors:
                    return TrialBatch(scores, aborted=stop < trials)
        return TrialBatch(scores)
    finally:
        if pool is not None:
            pool.shutdown()


# ---------------------------------------------------------------------------
# required E/N0 for the Monte Carlo schemes


@dataclass
class PointOutcome:
    ebn0_db: float
    met: bool
    trials: int
    pupe: float
    pupe_upper: float
    mseaoa: float
    mseaoa_se: float


@dataclass
class PracticalSearch:
    ebn0_db: float  # smallest grid point meeting the targets
    bracket: tuple  # (largest failing point, ebn0_db)
    points: list = field(default_factory=list)

    @property
    def stderr(self):
        return 0.25


def evaluate_point(cfg, ebn0_db, model="unisac_practical", eps_target=None, delta_target=None,
                   trials=None, seed=None, workers=1):
    """Targets met iff the one-sided 95% Clopper-Pearson bound on PUPE is at most eps and the
    one-sided 95% normal bound on MSEAOA is at most Delta."""
    eps = cfg.eps_target if eps_target is None else eps_target
    delta = cfg.delta_target if delta_target is None else delta_target
    trials = cfg.trials if trials is None else trials
    users = trials * cfg.k_total
    budget = max_errors_within(users, eps, CONFIDENCE) if eps < 1 else users
    batch = run_trials(cfg, model, trials, seed, ebn0_db, workers, max_errors=budget)
    agg = batch.summary()
    upper = clopper_pearson_upper(agg.errors, users, CONFIDENCE) if not batch.aborted else 1.0
    met = not batch.aborted and upper <= eps
    if cfg.k_s and math.isfinite(delta):
        if not agg.mseaoa_defined:
            met = False
        else:
            se = agg.mseaoa_se if math.isfinite(agg.mseaoa_se) else 0.0
            met = met and agg.mseaoa + Z_ONE_SIDED * se <= delta
    return PointOutcome(float(ebn0_db), met, agg.trials, agg.pupe, upper, agg.mseaoa, agg.mseaoa_se)


def required_ebn0_practical(cfg, eps_target=None, delta_target=None, model="unisac_practical", start=None,
                            trials=None, seed=None, workers=1, bracket=EBN0_BRACKET, coarse=1.0, fine=0.25):
    """Coarse-to-fine search for the smallest E/N0 meeting the targets.

    From ``start`` the search walks on the 1 dB grid with doubling strides until the outcome
    flips, bisects back down to adjacent 1 dB points, then refines to 0.25 dB. Raises
    BracketError if the top edge of ``bracket`` fails.
    """
    lo, hi = bracket
    x = lo if start is None else min(max(lo, round(start / coarse) * coarse), hi)
    points = {}

    def met(db):
        db = round(db / fine) * fine
        if db not in points:
            points[db] = evaluate_point(cfg, db, model, eps_target, delta_target, trials, seed, workers)
            log.info("%s %.2f dB: met=%s pupe=%.4g (ub %.4g) mse=%.3g", model, db, points[db].met,
                     points[db].pupe, points[db].pupe_upper, points[db].mseaoa)
        return points[db].met

    def done(ok, fail):
        return PracticalSearch(ok, (fail, ok), [points[k] for k in sorted(points)])

    stride = coarse
    if met(x):
        ok = x
        while True:
            if ok <= lo:
                return done(lo, lo)
            cand = max(lo, ok - stride)
            if not met(cand):
                fail = cand
                break
            ok, stride = cand, 2 * stride
    else:
        fail = x
        while True:
            if fail >= hi:
                raise BracketError(f"{model}: targets not met within [{lo}, {hi}] dB")
            cand = min(hi, fail + stride)
            if met(cand):
                ok = cand
                break
            fail, stride = cand, 2 * stride
    for step in (coarse, fine):
        while ok - fail > step + 1e-9:
            mid = fail + round((ok - fail) / 2 / step) * step
            if mid <= fail or mid >= ok:
                mid = fail + step
            if met(mid):
                ok = mid
            else:
                fail = mid
    return done(ok, fail)


def required_ebn0_achievable_cfg(cfg, tol_db=0.05):
    """Achievable-bound requirement with B_s chosen by ``select_bs``."""
    acfg = achievability_config(cfg, 0.0)
    if cfg.k_s:
        acfg = achievability_config(cfg.replace(b_s=select_bs(acfg, cfg.eps_target).b_s), 0.0)
    return required_ebn0_achievable(acfg, cfg.eps_target, cfg.delta_target, tol_db=tol_db)


# ---------------------------------------------------------------------------
# sweeps and figures


@dataclass(frozen=True)
class SweepRow:
    x: float
    model: str
    value: float
    stderr: float
    trials: int
    seed: int
    config_hash: str


@dataclass
class SweepResult:
    figure: str
    value_name: str  # "ebn0_db" or "mseaoa"
    x_name: str
    rows: list = field(default_factory=list)
    version: str = __version__

    def add(self, x, model, value, stderr, trials, seed, cfg):
        self.rows.append(SweepRow(float(x), model, float(value), float(stderr), int(trials), int(seed),
                                  cfg.digest()))

    def series(self, model):
        rows = sorted((r for r in self.rows if r.model == model), key=lambda r: r.x)
        return np.array([r.x for r in rows]), np.array([r.value for r in rows])

    @property
    def models(self):
        return list(dict.fromkeys(r.model for r in self.rows))


_FIG_META = {
    "fig3": ("ebn0_db", "total_users"),
    "fig4": ("ebn0_db", "total_users"),
    "fig5": ("mseaoa", "antennas"),
    "fig6": ("ebn0_db", "slots"),
}

FIG3_ANALYTIC = ("tdma_ideal", "tin_ideal", "tdma_music_ideal", "aloha_ideal", "optimistic")


def _fig3(scale, seed, trials, workers):
    res = SweepResult("fig3", *_FIG_META["fig3"])
    users = (20, 60, 100) if scale == "desk" else tuple(range(20, 201, 20))
    for k in users:
        cfg = SystemConfig(n=5000, k_c=k // 2, k_s=k - k // 2, seed=seed)
        try:
            val = required_ebn0_achievable_cfg(cfg)
        except BracketError:
            val = math.inf
        res.add(k, "unisac_achievable", val, 0.05, 0, seed, cfg)
        for kind in FIG3_ANALYTIC:
            rep = required_ebn0_baseline(kind, cfg)
            res.add(k, kind, rep.ebn0_db, 0.01, 0, seed, cfg)
    return res


def _fig4(scale, seed, trials, workers):
    res = SweepResult("fig4", *_FIG_META["fig4"])
    users = (20, 80) if scale == "desk" else (20, 40, 60, 80, 100)
    trials = trials or 200
    for k in users:
        cfg = SystemConfig(n=1024, k_c=k // 2, k_s=k - k // 2, seed=seed, trials=trials)
        ach = required_ebn0_achievable_cfg(cfg)
        res.add(k, "unisac_achievable", ach, 0.05, 0, seed, cfg)
        for kind in ("optimistic", "tdma_practical", "aloha_practical"):
            res.add(k, kind, required_ebn0_baseline(kind, cfg).ebn0_db, 0.01, 0, seed, cfg)
        for model in ("unisac_practical", "tin_practical"):
            try:
                out = required_ebn0_practical(cfg, model=model, start=round(ach), workers=workers)
                val = out.ebn0_db
            except BracketError:
                val = math.inf
            res.add(k, model, val, 0.25, trials, seed, cfg)
    return res


FIG5_EBN0 = (10.0, 15.0, 20.0)


def fig5_point(cfg, ebn0_db, trials, seed, workers=1):
    """(practical MSEAOA, its SE, achievable genie Delta, its SE, printed single-user MSE)."""
    agg = run_trials(cfg, "genie_aoa", trials, seed, ebn0_db, workers).summary()
    acfg = achievability_config(cfg, ebn0_db)
    d, dse = delta_achievable(acfg, "genie")
    p_s = powers_for_ebn0(cfg, ebn0_db)[1]
    return agg.mseaoa, agg.mseaoa_se, d, dse, mse_single_user_printed(cfg.m, cfg.n_s, p_s, cfg.noise_var)


def _fig5(scale, seed, trials, workers):
    res = SweepResult("fig5", *_FIG_META["fig5"])
    trials = trials or 1000
    for eb in FIG5_EBN0:
        for m in range(2, 9):
            cfg = SystemConfig(n=512, m=m, k_c=10, k_s=10, seed=seed, trials=trials, ebn0_db=eb)
            prac, prac_se, ach, ach_se, opt = fig5_point(cfg, eb, trials, seed, workers)
            tag = f"{eb:g}dB"
            res.add(m, f"unisac_practical_{tag}", prac, prac_se, trials, seed, cfg)
            res.add(m, f"unisac_achievable_{tag}", ach, ach_se, cfg.mc_trials, seed, cfg)
            res.add(m, f"optimistic_{tag}", opt, 0.0, 0, seed, cfg)
    return res


def _fig6(scale, seed, trials, workers):
    res = SweepResult("fig6", *_FIG_META["fig6"])
    trials = trials or 200
    slots = (1, 2, 4) if scale == "desk" else (1, 2, 4, 8)
    done = {}
    for axis in ("s_c", "s_s"):
        start = 15.0
        for s in slots:
            cfg = SystemConfig(n=1024, k_c=10, k_s=10, b_s=13, seed=seed, trials=trials, **{axis: s})
            if cfg not in done:
                try:
                    done[cfg] = required_ebn0_practical(cfg, start=start, workers=workers).ebn0_db
                except BracketError:
                    done[cfg] = math.inf
            val = done[cfg]
            start = val if math.isfinite(val) else start
            res.add(s, f"unisac_practical_{axis}", val, 0.25, trials, seed, cfg)
    return res


_FIGURES = {"fig3": _fig3, "fig4": _fig4, "fig5": _fig5, "fig6": _fig6}


def reproduce_figure(name, scale="desk", seed=0, trials=None, workers=1):
    if name not in _FIGURES:
        raise ValueError(f"unknown figure {name!r}; expected one of {sorted(_FIGURES)}")
    if scale not in ("desk", "full"):
        raise ValueError("scale must be 'desk' or 'full'")
    return _FIGURES[name](scale, seed, trials, workers)


# ---------------------------------------------------------------------------
# export / import


def _fmt(v):
    return repr(float(v))


def to_csv(result):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "model", result.value_name, "stderr", "trials", "seed", "config_hash"])
    for r in result.rows:
        w.writerow([_fmt(r.x), r.model, _fmt(r.value), _fmt(r.stderr), r.trials, r.seed, r.config_hash])
    return buf.getvalue()


def to_plotdata(result):
    """One gnuplot data block per model (two blank lines between blocks, ``index`` addressable)."""
    blocks = []
    for model in result.models:
        lines = [f"# {model}", f"# {result.x_name} {result.value_name}"]
        lines += [f"{_fmt(x)} {_fmt(v)}" for x, v in zip(*result.series(model))]
        blocks.append("\n".join(lines) + "\n")
    return "\n\n".join(blocks)


def export(result, path, fmt="csv"):
    text = {"csv": to_csv, "plotdata": to_plotdata}
    if fmt not in text:
        raise ValueError(f"unknown export format {fmt!r}")
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text[fmt](result))
    except OSError as exc:
        raise OSError(f"cannot write {os.fspath(path)}: {exc.strerror}") from exc
    return path


def from_csv(text, figure=""):
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise ValueError("empty CSV")
    header = rows[0]
    if len(header) != 7 or header[:2] != ["x", "model"] or header[3:] != ["stderr", "trials", "seed", "config_hash"]:
        raise ValueError(f"unexpected CSV header {header}")
    x_name = next((k for k, (v, _) in _FIG_META.items() if k == figure), None)
    res = SweepResult(figure, header[2], _FIG_META[x_name][1] if x_name else "x")
    for r in rows[1:]:
        res.rows.append(SweepRow(float(r[0]), r[1], float(r[2]), float(r[3]), int(r[4]), int(r[5]), r[6]))
    return res


def import_csv(path, figure=""):
    with open(path, encoding="utf-8") as fh:
        return from_csv(fh.read(), figure)
