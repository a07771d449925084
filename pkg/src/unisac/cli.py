"""Command-line entry point: ``unisac {simulate,bound,baseline,sweep,selftest}``."""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys

from . import selftest
from .baselines import KINDS, evaluate_ideal_model, required_ebn0_baseline
from .bounds import BracketError, achievability_config, evaluate
from .config import ConfigError, SystemConfig, load_config, parse_config
from .harness import (MODELS, export, reproduce_figure, required_ebn0_achievable_cfg,
                      required_ebn0_practical, run_trials, to_csv)

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME, EXIT_UNREACHABLE = 0, 1, 2, 3


def _config(args):
    cfg = load_config(args.config) if args.config else SystemConfig()
    if args.set:
        cfg = parse_config("\n".join(args.set), base=cfg)
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.trials is not None:
        over["trials"] = args.trials
    return cfg.replace(**over) if over else cfg


def _write_rows(path, header, rows):
    fh = open(path, "w", encoding="utf-8", newline="") if path else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    finally:
        if path:
            fh.close()


def cmd_simulate(args):
    cfg = _config(args)
    if args.required:
        out = required_ebn0_practical(cfg, model=args.model, start=args.start, workers=args.workers)
        print(f"required E/N0 = {out.ebn0_db:.2f} dB (bracket {out.bracket[0]:.2f}, {out.bracket[1]:.2f})")
        rows = [(p.ebn0_db, p.met, p.trials, p.pupe, p.pupe_upper, p.mseaoa, p.mseaoa_se) for p in out.points]
        if args.out:
            _write_rows(args.out, ["ebn0_db", "met", "trials", "pupe", "pupe_upper", "mseaoa", "mseaoa_se"], rows)
        return EXIT_OK
    agg = run_trials(cfg, args.model, workers=args.workers).summary()
    fields = ["trials", "pupe", "p_md", "p_coll", "pupe_comm", "pupe_sens", "mseaoa", "pupe_se", "mseaoa_se"]
    for f in fields:
        print(f"{f:>10s} = {getattr(agg, f)}")
    if args.out:
        _write_rows(args.out, ["model", "ebn0_db", *fields, "seed", "config_hash"],
                    [[args.model, cfg.ebn0_db, *(getattr(agg, f) for f in fields), cfg.seed, cfg.digest()]])
    return EXIT_OK


def cmd_bound(args):
    cfg = _config(args)
    rep = evaluate(achievability_config(cfg, cfg.ebn0_db))
    print(f"E/N0 = {cfg.ebn0_db} dB: P_cons={rep.p_cons:.4g} P_coll={rep.p_coll:.4g} P_md={rep.p_md:.4g}"
          f" epsilon={rep.epsilon:.4g} Delta={rep.delta:.4g} (se {rep.delta_se:.2g})")
    if args.required:
        print(f"required E/N0 = {required_ebn0_achievable_cfg(cfg):.2f} dB")
    return EXIT_OK


def cmd_baseline(args):
    cfg = _config(args)
    if args.kind == "tin_practical":
        out = required_ebn0_practical(cfg, model="tin_practical", start=args.start, workers=args.workers)
        print(f"tin_practical: required E/N0 = {out.ebn0_db:.2f} dB")
        return EXIT_OK
    rep = required_ebn0_baseline(args.kind, cfg)
    at = evaluate_ideal_model(args.kind, cfg, cfg.ebn0_db, **rep.params)
    print(f"{args.kind} at {cfg.ebn0_db} dB: pupe={at.pupe:.4g} mseaoa={at.mseaoa:.4g} {at.reason}".rstrip())
    if not rep.feasible or math.isinf(rep.ebn0_db):
        print(f"{args.kind}: targets unreachable ({rep.reason})")
        return EXIT_UNREACHABLE
    print(f"{args.kind}: required E/N0 = {rep.ebn0_db:.2f} dB params={rep.params}")
    return EXIT_OK


def cmd_sweep(args):
    seed = args.seed if args.seed is not None else 0
    res = reproduce_figure(args.figure, args.scale, seed=seed, trials=args.trials, workers=args.workers)
    if args.out:
        export(res, args.out, "csv")
    else:
        sys.stdout.write(to_csv(res))
    if args.plotdata:
        export(res, args.plotdata, "plotdata")
    return EXIT_OK


def cmd_selftest(args):
    failed = selftest.run(args.seed or 0, sys.stdout)
    return EXIT_OK if not failed else EXIT_RUNTIME


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value config file")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
    common.add_argument("--seed", type=int)
    common.add_argument("--trials", type=int)
    common.add_argument("--out", help="output CSV path")
    common.add_argument("--workers", type=int, default=1)
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="unisac", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("simulate", parents=[common], help="Monte Carlo run of one configuration")
    s.add_argument("--model", choices=MODELS[:2], default="unisac_practical")
    s.add_argument("--required", action="store_true", help="search the required E/N0 instead")
    s.add_argument("--start", type=float, default=15.0)
    s.set_defaults(func=cmd_simulate)
    b = sub.add_parser("bound", parents=[common], help="evaluate the achievable bound")
    b.add_argument("--required", action="store_true")
    b.set_defaults(func=cmd_bound)
    bl = sub.add_parser("baseline", parents=[common], help="benchmark model")
    bl.add_argument("--kind", choices=KINDS, required=True)
    bl.add_argument("--start", type=float, default=15.0)
    bl.set_defaults(func=cmd_baseline)
    sw = sub.add_parser("sweep", parents=[common], help="figure reproduction sweep")
    sw.add_argument("--figure", choices=("fig3", "fig4", "fig5", "fig6"), required=True)
    sw.add_argument("--scale", choices=("desk", "full"), default="desk")
    sw.add_argument("--plotdata", help="also write gnuplot blocks here")
    sw.set_defaults(func=cmd_sweep)
    st = sub.add_parser("selftest", parents=[common], help="quick invariant checks")
    st.set_defaults(func=cmd_selftest)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except BracketError as exc:
        print(f"unreachable: {exc}", file=sys.stderr)
        return EXIT_UNREACHABLE
    except Exception as exc:  # noqa: BLE001 - mapped to the runtime exit code
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
