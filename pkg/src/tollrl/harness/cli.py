"""Command line entry point: ``tollrl {simulate,train,evaluate,compare}``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import replace

import numpy as np

from ..baselines import METHODS
from ..controller import ControlScenario, MetricWriter, run_training
from ..controller import evaluate as evaluate_cycle
from ..day_to_day import compute_baseline, init_state, run_to_convergence
from ..within_day import write_day_csv
from .config import ExperimentConfig, load_config, resolve_out_dir, save_config

log = logging.getLogger("tollrl")


def _experiment(args) -> tuple[ExperimentConfig, str]:
    if args.config:
        cfg = load_config(args.config)
        base = os.path.dirname(os.path.abspath(args.config))
    else:
        cfg = ExperimentConfig()
        base = "."
    if getattr(args, "scenario", None):
        cfg = replace(cfg, scenario=args.scenario)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    if args.out:
        cfg = replace(cfg, out_dir=args.out)
    cfg.validate(base)
    return cfg, base


def _prepare(cfg, base):
    net = cfg.build_network(base)
    return ControlScenario.prepare(net)


def _write_baseline(path, scenario: ControlScenario) -> None:
    b = scenario.baseline
    ids = [x.id for x in scenario.net.bottlenecks]
    doc = {"converged": scenario.converged, "days": scenario.snapshot.day,
           "total_wait": b.total_wait, "total_travel_time": b.total_travel_time,
           "congested": b.congested_ids(scenario.net),
           "wait_sum": {str(i): float(w) for i, w in zip(ids, b.w0_sum)}}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def cmd_simulate(args) -> int:
    cfg, base = _experiment(args)
    out = resolve_out_dir(cfg.out_dir)
    os.makedirs(out, exist_ok=True)
    net = cfg.build_network(base)
    with open(os.path.join(out, "simulate.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("day", "total_travel_time", "total_wait",
                    *(f"wait_{b.id}" for b in net.bottlenecks)))

        def on_day(day, rec):
            w.writerow([day, repr(rec.total_travel_time), repr(rec.total_wait),
                        *(repr(float(x)) for x in rec.wait.sum(axis=1))])

        res = run_to_convergence(init_state(net), net, eps=args.eps, max_days=args.max_days,
                                 on_day=on_day)
    state = res.state
    records = [state.last_record]
    write_day_csv(os.path.join(out, "final_day.csv"), records, net, first_day=state.day)
    b = compute_baseline(net, state)
    print(f"simulated {state.day} days (converged: {res.converged}); total wait {b.total_wait:.6g}; "
          f"congested bottlenecks {b.congested_ids(net)}")
    return 0


def _train_methods(cfg, scenario, out, methods):
    for name in ("metrics.csv", "tolls.csv"):
        path = os.path.join(out, name)
        if os.path.exists(path):
            os.remove(path)
    results = {}
    for m in methods:
        results[m] = run_training(scenario, cfg.control, cfg.learner, seed=cfg.seed, out_dir=out,
                                  method_factory=METHODS[m])
    return results


def cmd_train(args) -> int:
    cfg, base = _experiment(args)
    out = resolve_out_dir(cfg.out_dir)
    os.makedirs(out, exist_ok=True)
    save_config(cfg, os.path.join(out, "config.json"))
    scenario = _prepare(cfg, base)
    _write_baseline(os.path.join(out, "baseline.json"), scenario)
    results = _train_methods(cfg, scenario, out, cfg.methods)
    for m, res in results.items():
        print(f"{m}: greedy final wait per set {np.round(res.final_waits(), 4).tolist()} "
              f"(zero-toll {scenario.baseline.total_wait:.4g})")
    return 0


def cmd_evaluate(args) -> int:
    cfg, base = _experiment(args)
    out = resolve_out_dir(cfg.out_dir)
    os.makedirs(out, exist_ok=True)
    scenario = _prepare(cfg, base)
    method = METHODS[args.method](scenario, cfg.control, cfg.learner, cfg.seed)
    method.load(args.checkpoint)
    ev = evaluate_cycle(scenario, method, cfg.control)
    writer = MetricWriter(scenario.net, os.path.join(out, "evaluate.csv"),
                          os.path.join(out, "evaluate_tolls.csv"))
    writer.write(ev, method.name, "eval", 0, 0)
    print(f"{method.name}: final wait {ev.final_wait():.6g} "
          f"(zero-toll {scenario.baseline.total_wait:.6g})")
    return 0


def cmd_compare(args) -> int:
    cfg, base = _experiment(args)
    out = resolve_out_dir(cfg.out_dir)
    os.makedirs(out, exist_ok=True)
    save_config(cfg, os.path.join(out, "config.json"))
    scenario = _prepare(cfg, base)
    _write_baseline(os.path.join(out, "baseline.json"), scenario)
    results = _train_methods(cfg, scenario, out, list(METHODS))
    with open(os.path.join(out, "compare.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("method", "set", "final_wait", "zero_toll_wait", "ratio"))
        for m, res in results.items():
            for s, fw in enumerate(res.final_waits()):
                w.writerow((m, s, repr(float(fw)), repr(scenario.baseline.total_wait),
                            repr(float(fw / scenario.baseline.total_wait))))
    for m, res in results.items():
        print(f"{m}: median final/zero-toll wait "
              f"{np.median(res.final_waits()) / scenario.baseline.total_wait:.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tollrl", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="experiment config (JSON)")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out", help="output directory (relative paths honour "
                                      "$TOLLRL_OUTPUT_ROOT)")
        sp.add_argument("--scenario", help="built-in scenario name or scenario file")

    sp = sub.add_parser("simulate", help="zero-toll day-to-day run to convergence")
    common(sp)
    sp.add_argument("--max-days", type=int, default=2000)
    sp.add_argument("--eps", type=float, default=1e-3)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("train", help="train the configured methods")
    common(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("evaluate", help="one greedy cycle with a saved policy")
    common(sp)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--method", choices=sorted(METHODS), default="dp_ddpg")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("compare", help="train and evaluate all three methods")
    common(sp)
    sp.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, OSError) as exc:
        print(f"tollrl: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
