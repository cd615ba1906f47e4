"""Command line entry point: ``pushcost <command> [flags]``."""
from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import harness as H
from .config import VARIANT_ORDER, VARIANTS, load_config
from .envs import ConfigError


def _base_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default="friction",
                        help="YAML config path, or the bundled 'friction' / 'mass'")
    common.add_argument("--seed", type=int, action="append",
                        help="run seed (repeatable); defaults to the config's seed list")
    common.add_argument("--variant", choices=sorted(VARIANTS), help="reward variant")
    common.add_argument("--episodes", type=int, help="evaluation episodes per seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--deterministic", action="store_true", help="argmax actions during evaluation")
    common.add_argument("--steps", type=int, help="override total training env steps")

    p = argparse.ArgumentParser(prog="pushcost", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("train", parents=[common], help="train one run per seed")
    sub.add_parser("eval", parents=[common], help="evaluate saved checkpoints")
    sub.add_parser("ablate", parents=[common], help="train and evaluate all four variants")
    oc = sub.add_parser("oracle-check", parents=[common], help="closed form vs quadrature sweep")
    oc.add_argument("--samples", type=int, default=200)
    ex = sub.add_parser("export", parents=[common], help="convert a metrics file to another format")
    ex.add_argument("input", help="runlog/eval file written by train or eval")
    ex.add_argument("--histogram", action="store_true", help="export the alpha histogram of an eval file")
    return p


def _run_config(args):
    rc = load_config(args.config)
    if args.variant:
        rc = rc.for_variant(args.variant)
    changes = {}
    if args.seed:
        changes["seeds"] = tuple(args.seed)
    if args.out:
        changes["out"] = args.out
    if args.episodes is not None:
        changes["eval_episodes"] = args.episodes
    return replace(rc, **changes) if changes else rc


def _eval_one(rc, seed, args):
    d = H.run_dir(rc, seed)
    ck = d / "checkpoint.bin"
    if not ck.exists():
        raise FileNotFoundError(f"no checkpoint at {ck}; run 'pushcost train' first")
    rep = H.evaluate(ck, rc.task, rc.eval_episodes, args.deterministic)
    path = H.export_metrics(rep, d / f"eval.{args.format}", args.format)
    return rep, path


def cmd_train(args) -> int:
    rc = _run_config(args)
    for s in rc.seeds:
        lg = H.train_seed(rc, s, args.steps)
        d = H.run_dir(rc, s)
        if args.format == "json":
            (d / "runlog.csv").unlink(missing_ok=True)
        else:
            (d / "runlog.json").unlink(missing_ok=True)
        status = "aborted: " + lg.aborted["error"] if lg.aborted else "ok"
        print(f"seed {s}: {len(lg.episodes)} episodes, final-50 success {lg.final_success_rate():.2f}, "
              f"{status} -> {d}")
    return 0


def cmd_eval(args) -> int:
    rc = _run_config(args)
    reports = []
    for s in rc.seeds:
        rep, path = _eval_one(rc, s, args)
        reports.append(rep)
        extra = ""
        if rep.mean_alpha is not None:
            extra = f", mean alpha {rep.mean_alpha:.3f}"
        if rep.heavy_fraction is not None:
            extra = f", heavy fraction {rep.heavy_fraction:.2f}"
        w = rep.mean_success_work
        print(f"seed {s}: success {rep.success_rate:.2f}, mean work "
              f"{'n/a' if w is None else f'{w:.2f} J'}{extra} -> {path}")
    if reports and reports[0].task == "variable_mass":
        h = H.heavy_choice_summary(reports)
        print(f"heavy box chosen in {h['heavy_count']} of {h['n_configurations']} configurations "
              f"(per-{h['subset_size']} subsets: {h['subset_counts']})")
    return 0


def cmd_ablate(args) -> int:
    rc = _run_config(args)
    variants = (args.variant,) if args.variant else VARIANT_ORDER

    def progress(v, s, lg, rep):
        print(f"{v} seed {s}: final-50 success {lg.final_success_rate():.2f}", flush=True)

    res = H.ablation_suite(rc, variants, args.steps, progress=progress)
    out = Path(rc.out) / rc.task.task_kind.value
    table = H.AblationTable(res.task, res.table())
    path = H.export_metrics(table, out / f"ablation.{args.format}", args.format)
    series = res.series()
    with open(out / "ablation_series.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        names = list(series)
        w.writerow(["env_steps"] + [f"{n}_{k}" for n in names for k in ("success_rate", "mean_success_energy")])
        for i, step in enumerate(res.env_steps):
            w.writerow([step] + [H._cell(series[n][k][i]) for n in names
                                 for k in ("success_rate", "mean_success_energy")])
    for row in table.rows:
        print(json.dumps(row))
    print(f"table -> {path}")
    return 0


def cmd_oracle(args) -> int:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    rows = H.oracle_sweep(args.samples, args.seed[0] if args.seed else 0)
    path = out / "oracle.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["X", "Y", "closed_form", "quadrature", "rel_err"])
        for r in rows:
            w.writerow([repr(v) for v in r])
    worst = max(r[4] for r in rows)
    ok = worst <= 1e-5
    print(f"{len(rows)} patches, max relative error {worst:.3e} ({'ok' if ok else 'FAIL'}) -> {path}")
    return 0 if ok else 1


def cmd_export(args) -> int:
    obj = H.import_metrics(args.input)
    if args.histogram:
        if not isinstance(obj, H.EvalReport):
            raise ConfigError("--histogram needs an eval file")
        obj = H.AlphaHistogram.of(obj)
    src = Path(args.input)
    out = Path(args.out) if args.out else src.with_suffix("." + args.format)
    if out.is_dir():
        out = out / (src.stem + ("_hist" if args.histogram else "") + "." + args.format)
    if out.resolve() == src.resolve():
        out = out.with_name(out.stem + "_export" + out.suffix)
    H.export_metrics(obj, out, args.format)
    print(out)
    return 0


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "ablate": cmd_ablate,
            "oracle-check": cmd_oracle, "export": cmd_export}


def main(argv=None) -> int:
    args = _base_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, FileNotFoundError, OSError, ValueError) as exc:
        print(f"pushcost: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
