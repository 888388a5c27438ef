"""Command-line entry points: simulate, grid, verify, staleness-hist.

Exit codes: 0 ok, 1 check/run failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from . import verify as verify_mod
from .config import (ConfigError, GridSpec, derive_cell_seed, load_grid_spec,
                     load_run_config)
from .delaymodel import ScriptedDelaySource
from .metrics import write_run_csv
from .simulator import avg_staleness, run_simulation, staleness_histogram

USAGE_ERROR = 2
CHECK_FAILURE = 1


def _run_meta(cfg, run_id: str) -> dict:
    return {"run_id": run_id, "variant": cfg.variant, "rho": cfg.rho,
            "workers": cfg.workers, "delay_variance": cfg.delay_variance,
            "seed": cfg.seed}


def _summary(res, run_id: str) -> dict:
    return {
        "run_id": run_id,
        "variant": res.config.variant,
        "rho": res.config.rho,
        "workers": res.config.workers,
        "delay_variance": res.config.delay_variance,
        "seed": res.config.seed,
        "updates": len(res.records),
        "avg_staleness": avg_staleness(res),
        "max_staleness": res.max_staleness,
        "final_loss": res.final_loss,
        "accuracy": res.accuracy,
        "mu_hat": res.mu.mu_hat,
        "runtime_s": res.runtime_s,
    }


def _simulate_once(cfg, out_base: str, run_id: str, delays: str | None = None) -> dict:
    source = ScriptedDelaySource.from_file(delays) if delays else None
    res = run_simulation(cfg, delay_source=source)
    tmp = out_base + ".csv.tmp"
    write_run_csv(tmp, _run_meta(cfg, run_id), res.records)
    os.replace(tmp, out_base + ".csv")
    summary = _summary(res, run_id)
    with open(out_base + ".json", "w", encoding="utf-8") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
        f.write("\n")
    return summary


def cmd_simulate(args) -> int:
    cfg = load_run_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    out_base = args.out or cfg.out or "run"
    if out_base.endswith(".csv"):
        out_base = out_base[:-4]
    summary = _simulate_once(cfg, out_base, run_id=os.path.basename(out_base),
                             delays=args.delays)
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def _grid_cell_job(payload):
    spec_path, out_dir, cell_idx, rep = payload
    spec = load_grid_spec(spec_path)
    cfg = spec.cells()[cell_idx]
    seed = derive_cell_seed(spec.base.seed, cell_idx, rep)
    cfg = replace(cfg, seed=seed)
    run_id = f"cell{cell_idx:04d}-rep{rep}"
    return cell_idx, rep, _simulate_once(cfg, os.path.join(out_dir, run_id), run_id)


def cmd_grid(args) -> int:
    spec = load_grid_spec(args.config)
    out_dir = args.out or "grid-out"
    os.makedirs(out_dir, exist_ok=True)
    cells = spec.cells()
    jobs = [(args.config, out_dir, ci, rep)
            for ci in range(len(cells)) for rep in range(spec.seeds_per_cell)]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_grid_cell_job, jobs))
    else:
        results = [_grid_cell_job(j) for j in jobs]
    results.sort(key=lambda r: (r[0], r[1]))

    per_cell: dict[int, list[dict]] = {}
    for ci, _rep, summary in results:
        per_cell.setdefault(ci, []).append(summary)
    report = []
    for ci, cfg in enumerate(cells):
        summaries = per_cell[ci]
        accs = [s["accuracy"] for s in summaries if s["accuracy"] is not None]
        losses = [s["final_loss"] for s in summaries]
        row = {
            "cell": ci, "variant": cfg.variant, "rho": cfg.rho, "lr": cfg.lr,
            "workers": cfg.workers, "delay_variance": cfg.delay_variance,
            "accuracy_mean": float(np.mean(accs)) if accs else None,
            "accuracy_std": float(np.std(accs)) if accs else None,
            "loss_mean": float(np.mean(losses)),
            "avg_staleness_mean": float(np.mean([s["avg_staleness"] for s in summaries])),
        }
        report.append(row)

    # best learning rate per variant: highest mean accuracy, ties -> smaller lr
    best: dict[str, dict] = {}
    for row in report:
        if row["accuracy_mean"] is None:
            continue
        cur = best.get(row["variant"])
        better = cur is None or row["accuracy_mean"] > cur["accuracy_mean"] + 1e-12 \
            or (abs(row["accuracy_mean"] - cur["accuracy_mean"]) <= 1e-12
                and row["lr"] < cur["lr"])
        if better:
            best[row["variant"]] = row
    out = {"cells": report, "best_by_variant": best}
    with open(os.path.join(out_dir, "grid-report.json"), "w", encoding="utf-8") as f:
        json.dump(out, f, indent=2, sort_keys=True)
        f.write("\n")
    print(json.dumps(out, indent=2, sort_keys=True))
    return 0


SUITES = ("contraction", "lemma1", "topk-oracle", "memory", "gradients",
          "appendix-b", "staleness", "determinism", "bounds", "all")


def _verify_suite(name: str, args) -> tuple[bool, str]:
    if name in ("contraction", "lemma1", "topk-oracle"):
        ok, n, msg = verify_mod.sparsifier_laws(n_vectors=args.vectors)
        return ok, msg or f"{n} (vector, k) cases"
    if name == "memory":
        ok1, msg1 = verify_mod.memory_conservation()
        ok2, msg2 = verify_mod.memory_identity_matches_asgd()
        return ok1 and ok2, msg1 or msg2
    if name == "gradients":
        ok, msg, worst = verify_mod.gradient_checks()
        return ok, msg or f"worst rel err {worst:.2e}"
    if name == "appendix-b":
        return verify_mod.appendix_b_sequence(args.delays)
    if name == "staleness":
        for n in (2, 3, 4):
            ok, msg = verify_mod.homogeneous_staleness(n)
            if not ok:
                return False, f"N={n}: {msg}"
        return verify_mod.single_worker_staleness()
    if name == "determinism":
        from .config import RunConfig
        cfg = RunConfig(objective="quadratic", dim=8, n_train=32, workers=4,
                        budget=150, batch_size=8, seed=11, sample_period=10)
        a = run_simulation(cfg)
        b = run_simulation(cfg)
        same = np.array_equal(a.final_x, b.final_x) and \
            [r.staleness for r in a.records] == [r.staleness for r in b.records]
        return same, "" if same else "two identical runs diverged"
    if name == "bounds":
        return verify_mod.bound_formula_checks()
    raise KeyError(name)


def cmd_verify(args) -> int:
    if args.suite not in SUITES:
        print(f"unknown suite {args.suite!r}; choose from {', '.join(SUITES)}",
              file=sys.stderr)
        return USAGE_ERROR
    names = [s for s in SUITES if s != "all"] if args.suite == "all" else [args.suite]
    results = {}
    failed = False
    for name in names:
        ok, detail = _verify_suite(name, args)
        results[name] = {"passed": bool(ok), "detail": detail}
        failed = failed or not ok
        print(f"[{'PASS' if ok else 'FAIL'}] {name}" + (f" ({detail})" if detail else ""))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            json.dump(results, f, indent=2, sort_keys=True)
            f.write("\n")
    return CHECK_FAILURE if failed else 0


def cmd_staleness_hist(args) -> int:
    cfg = load_run_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    res = run_simulation(cfg)
    hist = staleness_histogram(res)
    out = args.out or "staleness-hist.csv"
    tmp = out + ".tmp"
    with open(tmp, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["staleness", "count"])
        for tau in sorted(hist):
            w.writerow([tau, hist[tau]])
    os.replace(tmp, out)
    print(json.dumps({"avg_staleness": avg_staleness(res),
                      "max_staleness": res.max_staleness,
                      "updates": len(res.records)}, indent=2, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="asgdsim",
                                description="sparsified asynchronous SGD simulator")
    sub = p.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run one simulation from a config file")
    sim.add_argument("--config", required=True)
    sim.add_argument("--out", default="")
    sim.add_argument("--seed", type=int, default=None)
    sim.add_argument("--delays", default=None,
                     help="scripted delay fixture (worker_id delay per line)")
    sim.set_defaults(func=cmd_simulate)

    grid = sub.add_parser("grid", help="run a grid search from a grid spec file")
    grid.add_argument("--config", required=True)
    grid.add_argument("--out", default="")
    grid.add_argument("--jobs", type=int, default=1)
    grid.set_defaults(func=cmd_grid)

    ver = sub.add_parser("verify", help="run a property/golden suite")
    ver.add_argument("suite", help=f"one of: {', '.join(SUITES)}")
    ver.add_argument("--out", default="")
    ver.add_argument("--vectors", type=int, default=2000,
                     help="random vectors per (d, k) pair")
    ver.add_argument("--delays", default=None)
    ver.set_defaults(func=cmd_verify)

    hist = sub.add_parser("staleness-hist", help="emit a staleness histogram CSV")
    hist.add_argument("--config", required=True)
    hist.add_argument("--out", default="")
    hist.add_argument("--seed", type=int, default=None)
    hist.set_defaults(func=cmd_staleness_hist)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return USAGE_ERROR if e.code not in (0, None) else 0
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return USAGE_ERROR
    except Exception as e:  # noqa: BLE001 - surfaced as a run failure
        print(f"run failed: {e}", file=sys.stderr)
        return CHECK_FAILURE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
