"""Batch runner: instance x config x seed grids, JSON/CSV output, plot data."""
from __future__ import annotations

import argparse
import csv
import itertools
import json
import math
import os
import sys
import tempfile
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
from scipy import stats

from .grid import HEADING_NAMES, AgentModel, GridMap, KinState, load_map, parse_scen, random_map
from .planner import PlannerConfig
from .simulation import ProblemInstance, dependency_stats, random_instance, run_lifelong, run_oneshot
from .validation import validate

CSV_COLUMNS = ["map", "model", "n_agents", "w", "h", "R", "C", "m", "priority", "seed",
               "success", "soc", "makespan", "throughput", "mean_epoch_ms", "mean_deps"]
PLOT_METRICS = ["success", "soc", "makespan", "throughput", "mean_epoch_ms", "mean_deps"]


def _int_list(text: str) -> list[int]:
    out = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return out


def _c_value(text: str) -> float:
    t = text.strip().lower()
    if t in ("inf", "infinity", "∞"):
        return math.inf
    return int(t)


def _str_list(text: str) -> list[str]:
    return [p.strip() for p in text.split(",") if p.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mdpibt", description=__doc__)
    p.add_argument("--mode", choices=["oneshot", "lifelong"], default="oneshot")
    p.add_argument("--map", help="MovingAI .map file, or random:W:H:BLOCKED[:SEED]")
    p.add_argument("--scen", help="MovingAI .scen file (first n agents are used)")
    p.add_argument("--gen", choices=["random"], default="random",
                   help="instance generator when no --scen is given")
    p.add_argument("--model", default="pm", help="pm, pmla:<k> or rm")
    p.add_argument("--large-agents", default=None, metavar="K:COUNT",
                   help="make COUNT agents PMLA(K), the rest use --model")
    p.add_argument("--agents", default="10", help="comma list of agent counts")
    p.add_argument("--w", default="1", help="comma list")
    p.add_argument("--h", default="1", help="comma list; 'w' means h equal to w")
    p.add_argument("--R", default="100", help="comma list")
    p.add_argument("--C", default="1", help="comma list; 'inf' allowed")
    p.add_argument("--m", default="pibt", help="comma list of pibt/epibt")
    p.add_argument("--priority", default="let", help="comma list of let/sd")
    p.add_argument("--preset", choices=["pibt", "epibt"])
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--seeds", default=None, help="comma list or range, e.g. 0-9")
    p.add_argument("--T", type=int, default=1000, help="lifelong horizon")
    p.add_argument("--Tmax", type=int, default=1000, help="one-shot timestep limit")
    p.add_argument("--epoch-budget-ms", type=float, default=None)
    p.add_argument("--out", default="results")
    p.add_argument("--trace", action="store_true", help="write per-pop trace JSONL per cell")
    p.add_argument("--plot-data", action="store_true", help="emit plot CSVs after the run")
    p.add_argument("--from-csv", default=None, help="only emit plot data from this CSV")
    p.add_argument("--rm-heading", choices=list(HEADING_NAMES), default="E")
    p.add_argument("--let-order", choices=["longest", "shortest"], default="longest")
    p.add_argument("--queue", choices=["stack", "priority"], default="stack")
    return p


def _configs(args, parser) -> list[PlannerConfig]:
    try:
        ws = _int_list(args.w)
        hs = _str_list(args.h)
        Rs = _int_list(args.R)
        Cs = [_c_value(c) for c in _str_list(args.C)]
    except ValueError as exc:
        parser.error(f"bad numeric list: {exc}")
    ms, prios = _str_list(args.m), _str_list(args.priority)
    out = []
    for w, h, R, C, m, pr in itertools.product(ws, hs, Rs, Cs, ms, prios):
        h_val = w if h == "w" else int(h)
        kw = dict(w=w, h=h_val, R=R, C=C, m=m, priority=pr, queue=args.queue,
                  let_longest_first=args.let_order == "longest")
        try:
            cfg = PlannerConfig.preset(args.preset, **kw) if args.preset else PlannerConfig(**kw)
        except ValueError as exc:
            parser.error(str(exc))
        if cfg.as_dict() not in [c.as_dict() for c in out]:
            out.append(cfg)
    return out


def _load_grid(spec: str) -> GridMap:
    if spec.startswith("random:"):
        parts = spec.split(":")[1:]
        w, h, blocked = int(parts[0]), int(parts[1]), int(parts[2])
        seed = int(parts[3]) if len(parts) > 3 else 0
        return random_map(w, h, blocked, seed, name=f"random-{w}-{h}-{blocked}-{seed}")
    return load_map(spec)


def _models(args, n: int) -> list[AgentModel]:
    base = AgentModel.parse(args.model)
    models = [base] * n
    if args.large_agents:
        k, count = (int(v) for v in args.large_agents.split(":"))
        for i in range(min(count, n)):
            models[i] = AgentModel.pmla(k)
    return models


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", text=True)
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def run_cell(job: dict) -> dict:
    """Run one (instance, config, seed) cell; returns the CSV row plus bookkeeping."""
    grid = _load_grid(job["map"])
    cfg = PlannerConfig(**job["config"])
    n, seed = job["n_agents"], job["seed"]
    heading = HEADING_NAMES.index(job["rm_heading"])
    models = job["models"]
    mode = job["mode"]
    if job["scen"]:
        pairs = parse_scen(Path(job["scen"]).read_text(), grid, models[0], heading)
        if len(pairs) < n:
            raise ValueError(f"scenario has {len(pairs)} agents, {n} requested")
        pairs = pairs[:n]
        inst = ProblemInstance(grid, models, [s for s, _ in pairs], [g for _, g in pairs],
                               mode=mode, seed=seed, T_max=job["Tmax"],
                               epoch_budget_ms=job["budget"])
    else:
        inst = random_instance(grid, n, seed, models, mode=mode, T_max=job["Tmax"],
                               heading=heading, epoch_budget_ms=job["budget"])
    trace = [] if job["trace"] else None
    if mode == "oneshot":
        res = run_oneshot(inst, cfg, trace=trace)
    else:
        res = run_lifelong(inst, cfg, job["T"], trace=trace)
    conflict = validate(res.kin_paths(), inst.models, grid)
    payload = res.to_json()
    payload["validator"] = "ok" if conflict is None else str(conflict)
    out = Path(job["out"])
    _atomic_write(out / "cells" / f"{job['label']}.json", json.dumps(payload, sort_keys=True))
    if trace is not None:
        _atomic_write(out / "traces" / f"{job['label']}.jsonl",
                      "".join(json.dumps(e) + "\n" for e in trace))
    c = job["config"]["C"]
    row = {
        "map": grid.name, "model": job["model_label"], "n_agents": n,
        "w": cfg.w, "h": cfg.h, "R": cfg.R, "C": "inf" if c == math.inf else int(c),
        "m": cfg.m, "priority": cfg.priority, "seed": seed,
        "success": int(res.success), "soc": "" if res.soc is None else res.soc,
        "makespan": "" if res.makespan is None else res.makespan,
        "throughput": "" if res.throughput is None else f"{res.throughput:.6f}",
        "mean_epoch_ms": f"{np.mean(res.epoch_runtimes_ms):.3f}" if res.epoch_runtimes_ms else "",
        "mean_deps": f"{dependency_stats(res.dep_samples)['mean']:.6f}",
    }
    return {"row": row, "fault": res.fault or (None if conflict is None else str(conflict))}


def _config_label(row: dict) -> str:
    return (f"{row['model']}|w{row['w']}|h{row['h']}|R{row['R']}|C{row['C']}"
            f"|{row['m']}|{row['priority']}")


def emit_plot_data(csv_path, out_dir) -> list[Path]:
    """Per-metric CSVs with mean and 95% t-interval per (config, n_agents)."""
    with open(csv_path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{csv_path} has no rows")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for metric in PLOT_METRICS:
        groups: dict[tuple, list[float]] = defaultdict(list)
        for r in rows:
            if r.get(metric, "") == "":
                continue
            groups[(_config_label(r), int(r["n_agents"]))].append(float(r[metric]))
        lines = [["n_agents", "mean", "ci_low", "ci_high", "config_label"]]
        for (label, n), vals in sorted(groups.items(), key=lambda kv: (kv[0][0], kv[0][1])):
            mean = float(np.mean(vals))
            if len(vals) > 1 and np.std(vals) > 0:
                half = stats.t.ppf(0.975, len(vals) - 1) * stats.sem(vals)
            else:
                half = 0.0
            lines.append([n, f"{mean:.6f}", f"{mean - half:.6f}", f"{mean + half:.6f}", label])
        path = out_dir / f"plot_{metric}.csv"
        with open(path, "w", newline="") as fh:
            csv.writer(fh).writerows(lines)
        written.append(path)
    return written


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _main(args, parser)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2


def _main(args, parser) -> int:
    out = Path(args.out)
    if args.from_csv:
        try:
            for p in emit_plot_data(args.from_csv, out):
                print(p)
        except (OSError, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        return 0
    if not args.map:
        parser.error("--map is required")
    configs = _configs(args, parser)
    try:
        counts = _int_list(args.agents)
        if args.seeds is not None:
            seeds = _int_list(args.seeds)
        else:
            seeds = [args.seed if args.seed is not None else 0]
        AgentModel.parse(args.model)
        grid_name = _load_grid(args.map).name
    except (ValueError, OSError) as exc:
        parser.error(str(exc))
    jobs = []
    for n, cfg, seed in itertools.product(counts, configs, seeds):
        models = _models(args, n)
        model_label = args.model + (f"+pmla:{args.large_agents}" if args.large_agents else "")
        label = f"{grid_name}_{model_label.replace(':', '')}_n{n}_{cfg.label()}_s{seed}"
        jobs.append({
            "map": args.map, "scen": args.scen, "mode": args.mode, "n_agents": n,
            "seed": seed, "models": models, "model_label": model_label,
            "config": {**cfg.as_dict(), "C": cfg.C, "let_longest_first": cfg.let_longest_first},
            "T": args.T, "Tmax": args.Tmax, "budget": args.epoch_budget_ms,
            "trace": args.trace, "rm_heading": args.rm_heading, "out": str(out), "label": label,
        })
    workers = max(1, int(os.environ.get("MDPIBT_THREADS", "1")))
    results = []
    if workers == 1 or len(jobs) == 1:
        for job in jobs:
            results.append(_safe_run(job))
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            results = list(pool.map(_safe_run, jobs))
    rows = [r["row"] for r in results if r["row"] is not None]
    faults = [r["fault"] for r in results if r["fault"]]
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "results.csv"
    with open(csv_path, "w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        wr.writeheader()
        wr.writerows(rows)
    for f in faults:
        print(f"fault: {f}", file=sys.stderr)
    if args.plot_data and rows:
        emit_plot_data(csv_path, out)
    print(f"{len(rows)} cells written to {csv_path}")
    return 1 if faults else 0


def _safe_run(job: dict) -> dict:
    try:
        return run_cell(job)
    except Exception as exc:  # recorded per cell, never aborts the grid
        return {"row": None, "fault": f"{job['label']}: {type(exc).__name__}: {exc}"}


if __name__ == "__main__":
    sys.exit(main())
