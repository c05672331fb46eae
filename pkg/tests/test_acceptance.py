"""Acceptance suite. Each test prints one PASS/FAIL verdict line to the terminal."""
import itertools
import math
import statistics
import time

import numpy as np
import pytest

from mdpibt.grid import AgentModel, GridMap, KinState, random_map, state_space
from mdpibt.planner import PlannerConfig, plan_epoch
from mdpibt.simulation import (commit_and_carry, make_agents, random_instance, run_lifelong,
                               run_oneshot)
from mdpibt.validation import joint_optimal_oracle, validate

from reference_pibt import ReferencePIBT
from scenarios import (A, corridor_instance, dead_end_instance, reduced_corridor_instance,
                       walkthrough_config, walkthrough_instance)


@pytest.fixture
def verdict(capsys):
    def emit(name, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
        assert ok, detail
    return emit


# --- randomized run matrix shared by the collision, cap and carryover checks ---

MATRIX_MODELS = ["pm", "pmla:2", "pmla:3", "pmla:4", "rm"]
MATRIX_COMBOS = list(itertools.product(MATRIX_MODELS, [1, 2, 3, 4], [1, 2, math.inf],
                                       ["pibt", "epibt"], [0, 1, 100]))
MATRIX_CELLS = 500
MATRIX_HORIZON = 20


def matrix_cell(i):
    kind, w, C, m, R = MATRIX_COMBOS[i % len(MATRIX_COMBOS)]
    rng = np.random.default_rng(50_000 + i)
    side = int(rng.integers(16, 33))
    g = random_map(side, side, int(side * side * rng.uniform(0.0, 0.25)), seed=i)
    model = AgentModel.parse(kind)
    h = int(rng.integers(1, w + 1))
    density = float(rng.uniform(0.02, 0.5))
    n = max(1, int(g.n_passable * density / model.size ** 2))
    mode = "lifelong" if i % 3 == 0 else "oneshot"
    while True:
        try:
            inst = random_instance(g, n, seed=i, models=model, mode=mode,
                                   T_max=MATRIX_HORIZON)
            break
        except ValueError:
            n = max(1, int(n * 0.85))
    cfg = PlannerConfig(w=w, h=h, R=R, C=C, m=m, priority=("let", "sd")[i % 2])
    carry = {"checked": 0, "violations": 0}

    def check_carry(driver, _committed):
        # the carried suffix plus waits is the next epoch's initial safe-path set
        if cfg.w > cfg.h:
            agents = driver.agents
            carry["checked"] += 1
            states = [a.space.to_states(a.tau) for a in agents]
            if validate(states, inst.models, g) is not None:
                carry["violations"] += 1

    if mode == "lifelong":
        res = run_lifelong(inst, cfg, MATRIX_HORIZON, on_epoch=check_carry)
    else:
        res = run_oneshot(inst, cfg, on_epoch=check_carry)
    conflict = validate(res.kin_paths(), inst.models, g)
    return {
        "i": i, "kind": kind, "w": w, "h": h, "C": C, "m": m, "R": R, "mode": mode,
        "n": n, "density": n * model.size ** 2 / g.n_passable, "side": side,
        "status": res.status, "conflict": None if conflict is None else str(conflict),
        "max_sample": max(res.dep_samples, default=0), "samples": len(res.dep_samples),
        "carry": carry,
    }


@pytest.fixture(scope="module")
def matrix():
    t0 = time.perf_counter()
    cells = [matrix_cell(i) for i in range(MATRIX_CELLS)]
    return cells, time.perf_counter() - t0


def test_collision_free_across_matrix(matrix, verdict):
    cells, elapsed = matrix
    bad = [c for c in cells if c["conflict"] or c["status"] == "fault"]
    spans = {
        "models": {c["kind"] for c in cells} == set(MATRIX_MODELS),
        "w": {c["w"] for c in cells} == {1, 2, 3, 4},
        "C": {c["C"] for c in cells} == {1, 2, math.inf},
        "m": {c["m"] for c in cells} == {"pibt", "epibt"},
        "R": {c["R"] for c in cells} == {0, 1, 100},
        "sides": min(c["side"] for c in cells) >= 16 and max(c["side"] for c in cells) <= 32,
    }
    max_density = max(c["density"] for c in cells)
    ok = (len(cells) >= 500 and not bad and all(spans.values()) and max_density <= 0.5
          and elapsed < 300)
    detail = (f"{len(cells)} cells, {len(bad)} with conflicts or faults, "
              f"agent density up to {max_density:.2f}, {elapsed:.0f}s (limit 300s)")
    if bad:
        detail += f"; first: {bad[0]}"
    verdict("collision-free matrix", ok, detail)


def test_collider_cap_one(matrix, verdict):
    cells, _ = matrix
    capped = [c for c in cells if c["C"] == 1]
    accepts = sum(c["samples"] for c in capped)
    worst = max(c["max_sample"] for c in capped)
    verdict("cap C=1 admits at most one collider", worst <= 1 and accepts > 0,
            f"{accepts} acceptances over {len(capped)} cells, largest colliding set {worst}")


def test_carryover_safe_paths(matrix, verdict):
    cells, _ = matrix
    lifelong = [c for c in cells if c["mode"] == "lifelong" and c["w"] > c["h"]]
    checked = sum(c["carry"]["checked"] for c in lifelong)
    violations = sum(c["carry"]["violations"] for c in lifelong)
    verdict("carryover safe paths validator-clean", violations == 0 and checked > 0,
            f"{checked} epoch starts over {len(lifelong)} lifelong cells with w>h, "
            f"{violations} violations")


# --- state-space size ---

def test_vertex_count_anchor(verdict):
    g = GridMap(64, 64, np.zeros((64, 64), dtype=bool))
    pm = state_space(g, AgentModel.pm()).n
    large = state_space(g, AgentModel.pmla(5)).n
    verdict("64x64 state counts", (pm, large) == (4096, 3600),
            f"PM {pm} (want 4096), PMLA(5) {large} (want 3600)")


# --- equivalence with plain PIBT ---

def reference_instance(seed, n):
    g = random_map(16, 16, 26, seed=seed)
    inst = random_instance(g, n, seed=seed, T_max=300)
    return g, inst


def test_pibt_preset_equivalence(verdict):
    sparse_match, sparse_total, dense_total, dense_ok = 0, 0, 0, 0
    mismatches = []
    seed = 0
    while (sparse_total < 50 or dense_total < 50) and seed < 2000:
        seed += 1
        n = 20 if sparse_total < 50 else 90
        g, inst = reference_instance(seed, n)
        ref = ReferencePIBT(g.blocked, [(s.x, s.y) for s in inst.starts], inst.goals)
        history, ref_success = ref.run(inst.T_max)
        res = run_oneshot(inst, PlannerConfig.preset("pibt"))
        mine = [[(s.x, s.y) for s in p] for p in res.kin_paths()]
        ref_paths = [[step[i] for step in history] for i in range(n)]
        if n == 20:
            if ref.backtracked:
                continue
            sparse_total += 1
            if mine == ref_paths:
                sparse_match += 1
            else:
                mismatches.append(seed)
        else:
            dense_total += 1
            clean = (validate(mine, AgentModel.pm(), g) is None
                     and validate(ref_paths, AgentModel.pm(), g) is None)
            if clean and res.success == ref_success:
                dense_ok += 1
            else:
                mismatches.append(seed)
    ok = sparse_total >= 50 and dense_total >= 50 and sparse_match == sparse_total \
        and dense_ok == dense_total
    verdict("PIBT preset equals plain PIBT", ok,
            f"sparse {sparse_match}/{sparse_total} identical, dense {dense_ok}/{dense_total} "
            f"clean with equal success; mismatched seeds {mismatches[:5]}")


# --- large agents need a collider cap above one ---

def test_large_agent_needs_cap_above_one(verdict):
    capped_fail, uncapped_ok = 0, 0
    for seed in range(10):
        inst = corridor_instance(seed, T_max=100)
        one = run_oneshot(inst, PlannerConfig(w=3, h=1, R=100, C=1, m="epibt"))
        inf = run_oneshot(inst, PlannerConfig(w=3, h=1, R=100, C=math.inf, m="epibt"))
        capped_fail += not one.success
        uncapped_ok += inf.success and validate(inf.kin_paths(), inst.models, inst.grid) is None
    red = reduced_corridor_instance()
    oracle = joint_optimal_oracle(red.grid, red.models, red.starts, red.goals)
    ok = capped_fail == 10 and uncapped_ok == 10 and math.isfinite(oracle)
    verdict("large agent: C=1 fails, C=inf succeeds", ok,
            f"C=1 failed {capped_fail}/10, C=inf solved {uncapped_ok}/10, "
            f"reduced-variant optimal SOC {oracle}")


# --- tiny instances against the joint-space optimum ---

ORACLE_CONFIGS = [
    PlannerConfig.preset("pibt"),
    PlannerConfig(w=2, h=1, C=math.inf, m="epibt"),
    PlannerConfig(w=3, h=1, C=2, m="pibt"),
    PlannerConfig(w=2, h=2, C=1, m="epibt", priority="sd"),
]


def test_tiny_instances_against_oracle(verdict):
    checked, worst, problems = 0, 0.0, []
    seed = 0
    while checked < 20 and seed < 500:
        seed += 1
        g = random_map(4, 4, seed % 4, seed=seed)
        inst = random_instance(g, 2, seed=seed, T_max=50)
        opt = joint_optimal_oracle(g, inst.models, inst.starts, inst.goals)
        if not math.isfinite(opt):
            continue
        solved = [run_oneshot(inst, cfg) for cfg in ORACLE_CONFIGS]
        solved = [r for r in solved if r.success]
        if not solved:
            problems.append((seed, "no config solved"))
            continue
        checked += 1
        for r in solved:
            ratio = r.soc / opt if opt else (1.0 if r.soc == 0 else math.inf)
            worst = max(worst, ratio)
            if r.soc < opt or ratio > 3.0:
                problems.append((seed, r.config, r.soc, opt))
    ok = checked == 20 and not problems
    verdict("tiny instances vs joint optimum", ok,
            f"{checked} instances, worst SOC ratio {worst:.2f} (limit 3.0), problems {problems[:3]}")


# --- lifelong throughput stability ---

def test_lifelong_throughput_stable(verdict):
    g = random_map(32, 32, 205, seed=0, name="random-32-32-20")
    cfg = PlannerConfig.preset("pibt", priority="sd")
    values, slowest, backups = [], 0.0, 0
    for seed in range(10):
        inst = random_instance(g, 300, seed=seed, mode="lifelong", epoch_budget_ms=1000)
        res = run_lifelong(inst, cfg, 1000, keep_paths=False)
        values.append(res.throughput)
        slowest = max(slowest, max(res.epoch_runtimes_ms))
        backups += res.backup_epochs
    mean = statistics.mean(values)
    cv = statistics.stdev(values) / mean if mean else math.inf
    ok = all(math.isfinite(v) and v > 0 for v in values) and cv < 0.15 and slowest < 1000 \
        and backups == 0
    verdict("lifelong throughput stable", ok,
            f"throughput mean {mean:.3f}, CV {cv:.3f} (limit 0.15), slowest epoch "
            f"{slowest:.1f}ms (limit 1000ms), {backups} fallback epochs")


# --- ten thousand agents ---

def test_ten_thousand_agents_epoch_time(verdict):
    side = 256
    g = random_map(side, side, int(side * side * 0.18), seed=0)
    blocked = float(np.asarray(g.blocked).mean())
    inst = random_instance(g, 10_000, seed=0)
    agents = make_agents(inst, 1)
    cfg = PlannerConfig.preset("pibt")
    times = []
    for _ in range(5):
        out = plan_epoch(agents, cfg)
        times.append(out.runtime_s)
        commit_and_carry(agents, cfg)
    med = statistics.median(times)
    verdict("10k agents per epoch", med <= 2.0 and blocked <= 0.2,
            f"median {med:.3f}s over 5 epochs (limit 2s), obstacles {blocked:.1%}")


# --- dependency counting ---

def test_dependency_counts(verdict):
    inst = walkthrough_instance()
    agents = make_agents(inst, 3)
    trace = []
    plan_epoch(agents, walkthrough_config(), trace=trace)
    first_a = next(ev for ev in trace if ev["agent"] == A and ev["outcome"] == "accept")
    samples = set()
    for seed in range(10):
        g = random_map(20, 20, 60, seed=seed)
        for mode in ("oneshot", "lifelong"):
            inst = random_instance(g, 120, seed=seed, mode=mode, T_max=40)
            cfg = PlannerConfig.preset("pibt")
            res = (run_oneshot(inst, cfg) if mode == "oneshot"
                   else run_lifelong(inst, cfg, 40))
            samples.update(res.dep_samples)
    ok = first_a["deps"] == 3 and samples <= {0, 1}
    verdict("dependency counts", ok,
            f"scripted scene: A recorded {first_a['deps']} (want 3); "
            f"PIBT preset sample values {sorted(samples)}")


# --- bounded replanning in a dead end ---

def test_dead_end_terminates(verdict):
    inst = dead_end_instance(6, T_max=30)
    runs, faults, dirty = 0, 0, 0
    for C, m in itertools.product([1, 2, math.inf], ["pibt", "epibt"]):
        cfg = PlannerConfig(w=2, h=1, R=2, C=C, m=m)
        res = run_oneshot(inst, cfg, check_invariants=True)
        runs += 1
        faults += res.status == "fault"
        dirty += validate(res.kin_paths(), inst.models, inst.grid) is not None
    verdict("dead-end corridor terminates", faults == 0 and dirty == 0,
            f"{runs} configs (N=6, w=2, R=2), {faults} budget faults, {dirty} unclean paths")
