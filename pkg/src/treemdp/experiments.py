"""Experiment drivers: truncation-gap decay on a line, and solver comparison."""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass
from statistics import median

import numpy as np

from .chain import node_marginal
from .llps import solve
from .model import (
    ProblemInstance,
    draw_instance,
    line_tree,
    random_profile,
    uniform_instance,
)
from .oracle import decay_gap, exact_total_reward, exhaustive_search
from .rng import Xoshiro256

DECAY_HEADER = ("run", "seed", "k", "gap")
CASESTUDY_HEADER = ("algorithm", "k", "reward", "gap", "time_s")
GAP_FLOOR = 1e-14


@dataclass(frozen=True)
class DecayRunRecord:
    run: int
    seed: int
    k: int
    gap: float


@dataclass(frozen=True)
class DecayResult:
    records: list
    medians: dict  # k -> median gap over runs
    slopes: dict  # run -> least-squares slope of log(gap) on k, or None


def log_gap_slope(ks, gaps, floor=GAP_FLOOR):
    """Least-squares slope of ``log(max(gap, floor))`` against ``k``.

    None when every gap is below the floor: the fit would only see the floor.
    """
    gaps = np.asarray(gaps, dtype=float)
    if len(gaps) < 2 or np.all(gaps < floor):
        return None
    y = np.log(np.maximum(gaps, floor))
    return float(np.polyfit(np.asarray(ks, dtype=float), y, 1)[0])


def run_decay(nodes: int, runs: int, k_max: int, seed: int, uniform: bool = False) -> DecayResult:
    """Gap between the leaf's exact and truncated marginals on a random line.

    Run ``r`` seeds a generator with ``seed + r``, draws the instance from it
    (or uses the all-1/2 instance when ``uniform``), then draws one policy
    profile from the same stream and keeps it for every ``k``.
    """
    if nodes < 2:
        raise ValueError("need at least 2 nodes")
    if not 1 <= k_max <= nodes - 2:
        raise ValueError(f"k_max must be in 1..{nodes - 2}")
    tree = line_tree(nodes)
    leaf = nodes - 1
    ks = list(range(1, k_max + 1))
    records, slopes = [], {}
    for run in range(runs):
        run_seed = seed + run
        rng = Xoshiro256(run_seed)
        inst = uniform_instance(tree) if uniform else draw_instance(tree, rng)
        zeta = random_profile(nodes, rng)
        exact = node_marginal(inst, zeta, leaf)
        gaps = [decay_gap(inst, zeta, leaf, k, exact) for k in ks]
        records.extend(DecayRunRecord(run, run_seed, k, g) for k, g in zip(ks, gaps))
        slopes[run] = log_gap_slope(ks, gaps)
    medians = {k: median(r.gap for r in records if r.k == k) for k in ks}
    return DecayResult(records, medians, slopes)


def write_decay_csv(path, result: DecayResult):
    """One row per (run, k), then ``median`` rows per k and ``slope`` rows per run."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DECAY_HEADER)
        for r in result.records:
            w.writerow((r.run, r.seed, r.k, repr(r.gap)))
        for k, m in result.medians.items():
            w.writerow(("median", "", k, repr(m)))
        seeds = {r.run: r.seed for r in result.records}
        for run, slope in result.slopes.items():
            w.writerow((run, seeds[run], "slope", "" if slope is None else repr(slope)))


@dataclass(frozen=True)
class CaseStudyRow:
    algorithm: str
    k: int | None
    reward: float
    gap: float
    time_s: float
    profile: tuple = ()


def run_casestudy(inst: ProblemInstance, k_max: int) -> list:
    """Exhaustive optimum followed by LLPS for k = 1..k_max, scored on the
    exact reward."""
    start = time.perf_counter()
    best_profile, best = exhaustive_search(inst)
    rows = [CaseStudyRow("exhaustive", None, best, 0.0,
                         time.perf_counter() - start, best_profile)]
    for k in range(1, k_max + 1):
        sol = solve(inst, k)
        reward = exact_total_reward(inst, sol.profile)
        rows.append(CaseStudyRow("llps", k, reward, best - reward,
                                 sol.stats.wall_time, sol.profile))
    return rows


def write_casestudy_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CASESTUDY_HEADER)
        for r in rows:
            w.writerow((r.algorithm, "" if r.k is None else r.k, repr(r.reward),
                        repr(r.gap), f"{r.time_s:.6f}"))
