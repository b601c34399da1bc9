"""Acceptance criteria 1-9. Each test records one PASS/FAIL line, shown in the
terminal summary, and then asserts it."""

import csv
import itertools
from functools import lru_cache

import numpy as np

from treemdp.chain import InducedChain, build_joint, node_marginal, stationary
from treemdp.cli import main
from treemdp.llps import backward_pass, solve
from treemdp.model import (
    case_study_tree,
    k_hop_path,
    line_tree,
    random_instance,
    random_certified_instance,
    random_profile,
)
from treemdp.oracle import (
    decay_gap,
    exact_total_reward,
    exhaustive_search,
    full_joint_marginals,
    closed_form_b,
    random_mu_valid_chain,
)
from treemdp.rng import Xoshiro256
from treemdp.truncate import approx_node_reward, approx_total_reward

from conftest import random_tree


def memo_approx(inst, k):
    """Approximated total reward with a per-call memo of node terms."""
    @lru_cache(maxsize=None)
    def node(i, zeta_path):
        return approx_node_reward(inst, i, k, zeta_path)

    paths = [k_hop_path(inst.tree, i, k) for i in range(inst.n)]

    def total(zeta, nodes=range(inst.n)):
        return sum(node(i, tuple(zeta[j] for j in paths[i])) for i in nodes)
    return total


def test_exact_recovery_at_full_depth(acceptance):
    worst, checked = 0.0, 0
    for seed in range(20):
        rng = np.random.default_rng(1000 + seed)
        n = 5 + seed % 5
        inst = random_instance(random_tree(rng, n, max_depth=4), seed)
        assert inst.n <= 9 and inst.tree.max_depth <= 4
        k = max(1, inst.tree.max_depth)
        sol = solve(inst, k)
        _, best = exhaustive_search(inst)
        worst = max(worst, abs(exact_total_reward(inst, sol.profile) - best))
        checked += 1
    ok = worst <= 1e-9
    acceptance(1, ok, f"{checked} instances, max |R(llps) - R(exhaustive)| = {worst:.2e} (tol 1e-9)")
    assert ok


def test_solver_maximizes_approximate_reward(acceptance):
    worst, checked = 0.0, 0
    for seed in range(10):
        rng = np.random.default_rng(2000 + seed)
        n = 3 + seed % 4
        inst = random_instance(random_tree(rng, n), 100 + seed)
        for k in (1, 2):
            total = memo_approx(inst, k)
            best = max(total(z) for z in itertools.product(range(4), repeat=n))
            sol = solve(inst, k)
            worst = max(worst, abs(approx_total_reward(inst, k, sol.profile) - best))
            checked += 1
    ok = worst <= 1e-10
    acceptance(2, ok, f"{checked} (instance, k) pairs, max |R^k(llps) - max R^k| = {worst:.2e} (tol 1e-10)")
    assert ok


def test_closed_form_marginal_matches_joint(acceptance):
    worst, checked = 0.0, 0
    for seed in range(100):
        rng = np.random.default_rng(3000 + seed)
        L = 2 + seed % 9
        chain = random_mu_valid_chain(L, rng)
        b = stationary(build_joint(chain)).b
        for k in range(1, L):
            worst = max(worst, abs(closed_form_b(chain, k) - b))
            checked += 1
    ok = worst <= 1e-10
    acceptance(3, ok, f"{checked} (line, k) pairs, max |b_closed - b_joint| = {worst:.2e} (tol 1e-10)")
    assert ok


def certified_cases():
    for seed in range(10):
        n = 6 + seed % 5
        inst, rho = random_certified_instance(line_tree(n), 4000 + seed)
        rng = Xoshiro256(5000 + seed)
        yield inst, rho, [random_profile(n, rng) for _ in range(20)]


def test_marginal_gap_within_certified_rate(acceptance):
    worst, checked, rhos = -np.inf, 0, []
    for inst, rho, profiles in certified_cases():
        rhos.append(rho)
        for zeta in profiles:
            for i in range(inst.n):
                exact = node_marginal(inst, zeta, i)
                for k in range(1, inst.n):
                    gap = decay_gap(inst, zeta, i, k, exact)
                    worst = max(worst, gap - 2 * rho ** k)
                    checked += 1
    ok = worst <= 1e-10
    acceptance(4, ok, f"{checked} (instance, profile, i, k) cases, rho in "
               f"[{min(rhos):.3f}, {max(rhos):.3f}], max(gap - 2 rho^k) = {worst:.2e} (tol 1e-10)")
    assert ok


def test_reward_gap_within_certified_rate(acceptance):
    worst, checked = -np.inf, 0
    for inst, rho, profiles in certified_cases():
        for zeta in profiles:
            exact = exact_total_reward(inst, zeta)
            for k in range(1, 7):
                lhs = abs(exact - approx_total_reward(inst, k, zeta)) / inst.n
                worst = max(worst, lhs - 2 * inst.r_bar * rho ** k)
                checked += 1
    ok = worst <= 1e-10
    acceptance(5, ok, f"{checked} (instance, profile, k) cases, "
               f"max(|R - R^k|/n - 2 rbar rho^k) = {worst:.2e} (tol 1e-10)")
    assert ok


def read_decay(path):
    gaps = {}
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["run", "seed", "k", "gap"]
    for run, _, k, gap in rows[1:]:
        if run == "median" or k == "slope":
            continue
        gaps.setdefault(int(run), {})[int(k)] = float(gap)
    return gaps


def test_decay_experiment_shape(acceptance, tmp_path):
    path = tmp_path / "decay.csv"
    assert main(["decay", "--nodes", "10", "--runs", "50", "--kmax", "8",
                 "--seed", "0", "--csv", str(path)]) == 0
    gaps = read_decay(path)
    assert len(gaps) == 50 and all(len(g) == 8 for g in gaps.values())
    ks = list(range(1, 9))
    medians = [float(np.median([gaps[r][k] for r in gaps])) for k in ks]
    steps = len(ks) - 1
    monotone = sum(b <= a + 1e-12 for a, b in zip(medians, medians[1:]))
    slopes = [np.polyfit(ks, np.log(np.maximum([g[k] for k in ks], 1e-14)), 1)[0]
              for g in gaps.values()]
    negative = sum(s < 0 for s in slopes)
    ok = monotone >= min(7, steps) and negative >= 0.9 * len(slopes)
    acceptance(6, ok, f"median non-increasing at {monotone}/{steps} steps "
               f"({medians[0]:.2e} -> {medians[-1]:.2e}), "
               f"{negative}/{len(slopes)} runs with negative log-gap slope (need 90%)")
    assert ok


def test_case_study_shape(acceptance, tmp_path):
    path = tmp_path / "case.csv"
    assert main(["casestudy", "--seed", "0", "--csv", str(path)]) == 0
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    depth = case_study_tree().max_depth
    exhaustive = rows[0]
    llps = rows[1:]
    assert exhaustive["algorithm"] == "exhaustive"
    assert [int(r["k"]) for r in llps] == list(range(1, depth + 1))
    gaps = [float(r["gap"]) for r in llps]
    times = [float(r["time_s"]) for r in llps]
    t_ex = float(exhaustive["time_s"])
    nonneg = all(g >= -1e-9 for g in gaps)
    zero_at_depth = abs(gaps[-1]) <= 1e-9
    faster = all(t < t_ex for t in times)
    ok = nonneg and zero_at_depth and faster
    acceptance(7, ok, f"gaps {[round(g, 4) for g in gaps]}, gap at k={depth} = {gaps[-1]:.1e}, "
               f"max llps time {max(times):.3f}s vs exhaustive {t_ex:.3f}s")
    assert ok


def test_value_tables_are_optimal_suffix_values(acceptance):
    worst, entries = 0.0, 0
    for seed in range(10):
        n = 2 + seed % 5
        inst = random_instance(line_tree(n), 6000 + seed)
        total = memo_approx(inst, 1)
        tables = backward_pass(inst, 1)
        for i in range(n):
            suffix = range(i, n)
            keys = [()] if i == 0 else [(z,) for z in range(4)]
            for key in keys:
                best = -np.inf
                for tail in itertools.product(range(4), repeat=n - i):
                    zeta = (0,) * (i - 1) + key + tail
                    best = max(best, total(zeta, suffix))
                worst = max(worst, abs(tables[i][key] - best))
                entries += 1
    ok = worst <= 1e-10
    acceptance(8, ok, f"{entries} table entries on 10 lines, max |V - brute force| = {worst:.2e} (tol 1e-10)")
    assert ok


def test_chain_core_numerics(acceptance):
    rng = np.random.default_rng(7000)
    row_err = res_err = marg_err = 0.0
    count = 10_000
    for c in range(count):
        L = 1 + c % 8
        rows = rng.uniform(0.0, 1.0, (L, 4))
        rows[0, 2:] = rows[0, :2]
        P = build_joint(InducedChain(rows))
        row_err = max(row_err, np.abs(P.sum(axis=1) - 1.0).max())
        pi = stationary(P).probs
        res_err = max(res_err, np.abs(pi @ P - pi).sum())

        n = 1 + c % 6
        inst = random_instance(random_tree(rng, n), 8000 + c)
        zeta = tuple(int(z) for z in rng.integers(0, 4, n))
        full = full_joint_marginals(inst, zeta)
        for i in range(n):
            marg_err = max(marg_err, np.abs(node_marginal(inst, zeta, i).probs - full[i]).max())
    ok = row_err <= 1e-12 and res_err <= 1e-10 and marg_err <= 1e-10
    acceptance(9, ok, f"{count} chains: row-sum err {row_err:.1e} (tol 1e-12), "
               f"stationary residual {res_err:.1e} (tol 1e-10), "
               f"marginal vs whole-tree err {marg_err:.1e} (tol 1e-10)")
    assert ok
