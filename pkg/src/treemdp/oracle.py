"""Ground truth for checking the solver and the decay bounds.

Exact rewards, exhaustive policy search, a whole-tree joint chain for small
instances, the closed-form marginal recursion for chains with equal row
differences, and the decay-rate certificate for instances whose parameters
meet those conditions.
"""

from __future__ import annotations

import itertools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from operator import itemgetter

import numpy as np

from .chain import InducedChain, last_marginals, node_marginal
from .model import (
    POLICIES,
    ProblemInstance,
    ResourceGuardError,
    action,
    k_hop_path,
    require_valid,
)
from .truncate import approx_marginal, truncated_chain

EXHAUSTIVE_MAX_N = 12
FULL_JOINT_MAX_N = 12
CERT_TOL = 1e-9


# -- exact rewards -------------------------------------------------------

def exact_node_reward(inst: ProblemInstance, zeta, i: int) -> float:
    return float(np.dot(inst.rewards[i], node_marginal(inst, zeta, i).probs))


def exact_total_reward(inst: ProblemInstance, zeta) -> float:
    """Long-run average reward of the profile ``zeta``."""
    return sum(exact_node_reward(inst, zeta, i) for i in range(inst.n))


class _ExactNodeRewards:
    """Every node's reward for every assignment of policies on its root path.

    All ``4**(depth+1)`` path assignments of a node are solved in one batch,
    since an exhaustive search visits each of them anyway.
    """

    def __init__(self, inst):
        self.paths = [tuple(inst.tree.path_to_root(i)[::-1]) for i in range(inst.n)]
        self.getters = [itemgetter(*p) for p in self.paths]
        induced = np.array([[inst.induced(i, z) for z in POLICIES] for i in range(inst.n)])
        self.memo = []
        for i, path in enumerate(self.paths):
            keys = np.array(list(itertools.product(range(4), repeat=len(path))))
            b = last_marginals(induced[np.array(path)[None, :], keys])
            r0, r1 = inst.rewards[i]
            values = (r0 * (1.0 - b) + r1 * b).tolist()
            # itemgetter with one index returns a bare policy, not a tuple
            names = keys[:, 0].tolist() if len(path) == 1 else map(tuple, keys.tolist())
            self.memo.append(dict(zip(names, values)))

    def total(self, zeta):
        total = 0.0
        for memo, get in zip(self.memo, self.getters):
            total += memo[get(zeta)]
        return total


def _search_prefix(inst, prefix):
    """Best (value, profile) among profiles starting with ``prefix``."""
    rewards = _ExactNodeRewards(inst)
    best, best_val = None, -np.inf
    for suffix in itertools.product(range(4), repeat=inst.n - len(prefix)):
        zeta = prefix + suffix
        val = rewards.total(zeta)
        if val > best_val:
            best, best_val = zeta, val
    return best_val, best


def exhaustive_search(inst: ProblemInstance, workers: int = 1):
    """Maximize the exact average reward over all ``4**n`` profiles.

    Profiles are visited in lexicographic order (node 0 most significant) and
    only a strictly better value replaces the incumbent, so ties resolve to
    the lowest profile. With ``workers > 1`` leading-digit blocks run in
    separate processes and are reduced in the same order.
    """
    if inst.n > EXHAUSTIVE_MAX_N:
        raise ResourceGuardError(
            f"exhaustive search limited to n <= {EXHAUSTIVE_MAX_N}, got {inst.n}")
    require_valid(inst)
    if workers <= 1 or inst.n < 2:
        val, best = _search_prefix(inst, ())
        return best, val
    plen = 1 if workers <= 4 or inst.n < 3 else 2
    prefixes = list(itertools.product(range(4), repeat=plen))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(_search_prefix, [inst] * len(prefixes), prefixes))
    best, best_val = None, -np.inf
    for val, zeta in results:  # prefixes are in lexicographic order
        if val > best_val:
            best, best_val = zeta, val
    return best, best_val


# -- whole-tree joint chain ----------------------------------------------

def full_joint(inst: ProblemInstance, zeta) -> np.ndarray:
    """Transition matrix of all ``n`` node states, read straight off the
    eight per-node parameters (node ``i`` is bit ``i`` of the state index)."""
    n = inst.n
    if n > FULL_JOINT_MAX_N:
        raise ResourceGuardError(f"full joint chain limited to n <= {FULL_JOINT_MAX_N}")
    N = 1 << n
    idx = np.arange(N)
    P = np.ones((N, N))
    for i, p in enumerate(inst.params):
        # stay[parent_state][action][state]
        stay = np.array([[[p.e, p.f], [p.ep, p.fp]], [[p.g, p.h], [p.gp, p.hp]]])
        s = (idx >> i) & 1
        par = inst.tree.parent[i]
        ps = (idx >> par) & 1 if par is not None else np.zeros(N, dtype=int)
        a = np.array([action(zeta[i], 0), action(zeta[i], 1)])[s]
        s0 = stay[ps, a, s]
        nxt = (idx >> i) & 1
        P *= np.where(nxt[None, :] == 0, s0[:, None], 1.0 - s0[:, None])
    return P


def eig_stationary(P) -> np.ndarray:
    """Left Perron vector via a dense eigendecomposition."""
    w, v = np.linalg.eig(np.asarray(P).T)
    vec = np.real(v[:, np.argmin(np.abs(w - 1.0))])
    return vec / vec.sum()


def full_joint_marginals(inst: ProblemInstance, zeta) -> np.ndarray:
    """``(n, 2)`` array of node marginals from the whole-tree chain."""
    pi = eig_stationary(full_joint(inst, zeta))
    idx = np.arange(len(pi))
    out = np.empty((inst.n, 2))
    for i in range(inst.n):
        b = pi[((idx >> i) & 1) == 1].sum()
        out[i] = (1.0 - b, b)
    return out


def full_joint_total_reward(inst: ProblemInstance, zeta) -> float:
    marg = full_joint_marginals(inst, zeta)
    return float(sum(np.dot(r, m) for r, m in zip(inst.rewards, marg)))


# -- closed-form marginals for equal-row-difference chains ----------------

def _mu_checked(chain: InducedChain):
    if not np.all(chain.mu_valid):
        raise ValueError("chain needs alpha - beta == gamma - omega at every position")
    mu = chain.mu
    if np.any(np.abs(mu) >= 1.0):
        raise ValueError("mu must lie in (-1, 1)")
    return mu


def b_recursive(chain: InducedChain) -> np.ndarray:
    """P(s_j = 1) at every position via the one-step recursion

    ``b_j = (1 - alpha_j)/(1 - mu_j) + (alpha_j - gamma_j)/(1 - mu_j) * b_{j-1}``.

    At the source alpha = gamma, so the recursion starts from the two-state
    value ``(1 - alpha)/(1 - mu)``.
    """
    mu = _mu_checked(chain)
    drift = (1.0 - chain.alpha) / (1.0 - mu)
    coupling = (chain.alpha - chain.gamma) / (1.0 - mu)
    b = np.empty(len(chain))
    prev = 0.0
    for j in range(len(chain)):
        prev = drift[j] + coupling[j] * prev
        b[j] = prev
    return b


def closed_form_b(chain: InducedChain, k: int) -> float:
    """P(last state = 1) from the k-step expansion seeded ``k`` positions back.

    ``b_L = b_{L-k} prod_j c_j + sum_j d_j prod_{l>j} c_l`` over the last ``k``
    positions, with ``c_j = (alpha_j - gamma_j)/(1 - mu_j)`` and
    ``d_j = (1 - alpha_j)/(1 - mu_j)``; the seed ``b_{L-k}`` comes from
    :func:`b_recursive`.
    """
    L = len(chain)
    if not 1 <= k <= L - 1:
        raise ValueError(f"k must be in 1..{L - 1}")
    mu = _mu_checked(chain)
    c = (chain.alpha - chain.gamma) / (1.0 - mu)
    d = (1.0 - chain.alpha) / (1.0 - mu)
    seed = b_recursive(chain)[L - 1 - k]
    window = range(L - k, L)
    value = seed * np.prod(c[L - k:])
    for j in window:
        value += d[j] * np.prod(c[j + 1:])
    return float(value)


def random_mu_valid_chain(L: int, rng: np.random.Generator) -> InducedChain:
    """Random chain with alpha - beta == gamma - omega at every position."""
    rows = []
    for j in range(L):
        a = rng.uniform()
        c = a if j == 0 else rng.uniform()
        mu = rng.uniform(max(a, c) - 1.0, min(a, c))
        rows.append((a, a - mu, c, c - mu))
    return InducedChain(rows)


# -- decay certificate ---------------------------------------------------

@dataclass
class DecayCertificate:
    satisfied: bool
    rho: float | None
    node_ratios: list
    residuals: list  # per node, the four equality residuals


def decay_node_check(p):
    """``(ok, ratio, residuals)`` for one node's equal-difference conditions."""
    diffs = (p.e - p.f, p.e - p.fp, p.ep - p.f, p.ep - p.fp)
    other = (p.g - p.h, p.g - p.hp, p.gp - p.h, p.gp - p.hp)
    residuals = [o - d for d, o in zip(diffs, other)]
    ok = (all(abs(r) <= CERT_TOL for r in residuals)
          and all(-1.0 < d < 1.0 for d in diffs + other))
    num = (abs(p.e - p.g),) * 2 + (abs(p.ep - p.gp),) * 2
    ratio = max(n / (1.0 - d) for n, d in zip(num, diffs)) if ok else float("inf")
    return ok, ratio, residuals


def decay_certificate(inst: ProblemInstance) -> DecayCertificate:
    """Certify the decay rate when every node's row differences agree.

    Satisfied only if all equality conditions hold (to ``CERT_TOL``) and
    the resulting rate is below 1; ``rho`` is None otherwise.
    """
    ratios, residuals, ok_all = [], [], True
    for p in inst.params:
        ok, ratio, res = decay_node_check(p)
        ok_all &= ok
        ratios.append(ratio)
        residuals.append(res)
    rho = max(ratios) if ok_all else None
    satisfied = ok_all and rho < 1.0
    return DecayCertificate(satisfied, rho if satisfied else None, ratios, residuals)


def decay_gap(inst: ProblemInstance, zeta, i: int, k: int, exact=None) -> float:
    """L1 distance between node ``i``'s exact and truncated marginals.

    ``exact`` may carry a precomputed ``node_marginal(inst, zeta, i)``.
    """
    if exact is None:
        exact = node_marginal(inst, zeta, i)
    path = k_hop_path(inst.tree, i, k)
    approx = approx_marginal(truncated_chain(inst, i, k, [zeta[j] for j in path]))
    return float(np.abs(exact.probs - approx.probs).sum())


__all__ = [
    "DecayCertificate",
    "b_recursive",
    "decay_gap",
    "eig_stationary",
    "exact_node_reward",
    "exact_total_reward",
    "exhaustive_search",
    "full_joint",
    "full_joint_marginals",
    "full_joint_total_reward",
    "decay_node_check",
    "decay_certificate",
    "closed_form_b",
    "random_mu_valid_chain",
]
