"""Truncated path models and the approximated reward built from them.

For node ``i`` and horizon ``k`` the truncated model keeps the chain on
``i`` and its ancestors up to ``k`` hops away. If ``i`` is deeper than ``k``,
the ``k``-th ancestor is replaced by a node that redraws its state uniformly
at every step, which cuts off everything upstream. If ``i`` is at depth
``<= k`` the model is the exact root path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chain import Distribution, InducedChain, chain_stationary, last_marginal, last_marginals
from .model import POLICIES, ProblemInstance, k_hop_path

UNIFORM_ROW = (0.5, 0.5, 0.5, 0.5)


@dataclass(frozen=True)
class TruncatedModel:
    center: int
    k: int
    path: tuple  # (i, parent, ..., farthest ancestor kept)
    chain: InducedChain  # source first, i.e. reversed path
    truncated: bool


def truncated_chain(inst: ProblemInstance, i: int, k: int, zeta_path) -> TruncatedModel:
    """Build the truncated model; ``zeta_path`` follows ``k_hop_path(i, k)``."""
    if k < 1:
        raise ValueError("k must be at least 1")
    path = k_hop_path(inst.tree, i, k)
    if len(zeta_path) != len(path):
        raise ValueError(f"need {len(path)} policies along the path, got {len(zeta_path)}")
    truncated = inst.tree.depth[i] > k
    rows = [inst.induced(node, z) for node, z in zip(path, zeta_path)][::-1]
    if truncated:
        rows[0] = UNIFORM_ROW
    return TruncatedModel(i, k, tuple(path), InducedChain(rows), truncated)


def approx_marginal(tm: TruncatedModel) -> Distribution:
    return last_marginal(chain_stationary(tm.chain))


def approx_node_reward(inst: ProblemInstance, i: int, k: int, zeta_path) -> float:
    pi = approx_marginal(truncated_chain(inst, i, k, zeta_path))
    return float(np.dot(inst.rewards[i], pi.probs))


def approx_total_reward(inst: ProblemInstance, k: int, zeta) -> float:
    total = 0.0
    for i in range(inst.n):
        path = k_hop_path(inst.tree, i, k)
        total += approx_node_reward(inst, i, k, [zeta[j] for j in path])
    return total


class ApproxRewardCache:
    """Memoized per-node approximated rewards for one (instance, k).

    Keys drop the policy of a truncated node's uniform ancestor, which cannot
    affect the result. Entries are written once per key and never mutated,
    so concurrent readers at worst recompute an identical value.
    """

    def __init__(self, inst: ProblemInstance, k: int):
        if k < 1:
            raise ValueError("k must be at least 1")
        self.inst = inst
        self.k = k
        self.paths = [tuple(k_hop_path(inst.tree, i, k)) for i in range(inst.n)]
        self.truncated = [inst.tree.depth[i] > k for i in range(inst.n)]
        self._induced = np.array([[inst.induced(i, z) for z in POLICIES]
                                  for i in range(inst.n)])
        self._memo = {}
        self.hits = 0
        self.solves = 0

    def node_reward(self, i: int, zeta_path) -> float:
        zeta_path = tuple(zeta_path)
        key = (i, zeta_path[:-1] if self.truncated[i] else zeta_path)
        value = self._memo.get(key)
        if value is not None:
            self.hits += 1
            return value
        self.solves += 1
        value = approx_node_reward(self.inst, i, self.k, zeta_path)
        self._memo[key] = value
        return value

    def total(self, zeta) -> float:
        return sum(self.node_reward(i, [zeta[j] for j in path])
                   for i, path in enumerate(self.paths))

    def node_rewards(self, i: int, zeta_paths) -> np.ndarray:
        """:meth:`node_reward` for many policy tuples at once, one per row.

        Missing entries are solved together with :func:`last_marginals`.
        """
        path = self.paths[i]
        zp = np.asarray(zeta_paths, dtype=np.intp).reshape(-1, len(path))
        cut = len(path) - 1 if self.truncated[i] else len(path)
        keys = [(i, tuple(row)) for row in zp[:, :cut].tolist()]
        out = np.empty(len(keys))
        missing = []
        for q, key in enumerate(keys):
            value = self._memo.get(key)
            if value is None:
                missing.append(q)
            else:
                out[q] = value
        self.hits += len(keys) - len(missing)
        if missing:
            rows = self._induced[np.array(path)[None, :], zp[missing]][:, ::-1]
            if self.truncated[i]:
                rows[:, 0] = UNIFORM_ROW
            b = last_marginals(rows)
            r0, r1 = self.inst.rewards[i]
            vals = r0 * (1.0 - b) + r1 * b
            for q, v in zip(missing, vals.tolist()):
                if keys[q] not in self._memo:
                    self._memo[keys[q]] = v
                    self.solves += 1
                else:
                    self.hits += 1
                out[q] = self._memo[keys[q]]
        return out
