"""Locality-based local policy search: dynamic programming over the tree.

The approximated reward is a sum of per-node terms, each depending on the
policies of a node and its ancestors up to ``k`` hops away. A backward pass
over the tree (children before parents) builds, for every node ``i``, a table
``V_i`` indexed by the policies of ``i``'s ancestors: the best total of the
terms in ``i``'s subtree given those ancestor policies. A forward pass (parents
before children) then reads off a maximizing profile.

Table keys list ancestor policies nearest first and are encoded as base-4
integers with the nearest ancestor as the most significant digit, so the key
a child sees is ``(zeta_i, key)`` with the farthest digit dropped when the
child's window is full.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .model import POLICIES, ProblemInstance, ResourceGuardError, require_valid
from .truncate import ApproxRewardCache

K_MAX = 10


def encode_key(key) -> int:
    code = 0
    for z in key:
        code = code * 4 + int(z)
    return code


def decode_key(code: int, length: int) -> tuple:
    digits = []
    for _ in range(length):
        code, z = divmod(code, 4)
        digits.append(z)
    return tuple(reversed(digits))


@dataclass
class ValueTable:
    node: int
    key_len: int
    values: np.ndarray  # length 4**key_len, indexed by encode_key

    def __getitem__(self, key):
        if len(key) != self.key_len:
            raise KeyError(f"node {self.node} expects {self.key_len} ancestor policies")
        return float(self.values[encode_key(key)])

    def __len__(self):
        return len(self.values)


@dataclass
class SolveStats:
    wall_time: float = 0.0
    table_entries: int = 0
    stationary_solves: int = 0
    cache_hits: int = 0

    def as_dict(self, include_time=True):
        out = {
            "table_entries": self.table_entries,
            "stationary_solves": self.stationary_solves,
            "cache_hits": self.cache_hits,
        }
        if include_time:
            out["wall_time"] = self.wall_time
        return out


class Solution(NamedTuple):
    profile: tuple
    approx_reward: float
    stats: SolveStats


def _check_order(inst, order):
    if order is None:
        return inst.tree.bfs
    order = tuple(order)
    if not inst.tree.is_bfs_order(order):
        raise ValueError("order must list every node once with parents first")
    return order


def _node_scores(cache, tables, i, tree):
    """Scores ``[zeta_i, ancestor code]``: own term plus children's tables."""
    m = len(cache.paths[i]) - 1
    width = 4 ** m
    full = np.arange(4 * width)
    # policy tuples (zeta_i, nearest ancestor, ..., farthest), row = full code
    digits = (full[:, None] // 4 ** np.arange(m, -1, -1)[None, :]) % 4
    scores = cache.node_rewards(i, digits).reshape(4, width)
    for j in tree.children[i]:
        child = tables[j]
        scores += child.values[full // 4 ** (m + 1 - child.key_len)].reshape(4, width)
    return scores


def backward_pass(inst: ProblemInstance, k: int, order=None, cache=None) -> dict:
    """Value tables for every node, filled children-first."""
    order = _check_order(inst, order)
    cache = cache if cache is not None else ApproxRewardCache(inst, k)
    tables = {}
    for i in reversed(order):
        scores = _node_scores(cache, tables, i, inst.tree)
        m = len(cache.paths[i]) - 1
        tables[i] = ValueTable(i, m, scores.max(axis=0))
    return tables


def forward_pass(inst: ProblemInstance, k: int, tables: dict, order=None,
                 cache=None) -> tuple:
    """Maximizing profile; ties go to the lowest policy code."""
    order = _check_order(inst, order)
    cache = cache if cache is not None else ApproxRewardCache(inst, k)
    tree = inst.tree
    zeta = [None] * inst.n
    for i in order:
        ancestors = tuple(zeta[p] for p in cache.paths[i][1:])
        best, best_val = None, -np.inf
        for z in POLICIES:
            own = (z,) + ancestors
            val = cache.node_reward(i, own)
            for j in tree.children[i]:
                val += tables[j][own[:tables[j].key_len]]
            if val > best_val:
                best, best_val = z, val
        zeta[i] = best
    return tuple(zeta)


def solve(inst: ProblemInstance, k: int, order=None) -> Solution:
    """Maximize the ``k``-truncated approximated reward.

    Raises :class:`~treemdp.model.NotErgodicError` for instances that fail
    validation and :class:`~treemdp.model.ResourceGuardError` for ``k > K_MAX``.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    if k > K_MAX:
        raise ResourceGuardError(f"k={k} exceeds K_MAX={K_MAX}")
    require_valid(inst)
    start = time.perf_counter()
    cache = ApproxRewardCache(inst, k)
    tables = backward_pass(inst, k, order, cache)
    profile = forward_pass(inst, k, tables, order, cache)
    value = cache.total(profile)
    stats = SolveStats(
        wall_time=time.perf_counter() - start,
        table_entries=sum(len(t) for t in tables.values()),
        stationary_solves=cache.solves,
        cache_hits=cache.hits,
    )
    return Solution(profile, value, stats)
