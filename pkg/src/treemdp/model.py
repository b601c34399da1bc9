"""Problem instances for binary-state multi-agent MDPs on one-directional trees.

Each node ``i`` has a binary state, a binary action and a parent (except the
root). Its next state depends on its own state, its parent's state and its own
action, through eight "stay at 0" probabilities::

    parent=0, action=0:  [[e,  1-e ], [f,  1-f ]]
    parent=1, action=0:  [[g,  1-g ], [h,  1-h ]]
    parent=0, action=1:  [[e', 1-e'], [f', 1-f']]
    parent=1, action=1:  [[g', 1-g'], [h', 1-h']]

Rows are indexed by the node's current state, columns by its next state. The
root has no parent, so its parameters satisfy e=g, f=h, e'=g', f'=h'.

A local policy is a deterministic map {0,1} -> {0,1}, encoded as the integer
``action(0) + 2 * action(1)``.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

from .rng import Xoshiro256

EPS_ERG = 1e-9
CERT_MAX_ATTEMPTS = 10_000

ALWAYS_ZERO = 0
FLIP = 1  # action 1 in state 0, action 0 in state 1
IDENTITY = 2  # action equals state
ALWAYS_ONE = 3
POLICIES = (ALWAYS_ZERO, FLIP, IDENTITY, ALWAYS_ONE)


class InstanceError(ValueError):
    """Raised for malformed or inconsistent instance documents."""


class ResourceGuardError(RuntimeError):
    """Raised when a request exceeds a hard size limit."""


def action(policy: int, state: int) -> int:
    """Action taken by ``policy`` in ``state``."""
    return (policy >> state) & 1


class TransitionParams(NamedTuple):
    e: float
    f: float
    g: float
    h: float
    ep: float
    fp: float
    gp: float
    hp: float

    @classmethod
    def for_root(cls, e, f, ep, fp):
        return cls(e, f, e, f, ep, fp, ep, fp)

    def is_root_form(self):
        return (self.e == self.g and self.f == self.h
                and self.ep == self.gp and self.fp == self.hp)


class RewardVector(NamedTuple):
    r0: float
    r1: float


class InducedParams(NamedTuple):
    """Rows of the two 2x2 matrices a node follows once its policy is fixed.

    ``alpha``/``beta`` are the stay-at-0 probabilities from states 0/1 when the
    parent is in state 0; ``gamma``/``omega`` the same when the parent is in 1.
    """

    alpha: float
    beta: float
    gamma: float
    omega: float


def induced_transition(p: TransitionParams, zeta: int) -> InducedParams:
    """Fix the action at each state according to ``zeta``."""
    a0 = action(zeta, 0)
    a1 = action(zeta, 1)
    return InducedParams(
        p.ep if a0 else p.e,
        p.fp if a1 else p.f,
        p.gp if a0 else p.g,
        p.hp if a1 else p.h,
    )


@dataclass(frozen=True)
class DirectedTree:
    """Rooted tree given by a parent array; ``None`` marks the root."""

    parent: tuple
    root: int = field(init=False)
    children: tuple = field(init=False, repr=False)
    depth: tuple = field(init=False, repr=False)
    bfs: tuple = field(init=False, repr=False)

    def __post_init__(self):
        parent = tuple(None if p is None else int(p) for p in self.parent)
        n = len(parent)
        if n == 0:
            raise InstanceError("tree must have at least one node")
        roots = [i for i, p in enumerate(parent) if p is None]
        for i, p in enumerate(parent):
            if p is not None and not 0 <= p < n:
                raise InstanceError(f"node {i} has out-of-range parent {p}")
        if len(roots) > 1:
            raise InstanceError(f"multiple roots: {roots}")
        if not roots:
            raise InstanceError("cyclic parent structure")
        root = roots[0]

        depth = [None] * n
        depth[root] = 0
        for i in range(n):
            path = []
            j = i
            while depth[j] is None:
                path.append(j)
                j = parent[j]
                if len(path) > n:
                    raise InstanceError("cyclic parent structure")
            d = depth[j]
            for node in reversed(path):
                d += 1
                depth[node] = d

        children = [[] for _ in range(n)]
        for i, p in enumerate(parent):
            if p is not None:
                children[p].append(i)

        order = []
        queue = deque([root])
        while queue:
            i = queue.popleft()
            order.append(i)
            queue.extend(children[i])

        object.__setattr__(self, "parent", parent)
        object.__setattr__(self, "root", root)
        object.__setattr__(self, "children", tuple(tuple(c) for c in children))
        object.__setattr__(self, "depth", tuple(depth))
        object.__setattr__(self, "bfs", tuple(order))

    @property
    def n(self) -> int:
        return len(self.parent)

    @property
    def max_depth(self) -> int:
        return max(self.depth)

    @property
    def max_degree(self) -> int:
        return max(len(c) for c in self.children)

    def path_to_root(self, i: int) -> list:
        """Nodes from ``i`` up to and including the root."""
        path = [i]
        while self.parent[path[-1]] is not None:
            path.append(self.parent[path[-1]])
        return path

    def is_bfs_order(self, order: Sequence[int]) -> bool:
        """True if ``order`` lists every node once with parents first."""
        if sorted(order) != list(range(self.n)):
            return False
        seen = set()
        for i in order:
            p = self.parent[i]
            if p is not None and p not in seen:
                return False
            seen.add(i)
        return True


def line_tree(n: int) -> DirectedTree:
    """Path 0 -> 1 -> ... -> n-1 rooted at node 0."""
    return DirectedTree((None,) + tuple(range(n - 1)))


# Nine nodes: a depth-6 trunk 0-1-2-3-4-5-6 with side leaves under 1 and 3.
CASE_STUDY_PARENTS = (None, 0, 1, 2, 3, 4, 5, 1, 3)


def case_study_tree() -> DirectedTree:
    return DirectedTree(CASE_STUDY_PARENTS)


def k_hop_path(tree: DirectedTree, i: int, k: int) -> list:
    """``(i, parent(i), ..., k-th ancestor)``, stopping early at the root."""
    if k < 0:
        raise ValueError("k must be non-negative")
    path = [i]
    while len(path) <= k and tree.parent[path[-1]] is not None:
        path.append(tree.parent[path[-1]])
    return path


@dataclass(frozen=True)
class ProblemInstance:
    tree: DirectedTree
    params: tuple
    rewards: tuple

    def __post_init__(self):
        n = self.tree.n
        if len(self.params) != n or len(self.rewards) != n:
            raise InstanceError("params and rewards need one entry per node")
        params = tuple(TransitionParams(*map(float, p)) for p in self.params)
        rewards = tuple(RewardVector(*map(float, r)) for r in self.rewards)
        for i, p in enumerate(params):
            for name, v in zip(TransitionParams._fields, p):
                if not 0.0 <= v <= 1.0:
                    raise InstanceError(f"node {i}: {name}={v!r} outside [0, 1]")
        if not params[self.tree.root].is_root_form():
            raise InstanceError(
                "root parameters must satisfy e=g, f=h, e'=g', f'=h'")
        for i, r in enumerate(rewards):
            if not all(math.isfinite(v) for v in r):
                raise InstanceError(f"node {i}: non-finite reward")
        object.__setattr__(self, "params", params)
        object.__setattr__(self, "rewards", rewards)

    @property
    def n(self) -> int:
        return self.tree.n

    @property
    def r_bar(self) -> float:
        return max(max(abs(r.r0), abs(r.r1)) for r in self.rewards)

    def induced(self, i: int, zeta: int) -> InducedParams:
        return induced_transition(self.params[i], zeta)


@dataclass
class ValidationReport:
    violations: list  # (node, parent_state, policy, |row difference|)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __str__(self):
        if self.ok:
            return "ok: every induced local chain is ergodic"
        lines = [f"{len(self.violations)} non-ergodic induced chain(s):"]
        for node, ps, zeta, diff in self.violations:
            lines.append(f"  node {node}, parent state {ps}, policy {zeta}: "
                         f"|row difference| = {diff:.17g}")
        return "\n".join(lines)


def _node_violations(i, p, eps=EPS_ERG):
    out = []
    for zeta in POLICIES:
        a, b, c, w = induced_transition(p, zeta)
        for ps, diff in ((0, abs(a - b)), (1, abs(c - w))):
            if diff > 1.0 - eps:
                out.append((i, ps, zeta, diff))
    return out


def validate_instance(inst: ProblemInstance, eps: float = EPS_ERG) -> ValidationReport:
    """Check that every induced two-state chain is ergodic.

    A 2x2 chain with stay-at-0 probabilities ``a`` (from 0) and ``b`` (from 1)
    has second eigenvalue ``a - b``; it is ergodic iff ``|a - b| < 1``. A
    margin ``eps`` keeps downstream linear solves well conditioned.
    """
    violations = []
    for i, p in enumerate(inst.params):
        violations.extend(_node_violations(i, p, eps))
    return ValidationReport(violations)


class NotErgodicError(ValueError):
    def __init__(self, report):
        super().__init__(str(report))
        self.report = report


def require_valid(inst: ProblemInstance):
    report = validate_instance(inst)
    if not report.ok:
        raise NotErgodicError(report)


# -- serialization -------------------------------------------------------

def _probability(value, where):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise InstanceError(f"{where}: expected a number, got {value!r}")
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise InstanceError(f"{where}: probability {value!r} outside [0, 1]")
    return value


def instance_from_dict(doc) -> ProblemInstance:
    if not isinstance(doc, dict):
        raise InstanceError("instance document must be a JSON object")
    for key in ("nodes", "parent", "params", "rewards"):
        if key not in doc:
            raise InstanceError(f"missing field {key!r}")
    n = doc["nodes"]
    if isinstance(n, bool) or not isinstance(n, int) or n < 1:
        raise InstanceError("'nodes' must be a positive integer")
    for key in ("parent", "params", "rewards"):
        if not isinstance(doc[key], list) or len(doc[key]) != n:
            raise InstanceError(f"{key!r} must be an array of length {n}")
    for i, p in enumerate(doc["parent"]):
        if p is not None and (isinstance(p, bool) or not isinstance(p, int)):
            raise InstanceError(f"parent[{i}] must be an integer or null")
    tree = DirectedTree(tuple(doc["parent"]))

    params = []
    for i, raw in enumerate(doc["params"]):
        if not isinstance(raw, list):
            raise InstanceError(f"params[{i}] must be an array")
        vals = [_probability(v, f"params[{i}][{j}]") for j, v in enumerate(raw)]
        if i == tree.root and len(vals) == 4:
            params.append(TransitionParams.for_root(*vals))
        elif len(vals) == 8:
            p = TransitionParams(*vals)
            if i == tree.root and not p.is_root_form():
                raise InstanceError(
                    "root given 8 parameters violating e=g, f=h, e'=g', f'=h'")
            params.append(p)
        else:
            expected = "4 or 8" if i == tree.root else "8"
            raise InstanceError(
                f"params[{i}] has {len(vals)} entries, expected {expected}")

    rewards = []
    for i, raw in enumerate(doc["rewards"]):
        if (not isinstance(raw, list) or len(raw) != 2
                or any(isinstance(v, bool) or not isinstance(v, (int, float))
                       for v in raw)):
            raise InstanceError(f"rewards[{i}] must be a pair of numbers")
        rewards.append(RewardVector(float(raw[0]), float(raw[1])))
    return ProblemInstance(tree, tuple(params), tuple(rewards))


def parse_instance(text: str) -> ProblemInstance:
    """Parse and structurally validate a JSON instance document.

    Ergodicity is not checked here; see :func:`validate_instance`.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceError(f"invalid JSON: {exc}") from exc
    return instance_from_dict(doc)


def instance_to_dict(inst: ProblemInstance) -> dict:
    params = []
    for i, p in enumerate(inst.params):
        if i == inst.tree.root:
            params.append([p.e, p.f, p.ep, p.fp])
        else:
            params.append(list(p))
    return {
        "nodes": inst.n,
        "parent": list(inst.tree.parent),
        "params": params,
        "rewards": [list(r) for r in inst.rewards],
    }


def serialize_instance(inst: ProblemInstance) -> str:
    # json writes floats with repr(), the shortest string that round-trips
    return json.dumps(instance_to_dict(inst), indent=1)


def load_instance(path) -> ProblemInstance:
    with open(path) as fh:
        return parse_instance(fh.read())


def parse_policy(text: str, n: int | None = None) -> tuple:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceError(f"invalid JSON: {exc}") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("policy"), list):
        raise InstanceError("policy document needs a 'policy' array")
    policy = doc["policy"]
    for z in policy:
        if isinstance(z, bool) or not isinstance(z, int) or z not in POLICIES:
            raise InstanceError(f"policy entries must be integers 0-3, got {z!r}")
    if n is not None and len(policy) != n:
        raise InstanceError(f"policy has {len(policy)} entries, expected {n}")
    return tuple(policy)


# -- generators ----------------------------------------------------------

def draw_instance(tree: DirectedTree, rng: Xoshiro256) -> ProblemInstance:
    """Draw an instance from ``rng``.

    Nodes are visited in ascending id. For each node the transition parameters
    are drawn first (e, f, e', f' for the root; e, f, g, h, e', f', g', h'
    otherwise), redrawn until the node passes the ergodicity margin, then the
    two rewards r0, r1.
    """
    params, rewards = [], []
    for i in range(tree.n):
        while True:
            if i == tree.root:
                p = TransitionParams.for_root(*(rng.random() for _ in range(4)))
            else:
                p = TransitionParams(*(rng.random() for _ in range(8)))
            if not _node_violations(i, p):
                break
        params.append(p)
        rewards.append(RewardVector(rng.random(), rng.random()))
    return ProblemInstance(tree, tuple(params), tuple(rewards))


def random_instance(tree: DirectedTree, seed: int) -> ProblemInstance:
    """All parameters and rewards i.i.d. uniform on [0, 1]."""
    return draw_instance(tree, Xoshiro256(seed))


def random_profile(n: int, rng: Xoshiro256) -> tuple:
    return tuple(rng.policy() for _ in range(n))


def uniform_instance(tree: DirectedTree, rewards=None) -> ProblemInstance:
    """Every transition probability 1/2; every node's state is a fair coin."""
    if rewards is None:
        rewards = [(0.0, 1.0)] * tree.n
    return ProblemInstance(tree, (TransitionParams(*[0.5] * 8),) * tree.n,
                           tuple(rewards))


def _certified_node(rng):
    e, f, ep, fp, g = (rng.random() for _ in range(5))
    h = g - (e - f)
    hp = g - (e - fp)
    gp = ep - f + h
    return TransitionParams(e, f, g, h, ep, fp, gp, hp)


def random_certified_instance(tree: DirectedTree, seed: int):
    """Random instance whose parameters meet the equal-row-difference conditions.

    Non-root nodes draw e, f, e', f', g uniformly and solve for h, h', g'; the
    draw is repeated until every value is in [0, 1], the node passes the
    ergodicity margin and every decay ratio is below 1. Returns
    ``(instance, rho)`` with ``rho`` from :func:`treemdp.oracle.decay_certificate`.
    """
    from .oracle import decay_node_check

    rng = Xoshiro256(seed)
    params, rewards = [], []
    for i in range(tree.n):
        for _ in range(CERT_MAX_ATTEMPTS):
            if i == tree.root:
                p = TransitionParams.for_root(*(rng.random() for _ in range(4)))
            else:
                p = _certified_node(rng)
            if not all(0.0 <= v <= 1.0 for v in p) or _node_violations(i, p):
                continue
            ok, ratio, _ = decay_node_check(p)
            if ok and ratio < 1.0:
                break
        else:
            raise RuntimeError(
                f"node {i}: no feasible parameters after "
                f"{CERT_MAX_ATTEMPTS} attempts")
        params.append(p)
        rewards.append(RewardVector(rng.random(), rng.random()))
    inst = ProblemInstance(tree, tuple(params), tuple(rewards))

    from .oracle import decay_certificate

    cert = decay_certificate(inst)
    return inst, cert.rho
