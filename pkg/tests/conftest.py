import itertools

import numpy as np
import pytest

from treemdp.model import DirectedTree

ACCEPTANCE_LINES = []


def random_tree(rng, n, max_depth=None):
    """Parent of node i drawn from earlier nodes, respecting ``max_depth``."""
    parent, depth = [None], [0]
    for i in range(1, n):
        choices = [j for j in range(i) if max_depth is None or depth[j] < max_depth]
        p = int(rng.choice(choices))
        parent.append(p)
        depth.append(depth[p] + 1)
    return DirectedTree(tuple(parent))


def loop_joint(rows):
    """Joint transition matrix by explicit enumeration of (state, next) pairs."""
    L = len(rows)
    N = 1 << L
    P = np.zeros((N, N))
    for s in itertools.product((0, 1), repeat=L):
        r = sum(b << j for j, b in enumerate(s))
        for t in itertools.product((0, 1), repeat=L):
            c = sum(b << j for j, b in enumerate(t))
            prob = 1.0
            for j in range(L):
                a, b, g, w = rows[j]
                parent = s[j - 1] if j else 0
                stay = (a if s[j] == 0 else b) if parent == 0 else (g if s[j] == 0 else w)
                prob *= stay if t[j] == 0 else 1.0 - stay
            P[r, c] = prob
    return P


def block_joint(rows):
    """Joint matrix by stacking the four row blocks position by position."""
    a, b = rows[0][0], rows[0][1]
    P = np.array([[a, 1 - a], [b, 1 - b]])
    for a, b, g, w in rows[1:]:
        half = len(P) // 2
        Pm, Pp = P[:half], P[half:]
        P = np.block([
            [a * Pm, (1 - a) * Pm],
            [g * Pp, (1 - g) * Pp],
            [b * Pm, (1 - b) * Pm],
            [w * Pp, (1 - w) * Pp],
        ])
    return P


def lstsq_stationary(P):
    N = len(P)
    A = np.vstack([P.T - np.eye(N), np.ones(N)])
    rhs = np.zeros(N + 1)
    rhs[-1] = 1.0
    return np.linalg.lstsq(A, rhs, rcond=None)[0]


@pytest.fixture
def acceptance():
    def record(number, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
