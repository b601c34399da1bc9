"""Markov chains on binary state tuples along a root-first path.

A state tuple ``(s_0, ..., s_{L-1})`` is stored at index ``sum_j 2**j * s_j``,
so the last coordinate is the most significant bit: the upper half of a
joint transition matrix has ``s_{L-1} = 0`` and the lower half ``s_{L-1} = 1``.
Position 0 is the source of the chain (the root, or a uniform stand-in for a
truncated ancestor); position ``j`` depends on position ``j - 1``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ProblemInstance, ResourceGuardError

L_MAX = 20
DENSE_MAX = 12  # largest L solved densely; longer chains use power iteration
RESIDUAL_TOL = 1e-10
POWER_TOL = 1e-12
POWER_MAX_ITER = 1_000_000
MU_TOL = 1e-9


class StationaryError(ArithmeticError):
    """The chain has no unique stationary distribution (or it was not found)."""


@dataclass(frozen=True)
class InducedChain:
    """Policy-induced parameters along a path, source first.

    ``params[j] = (alpha, beta, gamma, omega)``: stay-at-0 probabilities of
    position ``j`` from its states 0 and 1, with the previous position in
    state 0 (alpha, beta) or 1 (gamma, omega). The source has no predecessor,
    so its gamma/omega must equal alpha/beta.
    """

    params: np.ndarray

    def __post_init__(self):
        p = np.array(self.params, dtype=float).reshape(-1, 4)
        if len(p) == 0:
            raise ValueError("chain needs at least one position")
        if np.any(p < 0.0) or np.any(p > 1.0):
            raise ValueError("chain parameters must lie in [0, 1]")
        if p[0, 2] != p[0, 0] or p[0, 3] != p[0, 1]:
            raise ValueError("source position needs gamma=alpha, omega=beta")
        p.setflags(write=False)
        object.__setattr__(self, "params", p)

    def __len__(self):
        return len(self.params)

    @property
    def alpha(self):
        return self.params[:, 0]

    @property
    def beta(self):
        return self.params[:, 1]

    @property
    def gamma(self):
        return self.params[:, 2]

    @property
    def omega(self):
        return self.params[:, 3]

    @property
    def mu(self):
        return self.alpha - self.beta

    @property
    def mu_valid(self):
        """Per position: alpha - beta equals gamma - omega (within MU_TOL)."""
        return np.abs((self.alpha - self.beta) - (self.gamma - self.omega)) <= MU_TOL


@dataclass(frozen=True, eq=False)
class Distribution:
    """Probability vector over ``dim`` binary coordinates."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.array(self.probs, dtype=float)
        size = len(p)
        if size < 2 or size & (size - 1):
            raise ValueError("distribution length must be a power of two >= 2")
        if np.any(p < 0.0) or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("not a probability vector")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @property
    def dim(self) -> int:
        return len(self.probs).bit_length() - 1

    @property
    def b(self) -> float:
        """P(last coordinate = 1)."""
        return float(self.probs[len(self.probs) // 2:].sum())

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.probs, dtype=dtype)

    def __eq__(self, other):
        return (isinstance(other, Distribution)
                and np.array_equal(self.probs, other.probs))


def state_index(s) -> int:
    return sum(int(bit) << j for j, bit in enumerate(s))


def build_joint(chain: InducedChain) -> np.ndarray:
    """Dense ``2**L x 2**L`` row-stochastic transition matrix of the chain.

    Built one position at a time: with ``P`` the matrix of the first ``j``
    positions split into rows where position ``j-1`` is 0 (``P0``) or 1
    (``P1``), appending position ``j`` gives the row blocks
    ``[a*P0, (1-a)*P0], [c*P1, (1-c)*P1], [b*P0, (1-b)*P0], [w*P1, (1-w)*P1]``.
    """
    L = len(chain)
    if L > L_MAX:
        raise ResourceGuardError(f"chain length {L} exceeds L_MAX={L_MAX}")
    a, b, _, _ = chain.params[0]
    P = np.array([[a, 1.0 - a], [b, 1.0 - b]])
    for j in range(1, L):
        a, b, c, w = chain.params[j]
        N = len(P)
        half = N // 2
        stay = np.empty((2 * N, 1))
        stay[:half], stay[half:N] = a, c
        stay[N:N + half], stay[N + half:] = b, w
        rows = np.concatenate((P, P))
        P = np.concatenate((stay * rows, (1.0 - stay) * rows), axis=1)
    return P


def _apply_batch(params, pi):
    """Row vectors ``pi`` (B, 2**L) times the joint matrices of chains
    ``params`` (B, L, 4), without forming them.

    Positions are contracted from the far end back to the source: position
    ``j``'s factor needs the current state of ``j - 1``, which is only summed
    out at the next step.
    """
    B, L, _ = params.shape
    stay = np.stack([params[:, :, [0, 1]], params[:, :, [2, 3]]], axis=2)
    kern = np.stack([stay, 1.0 - stay], axis=-1)  # [B, j, parent, x, y]
    # C-order reshape puts s_{L-1} on axis 1 and s_0 on the last axis
    t = np.asarray(pi, dtype=float)
    for j in range(L - 1, 0, -1):
        t = t.reshape(B, 1 << (L - 1 - j), 2, 2, 1 << (j - 1))
        t = np.einsum("Bbxpa,Bpxy->Bbypa", t, kern[:, j])
    t = t.reshape(B, 1 << (L - 1), 2)
    t = np.einsum("Bbx,Bxy->Bby", t, kern[:, 0, 0])
    return t.reshape(B, -1)


def apply_joint(chain: InducedChain, pi: np.ndarray) -> np.ndarray:
    """Row vector times the joint transition matrix, without forming it."""
    return _apply_batch(chain.params[None], np.asarray(pi, dtype=float)[None])[0]


def _finish(pi):
    pi = np.where(pi < 0.0, 0.0, pi)
    return pi / pi.sum()


def _direct(P):
    N = len(P)
    A = P.T - np.eye(N)
    A[-1, :] = 1.0
    rhs = np.zeros(N)
    rhs[-1] = 1.0
    try:
        pi = np.linalg.solve(A, rhs)
        if np.abs(A @ pi - rhs).sum() > RESIDUAL_TOL * 1e-2:
            pi += np.linalg.solve(A, rhs - A @ pi)
    except np.linalg.LinAlgError as exc:
        raise StationaryError("singular stationary system; chain not ergodic") from exc
    if not np.all(np.isfinite(pi)):
        raise StationaryError("non-finite stationary solution")
    return _finish(pi)


def _power(step, N, tol=POWER_TOL, max_iter=POWER_MAX_ITER):
    pi = np.full(N, 1.0 / N)
    for _ in range(max_iter):
        nxt = step(pi)
        if np.abs(nxt - pi).sum() <= tol:
            return _finish(nxt)
        pi = nxt
    raise StationaryError(f"power iteration did not converge in {max_iter} steps")


def _check_residual(pi, step):
    res = np.abs(step(pi) - pi).sum()
    if res > RESIDUAL_TOL:
        raise StationaryError(f"stationary residual {res:.3g} exceeds {RESIDUAL_TOL}")


def stationary(P) -> Distribution:
    """Stationary distribution of a row-stochastic matrix of size ``2**L``.

    Direct solve of ``(P^T - I) x = 0`` with the last equation replaced by
    ``sum(x) = 1`` up to ``2**DENSE_MAX`` states, power iteration above.
    """
    P = np.asarray(P, dtype=float)
    N = len(P)
    if N <= 1 << DENSE_MAX:
        pi = _direct(P)
    else:
        pi = _power(lambda v: v @ P, N)
    _check_residual(pi, lambda v: v @ P)
    return Distribution(pi)


def chain_stationary(chain: InducedChain) -> Distribution:
    """Stationary law of a path chain.

    Up to ``DENSE_MAX`` positions this peels one position at a time (see
    :func:`_peel`), solving systems of size 2, 4, ..., ``2**(L-1)`` instead of
    one of size ``2**L``. Longer chains use matrix-free power iteration.
    """
    L = len(chain)
    if L > L_MAX:
        raise ResourceGuardError(f"chain length {L} exceeds L_MAX={L_MAX}")
    if L <= DENSE_MAX:
        return Distribution(_peel(chain.params[None])[0])
    pi = _power(lambda v: apply_joint(chain, v), 1 << L)
    _check_residual(pi, lambda v: apply_joint(chain, v))
    return Distribution(pi)


def _peel(params):
    """Stationary laws for a stack of chains (B, L, 4), shape (B, 2**L).

    Positions are added one at a time. With ``pi`` the stationary law of the
    first ``j`` positions and ``P`` their joint matrix, the mass ``u`` of
    states where position ``j`` is 0 satisfies ``u = (u*d + pi*c) @ P``, where
    ``c`` is the stay-at-0 probability from state 1 and ``d`` the stay-at-0
    difference between states 0 and 1, both read at the parent state. So
    ``(I - P^T diag(d)) u = P^T (pi*c)``: a system half the size of the full
    one, and nonsingular because ``|d| < 1`` on an ergodic chain.
    """
    B, L, _ = params.shape
    a, b = params[:, 0, 0], params[:, 0, 1]
    pi = np.stack([b, 1.0 - a], -1) / (1.0 - a + b)[:, None]
    # transposed joint matrix of the positions added so far
    PT = np.stack([np.stack([a, b], -1), np.stack([1.0 - a, 1.0 - b], -1)], 1)
    for j in range(1, L):
        a, b, c, w = (params[:, j, q, None] for q in range(4))
        N = PT.shape[1]
        half = N // 2
        d = np.empty((B, N))
        d[:, :half], d[:, half:] = a - b, c - w
        keep = np.empty((B, N))
        keep[:, :half], keep[:, half:] = b, w
        M = np.eye(N) - PT * d[:, None, :]
        rhs = np.einsum("bij,bj->bi", PT, pi * keep)
        try:
            u = np.linalg.solve(M, rhs[..., None])[..., 0]
        except np.linalg.LinAlgError as exc:
            raise StationaryError("singular stationary system; chain not ergodic") from exc
        pi = np.concatenate((u, pi - u), axis=1)
        if j == L - 1:
            break
        # stay[x] for source rows x = (prefix, s_j); columns of P^T
        stay = np.empty((B, 1, 2 * N))
        stay[:, 0, :half], stay[:, 0, half:N] = a, c
        stay[:, 0, N:N + half], stay[:, 0, N + half:] = b, w
        nxt = np.empty((B, 2 * N, 2 * N))
        nxt[:, :N, :N] = nxt[:, :N, N:] = PT
        nxt[:, N:, :] = nxt[:, :N, :]
        nxt[:, :N] *= stay
        nxt[:, N:] *= 1.0 - stay
        PT = nxt
    if not np.all(np.isfinite(pi)):
        raise StationaryError("non-finite stationary solution")
    pi = np.where(pi < 0.0, 0.0, pi)
    pi /= pi.sum(axis=1, keepdims=True)
    worst = np.abs(_apply_batch(params, pi) - pi).sum(axis=1).max()
    if worst > RESIDUAL_TOL:
        raise StationaryError(f"stationary residual {worst:.3g} exceeds {RESIDUAL_TOL}")
    return pi


BATCH_ENTRIES = 1 << 21  # joint-matrix entries per stacked solve (16 MB of floats)


def last_marginals(params) -> np.ndarray:
    """P(last state = 1) for a stack of chains (B, L, 4), solved in batches."""
    params = np.asarray(params, dtype=float)
    B, L, _ = params.shape
    if L > L_MAX:
        raise ResourceGuardError(f"chain length {L} exceeds L_MAX={L_MAX}")
    if L > DENSE_MAX:
        return np.array([chain_stationary(InducedChain(p)).b for p in params])
    N = 1 << L
    step = max(1, BATCH_ENTRIES // (N * N // 4))
    out = np.empty(B)
    for lo in range(0, B, step):
        pi = _peel(params[lo:lo + step])
        out[lo:lo + step] = pi[:, N // 2:].sum(axis=1)
    return out


def marginalize(d: Distribution, coords) -> Distribution:
    """Sum out every coordinate not in ``coords`` (0-based positions).

    Kept coordinates retain their relative order in the index convention.
    """
    L = d.dim
    keep = sorted(set(int(c) for c in coords))
    if not keep or keep[0] < 0 or keep[-1] >= L:
        raise ValueError(f"coords must be a nonempty subset of 0..{L - 1}")
    t = np.asarray(d.probs).reshape((2,) * L)
    drop = tuple(L - 1 - j for j in range(L) if j not in keep)
    out = t.sum(axis=drop) if drop else t
    return Distribution(out.reshape(-1))


def last_marginal(d: Distribution) -> Distribution:
    b = d.b
    return Distribution(np.array([1.0 - b, b]))


def path_chain(inst: ProblemInstance, nodes, policies) -> InducedChain:
    """Induced chain over ``nodes`` (root first, each the parent of the next)."""
    return InducedChain([inst.induced(i, z) for i, z in zip(nodes, policies)])


def node_marginal(inst: ProblemInstance, zeta, i: int) -> Distribution:
    """Stationary law of node ``i`` under the policy profile ``zeta``.

    Only the root-to-``i`` path influences node ``i``, and that path is a
    Markov chain on its own.
    """
    path = inst.tree.path_to_root(i)[::-1]
    chain = path_chain(inst, path, [zeta[j] for j in path])
    return last_marginal(chain_stationary(chain))
