"""
CoCoA for column-partitioned least squares, its closed-form equivalent for
``lam == 0``, and the centralized least-squares baseline.

Each node ``k`` owns the columns ``A_k`` and the coefficients ``x_k``. In a
synchronous round every node solves its local quadratic subproblem against
the same shared estimate ``v_bar`` of ``A x``; the updates are then applied
and ``v_bar`` is advanced by ``sum_k A_k dx_k`` in node order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import NumericalFailure, default_rel_tol, pseudoinverse, solve_regularized
from .problem import PartitionSpec, ProblemInstance, slice_block

__all__ = [
    "SolverConfig",
    "SolverState",
    "SolveTrace",
    "NodeOperators",
    "initial_state",
    "local_update",
    "prepare_nodes",
    "cocoa_step",
    "cocoa_run",
    "closed_form_step",
    "stacked_block_pinv",
    "centralized_ls",
]


@dataclass(frozen=True)
class SolverConfig:
    """Parameters of a CoCoA run.

    ``sigma_prime`` is pinned to ``K`` and ``tau`` to 1 (the smoothness of the
    squared loss); anything else is rejected.
    """

    lam: float = 0.0
    T: int = 200
    K: int = 2
    rel_tol: float | None = None
    sigma_prime: float | None = None
    tau: float = 1.0

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")
        if self.T < 1:
            raise ValueError("T must be >= 1")
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if self.sigma_prime is None:
            object.__setattr__(self, "sigma_prime", float(self.K))
        elif self.sigma_prime != self.K:
            raise ValueError(f"sigma_prime must equal K={self.K}")
        if self.tau != 1.0:
            raise ValueError("tau must be 1 for the squared loss")


@dataclass
class SolverState:
    t: int
    x_hat: np.ndarray
    v: np.ndarray          # (K, n) local estimates of A x
    v_bar: np.ndarray

    def copy(self) -> "SolverState":
        return SolverState(self.t, self.x_hat.copy(), self.v.copy(), self.v_bar.copy())


@dataclass
class SolveTrace:
    snapshots: dict = field(default_factory=dict)   # t -> x_hat
    final: SolverState | None = None

    @property
    def x_hat(self):
        return self.final.x_hat


def initial_state(n, spec: PartitionSpec) -> SolverState:
    return SolverState(0, np.zeros(spec.p), np.zeros((spec.K, n)), np.zeros(n))


def local_update(A_k, y, v_bar, x_hat_k, lam, K, rel_tol=None):
    """Solve node ``k``'s local subproblem and return ``dx_k``.

    Computes ``-(K A_k^T A_k + lam I)^+ (lam x_k - A_k^T (y - v_bar))``. For
    ``lam == 0`` this is the same as ``A_k^+ (y - v_bar) / K``, which is what
    is evaluated in that case.
    """
    A_k = np.asarray(A_k, dtype=float)
    r = np.asarray(y, dtype=float) - np.asarray(v_bar, dtype=float)
    if lam == 0:
        return pseudoinverse(A_k, rel_tol) @ r / K
    G = K * (A_k.T @ A_k)
    rhs = -(lam * np.asarray(x_hat_k, dtype=float) - A_k.T @ r)
    return solve_regularized(G, rhs, lam, rel_tol)


class NodeOperators:
    """Per-node matrices that stay fixed over a run (factorized once).

    For ``lam == 0`` node ``k`` keeps ``A_k^+``; otherwise it keeps
    ``(K A_k^T A_k + lam I)^+``. :func:`cocoa_step` gives the same result with
    or without them, this only avoids refactoring at every round.
    """

    def __init__(self, A, spec: PartitionSpec, config: SolverConfig):
        self.lam = config.lam
        self.K = spec.K
        self.blocks = [slice_block(A, spec, k) for k in range(spec.K)]
        self.ops = []
        for A_k in self.blocks:
            if self.lam == 0:
                self.ops.append(pseudoinverse(A_k, config.rel_tol))
            else:
                H = self.K * (A_k.T @ A_k) + self.lam * np.eye(A_k.shape[1])
                tol = config.rel_tol if config.rel_tol is not None else default_rel_tol(H.shape)
                try:
                    w, V = np.linalg.eigh(H)
                except np.linalg.LinAlgError as exc:
                    raise NumericalFailure("eigendecomposition did not converge", H.shape) from exc
                keep = w > tol * np.max(np.abs(w))
                w_inv = np.where(keep, 1.0 / np.where(keep, w, 1.0), 0.0)
                self.ops.append((V * w_inv) @ V.T)

    def update(self, k, r, x_hat_k):
        if self.lam == 0:
            return self.ops[k] @ r / self.K
        return -(self.ops[k] @ (self.lam * x_hat_k - self.blocks[k].T @ r))


def prepare_nodes(instance: ProblemInstance, spec: PartitionSpec, config: SolverConfig):
    return NodeOperators(instance.A, spec, config)


def _check(instance, spec, config):
    if instance.p != spec.p:
        raise ValueError(f"instance has p={instance.p}, partition expects {spec.p}")
    if config.K != spec.K:
        raise ValueError(f"config K={config.K} does not match partition K={spec.K}")


def cocoa_step(state: SolverState, instance: ProblemInstance, spec: PartitionSpec,
               config: SolverConfig, nodes: NodeOperators | None = None) -> SolverState:
    """One synchronous CoCoA round; returns a new state."""
    _check(instance, spec, config)
    K = spec.K
    r = instance.y - state.v_bar
    dxs = []
    for k in range(K):
        sl = spec.block_slice(k)
        if nodes is not None:
            dxs.append(nodes.update(k, r, state.x_hat[sl]))
        else:
            dxs.append(local_update(slice_block(instance.A, spec, k), instance.y, state.v_bar,
                                    state.x_hat[sl], config.lam, K, config.rel_tol))
    x_hat = state.x_hat.copy()
    v = np.empty_like(state.v)
    v_bar = state.v_bar.copy()
    for k in range(K):
        sl = spec.block_slice(k)
        x_hat[sl] += dxs[k]
        contrib = instance.A[:, sl] @ dxs[k]
        v[k] = state.v_bar + K * contrib
        v_bar += contrib
    return SolverState(state.t + 1, x_hat, v, v_bar)


def cocoa_run(instance: ProblemInstance, spec: PartitionSpec, config: SolverConfig,
              record="default") -> SolveTrace:
    """Run ``config.T`` rounds from the zero state.

    ``record`` selects the snapshots kept in the trace: ``"default"`` keeps
    ``t in {0, 1, T}``, ``"all"`` keeps every iterate, and an iterable of
    ints keeps exactly those.
    """
    _check(instance, spec, config)
    T = config.T
    if record == "default":
        keep = {0, 1, T}
    elif record == "all":
        keep = set(range(T + 1))
    else:
        keep = {int(t) for t in record}
        if any(t < 0 or t > T for t in keep):
            raise ValueError(f"snapshot schedule {sorted(keep)} outside 0..{T}")
    nodes = prepare_nodes(instance, spec, config)
    state = initial_state(instance.n, spec)
    trace = SolveTrace()
    if 0 in keep:
        trace.snapshots[0] = state.x_hat.copy()
    for _ in range(T):
        state = cocoa_step(state, instance, spec, config, nodes)
        if state.t in keep:
            trace.snapshots[state.t] = state.x_hat.copy()
    trace.final = state
    return trace


def stacked_block_pinv(A, spec: PartitionSpec, rel_tol=None):
    """Stack ``A_1^+, ..., A_K^+`` vertically into a ``p x n`` matrix."""
    return np.vstack([pseudoinverse(slice_block(A, spec, k), rel_tol) for k in range(spec.K)])


def closed_form_step(x_hat, A_bar, A, y, K):
    """Apply ``x <- (I - A_bar A / K) x + A_bar y / K`` once (``lam == 0`` only)."""
    x_hat = np.asarray(x_hat, dtype=float)
    if A_bar.shape != (A.shape[1], A.shape[0]) or x_hat.shape != (A.shape[1],):
        raise ValueError("dimension mismatch between x_hat, A_bar and A")
    return x_hat - A_bar @ (A @ x_hat) / K + A_bar @ y / K


def centralized_ls(A, y, rel_tol=None):
    """Minimum-norm least-squares solution ``A^+ y``."""
    A = np.asarray(A, dtype=float)
    if A.shape[0] != np.shape(y)[0]:
        raise ValueError("dimension mismatch between A and y")
    return pseudoinverse(A, rel_tol) @ y
