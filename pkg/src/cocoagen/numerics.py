"""
Random sampling and pseudoinverse primitives.

Everything here is a pure function of its inputs. Randomness enters only
through :class:`RngStream`, a (seed, stream_id) pair that maps to an
independent numpy ``Generator``.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

__all__ = [
    "NumericalFailure",
    "RngStream",
    "stream_id_for",
    "sample_gaussian_matrix",
    "default_rel_tol",
    "pseudoinverse",
    "solve_regularized",
]

_MASK64 = (1 << 64) - 1


class NumericalFailure(RuntimeError):
    """Raised when an SVD/eigendecomposition does not converge."""

    def __init__(self, message, shape=None):
        super().__init__(message if shape is None else f"{message} (shape={shape})")
        self.shape = shape


def stream_id_for(*keys) -> int:
    """Stable 64-bit stream id derived from arbitrary hashable-by-repr keys.

    Python's builtin ``hash`` is salted per process, so a cryptographic digest
    is used instead; the result is identical across runs and workers.
    """
    digest = hashlib.blake2b(repr(keys).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


@dataclass(frozen=True)
class RngStream:
    """A reproducible random stream identified by ``(seed, stream_id)``.

    Distinct ``stream_id`` values give statistically independent sequences
    (numpy ``SeedSequence`` spawn keys), so trial ``t`` of a sweep can be
    replayed in isolation or on any worker.
    """

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        if not (0 <= self.seed <= _MASK64 and 0 <= self.stream_id <= _MASK64):
            raise ValueError("seed and stream_id must be unsigned 64-bit integers")

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id,))
        return np.random.Generator(np.random.PCG64(seq))

    def child(self, *keys) -> "RngStream":
        return RngStream(self.seed, stream_id_for(self.stream_id, *keys))


def sample_gaussian_matrix(n, p, rng):
    """Draw an ``n x p`` matrix of i.i.d. standard normal entries.

    Parameters
    ----------
    n, p : int
        Shape of the matrix.
    rng : RngStream or numpy.random.Generator
        Source of randomness. An ``RngStream`` always restarts its sequence,
        so two calls with the same stream give the same matrix.

    Returns
    -------
    ndarray of shape (n, p)
    """
    if isinstance(rng, RngStream):
        rng = rng.generator()
    return rng.standard_normal((int(n), int(p)))


def default_rel_tol(shape) -> float:
    return max(shape) * np.finfo(float).eps


def pseudoinverse(M, rel_tol=None):
    """Moore-Penrose pseudoinverse via the SVD.

    Singular values below ``rel_tol * s_max`` are treated as zero. The default
    cutoff is ``max(M.shape) * eps``.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {M.shape}")
    if rel_tol is None:
        rel_tol = default_rel_tol(M.shape)
    if rel_tol <= 0:
        raise ValueError("rel_tol must be positive")
    if M.size == 0:
        return np.zeros(M.shape[::-1])
    try:
        u, s, vt = np.linalg.svd(M, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure("SVD did not converge", M.shape) from exc
    cutoff = rel_tol * (s[0] if s.size else 0.0)
    keep = s > cutoff
    s_inv = np.zeros_like(s)
    s_inv[keep] = 1.0 / s[keep]
    return (vt.T * s_inv) @ u.T


def solve_regularized(G, b, lam, rel_tol=None):
    """Return ``(G + lam*I)^+ b`` for a symmetric positive semidefinite ``G``.

    For ``lam > 0`` the matrix is invertible and this is the ordinary solve;
    for ``lam == 0`` the null-space component of ``b`` is dropped.
    """
    G = np.asarray(G, dtype=float)
    b = np.asarray(b, dtype=float)
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise ValueError(f"G must be square, got shape {G.shape}")
    if b.shape[0] != G.shape[0]:
        raise ValueError(f"dimension mismatch: G is {G.shape}, b has {b.shape[0]} rows")
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    if rel_tol is None:
        rel_tol = default_rel_tol(G.shape)
    H = G + lam * np.eye(G.shape[0])
    try:
        w, V = np.linalg.eigh(H)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure("eigendecomposition did not converge", G.shape) from exc
    top = np.max(np.abs(w)) if w.size else 0.0
    keep = w > rel_tol * top
    w_inv = np.zeros_like(w)
    w_inv[keep] = 1.0 / w[keep]
    return V @ (w_inv * (V.T @ b)) if b.ndim == 1 else V @ (w_inv[:, None] * (V.T @ b))
