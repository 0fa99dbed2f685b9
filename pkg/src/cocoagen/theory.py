"""
Closed-form predictions of the generalization error of CoCoA iterates.

With Gaussian regressors the expected test error of an estimate equals
``||x - x_hat||^2``. After the first round from zero, its expectation over
the training matrix is ``sum_k ||x_k||^2 * alpha_k`` where ``alpha_k`` depends
only on the block sizes and ``n``. Blocks with ``p_k`` in ``{n-1, n, n+1}``
make the relevant inverse-Wishart moment diverge; such coefficients are
carried as the explicit :data:`INF` value.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import total_ordering

import numpy as np

from .problem import PartitionSpec, make_partition

__all__ = [
    "ExtendedReal",
    "INF",
    "TheoryPrediction",
    "PartitionAdvice",
    "is_critical",
    "gamma_coefficient",
    "wishart_pinv_coefficient",
    "alpha_coefficient",
    "predict_first_iteration_error",
    "recurse_error",
    "extrapolate_block_errors",
    "advise_partition",
]


@total_ordering
@dataclass(frozen=True)
class ExtendedReal:
    """A nonnegative real or ``+inf``.

    Infinity is a flag rather than a float so that a diverging theoretical
    value is never confused with overflow. ``0 * inf`` is ``0``.
    """

    value: float = 0.0
    infinite: bool = False

    def __post_init__(self):
        if self.infinite:
            object.__setattr__(self, "value", math.inf)
        elif not (self.value >= 0 and math.isfinite(self.value)):
            raise ValueError(f"finite ExtendedReal must be >= 0, got {self.value}")

    @classmethod
    def of(cls, x) -> "ExtendedReal":
        if isinstance(x, ExtendedReal):
            return x
        if x == math.inf:
            return INF
        return cls(float(x))

    @property
    def is_inf(self) -> bool:
        return self.infinite

    def __add__(self, other):
        other = ExtendedReal.of(other)
        if self.infinite or other.infinite:
            return INF
        return ExtendedReal(self.value + other.value)

    __radd__ = __add__

    def __mul__(self, other):
        other = ExtendedReal.of(other)
        if self.value == 0 or other.value == 0:
            return ExtendedReal(0.0)
        if self.infinite or other.infinite:
            return INF
        return ExtendedReal(self.value * other.value)

    __rmul__ = __mul__

    def __eq__(self, other):
        try:
            other = ExtendedReal.of(other)
        except (TypeError, ValueError):
            return NotImplemented
        return self.infinite == other.infinite and (self.infinite or self.value == other.value)

    def __lt__(self, other):
        other = ExtendedReal.of(other)
        if self.infinite:
            return False
        return other.infinite or self.value < other.value

    def __hash__(self):
        return hash((self.infinite, None if self.infinite else self.value))

    def __float__(self):
        return self.value

    def __str__(self):
        return "inf" if self.infinite else repr(self.value)

    def to_json(self):
        return "inf" if self.infinite else self.value

    @classmethod
    def from_json(cls, v):
        return INF if v == "inf" else cls(float(v))


INF = ExtendedReal(infinite=True)


def _esum(values):
    values = [ExtendedReal.of(v) for v in values]
    if any(v.infinite for v in values):
        return INF
    return ExtendedReal(math.fsum(v.value for v in values))


def is_critical(p_k, n) -> bool:
    return abs(int(p_k) - int(n)) <= 1


def gamma_coefficient(p_k, n, exact=False):
    """Expected ``tr((A_k A_k^T)^+)`` for an ``n x p_k`` Gaussian block.

    Equals ``min(p_k, n) / (max(p_k, n) - min(p_k, n) - 1)`` away from the
    critical band and :data:`INF` inside it. ``exact=True`` returns a
    ``Fraction`` (or ``INF``).
    """
    if p_k < 1 or n < 1:
        raise ValueError("p_k and n must be >= 1")
    if is_critical(p_k, n):
        return INF
    lo, hi = min(p_k, n), max(p_k, n)
    frac = Fraction(lo, hi - lo - 1)
    return frac if exact else ExtendedReal(float(frac))


def wishart_pinv_coefficient(p_k, n, exact=False):
    """Scalar ``c`` with ``E[(A_k A_k^T)^+] = c I_n`` for Gaussian ``A_k``."""
    if p_k < 1 or n < 1:
        raise ValueError("p_k and n must be >= 1")
    if p_k > n + 1:
        frac = Fraction(1, p_k - n - 1)
    elif p_k < n - 1:
        frac = Fraction(p_k, n * (n - p_k - 1))
    else:
        return INF
    return frac if exact else ExtendedReal(float(frac))


def alpha_coefficient(k, spec: PartitionSpec, n):
    """Weight of ``||x_k||^2`` in the first-iteration error (``k`` 0-based).

    ``(K^2 + (1 - 2K) min(p_k, n)/p_k + sum_{i != k} gamma_i) / K^2``.
    """
    if not 0 <= k < spec.K:
        raise IndexError(f"block index {k} out of range for K={spec.K}")
    K = spec.K
    others = _esum(gamma_coefficient(spec.sizes[i], n) for i in range(K) if i != k)
    if others.infinite:
        return INF
    p_k = spec.sizes[k]
    base = K * K + (1 - 2 * K) * min(p_k, n) / p_k
    return ExtendedReal(max((base + others.value) / (K * K), 0.0))


@dataclass
class TheoryPrediction:
    n: int
    spec: PartitionSpec
    gamma: list
    alpha: list
    epsilon_G: ExtendedReal
    block_norms_sq: list

    @property
    def critical_blocks(self):
        return [k for k, s in enumerate(self.spec.sizes) if is_critical(s, self.n)]

    def to_dict(self):
        return {
            "n": self.n,
            "p": self.spec.p,
            "K": self.spec.K,
            "sizes": list(self.spec.sizes),
            "gamma": [g.to_json() for g in self.gamma],
            "alpha": [a.to_json() for a in self.alpha],
            "epsilon_G": self.epsilon_G.to_json(),
            "block_norms_sq": list(self.block_norms_sq),
        }

    @classmethod
    def from_dict(cls, d):
        spec = PartitionSpec(int(d["p"]), tuple(d["sizes"]))
        if int(d["K"]) != spec.K:
            raise ValueError("K does not match sizes")
        return cls(int(d["n"]), spec,
                   [ExtendedReal.from_json(g) for g in d["gamma"]],
                   [ExtendedReal.from_json(a) for a in d["alpha"]],
                   ExtendedReal.from_json(d["epsilon_G"]),
                   [float(b) for b in d["block_norms_sq"]])


def _weighted(alpha, weights):
    return _esum(a * ExtendedReal(float(w)) for a, w in zip(alpha, weights))


def predict_first_iteration_error(x_true, spec: PartitionSpec, n, block_norms_sq=None):
    """Expected ``||x - x_hat^1||^2`` after one round from the zero state.

    ``block_norms_sq`` overrides the block norms computed from ``x_true``
    (pass ``x_true=None`` in that case).
    """
    if block_norms_sq is None:
        x_true = np.asarray(x_true, dtype=float)
        if x_true.shape != (spec.p,):
            raise ValueError(f"x_true has shape {x_true.shape}, expected ({spec.p},)")
        block_norms_sq = [float(b @ b) for b in spec.split(x_true)]
    elif len(block_norms_sq) != spec.K:
        raise ValueError("need one block norm per block")
    gamma = [gamma_coefficient(s, n) for s in spec.sizes]
    alpha = [alpha_coefficient(k, spec, n) for k in range(spec.K)]
    eps = _weighted(alpha, block_norms_sq)
    return TheoryPrediction(int(n), spec, gamma, alpha, eps, [float(b) for b in block_norms_sq])


def recurse_error(block_errors, spec: PartitionSpec, n):
    """One-step error map ``sum_k alpha_k e_k`` (valid for large iteration counts).

    ``block_errors[k]`` is the current expected squared error on block ``k``.
    This relies on treating the iterate as independent of the training
    matrix, so it is an approximation with a bounded but unquantified gap.
    """
    if len(block_errors) != spec.K:
        raise ValueError("need one error per block")
    if any(e < 0 for e in block_errors):
        raise ValueError("block errors must be nonnegative")
    alpha = [alpha_coefficient(k, spec, n) for k in range(spec.K)]
    return _weighted(alpha, block_errors)


def extrapolate_block_errors(block_errors, spec: PartitionSpec, n, steps):
    """Iterate ``e_k <- alpha_k e_k`` for ``steps`` rounds.

    Only the aggregate one-step map is derived; the blockwise form is an
    extrapolation. Returns a list of per-step block-error lists (each entry an
    :class:`ExtendedReal`), starting with the input.
    """
    alpha = [alpha_coefficient(k, spec, n) for k in range(spec.K)]
    cur = [ExtendedReal.of(float(e)) for e in block_errors]
    out = [cur]
    for _ in range(steps):
        cur = [a * e for a, e in zip(alpha, cur)]
        out.append(cur)
    return out


@dataclass
class PartitionAdvice:
    n: int
    p: int
    K: int
    margin: int
    spec: PartitionSpec
    feasible: bool
    score: ExtendedReal
    violating_blocks: list = field(default_factory=list)
    candidates: list = field(default_factory=list)   # (sizes, score) best first
    neighbors: list = field(default_factory=list)    # (sizes, alpha list, score)

    def to_dict(self):
        return {
            "n": self.n, "p": self.p, "K": self.K, "margin": self.margin,
            "sizes": list(self.spec.sizes), "feasible": self.feasible,
            "score": self.score.to_json(),
            "violating_blocks": self.violating_blocks,
            "candidates": [[list(s), sc.to_json()] for s, sc in self.candidates],
            "neighbors": [[list(s), [a.to_json() for a in al], sc.to_json()]
                          for s, al, sc in self.neighbors],
        }


def _score(sizes, n, norms=None):
    spec = PartitionSpec(sum(sizes), sizes)
    norms = list(sizes) if norms is None else norms
    return predict_first_iteration_error(None, spec, n, block_norms_sq=norms).epsilon_G


def _rank_key(sizes, n, margin, norms=None):
    # lexicographic: total margin violation, imbalance, proxy error
    violation = sum(max(0, margin + 1 - abs(s - n)) for s in sizes)
    return (violation, max(sizes) - min(sizes), _score(sizes, n, norms))


def _partitions(p, K, lo=1):
    """Nonincreasing integer partitions of ``p`` into ``K`` parts >= ``lo``."""
    if K == 1:
        if p >= lo:
            yield (p,)
        return
    for first in range(p - lo * (K - 1), lo - 1, -1):
        if first * K < p:
            break
        for rest in _partitions(p - first, K - 1, lo):
            if rest[0] <= first:
                yield (first,) + rest


def _local_search(p, K, n, margin):
    cur = make_partition(p, K).sizes
    cur_key = _rank_key(cur, n, margin)
    steps = sorted({1, 2, 3, 5, 10, max(1, n // 2), n})
    improved = True
    while improved:
        improved = False
        for i, j in itertools.permutations(range(K), 2):
            for d in steps:
                if cur[i] - d < 1:
                    continue
                cand = list(cur)
                cand[i] -= d
                cand[j] += d
                cand = tuple(sorted(cand, reverse=True))
                key = _rank_key(cand, n, margin)
                if key < cur_key:
                    cur, cur_key, improved = cand, key, True
    return [cur]


def advise_partition(n, p, K, margin=2, sizes=None, block_norms_sq=None, top=5):
    """Recommend block sizes that keep every block away from ``n``.

    Candidates are ranked by total violation of ``|p_k - n| > margin``, then
    by imbalance ``max(p_k) - min(p_k)``, then by predicted first-iteration
    error. Balance comes before the score on purpose: the proxy error keeps
    falling as one node takes nearly all columns, which defeats distributing
    the work. The predicted error uses ``E||x_k||^2 = p_k`` (standard normal ``x``) unless
    ``block_norms_sq`` is given, which requires explicit ``sizes``.

    With explicit ``sizes`` the given spec is only evaluated. If no spec
    satisfies the margin, the best violating one is returned with
    ``feasible=False``.
    """
    if K < 1 or K > p:
        raise ValueError(f"need 1 <= K <= p, got K={K}, p={p}")
    if margin < 0:
        raise ValueError("margin must be >= 0")
    if block_norms_sq is not None and sizes is None:
        raise ValueError("block_norms_sq requires explicit sizes")
    if sizes is not None:
        spec = make_partition(p, K, sizes)
        ranked = [(spec.sizes, _rank_key(spec.sizes, n, margin, block_norms_sq))]
    else:
        if K <= 3:
            pool = list(_partitions(p, K))
        else:
            pool = _local_search(p, K, n, margin)
        ranked = sorted(((s, _rank_key(s, n, margin)) for s in pool), key=lambda t: t[1])
    best, best_key = ranked[0]
    spec = PartitionSpec(p, best)
    feasible = best_key[0] == 0
    violating = [k for k, s in enumerate(best) if abs(s - n) <= margin]
    neighbors = []
    if K >= 2:
        seen = set()
        for d in range(-(margin + 1), margin + 2):
            cand = list(best)
            cand[0] += d
            cand[1] -= d
            if d == 0 or min(cand) < 1:
                continue
            cand = tuple(cand)
            if cand in seen:
                continue
            seen.add(cand)
            cspec = PartitionSpec(p, cand)
            alpha = [alpha_coefficient(k, cspec, n) for k in range(K)]
            neighbors.append((cand, alpha, _score(cand, n)))
    return PartitionAdvice(n, p, K, margin, spec, feasible, best_key[2], violating,
                           [(s, key[2]) for s, key in ranked[:top]], neighbors)
