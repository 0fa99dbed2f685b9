"""
Linear-model instances and column partitions of the unknowns.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .numerics import RngStream, sample_gaussian_matrix

__all__ = [
    "PartitionSpec",
    "ProblemInstance",
    "generate_instance",
    "make_partition",
    "slice_block",
    "instance_to_json",
    "instance_from_json",
]


@dataclass(frozen=True)
class PartitionSpec:
    """Contiguous block sizes ``(p_1, ..., p_K)`` of ``p`` unknowns."""

    p: int
    sizes: tuple

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        object.__setattr__(self, "sizes", sizes)
        if len(sizes) < 1:
            raise ValueError("a partition needs at least one block")
        if any(s < 1 for s in sizes):
            raise ValueError(f"every block size must be >= 1, got {sizes}")
        if sum(sizes) != self.p:
            raise ValueError(f"block sizes {sizes} sum to {sum(sizes)}, expected p={self.p}")

    @property
    def K(self) -> int:
        return len(self.sizes)

    @property
    def offsets(self) -> tuple:
        return tuple(int(o) for o in np.concatenate(([0], np.cumsum(self.sizes))))

    def block_slice(self, k: int) -> slice:
        """Column slice of block ``k`` (0-based)."""
        if not 0 <= k < self.K:
            raise IndexError(f"block index {k} out of range for K={self.K}")
        off = self.offsets
        return slice(off[k], off[k + 1])

    def split(self, vec):
        """Split a length-``p`` vector into its K blocks."""
        vec = np.asarray(vec)
        if vec.shape[0] != self.p:
            raise ValueError(f"vector length {vec.shape[0]} != p={self.p}")
        return [vec[self.block_slice(k)] for k in range(self.K)]

    def label(self) -> str:
        return "|".join(str(s) for s in self.sizes)

    @classmethod
    def from_label(cls, label: str) -> "PartitionSpec":
        sizes = tuple(int(s) for s in label.split("|"))
        return cls(sum(sizes), sizes)


def make_partition(p, K=None, sizes=None):
    """Build a :class:`PartitionSpec`.

    With explicit ``sizes`` they are validated as given. Otherwise the
    balanced rule is used: the first ``p mod K`` blocks get ``ceil(p/K)``
    columns and the rest ``floor(p/K)``.

    >>> make_partition(5, 2).sizes
    (3, 2)
    """
    if sizes is not None:
        sizes = tuple(int(s) for s in sizes)
        if K is not None and K != len(sizes):
            raise ValueError(f"K={K} does not match {len(sizes)} explicit sizes")
        if len(sizes) > p:
            raise ValueError(f"K={len(sizes)} exceeds p={p}")
        return PartitionSpec(p, sizes)
    if K is None:
        raise ValueError("either K or sizes must be given")
    if K < 1:
        raise ValueError("K must be >= 1")
    if K > p:
        raise ValueError(f"K={K} exceeds p={p}")
    base, extra = divmod(p, K)
    return PartitionSpec(p, tuple(base + 1 if k < extra else base for k in range(K)))


def slice_block(A, spec: PartitionSpec, k: int):
    """Return the column block ``A_k`` (``k`` is 0-based)."""
    A = np.asarray(A)
    if A.shape[1] != spec.p:
        raise ValueError(f"A has {A.shape[1]} columns, partition expects {spec.p}")
    return A[:, spec.block_slice(k)]


@dataclass(frozen=True)
class ProblemInstance:
    """Training data ``y = A x_true + w`` with i.i.d. N(0, noise_std^2) noise."""

    A: np.ndarray
    x_true: np.ndarray
    y: np.ndarray
    noise_std: float = 0.0
    seed: int | None = None
    stream_id: int | None = None
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def p(self) -> int:
        return self.A.shape[1]


def generate_instance(n, p, x_true, noise_std, rng: RngStream) -> ProblemInstance:
    """Sample ``A`` with i.i.d. standard normal entries and form ``y``.

    ``A`` is drawn first from the stream and the noise (if any) afterwards,
    so noiseless and noisy instances built from the same stream share ``A``.
    """
    x_true = np.asarray(x_true, dtype=float)
    if x_true.shape != (p,):
        raise ValueError(f"x_true has shape {x_true.shape}, expected ({p},)")
    if noise_std < 0:
        raise ValueError("noise_std must be nonnegative")
    gen = rng.generator()
    A = sample_gaussian_matrix(n, p, gen)
    y = A @ x_true
    if noise_std > 0:
        y = y + noise_std * gen.standard_normal(n)
    return ProblemInstance(A, x_true, y, float(noise_std), rng.seed, rng.stream_id)


def instance_to_json(inst: ProblemInstance) -> str:
    doc = {
        "format": "cocoagen.instance/1",
        "n": inst.n,
        "p": inst.p,
        "seed": inst.seed,
        "stream_id": inst.stream_id,
        "noise_std": inst.noise_std,
        "A": inst.A.ravel().tolist(),
        "x_true": inst.x_true.tolist(),
        "y": inst.y.tolist(),
    }
    return json.dumps(doc)


def instance_from_json(text: str) -> ProblemInstance:
    doc = json.loads(text)
    n, p = int(doc["n"]), int(doc["p"])
    A = np.asarray(doc["A"], dtype=float).reshape(n, p)
    x = np.asarray(doc["x_true"], dtype=float)
    y = np.asarray(doc["y"], dtype=float)
    if x.shape != (p,) or y.shape != (n,):
        raise ValueError("instance document has inconsistent dimensions")
    return ProblemInstance(A, x, y, float(doc.get("noise_std", 0.0)),
                           doc.get("seed"), doc.get("stream_id"))
