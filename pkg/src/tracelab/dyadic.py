"""Integer-indexed dyadic cubes, selected layers and Whitney boxes.

A cube at level ``k`` with index ``m`` is the semi-open set
``2**-k * ((0, 1]^d + m)``.  All relations (containment, touching closures,
ancestors) are decided with integer arithmetic on ``(k, m)``; floats only
appear when a cube is realized as a :class:`Box`.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .errors import DomainError, LevelOutOfRange, NotSelectedLayer

#: finest selected layer accepted by layer operations (level 2**MAX_LAYER)
MAX_LAYER = 4
MAX_DIM = 3


@dataclass(frozen=True)
class Box:
    """Semi-open axis-aligned box ``prod_i (lo_i, hi_i]``."""

    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        if len(lo) != len(hi) or not lo:
            raise DomainError("lo and hi must be nonempty and of equal length")
        if any(a >= b for a, b in zip(lo, hi)):
            raise DomainError(f"degenerate box lo={lo} hi={hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def widths(self) -> tuple:
        return tuple(b - a for a, b in zip(self.lo, self.hi))

    @property
    def volume(self) -> float:
        return math.prod(self.widths)

    @property
    def center(self) -> tuple:
        return tuple(0.5 * (a + b) for a, b in zip(self.lo, self.hi))

    def contains(self, x) -> bool:
        return all(a < xi <= b for a, xi, b in zip(self.lo, x, self.hi))

    def contains_closed(self, other: "Box") -> bool:
        return all(a <= c and d <= b for a, b, c, d in zip(self.lo, self.hi, other.lo, other.hi))

    def intersects(self, other: "Box") -> bool:
        """Nonempty intersection of the semi-open boxes."""
        return all(a < d and c < b for a, b, c, d in zip(self.lo, self.hi, other.lo, other.hi))

    def closures_meet(self, other: "Box") -> bool:
        return all(a <= d and c <= b for a, b, c, d in zip(self.lo, self.hi, other.lo, other.hi))

    def inflate(self, amount) -> "Box":
        return Box(tuple(a - amount for a in self.lo), tuple(b + amount for b in self.hi))

    def horizontal(self) -> "Box":
        """Drop the last coordinate."""
        return Box(self.lo[:-1], self.hi[:-1])

    def cross(self, lo: float, hi: float) -> "Box":
        return Box(self.lo + (lo,), self.hi + (hi,))


@dataclass(frozen=True, order=True)
class CubeIndex:
    level: int
    index: tuple

    def __post_init__(self):
        idx = tuple(int(v) for v in self.index)
        if not 1 <= len(idx) <= MAX_DIM:
            raise DomainError(f"dimension must be in 1..{MAX_DIM}, got {len(idx)}")
        object.__setattr__(self, "index", idx)
        object.__setattr__(self, "level", int(self.level))

    @property
    def dim(self) -> int:
        return len(self.index)

    def parent(self, levels: int = 1) -> "CubeIndex":
        # arithmetic shift floors, matching the (0, 1] convention
        return CubeIndex(self.level - levels, tuple(m >> levels for m in self.index))

    def children(self) -> list:
        offs = itertools.product((0, 1), repeat=self.dim)
        return [CubeIndex(self.level + 1, tuple(2 * m + o for m, o in zip(self.index, off))) for off in offs]

    def contains_cube(self, other: "CubeIndex") -> bool:
        if other.level < self.level or other.dim != self.dim:
            return False
        return other.parent(other.level - self.level) == self


@dataclass(frozen=True)
class LayerId:
    """Selected layer ``Q_{d, 2**j}``; ``j = -1`` is read as level 1."""

    j: int

    def __post_init__(self):
        if self.j < -1:
            raise LevelOutOfRange(f"layer index must be >= -1, got {self.j}")

    @property
    def level(self) -> int:
        return layer_level(self.j)


def layer_level(j: int) -> int:
    if j < -1:
        raise LevelOutOfRange(f"layer index must be >= -1, got {j}")
    return 1 if j == -1 else 2 ** j


def selected_layer_of(level: int) -> int:
    """Return j with level == 2**j, or raise NotSelectedLayer."""
    if level < 1 or level & (level - 1):
        raise NotSelectedLayer(f"level {level} is not a power of two")
    return level.bit_length() - 1


def edge_length(Q: CubeIndex) -> float:
    return math.ldexp(1.0, -Q.level)


def realize(Q: CubeIndex) -> Box:
    h = edge_length(Q)
    return Box(tuple(m * h for m in Q.index), tuple((m + 1) * h for m in Q.index))


def locate(x, k: int) -> CubeIndex:
    """The level-k cube whose semi-open realization contains ``x``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    # scaling by 2**k is exact, so the ceiling is exact as well
    m = np.ceil(np.ldexp(x, k)).astype(np.int64) - 1
    return CubeIndex(k, tuple(int(v) for v in m))


def locate_many(x: np.ndarray, k) -> np.ndarray:
    """Vectorized :func:`locate`: rows of ``x`` -> integer index rows."""
    x = np.asarray(x, dtype=float)
    k = np.asarray(k)
    if k.ndim:
        k = k[:, None]
    return np.ceil(np.ldexp(x, k)).astype(np.int64) - 1


def touching_range(m: int, k: int, k2: int) -> range:
    """Indices at level k2 whose closed 1-D cells meet the closure of cell m at level k."""
    if k2 >= k:
        s = 1 << (k2 - k)
        return range(m * s - 1, (m + 1) * s + 1)
    s = 1 << (k - k2)
    lo = -((-m) // s) - 1
    hi = (m + 1) // s
    return range(lo, hi + 1)


def _touching(Q: CubeIndex, k2: int) -> Iterator[CubeIndex]:
    ranges = [touching_range(m, Q.level, k2) for m in Q.index]
    for idx in itertools.product(*ranges):
        yield CubeIndex(k2, idx)


def neighbors(Q: CubeIndex) -> set:
    """All Q' with edge ratio in [1/2, 2] whose closure meets Q's (Q included)."""
    out = set()
    for k2 in (Q.level - 1, Q.level, Q.level + 1):
        out.update(_touching(Q, k2))
    return out


def selected_neighbors(Q: CubeIndex) -> set:
    """Selected neighbors of a cube in a selected layer (Q included)."""
    j = selected_layer_of(Q.level)
    out = set(_touching(Q, Q.level))
    coarse = layer_level(j - 1)
    if coarse != Q.level:
        out.update(_touching(Q, coarse))
    return out


def selected_level(k: int) -> int:
    """Level 2**j of the selected layer bracketing k, i.e. 2**j <= k < 2**(j+1)."""
    if k < 1:
        raise LevelOutOfRange(f"selected ancestor needs level >= 1, got {k}")
    return 1 << (k.bit_length() - 1)


def selected_ancestor(Q: CubeIndex) -> CubeIndex:
    return Q.parent(Q.level - selected_level(Q.level))


def whitney_box(Q: CubeIndex) -> Box:
    h = edge_length(Q)
    return realize(Q).cross(h, 2 * h)


def inflated_whitney(Q: CubeIndex) -> Box:
    """The ell(Q)/4 sup-metric neighborhood of the Whitney box."""
    return whitney_box(Q).inflate(edge_length(Q) / 4)


def level_cubes(k: int, region: Box) -> Iterator[CubeIndex]:
    """Cubes of level k meeting a bounded semi-open region, streamed."""
    scale = math.ldexp(1.0, k)
    ranges = []
    for a, b in zip(region.lo, region.hi):
        lo = math.floor(a * scale)
        hi = math.ceil(b * scale) - 1
        ranges.append(range(lo, hi + 1))
    for idx in itertools.product(*ranges):
        yield CubeIndex(k, idx)


def level_index_grid(k: int, region: Box) -> np.ndarray:
    """Array version of :func:`level_cubes`: (n, d) integer indices."""
    scale = math.ldexp(1.0, k)
    axes = [np.arange(math.floor(a * scale), math.ceil(b * scale), dtype=np.int64)
            for a, b in zip(region.lo, region.hi)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in mesh], axis=1)


def layer_cubes(j: int, region: Box, j_max: int = MAX_LAYER) -> Iterator[CubeIndex]:
    if j > j_max:
        raise LevelOutOfRange(f"layer {j} exceeds cap j_max={j_max}")
    return level_cubes(layer_level(j), region)


def whitney_level(t: np.ndarray) -> np.ndarray:
    """Level k with 2**-k < t <= 2**(1-k), computed exactly from the binary exponent."""
    mant, ex = np.frexp(np.asarray(t, dtype=float))
    return np.where(mant == 0.5, 2 - ex, 1 - ex).astype(np.int64)


def cube_from_box(box: Box) -> CubeIndex:
    """Inverse of :func:`realize` for boxes that are dyadic cubes."""
    w = box.widths[0]
    k = -int(round(math.log2(w)))
    Q = locate(np.array(box.hi), k)
    if realize(Q) != box:
        raise DomainError(f"{box} is not a dyadic cube")
    return Q
