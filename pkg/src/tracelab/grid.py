"""Sparse piecewise-constant functions on a dyadic grid of R^d."""
from __future__ import annotations

import math
from pathlib import Path
from typing import Optional

import numpy as np

from .dyadic import Box, CubeIndex, MAX_DIM
from .errors import DomainError, LevelError

_BASE = 1 << 20
_OFF = 1 << 19


def encode(idx: np.ndarray) -> np.ndarray:
    """Pack integer index rows into sortable int64 keys."""
    idx = np.asarray(idx, dtype=np.int64)
    if idx.size and (idx.min() < -_OFF or idx.max() >= _OFF):
        raise LevelError("cube index out of the encodable range")
    key = np.zeros(idx.shape[0], dtype=np.int64)
    for i in range(idx.shape[1]):
        key = key * _BASE + (idx[:, i] + _OFF)
    return key


def decode(keys: np.ndarray, dim: int) -> np.ndarray:
    keys = np.asarray(keys, dtype=np.int64)
    out = np.empty((len(keys), dim), dtype=np.int64)
    rest = keys.copy()
    for i in reversed(range(dim)):
        out[:, i] = rest % _BASE - _OFF
        rest //= _BASE
    return out


class _Table:
    __slots__ = ("keys", "values")

    def __init__(self, keys, values):
        self.keys, self.values = keys, values

    def lookup(self, keys: np.ndarray) -> np.ndarray:
        if len(self.keys) == 0:
            return np.zeros(len(keys))
        pos = np.searchsorted(self.keys, keys)
        pos = np.minimum(pos, len(self.keys) - 1)
        hit = self.keys[pos] == keys
        return np.where(hit, self.values[pos], 0.0)


class BoundaryGridFunction:
    """Piecewise-constant g on level-L cubes; absent cubes carry the value 0.

    ``flagged`` marks cubes whose value came from a quadrature that did not
    settle.
    """

    def __init__(self, level: int, idx, values, flagged=None, dim: Optional[int] = None):
        idx = np.asarray(idx, dtype=np.int64)
        if idx.ndim == 1:
            idx = idx[:, None] if dim in (None, 1) else idx.reshape(-1, dim)
        if idx.shape[0] == 0 and dim is not None:
            idx = idx.reshape(0, dim)
        values = np.asarray(values, dtype=float).ravel()
        if len(values) != len(idx):
            raise DomainError("index and value arrays differ in length")
        if not 1 <= idx.shape[1] <= MAX_DIM:
            raise DomainError(f"dimension must be in 1..{MAX_DIM}")
        flagged = np.zeros(len(values), bool) if flagged is None else np.asarray(flagged, bool)
        keys = encode(idx)
        order = np.argsort(keys, kind="stable")
        keys = keys[order]
        if len(keys) > 1 and np.any(keys[1:] == keys[:-1]):
            raise DomainError("duplicate cube in grid function")
        self.level = int(level)
        self.dim = idx.shape[1]
        self.keys = keys
        self.idx = idx[order]
        self.values = values[order]
        self.flagged = flagged[order]
        self._tables: dict = {}

    # -- construction -------------------------------------------------------

    @classmethod
    def from_dict(cls, level: int, mapping: dict, dim: Optional[int] = None) -> "BoundaryGridFunction":
        items = list(mapping.items())
        if not items:
            return cls(level, np.zeros((0, dim or 1), np.int64), [], dim=dim or 1)
        keys = [k.index if isinstance(k, CubeIndex) else tuple(np.atleast_1d(k)) for k, _ in items]
        return cls(level, np.array(keys, dtype=np.int64), [v for _, v in items])

    @classmethod
    def zeros(cls, level: int, dim: int) -> "BoundaryGridFunction":
        return cls(level, np.zeros((0, dim), np.int64), [], dim=dim)

    # -- basic access -------------------------------------------------------

    def __len__(self) -> int:
        return len(self.values)

    def __getitem__(self, Q) -> float:
        if isinstance(Q, CubeIndex):
            if Q.level != self.level:
                raise LevelError(f"cube level {Q.level} != grid level {self.level}")
            Q = Q.index
        return float(self._table(self.level).lookup(encode(np.array([Q])))[0])

    def items(self):
        for m, v in zip(self.idx, self.values):
            yield CubeIndex(self.level, tuple(m)), float(v)

    def as_dict(self) -> dict:
        return dict(self.items())

    @property
    def any_flagged(self) -> bool:
        return bool(self.flagged.any())

    @property
    def support(self) -> Box:
        """Bounding box of the stored cubes (unit box at the origin if empty)."""
        if len(self) == 0:
            return Box((0.0,) * self.dim, (1.0,) * self.dim)
        h = math.ldexp(1.0, -self.level)
        return Box(tuple(self.idx.min(axis=0) * h), tuple((self.idx.max(axis=0) + 1) * h))

    @property
    def cell_volume(self) -> float:
        return math.ldexp(1.0, -self.level * self.dim)

    # -- averages -----------------------------------------------------------

    def _table(self, k: int) -> _Table:
        tab = self._tables.get(k)
        if tab is None:
            if k == self.level:
                tab = _Table(self.keys, self.values)
            else:
                parents = self.idx >> (self.level - k)
                keys, inv = np.unique(encode(parents), return_inverse=True)
                sums = np.bincount(inv.ravel(), weights=self.values, minlength=len(keys))
                tab = _Table(keys, sums / float(1 << ((self.level - k) * self.dim)))
            self._tables[k] = tab
        return tab

    def lookup(self, k: int, idx) -> np.ndarray:
        """Averages of g over the level-k cubes given by index rows.

        Cubes at or above the grid level get the exact mean of their
        descendants; finer cubes get the value of the grid cell containing
        them, which is the exact average of a piecewise-constant function.
        """
        idx = np.asarray(idx, dtype=np.int64).reshape(-1, self.dim)
        if k >= self.level:
            return self._table(self.level).lookup(encode(idx >> (k - self.level)))
        return self._table(k).lookup(encode(idx))

    def coarse_support(self, k: int) -> np.ndarray:
        """Index rows of the level-k cubes that meet a stored cube."""
        if k <= self.level:
            return decode(self._table(k).keys, self.dim)
        s = 1 << (k - self.level)
        offs = np.stack(np.meshgrid(*([np.arange(s)] * self.dim), indexing="ij"), -1).reshape(-1, self.dim)
        return (self.idx[:, None, :] * s + offs[None]).reshape(-1, self.dim)

    def refine(self, k: int) -> "BoundaryGridFunction":
        """The same function stored at the finer level k."""
        if k < self.level:
            raise LevelError("refine needs a finer level")
        idx = self.coarse_support(k)
        reps = len(idx) // max(len(self), 1)
        return BoundaryGridFunction(k, idx, np.repeat(self.values, reps),
                                    np.repeat(self.flagged, reps), dim=self.dim)

    # -- arithmetic ---------------------------------------------------------

    def _aligned(self, other: "BoundaryGridFunction"):
        if other.dim != self.dim:
            raise DomainError("dimension mismatch")
        k = max(self.level, other.level)
        a = self if self.level == k else self.refine(k)
        b = other if other.level == k else other.refine(k)
        keys = np.union1d(a.keys, b.keys)
        va = a._table(k).lookup(keys)
        vb = b._table(k).lookup(keys)
        fa = _Table(a.keys, a.flagged.astype(float)).lookup(keys) > 0
        fb = _Table(b.keys, b.flagged.astype(float)).lookup(keys) > 0
        return k, decode(keys, self.dim), va, vb, fa | fb

    def __add__(self, other: "BoundaryGridFunction") -> "BoundaryGridFunction":
        k, idx, va, vb, fl = self._aligned(other)
        return BoundaryGridFunction(k, idx, va + vb, fl, dim=self.dim)

    def __sub__(self, other: "BoundaryGridFunction") -> "BoundaryGridFunction":
        k, idx, va, vb, fl = self._aligned(other)
        return BoundaryGridFunction(k, idx, va - vb, fl, dim=self.dim)

    def __mul__(self, c: float) -> "BoundaryGridFunction":
        return BoundaryGridFunction(self.level, self.idx, c * self.values, self.flagged, dim=self.dim)

    __rmul__ = __mul__

    def __neg__(self) -> "BoundaryGridFunction":
        return self * -1.0

    def eval_points(self, x) -> np.ndarray:
        """Pointwise values at rows of x."""
        x = np.asarray(x, dtype=float).reshape(-1, self.dim)
        m = np.ceil(np.ldexp(x, self.level)).astype(np.int64) - 1
        return self._table(self.level).lookup(encode(m))

    # -- text format --------------------------------------------------------

    def to_text(self) -> str:
        lines = [f"level={self.level} dim={self.dim}"]
        for m, v in zip(self.idx, self.values):
            lines.append(" ".join(str(int(c)) for c in m) + " " + repr(float(v)))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "BoundaryGridFunction":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise DomainError("empty grid text")
        head = dict(tok.split("=", 1) for tok in lines[0].split())
        try:
            level, dim = int(head["level"]), int(head["dim"])
        except (KeyError, ValueError) as exc:
            raise DomainError(f"bad header {lines[0]!r}") from exc
        idx, vals = [], []
        for ln in lines[1:]:
            parts = ln.split()
            if len(parts) != dim + 1:
                raise DomainError(f"expected {dim + 1} fields in {ln!r}")
            idx.append([int(c) for c in parts[:dim]])
            vals.append(float(parts[dim]))
        return cls(level, np.array(idx, dtype=np.int64).reshape(-1, dim), vals, dim=dim)

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path) -> "BoundaryGridFunction":
        return cls.from_text(Path(path).read_text())

    def __repr__(self) -> str:
        return f"BoundaryGridFunction(level={self.level}, dim={self.dim}, cells={len(self)})"


def grid_average(g: BoundaryGridFunction, Q: CubeIndex) -> float:
    """Exact average of g over a dyadic cube (any level)."""
    if Q.dim != g.dim:
        raise DomainError("dimension mismatch")
    return float(g.lookup(Q.level, [Q.index])[0])


def random_grid(rng: np.random.Generator, level: int, dim: int = 1, region: Optional[Box] = None,
                density: float = 1.0, scale: float = 1.0) -> BoundaryGridFunction:
    """Random piecewise-constant data on the level-L cubes of a region."""
    from .dyadic import level_index_grid

    region = region or Box((0.0,) * dim, (1.0,) * dim)
    idx = level_index_grid(level, region)
    keep = rng.random(len(idx)) < density
    vals = scale * rng.uniform(-1.0, 1.0, size=len(idx))
    return BoundaryGridFunction(level, idx[keep], vals[keep], dim=dim)
