"""Domain types: finite measure-preserving systems, dense grid functions,
vertex-indexed function tuples, norms, and bit-exact file I/O.

Grid convention
---------------
A :class:`GridFunction` stores samples on a uniform lattice.  Sample ``i``
sits at physical coordinate ``origin + i*h`` and represents the function on
the right-open cell ``[origin + i*h, origin + (i+1)*h)``.  Point evaluation
uses the floor rule and returns 0 outside the box, so lattice-aligned step
functions are represented exactly and every integral below is an exact
Riemann sum for them.  For smooth compactly supported samples the same sums
are ordinary second-order rectangle quadrature.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Sequence, Union

import numpy as np

from .errors import (
    CommutationViolation,
    DimensionMismatch,
    FormatError,
    MeasureViolation,
    WeightError,
)

MAX_DIMENSION = 3

GRID_MAGIC = b"CUBEVAR1"

WEIGHT_TOL = 1e-12


@dataclass(frozen=True)
class CubeIndex:
    """A nonnegative vertex of the unit cube {0,1}^d, encoded as a bitmask.

    Bit ``l`` (least significant first) is the ``l``-th coordinate.  The zero
    vertex is representable but excluded from function tuples.
    """

    bits: int
    d: int

    def __post_init__(self):
        if not 1 <= self.d <= MAX_DIMENSION:
            raise ValueError(f"dimension must be in 1..{MAX_DIMENSION}, got {self.d}")
        if not 0 <= self.bits < (1 << self.d):
            raise ValueError(f"bits {self.bits} out of range for d={self.d}")

    @property
    def coords(self) -> tuple[int, ...]:
        return tuple((self.bits >> l) & 1 for l in range(self.d))

    @property
    def is_zero(self) -> bool:
        return self.bits == 0


def nonzero_cube_indices(d: int) -> list[CubeIndex]:
    """All 2^d - 1 nonzero vertices in ascending bitmask order."""
    return [CubeIndex(b, d) for b in range(1, 1 << d)]


@dataclass(frozen=True)
class FiniteSystem:
    """A finite probability space with d commuting measure-preserving maps.

    ``maps[l][x]`` is the index of the image of point ``x`` under the
    ``l``-th transformation.  Construct through :func:`make_finite_system`,
    which validates commutation and measure preservation.
    """

    size: int
    weights: np.ndarray
    maps: tuple[np.ndarray, ...]

    @property
    def d(self) -> int:
        return len(self.maps)

    def iterated_map(self, l: int, max_power: int) -> np.ndarray:
        """Table of shape (max_power+1, size): row i sends x to T_l^i x."""
        table = np.empty((max_power + 1, self.size), dtype=np.intp)
        table[0] = np.arange(self.size)
        for i in range(1, max_power + 1):
            table[i] = self.maps[l][table[i - 1]]
        return table

    def point_index(self, powers: Sequence[int], x: int) -> int:
        """Image of x under the composition of T_l^powers[l] over all l."""
        y = x
        for l, k in enumerate(powers):
            for _ in range(k):
                y = int(self.maps[l][y])
        return y


def make_finite_system(
    size: int,
    weights: Sequence[float],
    maps: Sequence[Sequence[int]],
) -> FiniteSystem:
    """Validate and build a finite system of commuting m.p. transformations.

    Raises
    ------
    WeightError
        if the weights are negative or do not sum to 1 within 1e-12.
    CommutationViolation
        if two maps disagree when composed in either order.
    MeasureViolation
        if preimage mass under some map does not match the weights.
    """
    if size < 1:
        raise ValueError("size must be >= 1")
    if not 1 <= len(maps) <= MAX_DIMENSION:
        raise ValueError(f"need between 1 and {MAX_DIMENSION} maps, got {len(maps)}")
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (size,):
        raise WeightError(f"expected {size} weights, got shape {w.shape}")
    if np.any(w < 0):
        raise WeightError("weights must be nonnegative")
    if abs(float(w.sum()) - 1.0) > WEIGHT_TOL:
        raise WeightError(f"weights sum to {w.sum()!r}, not 1")

    ms: list[np.ndarray] = []
    for m in maps:
        a = np.asarray(m, dtype=np.intp)
        if a.shape != (size,):
            raise ValueError(f"each map must be a total function on {size} points")
        if np.any(a < 0) or np.any(a >= size):
            raise ValueError("map image out of range")
        ms.append(a)

    for i in range(len(ms)):
        for j in range(i + 1, len(ms)):
            ij = ms[i][ms[j]]
            ji = ms[j][ms[i]]
            bad = np.nonzero(ij != ji)[0]
            if bad.size:
                raise CommutationViolation(i, j, int(bad[0]))

    for l, a in enumerate(ms):
        pushed = np.bincount(a, weights=w, minlength=size)
        bad = np.nonzero(np.abs(pushed - w) > WEIGHT_TOL)[0]
        if bad.size:
            raise MeasureViolation(l, int(bad[0]))

    return FiniteSystem(size=size, weights=w, maps=tuple(ms))


@dataclass(frozen=True)
class GridFunction:
    """A dense real-valued function sampled on a d-dimensional uniform grid."""

    d: int
    dims: tuple[int, ...]
    h: float
    origin: tuple[float, ...]
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        if not 1 <= self.d <= MAX_DIMENSION:
            raise ValueError(f"dimension must be in 1..{MAX_DIMENSION}")
        if len(self.dims) != self.d or len(self.origin) != self.d:
            raise DimensionMismatch("dims/origin length must equal d")
        if self.h <= 0:
            raise ValueError("cell width must be positive")
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != tuple(self.dims):
            raise DimensionMismatch(
                f"values shape {v.shape} does not match dims {self.dims}"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError("grid values must be finite")
        object.__setattr__(self, "values", v)

    @property
    def cell_volume(self) -> float:
        return self.h**self.d

    def same_grid(self, other: "GridFunction") -> bool:
        return (
            self.d == other.d
            and self.dims == other.dims
            and self.h == other.h
            and self.origin == other.origin
        )

    def with_values(self, values: np.ndarray) -> "GridFunction":
        return GridFunction(self.d, self.dims, self.h, self.origin, values)

    def value_at(self, point: Sequence[float]) -> float:
        """Evaluate at a physical point; zero outside the grid box."""
        if len(point) != self.d:
            raise DimensionMismatch("point dimension mismatch")
        idx = []
        for l in range(self.d):
            i = int(np.floor((point[l] - self.origin[l]) / self.h + 1e-12))
            if not 0 <= i < self.dims[l]:
                return 0.0
            idx.append(i)
        return float(self.values[tuple(idx)])

    def translated(self, offset: Sequence[float]) -> "GridFunction":
        """The same samples with the origin moved by a physical offset."""
        org = tuple(o + v for o, v in zip(self.origin, offset))
        return GridFunction(self.d, self.dims, self.h, org, self.values)

    def __add__(self, other: "GridFunction") -> "GridFunction":
        self._check(other)
        return self.with_values(self.values + other.values)

    def __sub__(self, other: "GridFunction") -> "GridFunction":
        self._check(other)
        return self.with_values(self.values - other.values)

    def __mul__(self, c: float) -> "GridFunction":
        return self.with_values(self.values * float(c))

    __rmul__ = __mul__

    def _check(self, other: "GridFunction") -> None:
        if not self.same_grid(other):
            raise DimensionMismatch("grid functions live on different grids")


def shift_values(values: np.ndarray, offsets: Sequence[int]) -> np.ndarray:
    """Return ``out[k] = values[k + offsets]`` with zero fill outside the box."""
    out = np.zeros_like(values)
    src = []
    dst = []
    for n, t in zip(values.shape, offsets):
        t = int(t)
        if t >= n or t <= -n:
            return out
        if t >= 0:
            src.append(slice(t, n))
            dst.append(slice(0, n - t))
        else:
            src.append(slice(0, n + t))
            dst.append(slice(-t, n))
    out[tuple(dst)] = values[tuple(src)]
    return out


class FunctionTuple:
    """The 2^d - 1 functions indexed by nonzero cube vertices.

    Entries are :class:`GridFunction` objects sharing one grid.  For grid
    averages the entries are d-dimensional; functions on a finite system are
    carried as 1-D grids of length ``system.size`` (one value per point).
    """

    def __init__(self, d: int, entries: Mapping[CubeIndex, GridFunction]):
        if not 1 <= d <= MAX_DIMENSION:
            raise ValueError(f"dimension must be in 1..{MAX_DIMENSION}")
        expected = nonzero_cube_indices(d)
        if set(entries) != set(expected):
            raise ValueError(
                f"need exactly the {len(expected)} nonzero cube indices for d={d}"
            )
        first = entries[expected[0]]
        for j in expected[1:]:
            if not first.same_grid(entries[j]):
                raise DimensionMismatch("tuple entries live on different grids")
        self.d = d
        self.entries = {j: entries[j] for j in expected}

    @classmethod
    def from_list(cls, d: int, functions: Sequence[GridFunction]) -> "FunctionTuple":
        """Build from a list ordered by ascending bitmask."""
        idx = nonzero_cube_indices(d)
        if len(functions) != len(idx):
            raise ValueError(f"expected {len(idx)} functions for d={d}")
        return cls(d, dict(zip(idx, functions)))

    def __getitem__(self, j: CubeIndex) -> GridFunction:
        return self.entries[j]

    def __iter__(self):
        return iter(self.entries.items())

    @property
    def grid(self) -> GridFunction:
        """A representative entry carrying the shared grid metadata."""
        return next(iter(self.entries.values()))

    def map(self, fn) -> "FunctionTuple":
        return FunctionTuple(self.d, {j: fn(g) for j, g in self.entries.items()})

    def on_grid(self) -> bool:
        """True when the entries are d-dimensional grid functions."""
        return self.grid.d == self.d


@dataclass(frozen=True)
class MeasuredNorm:
    """A computed L^p norm.  ``p`` may be an exact Fraction, a float, or inf."""

    p: Union[float, Fraction]
    value: float

    def __post_init__(self):
        if self.value < 0:
            raise ValueError("norm value must be nonnegative")


def conjugate_exponent(d: int) -> Fraction:
    """The dual exponent of 2^d, exactly: 2^d / (2^d - 1)."""
    return Fraction(2**d, 2**d - 1)


def _norm_from_powers(powsum: float, p: float) -> float:
    return float(powsum) ** (1.0 / p) if powsum > 0 else 0.0


def grid_norm(values: np.ndarray, p: Union[float, Fraction], cell_volume: float) -> float:
    """Plain-float L^p norm of grid samples (Riemann sum quadrature)."""
    p = float(p)
    if np.isinf(p):
        return float(np.max(np.abs(values))) if values.size else 0.0
    return _norm_from_powers(np.sum(np.abs(values) ** p) * cell_volume, p)


def weighted_norm(values: np.ndarray, p: Union[float, Fraction], weights: np.ndarray) -> float:
    """Plain-float L^p norm on a finite probability space."""
    p = float(p)
    if np.isinf(p):
        support = weights > 0
        return float(np.max(np.abs(values[support]))) if np.any(support) else 0.0
    return _norm_from_powers(np.sum(weights * np.abs(values) ** p), p)


def lp_norm(
    f: Union[GridFunction, np.ndarray],
    p: Union[float, Fraction],
    system: FiniteSystem | None = None,
) -> MeasuredNorm:
    """L^p norm of a grid function, or of a function on a finite system.

    Without ``system`` the norm is the grid integral ``(sum |v|^p h^d)^(1/p)``
    (max of ``|v|`` for p = inf).  With ``system`` the values are weighted by
    the system's probability measure.
    """
    if float(p) < 1:
        raise ValueError("exponent must satisfy p >= 1")
    if system is not None:
        v = f.values.ravel() if isinstance(f, GridFunction) else np.asarray(f, float)
        if v.shape != (system.size,):
            raise DimensionMismatch(
                f"function has {v.shape} values for a system of size {system.size}"
            )
        return MeasuredNorm(p, weighted_norm(v, p, system.weights))
    if not isinstance(f, GridFunction):
        raise DimensionMismatch("grid mode requires a GridFunction")
    return MeasuredNorm(p, grid_norm(f.values, p, f.cell_volume))


# ---------------------------------------------------------------------------
# File formats.
#
# Grid file: magic "CUBEVAR1", then little-endian u32 d, u32 dims[d], f64 h,
# f64 origin[d], f64 values (row-major).  Round trips are bit exact.
# System file: plain text "key value..." lines.
# ---------------------------------------------------------------------------


def store_grid(f: GridFunction, path: Union[str, Path]) -> None:
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(GRID_MAGIC)
        fh.write(struct.pack("<I", f.d))
        fh.write(struct.pack(f"<{f.d}I", *f.dims))
        fh.write(struct.pack("<d", f.h))
        fh.write(struct.pack(f"<{f.d}d", *f.origin))
        fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes())


def load_grid(path: Union[str, Path]) -> GridFunction:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:8] != GRID_MAGIC:
        raise FormatError(f"{path}: bad magic bytes")
    off = 8
    try:
        (d,) = struct.unpack_from("<I", raw, off)
        off += 4
        if not 1 <= d <= MAX_DIMENSION:
            raise FormatError(f"{path}: dimension {d} out of range")
        dims = struct.unpack_from(f"<{d}I", raw, off)
        off += 4 * d
        (h,) = struct.unpack_from("<d", raw, off)
        off += 8
        origin = struct.unpack_from(f"<{d}d", raw, off)
        off += 8 * d
    except struct.error as exc:
        raise FormatError(f"{path}: truncated header") from exc
    count = int(np.prod(dims))
    payload = raw[off:]
    if len(payload) != 8 * count:
        raise FormatError(
            f"{path}: declared {count} values but payload holds {len(payload) // 8}"
        )
    values = np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(dims)
    return GridFunction(int(d), tuple(int(n) for n in dims), float(h),
                        tuple(float(o) for o in origin), values)


def store_tuple(F: FunctionTuple, directory: Union[str, Path],
                stem: str = "tuple") -> Path:
    """Write a function tuple as one grid file per entry plus a manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lines = [f"d {F.d}"]
    for j, g in F:
        name = f"{stem}_e{j.bits}.grid"
        store_grid(g, directory / name)
        lines.append(f"entry {j.bits} {name}")
    manifest = directory / f"{stem}.manifest"
    manifest.write_text("\n".join(lines) + "\n")
    return manifest


def load_tuple(manifest: Union[str, Path]) -> FunctionTuple:
    manifest = Path(manifest)
    directory = manifest.parent
    d = None
    entries: dict[CubeIndex, GridFunction] = {}
    for line in manifest.read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if parts[0] == "d" and len(parts) == 2:
            d = int(parts[1])
        elif parts[0] == "entry" and len(parts) == 3:
            if d is None:
                raise FormatError(f"{manifest}: entry before dimension")
            entries[CubeIndex(int(parts[1]), d)] = load_grid(directory / parts[2])
        else:
            raise FormatError(f"{manifest}: bad line {line!r}")
    if d is None:
        raise FormatError(f"{manifest}: missing dimension")
    return FunctionTuple(d, entries)


def store_system(sys: FiniteSystem, path: Union[str, Path]) -> None:
    lines = [f"size {sys.size}"]
    lines.append("weights " + " ".join(repr(float(w)) for w in sys.weights))
    for a in sys.maps:
        lines.append("map " + " ".join(str(int(v)) for v in a))
    Path(path).write_text("\n".join(lines) + "\n")


def load_system(path: Union[str, Path]) -> FiniteSystem:
    size = None
    weights = None
    maps: list[list[int]] = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, rest = line.partition(" ")
        if key == "size":
            size = int(rest)
        elif key == "weights":
            weights = [float(t) for t in rest.split()]
        elif key == "map":
            maps.append([int(t) for t in rest.split()])
        else:
            raise FormatError(f"{path}: unknown key {key!r}")
    if size is None or weights is None or not maps:
        raise FormatError(f"{path}: missing size, weights, or maps")
    return make_finite_system(size, weights, maps)
