"""Cube averages of commuting finite dynamics, their integer-lattice
counterparts, and the trajectory/step-function lifts connecting the two.

The central identity: sampling a function tuple along the forward orbit of a
point turns the dynamical average into a lattice average, exactly.  Lifting
lattice functions to unit-cell step functions then connects the lattice
averages to continuum box averages with equal norms.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .core import (
    CubeIndex,
    FiniteSystem,
    FunctionTuple,
    GridFunction,
    load_grid,
    nonzero_cube_indices,
    shift_values,
    store_grid,
)
from .errors import DimensionMismatch, FormatError, InvalidN


@dataclass
class AverageSequence:
    """Frames of an average indexed by strictly increasing lengths n.

    Frames are either grid functions (lattice/continuum averages) or plain
    value arrays on a finite system; in the latter case ``weights`` carries
    the probability measure used by norms.
    """

    indices: list[int]
    frames: list
    weights: np.ndarray | None = None

    def __post_init__(self):
        if len(self.indices) != len(self.frames):
            raise ValueError("one frame per index required")
        if any(b <= a for a, b in zip(self.indices, self.indices[1:])):
            raise ValueError("indices must be strictly increasing")
        if any(n < 1 for n in self.indices):
            raise ValueError("indices must be positive")

    def __len__(self) -> int:
        return len(self.indices)

    def diff_values(self, k: int, i: int) -> np.ndarray:
        a, b = self.frames[k], self.frames[i]
        if isinstance(a, GridFunction):
            if not a.same_grid(b):
                raise DimensionMismatch("frames live on different grids")
            return a.values - b.values
        return np.asarray(a) - np.asarray(b)

    @property
    def cell_volume(self) -> float | None:
        f = self.frames[0]
        return f.cell_volume if isinstance(f, GridFunction) else None


def _check_system_tuple(sys: FiniteSystem, f: FunctionTuple) -> None:
    if f.d != sys.d:
        raise DimensionMismatch(f"tuple dimension {f.d} != system dimension {sys.d}")
    g = f.grid
    if g.d != 1 or g.dims != (sys.size,):
        raise DimensionMismatch("system tuples must hold one value per point")


def cubic_average(sys: FiniteSystem, f: FunctionTuple, n: int) -> np.ndarray:
    """The length-n cube average of a function tuple, at every point.

    Averages the product of the tuple entries over a d-dimensional cube of
    iterate indices, each entry evaluated along the matching combination of
    the commuting transformations.  Iterated maps are precomputed as lookup
    tables, so the cost is n^d table-driven products over the whole space.
    """
    if n < 1:
        raise InvalidN(f"n must be >= 1, got {n}")
    _check_system_tuple(sys, f)
    d, m = sys.d, sys.size
    tables = [sys.iterated_map(l, n - 1) for l in range(d)]
    vals = {j: g.values for j, g in f}
    acc = np.zeros(m)
    base = np.arange(m)
    # lexicographic order over the iterate cube keeps runs reproducible
    for i in itertools.product(range(n), repeat=d):
        prod = np.ones(m)
        for j, v in vals.items():
            pt = base
            for l, jl in enumerate(j.coords):
                if jl:
                    pt = tables[l][i[l]][pt]
            prod = prod * v[pt]
        acc += prod
    return acc / float(n**d)


def discrete_cube_average(F: FunctionTuple, n: int) -> GridFunction:
    """Lattice cube average of integer-grid functions, with zero extension.

    The output grid is enlarged to the minimal box holding the full support:
    the input box grown by n-1 cells below along every axis.
    """
    if n < 1:
        raise InvalidN(f"n must be >= 1, got {n}")
    g = F.grid
    if not F.on_grid() or g.h != 1.0:
        raise DimensionMismatch("lattice averages need h=1 grids of dimension d")
    d = F.d
    out_dims = tuple(m + n - 1 for m in g.dims)
    out_origin = tuple(o - (n - 1) for o in g.origin)
    # embed each entry into the enlarged box (support offset n-1 cells up)
    emb = {}
    for j, gf in F:
        a = np.zeros(out_dims)
        a[tuple(slice(n - 1, n - 1 + m) for m in g.dims)] = gf.values
        emb[j] = a
    acc = np.zeros(out_dims)
    for i in itertools.product(range(n), repeat=d):
        prod = np.ones(out_dims)
        for j, a in emb.items():
            off = tuple(jl * il for jl, il in zip(j.coords, i))
            prod = prod * (shift_values(a, off) if any(off) else a)
        acc += prod
    acc /= float(n**d)
    return GridFunction(d, out_dims, 1.0, out_origin, acc)


def trajectory_lift(
    sys: FiniteSystem, f: FunctionTuple, x: int, N: int
) -> FunctionTuple:
    """Sample a system tuple along the forward orbit of x onto [0, 2N)^d.

    The lift satisfies, exactly: the cube average of the tuple at the orbit
    point of x indexed by k equals the lattice cube average of the lifted
    tuple at k, for 0 <= k_l < N and 0 < n <= N.
    """
    if N < 1:
        raise InvalidN(f"N must be >= 1, got {N}")
    _check_system_tuple(sys, f)
    d = sys.d
    side = 2 * N
    tables = [sys.iterated_map(l, side - 1) for l in range(d)]
    # orbit[k] = index of the point reached by applying T_l^{k_l} for all l
    orbit = np.asarray(x, dtype=np.intp)
    for l in range(d - 1, -1, -1):
        orbit = tables[l][:, orbit]
    dims = (side,) * d
    origin = (0.0,) * d
    entries = {
        j: GridFunction(d, dims, 1.0, origin, g.values[orbit]) for j, g in f
    }
    return FunctionTuple(d, entries)


def floor_lift(F: FunctionTuple, subdivide: int = 1) -> FunctionTuple:
    """Reinterpret integer-lattice functions as unit-cell step functions.

    Each lattice value becomes the constant value of the function on the
    unit cell above its lattice point.  With ``subdivide`` > 1 every unit
    cell is split into ``subdivide`` cells per axis (values repeated), which
    refines later quadrature without changing the function.  Either way the
    lattice p-norm and the continuum p-norm agree exactly.
    """
    if subdivide < 1:
        raise ValueError("subdivide must be >= 1")
    g = F.grid
    if not F.on_grid() or g.h != 1.0:
        raise DimensionMismatch("floor lift expects h=1 integer grids")
    if subdivide == 1:
        return F

    def lift(gf: GridFunction) -> GridFunction:
        v = gf.values
        for axis in range(gf.d):
            v = np.repeat(v, subdivide, axis=axis)
        dims = tuple(m * subdivide for m in gf.dims)
        return GridFunction(gf.d, dims, 1.0 / subdivide, gf.origin, v)

    return F.map(lift)


# ---------------------------------------------------------------------------
# Sequence serialization: one grid file per index plus a text manifest.
# ---------------------------------------------------------------------------


def store_sequence(seq: AverageSequence, directory: Union[str, Path],
                   stem: str = "frame") -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lines = []
    for n, frame in zip(seq.indices, seq.frames):
        name = f"{stem}_{n:04d}.grid"
        if not isinstance(frame, GridFunction):
            v = np.asarray(frame, dtype=np.float64)
            frame = GridFunction(1, (v.size,), 1.0, (0.0,), v)
        store_grid(frame, directory / name)
        lines.append(f"index {n} {name}")
    if seq.weights is not None:
        wname = f"{stem}_weights.grid"
        store_grid(
            GridFunction(1, (seq.weights.size,), 1.0, (0.0,), seq.weights),
            directory / wname,
        )
        lines.append(f"weights {wname}")
    manifest = directory / f"{stem}.manifest"
    manifest.write_text("\n".join(lines) + "\n")
    return manifest


def load_sequence(manifest: Union[str, Path]) -> AverageSequence:
    manifest = Path(manifest)
    directory = manifest.parent
    indices: list[int] = []
    frames: list[GridFunction] = []
    weights = None
    for line in manifest.read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if parts[0] == "index" and len(parts) == 3:
            indices.append(int(parts[1]))
            frames.append(load_grid(directory / parts[2]))
        elif parts[0] == "weights" and len(parts) == 2:
            weights = load_grid(directory / parts[1]).values
        else:
            raise FormatError(f"{manifest}: bad line {line!r}")
    if not indices:
        raise FormatError(f"{manifest}: no frames listed")
    return AverageSequence(indices, frames, weights=weights)
