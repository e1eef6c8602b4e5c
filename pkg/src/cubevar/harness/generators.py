"""Seeded random test beds: compactly supported function tuples that can be
sampled at any resolution, and random commuting finite systems.

Tuples are described resolution-free (bump parameters plus a block step
pattern) so one spec can be sampled on nested grids; the step part is
generated on a coarse block lattice and is therefore represented exactly at
every resolution that subdivides the blocks.  All supports sit inside the
central half of the box, keeping zero extension exact under averaging.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..core import (
    FiniteSystem,
    FunctionTuple,
    GridFunction,
    make_finite_system,
    nonzero_cube_indices,
)

STEP_BLOCKS_PER_UNIT = 4  # step pattern granularity; resolutions must subdivide


def rng_for(seed: int, *path: int) -> np.random.Generator:
    """A generator derived from (seed, path); stable under parallel order."""
    return np.random.default_rng([int(seed), *[int(p) for p in path]])


def _shape_bump(u: np.ndarray) -> np.ndarray:
    out = np.zeros_like(u)
    m = np.abs(u) < 1.0
    out[m] = np.exp(1.0 - 1.0 / (1.0 - u[m] ** 2))  # peak value 1
    return out


@dataclass(frozen=True)
class BumpSpec:
    amplitude: float
    center: tuple[float, ...]
    radius: tuple[float, ...]


@dataclass(frozen=True)
class EntrySpec:
    bumps: tuple[BumpSpec, ...]
    steps: np.ndarray | None  # block values on the central-half lattice

    def sample(self, d: int, box: int, resolution: int) -> GridFunction:
        G = box * resolution
        h = 1.0 / resolution
        axes = [np.arange(G) * h for _ in range(d)]
        values = np.zeros((G,) * d)
        for b in self.bumps:
            factors = [
                _shape_bump((axes[l] - b.center[l]) / b.radius[l]) for l in range(d)
            ]
            term = factors[0]
            for f in factors[1:]:
                term = np.multiply.outer(term, f)
            values += b.amplitude * term
        if self.steps is not None:
            cells = resolution // STEP_BLOCKS_PER_UNIT  # cells per block
            if cells * STEP_BLOCKS_PER_UNIT != resolution or cells < 1:
                raise ValueError(
                    f"resolution {resolution} does not subdivide the step blocks"
                )
            stepped = self.steps
            for axis in range(d):
                stepped = np.repeat(stepped, cells, axis=axis)
            lo = G // 4
            sl = tuple(slice(lo, lo + stepped.shape[l]) for l in range(d))
            values[sl] += stepped
        return GridFunction(d, (G,) * d, h, (0.0,) * d, values)


@dataclass(frozen=True)
class TupleSpec:
    """Resolution-free description of a random function tuple."""

    d: int
    box: int  # physical box side, in units
    entries: tuple[EntrySpec, ...]

    def sample(self, resolution: int) -> FunctionTuple:
        idx = nonzero_cube_indices(self.d)
        return FunctionTuple(
            self.d,
            {
                j: e.sample(self.d, self.box, resolution)
                for j, e in zip(idx, self.entries)
            },
        )


def random_tuple_spec(
    rng: np.random.Generator, d: int, box: int, kind: str = "mixed"
) -> TupleSpec:
    """Random tuple of 3-6 placed bumps and/or a signed block step pattern.

    ``kind`` is one of ``smooth``, ``steps``, ``mixed``.
    """
    if kind not in ("smooth", "steps", "mixed"):
        raise ValueError(f"unknown tuple kind {kind!r}")
    lo, hi = box / 4.0, 3.0 * box / 4.0
    entries = []
    for _ in range(len(nonzero_cube_indices(d))):
        bumps: list[BumpSpec] = []
        if kind in ("smooth", "mixed"):
            for _ in range(int(rng.integers(3, 7))):
                radius = tuple(rng.uniform(box / 16.0, box / 8.0, size=d))
                center = tuple(
                    rng.uniform(lo + radius[l], hi - radius[l]) for l in range(d)
                )
                amp = float(rng.uniform(0.3, 1.0) * rng.choice([-1.0, 1.0]))
                bumps.append(BumpSpec(amp, center, radius))
        steps = None
        if kind in ("steps", "mixed"):
            # block pattern spanning the central half of the box
            blocks = (box * STEP_BLOCKS_PER_UNIT) // 2
            steps = rng.choice([-1.0, 1.0], size=(blocks,) * d) * rng.uniform(
                0.2, 0.8, size=(blocks,) * d
            )
        entries.append(EntrySpec(tuple(bumps), steps))
    return TupleSpec(d, box, tuple(entries))


def random_integer_tuple(
    rng: np.random.Generator, d: int, side: int
) -> FunctionTuple:
    """Random values on an integer lattice box, one entry per cube vertex."""
    idx = nonzero_cube_indices(d)
    dims = (side,) * d
    return FunctionTuple(
        d,
        {
            j: GridFunction(d, dims, 1.0, (0.0,) * d, rng.standard_normal(dims))
            for j in idx
        },
    )


def random_system(
    rng: np.random.Generator,
    d: int,
    size: int,
    kind: str = "rotation",
    nonuniform: bool = False,
) -> FiniteSystem:
    """A random finite system of d commuting measure-preserving maps.

    ``rotation``: translations on a product of cyclic groups (uniform
    measure).  ``permutation``: powers of one random permutation, optionally
    with random orbit-constant weights.
    """
    if kind == "rotation":
        sides = _factor_box(rng, size, d)
        m = int(np.prod(sides))
        points = np.arange(m)
        coords = np.array(np.unravel_index(points, sides)).T
        maps = []
        for l in range(d):
            shift = np.zeros(d, dtype=int)
            shift[l] = int(rng.integers(1, sides[l])) if sides[l] > 1 else 0
            imgs = (coords + shift) % np.asarray(sides)
            maps.append(np.ravel_multi_index(imgs.T, sides))
        weights = np.full(m, 1.0 / m)
        return make_finite_system(m, weights, maps)
    if kind == "permutation":
        perm = rng.permutation(size)
        powers = rng.integers(1, max(2, size), size=d)
        maps = []
        for a in powers:
            table = np.arange(size)
            for _ in range(int(a)):
                table = perm[table]
            maps.append(table)
        if nonuniform:
            weights = _orbit_weights(rng, perm)
        else:
            weights = np.full(size, 1.0 / size)
        return make_finite_system(size, weights, maps)
    raise ValueError(f"unknown system kind {kind!r}")


def _factor_box(rng: np.random.Generator, size: int, d: int) -> tuple[int, ...]:
    """Split a size budget into d cyclic factors, each at least 2."""
    sides = []
    remaining = size
    for l in range(d):
        left = d - 1 - l
        cap = max(2, int(remaining ** (1.0 / (left + 1)) + 0.5))
        side = int(rng.integers(2, max(3, cap + 1)))
        sides.append(side)
        remaining = max(2, remaining // side)
    return tuple(sides)


def _orbit_weights(rng: np.random.Generator, perm: np.ndarray) -> np.ndarray:
    size = perm.size
    weights = np.zeros(size)
    seen = np.zeros(size, dtype=bool)
    masses = []
    orbits = []
    for start in range(size):
        if seen[start]:
            continue
        orbit = [start]
        seen[start] = True
        nxt = int(perm[start])
        while not seen[nxt]:
            orbit.append(nxt)
            seen[nxt] = True
            nxt = int(perm[nxt])
        orbits.append(orbit)
        masses.append(float(rng.uniform(0.5, 2.0)) * len(orbit))
    total = sum(masses)
    for orbit, mass in zip(orbits, masses):
        weights[orbit] = mass / total / len(orbit)
    # exact renormalization guard against accumulated rounding
    weights /= weights.sum()
    return weights


def random_system_tuple(
    rng: np.random.Generator, sys: FiniteSystem
) -> FunctionTuple:
    """Bounded random function tuple on the points of a finite system."""
    idx = nonzero_cube_indices(sys.d)
    return FunctionTuple(
        sys.d,
        {
            j: GridFunction(
                1, (sys.size,), 1.0, (0.0,), rng.uniform(-1.0, 1.0, size=sys.size)
            )
            for j in idx
        },
    )
