"""Cube averages on finite systems, lattice averages, and the lifts."""

import itertools
import math

import numpy as np
import pytest

from cubevar.core import (
    FunctionTuple,
    GridFunction,
    lp_norm,
    make_finite_system,
    nonzero_cube_indices,
)
from cubevar.ergodic import (
    AverageSequence,
    cubic_average,
    discrete_cube_average,
    floor_lift,
    load_sequence,
    store_sequence,
    trajectory_lift,
)
from cubevar.errors import InvalidN


def rotation_system(m, d=1, steps=None):
    steps = steps or [1] * d
    maps = [[(x + s) % m for x in range(m)] for s in steps]
    return make_finite_system(m, [1.0 / m] * m, maps)


def system_tuple(sys, arrays):
    idx = nonzero_cube_indices(sys.d)
    return FunctionTuple(
        sys.d,
        {
            j: GridFunction(1, (sys.size,), 1.0, (0.0,), np.asarray(a, float))
            for j, a in zip(idx, arrays)
        },
    )


def lattice_tuple(d, arrays):
    idx = nonzero_cube_indices(d)
    a0 = np.asarray(arrays[0], float)
    return FunctionTuple(
        d,
        {
            j: GridFunction(d, a0.shape, 1.0, (0.0,) * d, np.asarray(a, float))
            for j, a in zip(idx, arrays)
        },
    )


class TestCubicAverage:
    def test_all_ones(self):
        sys = rotation_system(5, d=2, steps=[1, 2])
        f = system_tuple(sys, [np.ones(5)] * 3)
        for n in (1, 2, 4):
            assert np.allclose(cubic_average(sys, f, n), 1.0, atol=1e-14)

    def test_identity_maps_give_pointwise_product(self, rng):
        sys = make_finite_system(
            6, [1 / 6] * 6, [list(range(6)), list(range(6))]
        )
        arrays = [rng.uniform(-1, 1, 6) for _ in range(3)]
        f = system_tuple(sys, arrays)
        product = arrays[0] * arrays[1] * arrays[2]
        for n in (1, 3, 5):
            assert np.allclose(cubic_average(sys, f, n), product, atol=1e-14)

    def test_rotation_indicator_oracle(self):
        # length-4 orbit average of the indicator of one point is 1/4
        sys = rotation_system(4)
        f = system_tuple(sys, [[1.0, 0.0, 0.0, 0.0]])
        assert np.allclose(cubic_average(sys, f, 4), 0.25, atol=1e-15)

    def test_matches_birkhoff_in_one_dimension(self, rng):
        # independent one-line oracle for d=1
        sys = rotation_system(7)
        vals = rng.uniform(-1, 1, 7)
        f = system_tuple(sys, [vals])
        for n in (1, 2, 5):
            got = cubic_average(sys, f, n)
            for x in range(7):
                expect = np.mean([vals[(x + i) % 7] for i in range(n)])
                assert got[x] == pytest.approx(expect, abs=1e-14)

    def test_sup_bound_by_product_of_sups(self, rng):
        sys = rotation_system(8, d=2, steps=[1, 3])
        arrays = [rng.uniform(-2, 2, 8) for _ in range(3)]
        f = system_tuple(sys, arrays)
        bound = np.prod([np.max(np.abs(a)) for a in arrays])
        for n in (1, 2, 6):
            assert np.max(np.abs(cubic_average(sys, f, n))) <= bound + 1e-12

    def test_invalid_n(self):
        sys = rotation_system(4)
        f = system_tuple(sys, [np.ones(4)])
        with pytest.raises(InvalidN):
            cubic_average(sys, f, 0)


class TestDiscreteCubeAverage:
    def test_n1_is_pointwise_product(self):
        point = np.zeros((3, 3))
        point[1, 2] = 1.0
        F = lattice_tuple(2, [point] * 3)
        out = discrete_cube_average(F, 1)
        assert out.values[1, 2] == 1.0 and out.values.sum() == 1.0

    def test_deep_interior_of_constant_box(self):
        F = lattice_tuple(2, [np.ones((12, 12))] * 3)
        out = discrete_cube_average(F, 3)
        k = [int(round(-out.origin[l])) for l in range(2)]
        assert out.values[k[0] + 5, k[1] + 5] == pytest.approx(1.0, abs=1e-14)

    def test_two_by_two_indicator_oracle(self):
        # every lattice shift keeps all three arguments inside [0,2)^2
        box = np.ones((2, 2))
        F = lattice_tuple(2, [box] * 3)
        out = discrete_cube_average(F, 2)
        k = [int(round(-out.origin[l])) for l in range(2)]
        assert out.values[k[0], k[1]] == pytest.approx(1.0, abs=1e-15)

    def test_against_enumeration_oracle(self, rng):
        arrays = [rng.standard_normal((4, 4)) for _ in range(3)]
        F = lattice_tuple(2, arrays)
        n = 3
        out = discrete_cube_average(F, n)

        def entry(a, k):
            return (
                a[k] if 0 <= k[0] < 4 and 0 <= k[1] < 4 else 0.0
            )

        coords = nonzero_cube_indices(2)
        for k1 in range(-2, 4):
            for k2 in range(-2, 4):
                total = 0.0
                for i in itertools.product(range(n), repeat=2):
                    term = 1.0
                    for j, a in zip(coords, arrays):
                        kk = (k1 + j.coords[0] * i[0], k2 + j.coords[1] * i[1])
                        term *= entry(a, kk)
                    total += term
                expect = total / n**2
                idx = (
                    k1 - int(round(out.origin[0])),
                    k2 - int(round(out.origin[1])),
                )
                assert out.values[idx] == pytest.approx(expect, abs=1e-12)


class TestTrajectoryLift:
    def test_constant_tuple_lifts_to_box_indicator(self):
        sys = rotation_system(4, d=2, steps=[1, 1])
        f = system_tuple(sys, [np.ones(4)] * 3)
        lift = trajectory_lift(sys, f, 0, 2)
        for _, g in lift:
            assert np.all(g.values == 1.0)
            assert g.dims == (4, 4)

    def test_rotation_orbit_unrolled(self):
        # orbit of 0 under +1 mod 4: the lift sees the indicator at 0 and 4
        sys = rotation_system(4)
        f = system_tuple(sys, [[1.0, 0.0, 0.0, 0.0]])
        lift = trajectory_lift(sys, f, 0, 2)
        g = next(iter(lift.entries.values()))
        assert list(np.nonzero(g.values)[0]) == [0]

    def test_identity_with_lattice_average(self, rng):
        sys = rotation_system(8, d=2, steps=[1, 3])
        arrays = [rng.uniform(-1, 1, 8) for _ in range(3)]
        f = system_tuple(sys, arrays)
        x = 5
        N = 4
        lift = trajectory_lift(sys, f, x, N)
        t0 = sys.iterated_map(0, N - 1)
        t1 = sys.iterated_map(1, N - 1)
        for n in range(1, N + 1):
            mn = cubic_average(sys, f, n)
            lat = discrete_cube_average(lift, n)
            base = [int(round(-lat.origin[l])) for l in range(2)]
            for k1 in range(N):
                for k2 in range(N):
                    pt = t0[k1, t1[k2, x]]
                    assert mn[pt] == pytest.approx(
                        lat.values[base[0] + k1, base[1] + k2], abs=1e-12
                    )


class TestFloorLift:
    def test_point_mass_norm_preserved(self):
        v = np.zeros((4, 4))
        v[2, 1] = 1.0
        F = lattice_tuple(2, [v] * 3)
        lifted = floor_lift(F)
        for _, g in lifted:
            assert lp_norm(g, 4).value == pytest.approx(1.0, abs=1e-15)

    def test_zero_tuple(self):
        F = lattice_tuple(2, [np.zeros((3, 3))] * 3)
        lifted = floor_lift(F, subdivide=2)
        for _, g in lifted:
            assert np.all(g.values == 0.0)

    def test_norm_equality_random(self, rng):
        arrays = [rng.standard_normal((4, 4)) for _ in range(3)]
        F = lattice_tuple(2, arrays)
        p = 4.0
        for sub in (1, 2, 3):
            lifted = floor_lift(F, subdivide=sub)
            for (j, g), a in zip(lifted, arrays):
                lattice = float(np.sum(np.abs(a) ** p)) ** (1 / p)
                assert lp_norm(g, p).value == pytest.approx(lattice, rel=1e-12)


class TestNormTransfer:
    def test_explicit_bound_on_step_grids(self, rng):
        # continuum-vs-lattice norm gap obeys the 2^(d+1)/m envelope
        from cubevar.analytic import box_average
        from cubevar.core import grid_norm

        d = 2
        q = 4.0 / 3.0
        arrays = [rng.standard_normal((5, 5)) for _ in range(3)]
        F = lattice_tuple(d, arrays)
        lifted = floor_lift(F, subdivide=4)
        norms = float(
            np.prod([lp_norm(g, 4).value for _, g in F])
        )
        for m in (1, 2, 4):
            n = 2 * m
            cont = box_average(lifted, float(n)) - box_average(lifted, float(m))
            lat_n = discrete_cube_average(F, n)
            lat_m = discrete_cube_average(F, m)
            emb = np.zeros(lat_n.dims)
            off = tuple(
                int(round(lat_m.origin[l] - lat_n.origin[l])) for l in range(d)
            )
            emb[off[0]:off[0] + lat_m.dims[0], off[1]:off[1] + lat_m.dims[1]] = lat_m.values
            gap = abs(
                grid_norm(cont.values, q, cont.cell_volume)
                - grid_norm(lat_n.values - emb, q, 1.0)
            )
            assert gap <= 2.0 ** (d + 1) / m * norms


class TestSequenceIO:
    def test_manifest_round_trip(self, tmp_path, rng):
        frames = [
            GridFunction(2, (3, 3), 0.5, (0.0, 0.0), rng.standard_normal((3, 3)))
            for _ in range(3)
        ]
        seq = AverageSequence([1, 2, 4], frames)
        manifest = store_sequence(seq, tmp_path, "s")
        back = load_sequence(manifest)
        assert back.indices == [1, 2, 4]
        assert np.array_equal(back.frames[2].values, frames[2].values)

    def test_weighted_round_trip(self, tmp_path, rng):
        weights = np.full(5, 0.2)
        seq = AverageSequence(
            [1, 3], [rng.uniform(-1, 1, 5) for _ in range(2)], weights=weights
        )
        manifest = store_sequence(seq, tmp_path, "w")
        back = load_sequence(manifest)
        assert np.array_equal(back.weights, weights)

    def test_indices_must_increase(self):
        with pytest.raises(ValueError):
            AverageSequence([2, 2], [np.ones(2), np.ones(2)])
