"""Core types: systems, grids, norms, file round trips."""

import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cubevar.core import (
    CubeIndex,
    FunctionTuple,
    GridFunction,
    conjugate_exponent,
    load_grid,
    load_system,
    load_tuple,
    lp_norm,
    make_finite_system,
    nonzero_cube_indices,
    shift_values,
    store_grid,
    store_system,
    store_tuple,
)
from cubevar.errors import (
    CommutationViolation,
    DimensionMismatch,
    FormatError,
    MeasureViolation,
    WeightError,
)


def rotation_system(m, d=1, steps=None):
    steps = steps or [1] * d
    maps = [[(x + s) % m for x in range(m)] for s in steps]
    return make_finite_system(m, [1.0 / m] * m, maps)


class TestCubeIndex:
    def test_coords_round_trip(self):
        j = CubeIndex(0b101, 3)
        assert j.coords == (1, 0, 1)

    def test_enumeration_order_is_ascending_bitmask(self):
        idx = nonzero_cube_indices(2)
        assert [j.bits for j in idx] == [1, 2, 3]
        assert all(not j.is_zero for j in idx)

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            CubeIndex(4, 2)
        with pytest.raises(ValueError):
            CubeIndex(0, 4)


class TestFiniteSystem:
    def test_rotation_is_valid(self):
        sys = rotation_system(4)
        assert sys.size == 4 and sys.d == 1

    def test_commuting_powers_valid(self):
        # two powers of the same rotation commute
        sys = rotation_system(4, d=2, steps=[1, 2])
        assert sys.d == 2

    def test_noncommuting_permutations_rejected_exhaustively(self):
        # oracle: try all 36 ordered pairs of 3-permutations and require
        # exactly the commuting ones pass
        perms = list(itertools.permutations(range(3)))
        for p1 in perms:
            for p2 in perms:
                comm = all(p1[p2[x]] == p2[p1[x]] for x in range(3))
                if comm:
                    make_finite_system(3, [1 / 3] * 3, [list(p1), list(p2)])
                else:
                    with pytest.raises(CommutationViolation):
                        make_finite_system(3, [1 / 3] * 3, [list(p1), list(p2)])

    def test_measure_violation(self):
        # constant map concentrates mass; not measure preserving
        with pytest.raises(MeasureViolation):
            make_finite_system(3, [1 / 3] * 3, [[0, 0, 0]])

    def test_weight_errors(self):
        with pytest.raises(WeightError):
            make_finite_system(2, [0.6, 0.6], [[1, 0]])
        with pytest.raises(WeightError):
            make_finite_system(2, [-0.5, 1.5], [[1, 0]])

    def test_nonuniform_invariant_weights_accepted(self):
        # swap on a 4-point space with weights constant on the swap orbits
        maps = [[1, 0, 3, 2]]
        weights = [0.1, 0.1, 0.4, 0.4]
        sys = make_finite_system(4, weights, maps)
        assert sys.weights[2] == 0.4

    @given(m=st.integers(2, 12), s1=st.integers(0, 11), s2=st.integers(0, 11))
    def test_random_rotation_products_always_validate(self, m, s1, s2):
        rotation_system(m, d=2, steps=[s1 % m, s2 % m])

    def test_iterated_map_table(self):
        sys = rotation_system(5)
        table = sys.iterated_map(0, 3)
        assert table[0][2] == 2
        assert table[3][0] == 3


class TestGridFunction:
    def test_value_at_and_outside(self):
        g = GridFunction(2, (2, 2), 0.5, (0.0, 0.0), np.arange(4.0).reshape(2, 2))
        assert g.value_at((0.0, 0.0)) == 0.0
        assert g.value_at((0.6, 0.1)) == 2.0
        assert g.value_at((-0.1, 0.0)) == 0.0
        assert g.value_at((5.0, 0.0)) == 0.0

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            GridFunction(1, (2,), 1.0, (0.0,), np.array([1.0, np.inf]))

    def test_shape_mismatch_rejected(self):
        with pytest.raises(DimensionMismatch):
            GridFunction(2, (2, 3), 1.0, (0.0, 0.0), np.zeros((3, 2)))

    def test_arithmetic_requires_same_grid(self):
        a = GridFunction(1, (4,), 1.0, (0.0,), np.ones(4))
        b = GridFunction(1, (4,), 0.5, (0.0,), np.ones(4))
        with pytest.raises(DimensionMismatch):
            _ = a - b

    def test_shift_values(self):
        v = np.arange(9.0).reshape(3, 3)
        s = shift_values(v, (1, 0))
        assert s[0, 0] == 3.0 and s[2, 2] == 0.0
        assert np.all(shift_values(v, (5, 0)) == 0.0)


class TestFunctionTuple:
    def test_requires_all_nonzero_indices(self):
        g = GridFunction(2, (2, 2), 1.0, (0.0, 0.0), np.zeros((2, 2)))
        with pytest.raises(ValueError):
            FunctionTuple(2, {CubeIndex(1, 2): g})

    def test_entries_share_grid(self):
        g1 = GridFunction(2, (2, 2), 1.0, (0.0, 0.0), np.zeros((2, 2)))
        g2 = GridFunction(2, (2, 2), 0.5, (0.0, 0.0), np.zeros((2, 2)))
        idx = nonzero_cube_indices(2)
        with pytest.raises(DimensionMismatch):
            FunctionTuple(2, {idx[0]: g1, idx[1]: g2, idx[2]: g1})

    def test_from_list_order(self):
        gs = [
            GridFunction(2, (2, 2), 1.0, (0.0, 0.0), np.full((2, 2), float(k)))
            for k in range(3)
        ]
        F = FunctionTuple.from_list(2, gs)
        assert F[CubeIndex(3, 2)].values[0, 0] == 2.0


class TestLpNorm:
    def test_unit_mass_grid(self):
        # f = 1 on [0,1)^2: h*dims = 1 per axis
        g = GridFunction(2, (4, 4), 0.25, (0.0, 0.0), np.ones((4, 4)))
        assert lp_norm(g, 4).value == pytest.approx(1.0, abs=1e-14)

    def test_single_cell(self):
        v = np.zeros((4, 4))
        v[1, 2] = 1.0
        g = GridFunction(2, (4, 4), 0.25, (0.0, 0.0), v)
        assert lp_norm(g, 2).value == pytest.approx(0.25, abs=1e-15)

    def test_sup_norm_system_mode(self):
        sys = rotation_system(4)
        f = np.full(4, -2.5)
        assert lp_norm(f, math.inf, system=sys).value == 2.5

    def test_conjugate_exponent_exact(self):
        q = conjugate_exponent(2)
        assert q.numerator == 4 and q.denominator == 3
        n = lp_norm(GridFunction(1, (2,), 1.0, (0.0,), np.ones(2)), q)
        assert n.p == q

    def test_dimension_mismatch(self):
        sys = rotation_system(4)
        with pytest.raises(DimensionMismatch):
            lp_norm(np.ones(3), 2, system=sys)

    def test_exponent_below_one_rejected(self):
        g = GridFunction(1, (2,), 1.0, (0.0,), np.ones(2))
        with pytest.raises(ValueError):
            lp_norm(g, 0.5)

    @given(c=st.floats(-8, 8), p=st.sampled_from([1.0, 1.5, 2.0, 4.0, math.inf]))
    def test_absolute_homogeneity(self, c, p):
        rng = np.random.default_rng(5)
        g = GridFunction(2, (6, 6), 0.5, (0.0, 0.0), rng.standard_normal((6, 6)))
        base = lp_norm(g, p).value
        scaled = lp_norm(g * c, p).value
        assert scaled == pytest.approx(abs(c) * base, rel=1e-12, abs=1e-12)

    @given(p1=st.floats(1.0, 8.0), p2=st.floats(1.0, 8.0))
    def test_monotone_in_p_probability_mode(self, p1, p2):
        if p1 > p2:
            p1, p2 = p2, p1
        sys = rotation_system(8)
        rng = np.random.default_rng(6)
        f = rng.uniform(-2, 2, size=8)
        lo = lp_norm(f, p1, system=sys).value
        hi = lp_norm(f, p2, system=sys).value
        assert lo <= hi + 1e-12


class TestFileRoundTrips:
    def test_grid_round_trip_bit_exact(self, tmp_path, rng):
        g = GridFunction(
            2, (8, 8), 1 / 3, (0.25, -1.5), rng.standard_normal((8, 8))
        )
        path = tmp_path / "g.grid"
        store_grid(g, path)
        back = load_grid(path)
        assert np.array_equal(back.values, g.values)
        assert back.dims == g.dims and back.h == g.h and back.origin == g.origin

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.grid"
        path.write_bytes(b"NOTMAGIC" + b"\x00" * 64)
        with pytest.raises(FormatError):
            load_grid(path)

    def test_truncated_payload(self, tmp_path, rng):
        g = GridFunction(1, (8,), 1.0, (0.0,), rng.standard_normal(8))
        path = tmp_path / "g.grid"
        store_grid(g, path)
        raw = path.read_bytes()
        path.write_bytes(raw[:-8])  # drop one value
        with pytest.raises(FormatError):
            load_grid(path)

    def test_system_round_trip(self, tmp_path):
        sys = rotation_system(6, d=2, steps=[1, 3])
        path = tmp_path / "sys.txt"
        store_system(sys, path)
        back = load_system(path)
        assert back.size == 6
        assert all(np.array_equal(a, b) for a, b in zip(back.maps, sys.maps))
        assert np.array_equal(back.weights, sys.weights)

    def test_tuple_round_trip(self, tmp_path, rng):
        gs = [
            GridFunction(2, (4, 4), 0.5, (0.0, 0.0), rng.standard_normal((4, 4)))
            for _ in range(3)
        ]
        F = FunctionTuple.from_list(2, gs)
        manifest = store_tuple(F, tmp_path, "t")
        back = load_tuple(manifest)
        for j, g in F:
            assert np.array_equal(back[j].values, g.values)
