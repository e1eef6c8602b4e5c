"""Profiles and entangled averages against analytic and quadrature oracles."""

import math
import warnings

import numpy as np
import pytest

from cubevar.analytic import (
    Profile,
    ResolutionWarning,
    b_average,
    box_average,
    fine_integral,
    indicator_profile,
    load_profile,
    make_phi,
    make_psi,
    make_theta,
    smooth_average,
    store_profile,
)
from cubevar.core import FunctionTuple, GridFunction, grid_norm, lp_norm, nonzero_cube_indices
from cubevar.errors import InvalidR, NotDifferentiable, ResolutionTooCoarse
from cubevar.harness.generators import random_tuple_spec, rng_for


def grid_tuple(d, arrays, h, origin=None):
    idx = nonzero_cube_indices(d)
    a0 = np.asarray(arrays[0], float)
    origin = origin or (0.0,) * d
    return FunctionTuple(
        d,
        {
            j: GridFunction(d, a0.shape, h, origin, np.asarray(a, float))
            for j, a in zip(idx, arrays)
        },
    )


def trapezoid_oracle(evaluate, lo, hi, resolution):
    # independent quadrature at a stated resolution
    n = int(round((hi - lo) * resolution))
    x = np.linspace(lo, hi, n + 1)
    return float(np.trapezoid(evaluate(x), x))


class TestMakePhi:
    def test_invariants_certified(self):
        phi = make_phi(0.1, 32)
        assert phi.integral == pytest.approx(1.0, abs=1e-10)
        assert phi.l1_dist_to_indicator <= 0.1

    def test_oracle_trapezoid_at_double_resolution(self):
        phi = make_phi(0.1, 32)
        lo, hi = phi.support
        integral = trapezoid_oracle(phi, lo - 0.1, hi + 0.1, 4096)
        assert integral == pytest.approx(1.0, abs=1e-9)
        l1 = trapezoid_oracle(
            lambda x: np.abs(phi(x) - ((x >= 0) & (x < 1))), lo - 0.1, hi + 0.1, 4096
        )
        assert l1 <= 0.1
        assert l1 == pytest.approx(phi.l1_dist_to_indicator, abs=1e-4)

    def test_l1_distance_nondecreasing_in_width(self):
        dists = [make_phi(delta, 32).l1_dist_to_indicator for delta in (0.02, 0.1, 0.2)]
        assert dists[0] <= dists[1] <= dists[2]

    def test_indicator_kind(self):
        box = indicator_profile()
        assert box.integral == 1.0
        assert box.l1_dist_to_indicator == 0.0
        assert np.array_equal(box(np.array([-0.5, 0.0, 0.5, 1.0])), [0, 1, 1, 0])

    def test_delta_range_checked(self):
        with pytest.raises(ValueError):
            make_phi(0.0)
        with pytest.raises(ValueError):
            make_phi(1.5)

    def test_unresolvable_delta_raises(self):
        with pytest.raises(ResolutionTooCoarse):
            make_phi(1e-7, 32)


class TestMakePsi:
    def test_mean_zero(self, psi_default):
        assert abs(psi_default.integral) <= 1e-10

    def test_telescoping_pointwise(self, phi_default, psi_default):
        # the two-scale difference at dyadic scale reproduces consecutive
        # rescalings of the parent
        t = np.linspace(-1.0, 3.0, 1001)
        lhs = psi_default(t / 2.0) / 2.0
        rhs = phi_default(t) - phi_default(t / 2.0) / 2.0
        assert np.max(np.abs(lhs - rhs)) <= 1e-9

    def test_telescoping_sum(self, phi_default, psi_default):
        t = np.linspace(-2.0, 18.0, 2001)
        K = 4
        total = sum(
            psi_default(t / 2.0**k) / 2.0**k for k in range(1, K + 1)
        )
        expect = phi_default(t) - phi_default(t / 2.0**K) / 2.0**K
        assert np.max(np.abs(total - expect)) <= 1e-9

    def test_requires_unit_integral(self, phi_default, psi_default):
        with pytest.raises(ValueError):
            make_psi(psi_default)


class TestMakeTheta:
    def test_mean_zero(self, theta_default):
        assert abs(theta_default.integral) <= 1e-10

    def test_finite_difference_oracle(self):
        # rescaled derivative profile vs central difference in the scale;
        # the truncation error scales like eps^2 / ramp^3, so a wide ramp
        # keeps the pointwise budget honest
        phi = make_phi(0.8, 32)
        theta = make_theta(phi)
        r, eps = 1.3, 1e-4
        s = np.linspace(-1.0, 3.0, 1601)
        exact = theta(s / r) / r
        fd = -r * (
            phi(s / (r + eps)) / (r + eps)
            - phi(s / (r - eps)) / (r - eps)
        ) / (2 * eps)
        assert np.max(np.abs(exact - fd)) <= 1e-6

    def test_raw_indicator_rejected(self):
        with pytest.raises(NotDifferentiable):
            make_theta(indicator_profile())

    def test_fine_integral_scales(self, theta_default):
        for scale in (0.5, 1.0, 4.0):
            assert abs(fine_integral(theta_default, scale)) <= 1e-10


class TestSmoothAverage:
    def test_constants_factor_out(self, phi_default):
        c = 1.3
        arrays = [np.full((32, 32), c)] * 3
        F = grid_tuple(2, arrays, 1 / 8)
        out = smooth_average(F, phi_default, 0.5)
        assert out.values[16, 16] == pytest.approx(c**3, rel=1e-12)

    def test_tent_oracle_d1(self):
        # sharp profile, unit indicator input, r=1: the overlap integral is
        # the tent max(0, 1-|x|), exactly on lattice-aligned steps
        res = 32
        h = 1.0 / res
        n = 4 * res
        org = -2.0
        pts = org + np.arange(n) * h
        vals = ((pts >= 0) & (pts < 1)).astype(float)
        F = grid_tuple(1, [vals], h, (org,))
        out = box_average(F, 1.0)
        assert np.max(np.abs(out.values - np.maximum(0.0, 1.0 - np.abs(pts)))) <= 1e-12

    def test_multilinearity(self, phi_default, rng):
        arrays = [rng.standard_normal((24, 24)) for _ in range(3)]
        F = grid_tuple(2, arrays, 1 / 8)
        scaled = grid_tuple(2, [arrays[0] * 3.0, arrays[1], arrays[2]], 1 / 8)
        a = smooth_average(F, phi_default, 1.0)
        b = smooth_average(scaled, phi_default, 1.0)
        assert np.allclose(b.values, 3.0 * a.values, rtol=1e-10, atol=1e-12)

    def test_additivity_in_one_entry(self, phi_default, rng):
        base = [rng.standard_normal((24, 24)) for _ in range(3)]
        bump = rng.standard_normal((24, 24))
        F = grid_tuple(2, base, 1 / 8)
        G = grid_tuple(2, [base[0], bump, base[2]], 1 / 8)
        H = grid_tuple(2, [base[0], base[1] + bump, base[2]], 1 / 8)
        a = smooth_average(F, phi_default, 0.8).values
        b = smooth_average(G, phi_default, 0.8).values
        c = smooth_average(H, phi_default, 0.8).values
        assert np.allclose(c, a + b, rtol=1e-10, atol=1e-12)

    def test_translation_covariance(self, phi_default, rng):
        arrays = [rng.standard_normal((16, 16)) for _ in range(3)]
        F = grid_tuple(2, arrays, 0.25)
        shifted = F.map(lambda g: g.translated((1.0, -0.5)))
        a = smooth_average(F, phi_default, 0.7)
        b = smooth_average(shifted, phi_default, 0.7)
        assert np.array_equal(a.values, b.values)
        assert b.origin == (1.0, -0.5)

    def test_direct_matches_iterated(self, phi_default, rng):
        for d, dims in ((1, (48,)), (2, (20, 20))):
            arrays = [rng.standard_normal(dims) for _ in range(2**d - 1)]
            F = grid_tuple(d, arrays, 0.25)
            a = smooth_average(F, phi_default, 1.1, method="direct")
            b = smooth_average(F, phi_default, 1.1, method="iterated")
            assert np.allclose(a.values, b.values, rtol=1e-10, atol=1e-13)

    def test_three_dimensional_direct(self, phi_default, rng):
        arrays = [rng.standard_normal((6, 6, 6)) for _ in range(7)]
        F = grid_tuple(3, arrays, 0.5)
        out = smooth_average(F, phi_default, 1.0)
        assert out.dims == (6, 6, 6)
        assert np.all(np.isfinite(out.values))

    def test_invalid_r(self, phi_default):
        F = grid_tuple(2, [np.ones((4, 4))] * 3, 0.25)
        with pytest.raises(InvalidR):
            smooth_average(F, phi_default, 0.0)

    def test_resolution_warning(self, phi_default):
        F = grid_tuple(2, [np.ones((8, 8))] * 3, 1.0)
        with pytest.warns(ResolutionWarning):
            smooth_average(F, phi_default, 1.0)

    def test_scale_covariance(self, phi_default, rng):
        # rescaling the profile by 2^j and the radius by 2^-j is the identity
        arrays = [rng.standard_normal((24, 24)) for _ in range(3)]
        F = grid_tuple(2, arrays, 1 / 8)
        radii = [1.0, 1.4, 2.0]
        base = [smooth_average(F, phi_default, r).values for r in radii]
        phi2 = phi_default.rescaled(2.0)
        rescaled = [smooth_average(F, phi2, r / 2.0).values for r in radii]
        for a, b in zip(base, rescaled):
            assert np.array_equal(a, b)


class TestBoxAverage:
    def test_constants(self):
        F = grid_tuple(2, [np.full((24, 24), 2.0)] * 3, 1 / 8)
        out = box_average(F, 0.5)
        assert out.values[12, 12] == pytest.approx(8.0, rel=1e-12)

    def test_step_bridge_with_lattice_average(self, rng):
        from cubevar.ergodic import discrete_cube_average, floor_lift

        arrays = [rng.standard_normal((6, 6)) for _ in range(3)]
        F = grid_tuple(2, arrays, 1.0)
        for n in (1, 2, 4):
            lat = discrete_cube_average(F, n)
            cont = box_average(floor_lift(F), float(n))
            k0 = [int(round(cont.origin[l] - lat.origin[l])) for l in range(2)]
            sub = lat.values[k0[0]:k0[0] + 6, k0[1]:k0[1] + 6]
            assert np.max(np.abs(cont.values - sub)) <= 1e-12

    def test_norm_decreasing_families(self, rng):
        # recorded behavior: output mass decreases along growing radii
        spec = random_tuple_spec(rng_for(3, 0), 2, 4, "smooth")
        F = spec.sample(8)
        q = 4 / 3
        norms = [
            grid_norm(box_average(F, r).values, q, F.grid.cell_volume)
            for r in (8.0, 16.0, 32.0)
        ]
        assert norms[0] >= norms[1] >= norms[2]


class TestBAverage:
    def test_constants_vanish_when_ramp_resolved(self):
        # the derivative profile integrates to zero, so constants are
        # annihilated; with pointwise quadrature weights the residual is the
        # profile's aliasing error and dies as the ramp is resolved
        res = 512
        G = 4 * res
        phi = make_phi(0.5, 64)
        theta = make_theta(phi)
        F = grid_tuple(1, [np.full(G, 1.5)], 1.0 / res)
        out = b_average(F, phi, theta, 0.5)
        assert abs(out.values[G // 2]) <= 1e-9

    def test_constants_residual_shrinks_under_refinement(self):
        phi = make_phi(0.4, 64)
        theta = make_theta(phi)
        residuals = []
        for res in (64, 128):
            G = 2 * res
            F = grid_tuple(2, [np.full((G, G), 1.5)] * 3, 1.0 / res)
            out = b_average(F, phi, theta, 0.5)
            residuals.append(abs(out.values[G // 2, G // 2]))
        assert residuals[0] <= 1e-2
        assert residuals[1] < residuals[0]

    def test_derivative_identity(self, phi_default, theta_default):
        spec = random_tuple_spec(rng_for(9, 0), 2, 4, "smooth")
        F = spec.sample(8)
        r, eps = 1.5, 1e-3
        b = b_average(F, phi_default, theta_default, r)
        plus = smooth_average(F, phi_default, r + eps)
        minus = smooth_average(F, phi_default, r - eps)
        fd = -r * (plus.values - minus.values) / (2 * eps)
        assert np.max(np.abs(b.values - fd)) <= 1e-4

    def test_one_dimensional_independent_integral(self, phi_default, theta_default, rng):
        # direct nested quadrature written out longhand for d=1
        res = 16
        h = 1.0 / res
        n = 6 * res
        vals = np.zeros(n)
        vals[res:3 * res] = rng.standard_normal(2 * res)
        F = grid_tuple(1, [vals], h)
        r = 1.2
        out = b_average(F, phi_default, theta_default, r)
        lo, hi = theta_default.support
        t = np.arange(int(np.floor(r * lo / h)), int(np.ceil(r * hi / h)) + 1)
        weights = theta_default(t * h / r) / r
        for x in (res, 2 * res, 3 * res):
            total = 0.0
            for ti, wt in zip(t, weights):
                k = x + ti
                if 0 <= k < n:
                    total += wt * vals[k]
            assert out.values[x] == pytest.approx(total * h, abs=1e-12)

    def test_theta_must_match_phi(self, phi_default, theta_default):
        other = make_phi(0.2, 32)
        F = grid_tuple(1, [np.ones(8)], 0.25)
        with pytest.raises(ValueError):
            b_average(F, other, theta_default, 1.0)


class TestComparisonBound:
    def test_indicator_profile_gives_zero_distance(self, rng):
        # delta -> 0 limit: the two averages coincide for the sharp profile
        arrays = [rng.standard_normal((16, 16)) for _ in range(3)]
        F = grid_tuple(2, arrays, 0.25)
        a = smooth_average(F, indicator_profile(), 2.0)
        b = box_average(F, 2.0)
        assert np.array_equal(a.values, b.values)

    def test_bound_holds_on_random_tuples(self):
        q = 4 / 3
        for trial in range(3):
            spec = random_tuple_spec(rng_for(21, trial), 2, 4, "mixed")
            F = spec.sample(16)
            norms = float(np.prod([lp_norm(g, 4).value for _, g in F]))
            for delta in (0.1, 0.2):
                phi = make_phi(delta, 16)
                for r in (1.0, 2.0):
                    diff = smooth_average(F, phi, r) - box_average(F, r)
                    lhs = grid_norm(diff.values, q, diff.cell_volume)
                    assert lhs <= 2 * delta * norms * 1.05


class TestProfileIO:
    def test_round_trips(self, tmp_path):
        for profile in (
            indicator_profile(8),
            make_phi(0.2, 16),
            make_psi(make_phi(0.2, 16)),
            make_theta(make_phi(0.2, 16)),
        ):
            path = tmp_path / f"{profile.kind}.grid"
            store_profile(profile, path)
            back = load_profile(path)
            assert back.kind == profile.kind
            assert np.array_equal(back.samples.values, profile.samples.values)
