"""Smooth averaging profiles and entangled multilinear averages on grids.

The profile family is the unit indicator mollified by the standard compactly
supported bump.  Its primitive has no elementary closed form, so profile
evaluation goes through a high-resolution cumulative table of the bump (one
time cost, interpolated with a cubic spline whose error is far below every
tolerance used here).  The bump's pointwise derivative is elementary, which
keeps the scale-derivative profile exact.

Averages couple the tuple entries through shifted arguments sharing one
integration variable, so they do not factor into convolutions.  Two
evaluators are provided: a direct accumulation over integration nodes
(reference, any dimension) and an axis-iterated path for d <= 2 that turns
the inner node sum into a banded matrix product.  Both use the same nodes
and weights and agree to rounding.
"""

from __future__ import annotations

import math
import warnings
from functools import lru_cache
from pathlib import Path
from typing import Sequence, Union

import numpy as np
from scipy.interpolate import CubicSpline

from .core import FunctionTuple, GridFunction, load_grid, shift_values, store_grid
from .errors import (
    DimensionMismatch,
    FormatError,
    InvalidR,
    NotDifferentiable,
    ResolutionTooCoarse,
)


class ResolutionWarning(UserWarning):
    """The averaging scale is barely resolved by the grid."""


# ---------------------------------------------------------------------------
# The standard bump on [-1, 1], normalized to unit integral.
# ---------------------------------------------------------------------------

_CDF_KNOTS = 8192  # knot count; spline error ~ 1e-14 on the cumulative table


def _bump_raw(u: np.ndarray) -> np.ndarray:
    out = np.zeros_like(u, dtype=np.float64)
    m = np.abs(u) < 1.0
    um = u[m]
    out[m] = np.exp(-1.0 / (1.0 - um * um))
    return out


@lru_cache(maxsize=1)
def _bump_tables():
    """(normalization constant, cumulative spline) of the standard bump."""
    u = np.linspace(-1.0, 1.0, _CDF_KNOTS + 1)
    v = _bump_raw(u)
    inc = 0.5 * (v[1:] + v[:-1]) * (2.0 / _CDF_KNOTS)
    cdf = np.concatenate([[0.0], np.cumsum(inc)])
    total = cdf[-1]
    return 1.0 / total, CubicSpline(u, cdf / total)


def bump_density(u: np.ndarray) -> np.ndarray:
    """Normalized bump values on [-1, 1]."""
    c, _ = _bump_tables()
    return c * _bump_raw(np.asarray(u, dtype=np.float64))


def bump_cdf(u: np.ndarray) -> np.ndarray:
    """Cumulative integral of the normalized bump, clamped outside [-1, 1]."""
    _, spline = _bump_tables()
    return spline(np.clip(np.asarray(u, dtype=np.float64), -1.0, 1.0))


@lru_cache(maxsize=1)
def _cdf_left_mass() -> float:
    # integral of the cumulative over [-1, 0]; fixes the exact L1 distance
    # between the mollified and the sharp indicator
    u = np.linspace(-1.0, 0.0, _CDF_KNOTS + 1)
    return float(np.trapezoid(bump_cdf(u), u))


class Profile:
    """A one-dimensional averaging profile with analytic metadata.

    Kinds: ``indicator``, ``smoothed-indicator`` (mollified unit indicator of
    ramp half-width delta/2), ``derived-psi`` (two-scale difference of a unit
    profile), ``derived-theta`` (scale derivative), and rescaled versions of
    each.  ``samples`` is a sampled view kept for serialization and plots;
    numerical quadrature evaluates the profile in closed-ish form.
    """

    def __init__(self, kind, evaluate, derivative, support, samples,
                 integral, l1_dist_to_indicator, delta=None, resolution=None,
                 scale=1.0, parent_key=None):
        self.kind = kind
        self._evaluate = evaluate
        self._derivative = derivative
        self.support = support
        self.samples = samples
        self.integral = integral
        self.l1_dist_to_indicator = l1_dist_to_indicator
        self.delta = delta
        self.resolution = resolution
        self.scale = scale
        self.parent_key = parent_key

    def __call__(self, x) -> np.ndarray:
        return self._evaluate(np.asarray(x, dtype=np.float64))

    def derivative(self, x) -> np.ndarray:
        if self._derivative is None:
            raise NotDifferentiable(f"profile kind {self.kind!r} has no derivative")
        return self._derivative(np.asarray(x, dtype=np.float64))

    @property
    def key(self):
        return (self.kind, self.delta, self.scale)

    def rescaled(self, c: float) -> "Profile":
        """The profile x -> p(x/c)/c (same integral, support scaled by c)."""
        if c <= 0:
            raise InvalidR("scale factor must be positive")
        ev = self._evaluate
        dv = self._derivative
        lo, hi = self.support
        res = self.resolution or 32
        new_res = max(1, int(math.ceil(res / c)))
        samples = _sample_profile(lambda x: ev(x / c) / c, (lo * c, hi * c), new_res)
        return Profile(
            kind=f"rescaled-{self.kind}",
            evaluate=lambda x, _c=c: ev(x / _c) / _c,
            derivative=None if dv is None else (lambda x, _c=c: dv(x / _c) / _c**2),
            support=(lo * c, hi * c),
            samples=samples,
            integral=self.integral,
            l1_dist_to_indicator=None,
            delta=self.delta,
            resolution=new_res,
            scale=self.scale * c,
            parent_key=self.key,
        )

    def __repr__(self):
        return (f"Profile(kind={self.kind!r}, integral={self.integral:.3e}, "
                f"support={self.support}, scale={self.scale})")


def _sample_profile(evaluate, support, resolution: int) -> GridFunction:
    h = 1.0 / resolution
    lo, hi = support
    k_lo = int(math.floor(lo / h))
    k_hi = int(math.ceil(hi / h))
    pts = np.arange(k_lo, k_hi + 1) * h
    return GridFunction(1, (pts.size,), h, (k_lo * h,), evaluate(pts))


_CERT_SAMPLES_PER_WIDTH = 256  # resolves the mollifier ramp to ~1e-13
_CERT_CAP = 1 << 22


def _certification_resolution(width: float) -> int:
    res = int(math.ceil(_CERT_SAMPLES_PER_WIDTH / width))
    res += res % 2  # even, so two-scale differences stay on the lattice
    if res > _CERT_CAP:
        raise ResolutionTooCoarse(
            f"mollifier width {width} needs {res} samples/unit to certify"
        )
    return res


def _fine_integral(evaluate, support, width: float) -> float:
    res = _certification_resolution(width)
    h = 1.0 / res
    lo, hi = support
    t = np.arange(int(math.floor(lo / h)) - 1, int(math.ceil(hi / h)) + 2)
    return float(np.sum(evaluate(t * h)) * h)


def make_phi(delta: float, resolution: int = 32) -> Profile:
    """Mollified unit indicator: the indicator of [0, 1) convolved with a
    bump of half-width delta/2.

    Guarantees unit integral and L1 distance to the sharp indicator at most
    delta; both are certified numerically at construction.
    """
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    if resolution < 1:
        raise ResolutionTooCoarse("resolution must be >= 1 sample per unit")
    w = delta / 2.0

    def evaluate(x):
        return bump_cdf(x / w) - bump_cdf((x - 1.0) / w)

    def derivative(x):
        return bump_density(x / w) / w - bump_density((x - 1.0) / w) / w

    support = (-w, 1.0 + w)
    integral = _fine_integral(evaluate, support, w)
    if abs(integral - 1.0) > 1e-10:
        raise ResolutionTooCoarse(
            f"certified integral {integral!r} deviates from 1 beyond 1e-10"
        )
    l1 = 4.0 * w * _cdf_left_mass()
    if l1 > delta:
        raise ResolutionTooCoarse(f"certified L1 distance {l1} exceeds delta {delta}")
    return Profile(
        kind="smoothed-indicator",
        evaluate=evaluate,
        derivative=derivative,
        support=support,
        samples=_sample_profile(evaluate, support, resolution),
        integral=integral,
        l1_dist_to_indicator=l1,
        delta=delta,
        resolution=resolution,
    )


def indicator_profile(resolution: int = 1) -> Profile:
    """The sharp unit indicator of [0, 1).  Not differentiable."""

    def evaluate(x):
        return ((x >= 0.0) & (x < 1.0)).astype(np.float64)

    return Profile(
        kind="indicator",
        evaluate=evaluate,
        derivative=None,
        support=(0.0, 1.0),
        samples=_sample_profile(evaluate, (0.0, 1.0), resolution),
        integral=1.0,
        l1_dist_to_indicator=0.0,
        resolution=resolution,
    )


def make_psi(phi: Profile) -> Profile:
    """Two-scale difference 2*phi(2t) - phi(t) of a unit-integral profile.

    Mean zero; its dyadic rescalings telescope consecutive rescalings of the
    parent profile.
    """
    if phi.integral is None or abs(phi.integral - 1.0) > 1e-8:
        raise ValueError("parent profile must have unit integral")
    parent = phi._evaluate

    def evaluate(x):
        return 2.0 * parent(2.0 * x) - parent(x)

    lo, hi = phi.support
    support = (min(lo, lo / 2.0), max(hi, hi / 2.0))
    width = phi.delta / 4.0 if phi.delta else 0.25
    integral = _fine_integral(evaluate, support, width)
    if abs(integral) > 1e-10:
        raise ResolutionTooCoarse(f"certified integral {integral!r} not 0")
    deriv = phi._derivative
    return Profile(
        kind="derived-psi",
        evaluate=evaluate,
        derivative=None if deriv is None else (
            lambda x: 4.0 * deriv(2.0 * x) - deriv(x)
        ),
        support=support,
        samples=_sample_profile(evaluate, support, phi.resolution or 32),
        integral=integral,
        l1_dist_to_indicator=None,
        delta=phi.delta,
        resolution=phi.resolution,
        parent_key=phi.key,
    )


def make_theta(phi: Profile) -> Profile:
    """Scale-derivative profile: the pointwise derivative of s*phi(s).

    Mean zero.  Its rescaling by r equals minus r times the r-derivative of
    the rescaled parent, which is the identity behind the scale-derivative
    averages.  Requires a differentiable (mollified) parent.
    """
    if phi._derivative is None:
        raise NotDifferentiable("scale-derivative profile needs a smooth parent")
    parent, dparent = phi._evaluate, phi._derivative

    def evaluate(x):
        return parent(x) + x * dparent(x)

    support = phi.support
    width = phi.delta / 2.0 if phi.delta else 0.25
    integral = _fine_integral(evaluate, support, width)
    if abs(integral) > 1e-10:
        raise ResolutionTooCoarse(f"certified integral {integral!r} not 0")
    return Profile(
        kind="derived-theta",
        evaluate=evaluate,
        derivative=None,
        support=support,
        samples=_sample_profile(evaluate, support, phi.resolution or 32),
        integral=integral,
        l1_dist_to_indicator=None,
        delta=phi.delta,
        resolution=phi.resolution,
        parent_key=phi.key,
    )


def fine_integral(profile: Profile, scale: float = 1.0) -> float:
    """Integral of the profile rescaled by ``scale``, by quadrature fine
    enough to resolve the (rescaled) mollifier ramp.

    Coarse grid sums under-resolve small mollifier widths; this helper keeps
    a fixed number of samples across the ramp at any scale.
    """
    if scale <= 0:
        raise InvalidR("scale must be positive")
    base = (profile.delta / 2.0 if profile.delta else 0.25) * profile.scale
    ev = profile._evaluate
    lo, hi = profile.support
    return _fine_integral(
        lambda x: ev(x / scale) / scale, (lo * scale, hi * scale), base * scale
    )


# ---------------------------------------------------------------------------
# Entangled averages.
# ---------------------------------------------------------------------------


def _axis_nodes(profiles: Sequence[Profile], r: float, h: float):
    """Node offsets (in cells) and per-profile weights for one axis."""
    lo = min(p.support[0] for p in profiles)
    hi = max(p.support[1] for p in profiles)
    t_lo = int(math.floor(r * lo / h))
    t_hi = int(math.ceil(r * hi / h))
    t = np.arange(t_lo, t_hi + 1)
    s = t * h / r
    return t_lo, [p(s) / r for p in profiles]


def _band_matrix(n: int, t_lo: int, weights: np.ndarray) -> np.ndarray:
    """Dense banded matrix M with M[x, x + t] = weights[t - t_lo]."""
    m = np.zeros((n, n))
    for k, wt in enumerate(weights):
        if wt == 0.0:
            continue
        t = t_lo + k
        if t >= n or t <= -n:
            continue
        i = np.arange(max(0, -t), min(n, n - t))
        m[i, i + t] = wt
    return m


def _entangled_direct(F: FunctionTuple, t_lo, axis_weights_per_term) -> np.ndarray:
    d = F.d
    vals = {j.bits: g.values for j, g in F}
    dims = F.grid.dims
    acc = np.zeros(dims)
    weight = np.zeros(tuple(len(w[0]) for w in _transpose(axis_weights_per_term)))
    # total weight at each node: sum over terms of the per-axis products
    for term in axis_weights_per_term:
        wprod = term[0]
        for wl in term[1:]:
            wprod = np.multiply.outer(wprod, wl)
        weight = weight + wprod
    it = np.nditer(weight, flags=["multi_index"])
    for wv in it:
        if wv == 0.0:
            continue
        idx = it.multi_index
        t = tuple(t_lo[l] + idx[l] for l in range(d))
        prod = None
        for bits, v in vals.items():
            off = tuple(t[l] if (bits >> l) & 1 else 0 for l in range(d))
            shifted = shift_values(v, off) if any(off) else v
            prod = shifted.copy() if prod is None else prod * shifted
        acc += float(wv) * prod
    return acc


def _transpose(axis_weights_per_term):
    d = len(axis_weights_per_term[0])
    return [[term[l] for term in axis_weights_per_term] for l in range(d)]


def _entangled_matmul_1d(F: FunctionTuple, t_lo, axis_weights_per_term) -> np.ndarray:
    v = F.grid.values
    acc = np.zeros_like(v)
    n = v.shape[0]
    for (w1,) in axis_weights_per_term:
        acc += _band_matrix(n, t_lo[0], w1) @ v
    return acc


def _entangled_matmul_2d(F: FunctionTuple, t_lo, axis_weights_per_term) -> np.ndarray:
    from .core import CubeIndex

    d = 2
    f10 = F[CubeIndex(1, d)].values
    f01 = F[CubeIndex(2, d)].values
    f11 = F[CubeIndex(3, d)].values
    n0 = f10.shape[0]
    acc = np.zeros_like(f10)
    for w1, w2 in axis_weights_per_term:
        band = _band_matrix(n0, t_lo[0], w1)
        part = np.zeros_like(f10)
        for k, wt in enumerate(w2):
            if wt == 0.0:
                continue
            t2 = t_lo[1] + k
            f11s = shift_values(f11, (0, t2))
            f01s = shift_values(f01, (0, t2))
            part += wt * (f01s * (band @ (f10 * f11s)))
        acc += part
    return acc


def _entangled_average(
    F: FunctionTuple,
    per_axis_profiles: Sequence[Sequence[Profile]],
    r: float,
    method: str = "auto",
) -> GridFunction:
    """Average with weight sum over terms of products of per-axis profiles.

    ``per_axis_profiles[term][axis]`` gives the profile whose rescaling by r
    weights that axis of the integration variable in that term.
    """
    if r <= 0:
        raise InvalidR(f"scale must be positive, got {r}")
    if not F.on_grid():
        raise DimensionMismatch("entangled averages need d-dimensional grid entries")
    g = F.grid
    d = F.d
    axis_profiles = _transpose(per_axis_profiles)
    t_lo = []
    axis_weights = []  # [axis][term] -> weight vector
    for l in range(d):
        lo, ws = _axis_nodes(axis_profiles[l], r, g.h)
        t_lo.append(lo)
        axis_weights.append(ws)
        span = max(p.support[1] for p in axis_profiles[l]) - min(
            p.support[0] for p in axis_profiles[l]
        )
        if r * span / g.h < 4:
            warnings.warn(
                f"profile support spans under 4 cells at scale r={r}",
                ResolutionWarning,
                stacklevel=3,
            )
    per_term = [
        [axis_weights[l][ti] for l in range(d)]
        for ti in range(len(per_axis_profiles))
    ]
    if method == "auto":
        method = "iterated" if d <= 2 else "direct"
    if method == "iterated" and d == 1:
        out = _entangled_matmul_1d(F, t_lo, per_term)
    elif method == "iterated" and d == 2:
        out = _entangled_matmul_2d(F, t_lo, per_term)
    elif method == "direct" or (method == "iterated" and d == 3):
        out = _entangled_direct(F, t_lo, per_term)
    else:
        raise ValueError(f"unknown method {method!r}")
    return g.with_values(out * g.cell_volume)


def smooth_average(
    F: FunctionTuple, phi: Profile, r: float, method: str = "auto"
) -> GridFunction:
    """Entangled average of the tuple at scale r against a tensor profile.

    Every entry is shifted by its cube vertex times the integration variable
    and the product is integrated against the rescaled profile per axis, on
    the entries' common grid with zero extension.
    """
    return _entangled_average(F, [(phi,) * F.d], r, method=method)


def box_average(F: FunctionTuple, r: float, method: str = "auto") -> GridFunction:
    """Entangled average against the sharp box profile.

    For unit-cell step tuples and integer r this reproduces the lattice cube
    average exactly (the Riemann sum coincides with the integral).
    """
    return smooth_average(F, _BOX, r, method=method)


def b_average(
    F: FunctionTuple, phi: Profile, theta: Profile, r: float, method: str = "auto"
) -> GridFunction:
    """Scale-derivative average: one axis weighted by the derivative profile,
    the rest by the base profile, summed over the choice of axis.

    Equals minus r times the r-derivative of :func:`smooth_average`.
    """
    if theta.kind != "derived-theta" or theta.parent_key != phi.key:
        raise ValueError("theta must be derived from the given phi")
    d = F.d
    terms = [tuple(theta if l == i else phi for l in range(d)) for i in range(d)]
    return _entangled_average(F, terms, r, method=method)


_BOX = indicator_profile()


# ---------------------------------------------------------------------------
# Serialization: samples in the 1-D grid format plus a sidecar manifest.
# ---------------------------------------------------------------------------


def store_profile(profile: Profile, path: Union[str, Path]) -> None:
    path = Path(path)
    store_grid(profile.samples, path)
    meta = [f"kind {profile.kind}"]
    if profile.delta is not None:
        meta.append(f"delta {profile.delta!r}")
    if profile.resolution is not None:
        meta.append(f"resolution {profile.resolution}")
    meta.append(f"scale {profile.scale!r}")
    Path(str(path) + ".meta").write_text("\n".join(meta) + "\n")


def load_profile(path: Union[str, Path]) -> Profile:
    path = Path(path)
    samples = load_grid(path)
    meta: dict[str, str] = {}
    for line in Path(str(path) + ".meta").read_text().splitlines():
        line = line.strip()
        if line:
            key, _, rest = line.partition(" ")
            meta[key] = rest
    kind = meta.get("kind")
    resolution = int(meta.get("resolution", "32"))
    delta = float(meta["delta"]) if "delta" in meta else None
    if kind == "indicator":
        profile = indicator_profile(resolution)
    elif kind == "smoothed-indicator":
        profile = make_phi(delta, resolution)
    elif kind == "derived-psi":
        profile = make_psi(make_phi(delta, resolution))
    elif kind == "derived-theta":
        profile = make_theta(make_phi(delta, resolution))
    else:
        raise FormatError(f"{path}: cannot rebuild profile kind {kind!r}")
    if not np.array_equal(profile.samples.values, samples.values):
        raise FormatError(f"{path}: stored samples disagree with rebuilt profile")
    return profile
