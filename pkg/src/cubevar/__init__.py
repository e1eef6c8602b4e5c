"""cubevar: a numerical laboratory for cube averages of commuting dynamics,
entangled analytical averages on grids, exact variation norms, and the
kernel machinery tying them together."""

from .core import (
    CubeIndex,
    FiniteSystem,
    FunctionTuple,
    GridFunction,
    MeasuredNorm,
    conjugate_exponent,
    load_grid,
    load_system,
    lp_norm,
    make_finite_system,
    nonzero_cube_indices,
    store_grid,
    store_system,
)
from .ergodic import (
    AverageSequence,
    cubic_average,
    discrete_cube_average,
    floor_lift,
    trajectory_lift,
)
from .analytic import (
    Profile,
    b_average,
    box_average,
    indicator_profile,
    make_phi,
    make_psi,
    make_theta,
    smooth_average,
)
from .variation import (
    VariationResult,
    count_eps_jumps,
    dyadic_split,
    rho_variation,
)
from .forms import (
    Kernel,
    build_k1,
    build_k2,
    evaluate_lambda,
    khintchine_sample,
    symbol_decay_check,
)

__version__ = "0.1.0"
