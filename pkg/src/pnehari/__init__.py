"""Equivariant sign-changing solutions of the critical p-Laplace equation.

Discrete p-calculus on masked lattices (:mod:`.grid`), the symmetry groups
and their signed averaging operator (:mod:`.symmetry`), the energy and
Nehari machinery (:mod:`.functional`), the explicit positive solution
(:mod:`.bubble`), projected Nehari descent (:mod:`.solver`), concentration
diagnostics (:mod:`.diagnostics`) and the batch CLI (:mod:`.cli`).
"""

__version__ = "0.1.0"

from .bubble import (
    BubbleParams,
    bubble_constant,
    bubble_value,
    decay_check,
    residual_norm,
    sample_bubble,
)
from .diagnostics import (
    ConcentrationProfiler,
    ProfileRecord,
    classify_sequence,
    concentration_function,
    extract_scale,
    rescale_field,
)
from .exceptions import *  # noqa: F401,F403
from .functional import (
    EnergyReport,
    ProblemParams,
    energy,
    kappa,
    monotonicity_gap,
    mountain_pass_profile,
    nehari_scale,
    truncate,
    weak_derivative_action,
)
from .grid import (
    DomainMask,
    Field,
    Grid,
    discrete_gradient,
    integrate_power,
    interpolate,
    p_dirichlet_energy,
    p_laplacian_apply,
)
from .io import read_pbf, write_pbf
from .solver import NehariDescent, SolveConfig, SolveResult, initialize, ps_diagnostics, solve
from .symmetry import (
    EquivariantProjector,
    GroupElement,
    SymmetryConfig,
    act,
    check_hypotheses,
    distinctness_witness,
    equivariance_defect,
    equivariant_project,
    fixed_subspace,
    haar_sample,
    separate_orbit,
    sign,
)
