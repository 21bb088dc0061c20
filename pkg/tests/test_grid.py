import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pnehari import (
    DomainMask,
    Field,
    Grid,
    discrete_gradient,
    integrate_power,
    interpolate,
    p_dirichlet_energy,
    p_laplacian_apply,
)
from pnehari.bubble import BubbleParams, bubble_gradient_on_coords, sample_bubble, sampled_norms
from pnehari.exceptions import (
    ConfigurationError,
    InvalidFieldError,
    ParameterError,
    SingularFluxWarning,
)
from pnehari.grid import interpolate_array

from oracles import bubble_norms, five_point_laplacian, profile


def affine(a):
    return lambda *x: sum(ai * xi for ai, xi in zip(a, x))


# ---------------------------------------------------------------- construction


def test_origin_is_a_node_and_axis_is_symmetric():
    g = Grid(3, 9, 1.5)
    assert g.axis[4] == 0.0
    np.testing.assert_array_equal(g.axis, -g.axis[::-1])
    assert g.spacing == pytest.approx(3.0 / 8)


@pytest.mark.parametrize("n", [2, 4, 10])
def test_even_or_tiny_node_counts_are_rejected(n):
    with pytest.raises(ConfigurationError):
        Grid(2, n, 1.0)


def test_from_spacing_requires_divisor():
    assert Grid.from_spacing(4, 2.0, 0.125).nodes_per_axis == 33
    with pytest.raises(ConfigurationError):
        Grid.from_spacing(2, 1.0, 0.3)


def test_field_rejects_nonfinite_and_exterior_values():
    g = Grid(2, 5, 1.0, DomainMask.ball(1.0))
    vals = np.ones(g.shape)
    with pytest.raises(InvalidFieldError):
        Field(g, vals)
    bad = np.zeros(g.shape)
    bad[2, 2] = np.nan
    with pytest.raises(InvalidFieldError):
        Field(g, bad)
    u = g.field(vals)
    assert np.all(u.values[~g.interior] == 0)
    with pytest.raises(ValueError):
        u.values[2, 2] = 3.0


def test_refine_halves_spacing():
    g = Grid(2, 9, 1.0)
    assert g.refine().spacing == pytest.approx(g.spacing / 2)


def test_slabs_cover_axis_once():
    g = Grid(3, 11, 1.0)
    covered = []
    for start, stop, rows in g.iter_slabs(3, halo=1):
        covered.extend(range(start, stop))
        assert rows.start == max(start - 1, 0) and rows.stop == min(stop + 1, 11)
    assert covered == list(range(11))


def test_halfspace_mask_membership():
    g = Grid(2, 9, 1.0, DomainMask.halfspace((1.0, 0.0), 0.25))
    x = g.coordinates()[0]
    assert np.all(g.interior == ((x > 0.25) & (np.abs(x) < 1.0) & (np.abs(g.coordinates()[1]) < 1.0)))
    np.testing.assert_allclose(g.mask.inward_normal(np.array([0.3, 0.0]), 1.0), [1.0, 0.0])


# ---------------------------------------------------------------- integrate_power


def test_integrate_power_zero_field():
    assert integrate_power(Grid(3, 7, 1.0).zeros(), 2.0) == 0.0


@pytest.mark.parametrize("N", [2, 3, 4])
def test_unit_field_volume_within_boundary_layer(N):
    g = Grid(N, 17, 1.0)
    u = g.sample(lambda *x: np.ones_like(x[0]))
    vol = integrate_power(u, 1.0)
    assert abs(vol - 2.0 ** N) <= 2 * N * 2.0 ** (N - 1) * g.spacing


def test_integrate_power_rejects_bad_exponent():
    with pytest.raises(ParameterError):
        integrate_power(Grid(2, 5, 1.0).zeros(), 0.5)
    with pytest.raises(ParameterError):
        integrate_power(Grid(2, 5, 1.0).zeros(), math.inf)


def test_quadrature_converges_to_radial_oracle():
    # N = 4, p = 2 bubble over a ball of radius 2; the cut-cell layer is first order
    exact_gp, exact_crit = bubble_norms(4, 2.0, 2.0)
    errs = []
    for n in (9, 17, 33):
        g = Grid(4, n, 2.0, DomainMask.ball(2.0))
        gp, crit = sampled_norms(BubbleParams(4, 2.0), g, masked=False)
        errs.append(abs(gp - exact_gp))
        assert crit == pytest.approx(exact_crit, rel=0.05)
    assert errs[0] / errs[1] >= 1.8 and errs[1] / errs[2] >= 1.8
    assert errs[2] / exact_gp <= 0.08


# ---------------------------------------------------------------- gradient


@given(st.lists(st.floats(-3, 3), min_size=3, max_size=3))
@settings(max_examples=25, deadline=None)
def test_gradient_of_affine_field_is_exact(a):
    g = Grid(3, 7, 1.0)
    u = g.sample(affine(a), masked=False)
    grad = discrete_gradient(u)
    for k in range(3):
        np.testing.assert_allclose(grad[k], a[k], atol=1e-12)


def test_gradient_of_zero_field():
    grad = discrete_gradient(Grid(2, 5, 1.0).zeros())
    assert grad.shape == (2, 4, 4) and not grad.any()


def test_bubble_gradient_error_halves():
    # N = 4, p = 3: forward differences against the closed form at edge midpoints,
    # away from the centre where the profile is only C^{1,1/2}
    bp = BubbleParams(4, 3.0)
    errs = []
    for n in (9, 17, 33):
        g = Grid(4, n, 2.0)
        u = sample_bubble(bp, g, masked=False)
        grad = discrete_gradient(u)
        h = g.spacing
        worst = 0.0
        for k in range(4):
            coords = list(np.meshgrid(*([g.axis[:-1]] * 4), indexing="ij"))
            coords[k] = coords[k] + 0.5 * h
            exact = bubble_gradient_on_coords(bp, coords)[k]
            far = np.sqrt(sum(c * c for c in coords)) >= 0.5
            worst = max(worst, float(np.max(np.abs(grad[k] - exact)[far])))
        errs.append(worst)
    assert errs[0] / errs[1] >= 1.7 and errs[1] / errs[2] >= 1.7


# ---------------------------------------------------------------- energy


def test_energy_zero_field():
    assert p_dirichlet_energy(Grid(3, 5, 1.0).zeros(), 2.0) == 0.0


@pytest.mark.parametrize("p", [1.5, 2.0, 2.5])
def test_affine_energy_in_test_mode(p):
    a = np.array([0.3, -1.2, 0.7])
    g = Grid(3, 9, 1.0)
    u = g.sample(affine(a), masked=False)
    vol = 2.0 ** 3
    assert p_dirichlet_energy(u, p) == pytest.approx(np.linalg.norm(a) ** p * vol, rel=1e-12)


def test_energy_rejects_p_out_of_range():
    u = Grid(3, 5, 1.0).zeros()
    for p in (1.0, 3.0, 4.0):
        with pytest.raises(ParameterError):
            p_dirichlet_energy(u, p)


def test_energy_positive_for_nonzero_field():
    g = Grid(2, 7, 1.0)
    rng = np.random.default_rng(3)
    u = g.field(rng.normal(size=g.shape))
    assert p_dirichlet_energy(u, 1.5) > 0


def test_field_and_slab_norms_agree():
    g = Grid(4, 9, 2.0, DomainMask.ball(2.0))
    bp = BubbleParams(4, 2.5, 0.7, (0.2, 0.0, -0.1, 0.0))
    for masked in (True, False):
        u = sample_bubble(bp, g, masked=masked)
        gp, crit = sampled_norms(bp, g, masked=masked)
        assert gp == pytest.approx(p_dirichlet_energy(u, 2.5), rel=1e-12)
        assert crit == pytest.approx(integrate_power(u, bp.problem.p_star), rel=1e-12)


# ---------------------------------------------------------------- p-Laplacian


def test_laplacian_of_affine_vanishes():
    g = Grid(3, 9, 1.0)
    u = g.sample(affine([0.5, -2.0, 1.0]), masked=False)
    for p in (2.0, 2.5):
        lap = p_laplacian_apply(u, p).values
        np.testing.assert_allclose(lap[1:-1, 1:-1, 1:-1], 0.0, atol=1e-10)


def test_quadratic_has_unit_laplacian():
    g = Grid(3, 9, 1.0)
    u = g.sample(lambda x, y, z: (x * x + y * y + z * z) / 6.0, masked=False)
    lap = p_laplacian_apply(u, 2.0).values
    np.testing.assert_allclose(lap[1:-1, 1:-1, 1:-1], 1.0, atol=1e-12)


def test_p2_matches_standard_stencil():
    g = Grid(4, 9, 1.0, DomainMask.ball(1.0))
    rng = np.random.default_rng(0)
    u = g.field(rng.normal(size=g.shape))
    lap = p_laplacian_apply(u, 2.0).values
    ref = five_point_laplacian(u.values, g.spacing)
    np.testing.assert_allclose(lap[g.interior], ref[g.interior], atol=1e-9, rtol=1e-13)


def test_laplacian_is_energy_gradient():
    g = Grid(3, 7, 1.0, DomainMask.ball(1.0))
    rng = np.random.default_rng(1)
    u = g.field(rng.normal(size=g.shape))
    v = g.field(rng.normal(size=g.shape))
    p, t = 3.0 - 0.4, 1e-6
    lap = p_laplacian_apply(u, p, mu=0.0).values
    fd = (p_dirichlet_energy(u + v * t, p) - p_dirichlet_energy(u - v * t, p)) / (2 * t)
    assert fd == pytest.approx(-p * float((lap * v.values).sum()) * g.cell_volume, rel=1e-6)


def test_singular_flux_warning_for_p_below_two():
    g = Grid(3, 5, 1.0)
    u = g.sample(lambda *x: np.ones_like(x[0]), masked=False)
    with pytest.warns(SingularFluxWarning):
        lap = p_laplacian_apply(u, 1.5, mu=0.0)
    assert np.all(np.isfinite(lap.values))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        p_laplacian_apply(u, 1.5)  # default mu > 0 regularizes silently


# ---------------------------------------------------------------- interpolation


def test_interpolation_exact_at_nodes_and_for_affine():
    g = Grid(3, 7, 1.0)
    rng = np.random.default_rng(5)
    u = g.field(rng.normal(size=g.shape))
    assert interpolate(u, np.array([g.axis[2], g.axis[3], g.axis[4]])) == pytest.approx(u.values[2, 3, 4], abs=1e-14)
    a = [0.4, -0.3, 1.1]
    w = g.sample(affine(a), masked=False)
    pts = rng.uniform(-1, 1, size=(50, 3))
    np.testing.assert_allclose(interpolate(w, pts), pts @ a, atol=1e-12)


def test_interpolation_outside_span_is_zero():
    g = Grid(2, 5, 1.0)
    u = g.sample(lambda x, y: 1 + 0 * x, masked=False)
    assert interpolate(u, np.array([1.5, 0.0])) == 0.0


def test_interpolation_of_bubble_is_second_order():
    bp = BubbleParams(4, 2.0)
    rng = np.random.default_rng(11)
    pts = rng.uniform(-1.5, 1.5, size=(200, 4))
    exact = profile(np.linalg.norm(pts, axis=1), 4, 2.0)
    errs = []
    for n in (17, 33):
        g = Grid(4, n, 2.0)
        errs.append(np.max(np.abs(interpolate_array(sample_bubble(bp, g, False).values, g, pts) - exact)))
    # pre-asymptotic on these grids; the ratio tends to 4
    assert errs[0] / errs[1] >= 2.5


def test_mask_symmetric_under_rotation_group():
    from pnehari.symmetry import SymmetryConfig, mask_violation

    g = Grid(4, 9, 1.0, DomainMask.ball(1.0))
    assert mask_violation(g, SymmetryConfig(4, 1)) == 0.0
    tilted = Grid(4, 9, 1.0, DomainMask.halfspace((1.0, 0.0, 0.0, 0.0), 0.2))
    assert mask_violation(tilted, SymmetryConfig(4, 1)) > 0.0
