import contextlib

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pnehari import (
    BubbleParams,
    DomainMask,
    Grid,
    bubble_constant,
    bubble_value,
    decay_check,
    residual_norm,
    sample_bubble,
)
from pnehari.bubble import derive_bubble_constant, pde_residual, radial_ode_residual
from pnehari.exceptions import ParameterError, ResolutionWarning

from oracles import a_closed, decay_scan, profile

# values from the symbolic derivation (one-radius solve of the radial equation)
FROZEN_A = {(4, 2.0): 2.8284271247461903, (4, 3.0): 1.0, (9, 2.5): 96.79539180}


@pytest.mark.parametrize("key", list(FROZEN_A))
def test_constant_matches_independent_derivation(key):
    N, p = key
    assert bubble_constant(N, p) == pytest.approx(FROZEN_A[key], rel=1e-9)
    assert derive_bubble_constant(N, p, r0=0.7) == pytest.approx(bubble_constant(N, p), rel=1e-12)
    assert a_closed(N, p) == pytest.approx(bubble_constant(N, p), rel=1e-14)


def test_radial_equation_residual_is_tiny():
    radii = np.linspace(0.01, 20.0, 50)
    for N, p in FROZEN_A:
        assert np.max(np.abs(radial_ode_residual(N, p, radii))) < 1e-10


def test_wrong_constant_fails_the_radial_equation():
    res = radial_ode_residual(4, 2.0, [0.5, 1.0], a=1.1 * bubble_constant(4, 2.0))
    assert np.min(np.abs(res)) > 0.1


def test_params_validation():
    with pytest.raises(ParameterError):
        BubbleParams(4, 2.0, eps=0.0)
    with pytest.raises(ParameterError):
        BubbleParams(4, 2.0, center=(0.0, 0.0))
    with pytest.raises(ParameterError):
        BubbleParams(4, 4.0)


# ---------------------------------------------------------------- point values


@pytest.mark.parametrize("N,p", list(FROZEN_A))
def test_value_at_center_and_unit_radius(N, p):
    bp = BubbleParams(N, p)
    a = bubble_constant(N, p)
    assert bubble_value(bp, np.zeros(N)) == pytest.approx(a, rel=1e-15)
    e1 = np.eye(N)[0]
    assert bubble_value(bp, e1) == pytest.approx(a * 2.0 ** (-(N - p) / p), rel=1e-14)


@given(st.floats(0.05, 20.0), st.integers(0, 2 ** 31))
@settings(max_examples=30, deadline=None)
def test_dilation_identity(eps, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(100, 4)) * 3
    p = 3.0
    lhs = bubble_value(BubbleParams(4, p, eps), x)
    rhs = eps ** (-(4 - p) / p) * bubble_value(BubbleParams(4, p), x / eps)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-13)


def test_translation_and_closed_form():
    bp = BubbleParams(4, 2.0, 0.5, (0.3, -0.2, 0.0, 1.0))
    x = np.array([[0.1, 0.2, 0.3, 0.4], [2.0, 0.0, 0.0, 0.0]])
    r = np.linalg.norm(x - np.array(bp.center), axis=1)
    np.testing.assert_allclose(bubble_value(bp, x), profile(r, 4, 2.0, 0.5), rtol=1e-14)


def test_positive_and_radially_decreasing():
    r = np.linspace(0.0, 50.0, 2001)
    for N, p in FROZEN_A:
        x = np.zeros((r.size, N))
        x[:, 0] = r
        v = bubble_value(BubbleParams(N, p), x)
        assert np.all(v > 0) and np.all(np.diff(v) < 0)


# ---------------------------------------------------------------- residuals


def test_residual_of_affine_field_is_the_source_term():
    g = Grid(4, 9, 2.0, DomainMask.ball(2.0))
    f = lambda x, y, z, t: 0.3 * x - 0.1 * t + 0.2  # noqa: E731
    sup, _ = residual_norm(f, g, p=2.0)
    keep = g.mask.signed_distance(g.coordinates(), g.half_extent) >= 4 * g.spacing - 1e-12
    vals = np.broadcast_to(f(*g.coordinates()), g.shape)
    expected = np.max(np.abs(vals ** 3)[np.broadcast_to(keep, g.shape)])
    assert sup == pytest.approx(expected, rel=1e-12)


def test_residual_needs_p_for_callables():
    with pytest.raises(ParameterError):
        residual_norm(lambda *x: x[0], Grid(4, 5, 1.0))


def test_under_resolved_core_warns():
    with pytest.warns(ResolutionWarning):
        residual_norm(BubbleParams(4, 2.0, 0.2), Grid(4, 9, 2.0, DomainMask.ball(2.0)))


def test_field_and_slab_residuals_agree():
    g = Grid(4, 17, 2.0, DomainMask.ball(2.0))
    bp = BubbleParams(4, 2.0, 1.0)
    res = np.abs(pde_residual(sample_bubble(bp, g), 2.0, mu=0.0).values)
    keep = np.broadcast_to(g.mask.signed_distance(g.coordinates(), g.half_extent) >= 4 * g.spacing - 1e-12,
                           g.shape)
    sup, l1 = residual_norm(bp, g)
    assert sup == pytest.approx(float(np.max(res[keep])), rel=1e-12)
    assert l1 == pytest.approx(float(res[keep].sum()) * g.cell_volume, rel=1e-10)


def test_p2_residual_converges():
    # same property as the acceptance run, on a cheaper ball of radius 2
    sups = []
    for n in (9, 17, 33):
        g = Grid(4, n, 2.0, DomainMask.ball(2.0))
        with pytest.warns(ResolutionWarning) if n == 9 else contextlib.nullcontext():
            sups.append(residual_norm(BubbleParams(4, 2.0), g)[0])
    assert sups[1] / sups[2] >= 1.7


def test_p3_l1_residual_converges():
    # the sup residual stalls at the centre for p = 3; the l1 residual still decays
    l1 = []
    for n in (17, 33):
        g = Grid(4, n, 2.0, DomainMask.ball(2.0))
        l1.append(residual_norm(BubbleParams(4, 3.0), g)[1])
    assert l1[0] / l1[1] >= 1.7


# ---------------------------------------------------------------- decay


def test_decay_constant_against_radial_scan():
    g = Grid(4, 33, 8.0, DomainMask.ball(8.0))
    c_u, c_g = decay_check(sample_bubble(BubbleParams(4, 2.0), g), BubbleParams(4, 2.0).problem,
                           gradient=True)
    exact = decay_scan(4, 2.0, 8.0)
    assert abs(c_u - exact) <= 0.05 * exact
    assert c_g is not None and c_g > 0


def test_decay_of_zero_field():
    assert decay_check(Grid(4, 5, 1.0).zeros(), BubbleParams(4, 2.0).problem) == (0.0, None)


def test_fat_tail_constant_grows_with_span():
    p = 2.0
    consts = []
    for L in (4.0, 8.0, 16.0):
        g = Grid(4, 17, L)
        u = g.sample(lambda *x: (1.0 + sum(c * c for c in x)) ** -0.25)
        consts.append(decay_check(u, BubbleParams(4, p).problem)[0])
    assert consts[0] < consts[1] < consts[2]
    assert consts[2] > 2.5 * consts[0]


def test_bubble_decay_constant_is_stable_under_span():
    consts = []
    for L in (4.0, 8.0, 16.0):
        g = Grid(4, 17, L)
        consts.append(decay_check(sample_bubble(BubbleParams(4, 2.0), g), BubbleParams(4, 2.0).problem)[0])
    assert max(consts) <= 1.05 * min(consts)
