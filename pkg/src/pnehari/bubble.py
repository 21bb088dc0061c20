"""The explicit positive entire solution and its translates and dilates.

``U(x) = a (1 + |x|^{p/(p-1)})^{-(N-p)/p}`` solves ``-Δ_p U = U^{p*-1}`` on
``R^N`` for one specific constant ``a = a_{N,p}``.  The closed form of that
constant is checked symbolically by :func:`radial_ode_residual` and
:func:`derive_bubble_constant`.

Lattice reductions over sampled bubbles work in slabs along axis 0, so
``129^4`` lattices fit in a few hundred megabytes.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .exceptions import ParameterError, ResolutionWarning
from .functional import ProblemParams
from .grid import (
    Field,
    Grid,
    cells_inside,
    default_mu,
    p_energy_and_laplacian,
    p_energy_array,
)

__all__ = [
    "bubble_constant",
    "BubbleParams",
    "bubble_value",
    "bubble_on_coords",
    "bubble_gradient_on_coords",
    "sample_bubble",
    "pde_residual",
    "residual_norm",
    "sampled_norms",
    "decay_check",
    "sampled_decay_constant",
    "radial_ode_residual",
    "derive_bubble_constant",
]

_SLAB_BUDGET = 400 * 2 ** 20  # bytes of float64 scratch per slab
_SCRATCH_ARRAYS = 24


def bubble_constant(N: int, p: float) -> float:
    """``a_{N,p} = [N ((N-p)/(p-1))^{p-1}]^{(N-p)/p^2}``."""
    ProblemParams(N, p)
    return (N * ((N - p) / (p - 1.0)) ** (p - 1.0)) ** ((N - p) / p ** 2)


@dataclass(frozen=True)
class BubbleParams:
    """Scale ``eps`` and center ``xi`` of ``eps^{-(N-p)/p} U((x - xi)/eps)``."""

    N: int
    p: float
    eps: float = 1.0
    center: tuple[float, ...] | None = None
    a_const: float = field(init=False)

    def __post_init__(self):
        ProblemParams(self.N, self.p)
        if not (self.eps > 0 and math.isfinite(self.eps)):
            raise ParameterError(f"eps must be positive, got {self.eps}")
        c = np.zeros(self.N) if self.center is None else np.asarray(self.center, dtype=float)
        if c.shape != (self.N,):
            raise ParameterError(f"center must have {self.N} coordinates")
        object.__setattr__(self, "center", tuple(float(v) for v in c))
        object.__setattr__(self, "a_const", bubble_constant(self.N, self.p))

    @property
    def problem(self) -> ProblemParams:
        return ProblemParams(self.N, self.p)

    @property
    def amplitude(self) -> float:
        """Peak value ``eps^{-(N-p)/p} a``."""
        return self.eps ** (-(self.N - self.p) / self.p) * self.a_const

    def to_dict(self) -> dict:
        return {"N": self.N, "p": self.p, "eps": self.eps, "center": list(self.center)}


def _radius(params: BubbleParams, coords: Sequence[np.ndarray]) -> np.ndarray:
    r2 = sum((c - x0) ** 2 for c, x0 in zip(coords, params.center))
    return np.sqrt(r2) / params.eps


def bubble_on_coords(params: BubbleParams, coords: Sequence[np.ndarray]) -> np.ndarray:
    """Bubble values on broadcastable coordinate arrays."""
    N, p = params.N, params.p
    r = _radius(params, coords)
    return params.amplitude * (1.0 + r ** (p / (p - 1.0))) ** (-(N - p) / p)


def bubble_gradient_on_coords(params: BubbleParams,
                              coords: Sequence[np.ndarray]) -> list[np.ndarray]:
    """Closed-form gradient components on broadcastable coordinates."""
    N, p = params.N, params.p
    q = p / (p - 1.0)
    r = _radius(params, coords)
    # dU/dr divided by r, which stays finite at r = 0 since q - 2 > -1
    with np.errstate(divide="ignore", invalid="ignore"):
        rq2 = np.where(r > 0, r ** (q - 2.0), 0.0 if q > 2 else np.inf)
    du_over_r = -params.amplitude * (N - p) / (p - 1.0) * (1.0 + r ** q) ** (-(N - p) / p - 1.0) * rq2
    du_over_r = np.where(r > 0, du_over_r, 0.0)
    scale = 1.0 / params.eps ** 2
    return [du_over_r * (c - x0) * scale for c, x0 in zip(coords, params.center)]


def bubble_value(params: BubbleParams, x) -> float | np.ndarray:
    """Value at a point ``(N,)`` (float) or at stacked points ``(M, N)``."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    if pts.shape[1] != params.N:
        raise ParameterError(f"points must have {params.N} coordinates")
    vals = bubble_on_coords(params, [pts[:, k] for k in range(params.N)])
    return float(vals[0]) if single else vals


def sample_bubble(params: BubbleParams, grid: Grid, masked: bool = True) -> Field:
    if grid.dim != params.N:
        raise ParameterError("grid dimension differs from N")
    return grid.sample(lambda *c: bubble_on_coords(params, c), masked=masked)


def pde_residual(u: Field, p: float, mu: float | None = None) -> Field:
    """Nodal residual ``-Δ_p u - |u|^{p*-2} u`` (unrestricted, test-mode output)."""
    params = ProblemParams(u.grid.dim, p)
    h = u.grid.spacing
    if mu is None:
        mu = default_mu(u, p, h)
    _, lap = p_energy_and_laplacian(u.values, h, p, mu)
    a = u.values
    res = -lap - np.abs(a) ** (params.p_star - 2.0) * a
    return Field(u.grid, res, masked=False)


def _slab_width(grid: Grid) -> int:
    row_bytes = 8 * grid.nodes_per_axis ** (grid.dim - 1) * _SCRATCH_ARRAYS
    return max(1, _SLAB_BUDGET // row_bytes - 2)


def _source(source, grid: Grid) -> tuple[Callable, float | None]:
    if isinstance(source, BubbleParams):
        if grid.dim != source.N:
            raise ParameterError("grid dimension differs from N")
        return (lambda coords: bubble_on_coords(source, coords)), source.p
    if callable(source):
        return (lambda coords: source(*coords)), None
    raise ParameterError("source must be BubbleParams or a callable of coordinates")


def _sample_rows(func, grid: Grid, rows: slice, masked: bool) -> np.ndarray:
    coords = grid.coordinates(rows)
    shape = (rows.stop - rows.start,) + grid.shape[1:]
    vals = np.array(np.broadcast_to(func(coords), shape), dtype=float)
    if masked:
        vals[~grid.interior_rows(rows)] = 0.0
    return vals


def residual_norm(source, grid: Grid, p: float | None = None,
                  mu: float | None = None, margin: float = 4.0) -> tuple[float, float]:
    """``(sup, l1)`` of the PDE residual of a sampled solution candidate.

    ``source`` is :class:`BubbleParams` or a callable ``f(*coords)``.  Nodes
    closer than ``margin * h`` to the mask boundary are excluded; ``l1`` is
    ``h^N Σ |res|`` over the kept nodes.  Warns when a bubble's core is
    under-resolved (``eps < 4h``).
    """
    func, p_src = _source(source, grid)
    p = p_src if p is None else p
    if p is None:
        raise ParameterError("p is required for a callable source")
    params = ProblemParams(grid.dim, p)
    h = grid.spacing
    if isinstance(source, BubbleParams) and source.eps < 4.0 * h:
        warnings.warn(f"bubble core under-resolved: eps = {source.eps} < 4h = {4 * h}",
                      ResolutionWarning, stacklevel=2)
    if mu is None:
        mu = 0.0 if p >= 2 else 1e-8 * _max_abs(func, grid) / h
    sup, l1 = 0.0, 0.0
    for start, stop, rows in grid.iter_slabs(_slab_width(grid), halo=1):
        vals = _sample_rows(func, grid, rows, masked=True)
        _, lap = p_energy_and_laplacian(vals, h, p, mu)
        inner = slice(start - rows.start, stop - rows.start)
        a = vals[inner]
        res = np.abs(-lap[inner] - np.abs(a) ** (params.p_star - 2.0) * a)
        keep = grid.mask.signed_distance(grid.coordinates(slice(start, stop)),
                                         grid.half_extent) >= margin * h - 1e-12
        keep = np.broadcast_to(keep, res.shape)
        if keep.any():
            sup = max(sup, float(res[keep].max()))
            l1 += float(res[keep].sum())
    return sup, l1 * grid.cell_volume


def _max_abs(func, grid: Grid) -> float:
    out = 0.0
    for start, stop, rows in grid.iter_slabs(_slab_width(grid)):
        out = max(out, float(np.abs(_sample_rows(func, grid, rows, True)).max()))
    return out


def sampled_norms(source, grid: Grid, p: float | None = None,
                  masked: bool = True) -> tuple[float, float]:
    """``(||u||^p, |u|_{p*}^{p*})`` of a sampled function, computed in slabs.

    Agrees with :func:`~pnehari.grid.p_dirichlet_energy` and
    :func:`~pnehari.grid.integrate_power` on the corresponding
    :class:`Field`.  ``masked=False`` integrates over the closed mask region
    without the Dirichlet cut (test mode).
    """
    func, p_src = _source(source, grid)
    p = p_src if p is None else p
    if p is None:
        raise ParameterError("p is required for a callable source")
    q = ProblemParams(grid.dim, p).p_star
    h, n = grid.spacing, grid.nodes_per_axis
    gp, crit = 0.0, 0.0
    for start, stop, _ in grid.iter_slabs(_slab_width(grid)):
        node_rows = slice(start, stop)
        cell_stop = min(stop, n - 1)
        rows = slice(start, min(cell_stop + 1, n))
        vals = _sample_rows(func, grid, rows, masked)
        a = np.abs(vals[: stop - start])
        if not masked:
            a = np.where(grid.closed_rows(node_rows), a, 0.0)
        crit += float((a ** q).sum())
        if cell_stop > start:
            cells = None if masked else cells_inside(grid.closed_rows(rows))
            gp += p_energy_array(vals, h, p, cells)
    return gp, crit * grid.cell_volume


def sampled_decay_constant(source, grid: Grid, p: float | None = None) -> float:
    """``C_u`` of :func:`decay_check` for a sampled function, computed in slabs."""
    func, p_src = _source(source, grid)
    p = p_src if p is None else p
    if p is None:
        raise ParameterError("p is required for a callable source")
    N = grid.dim
    ProblemParams(N, p)
    out = 0.0
    for start, stop, rows in grid.iter_slabs(_slab_width(grid)):
        vals = _sample_rows(func, grid, rows, masked=True)
        r = np.sqrt(sum(c * c for c in grid.coordinates(rows)))
        out = max(out, float(np.max(np.abs(vals) * (1.0 + r ** ((N - p) / (p - 1.0))))))
    return out


def decay_check(u: Field, params, gradient: bool = False) -> tuple[float, float | None]:
    """Weighted sup norms ``C_u`` and optionally ``C_grad``.

    ``C_u = max |u(x)| (1 + |x|^{(N-p)/(p-1)})``; the gradient variant uses
    the lower-corner cell gradients at cell centers with exponent
    ``(N-1)/(p-1)``.  ``params`` needs ``N`` and ``p`` attributes.
    """
    N, p = params.N, params.p
    ProblemParams(N, p)
    if u.grid.dim != N:
        raise ParameterError("field dimension differs from N")
    coords = u.grid.coordinates()
    r = np.sqrt(sum(c * c for c in coords))
    c_u = float(np.max(np.abs(u.values) * (1.0 + r ** ((N - p) / (p - 1.0)))))
    if not gradient:
        return c_u, None
    h = u.grid.spacing
    g2 = None
    for k in range(N):
        d = np.diff(u.values, axis=k) / h
        d = d[tuple(slice(None, -1) if i != k else slice(None) for i in range(N))]
        g2 = d * d if g2 is None else g2 + d * d
    mid = u.grid.axis[:-1] + 0.5 * h
    rc = np.sqrt(sum(m * m for m in np.meshgrid(*([mid] * N), indexing="ij", sparse=True)))
    c_g = float(np.max(np.sqrt(g2) * (1.0 + rc ** ((N - 1.0) / (p - 1.0)))))
    return c_u, c_g


# ---------------------------------------------------------------------------
# symbolic derivation of the normalization constant


def _symbolic_profile(N: int, p: float):
    import sympy as sp

    r, A = sp.symbols("r A", positive=True)
    P = sp.nsimplify(p)
    q = P / (P - 1)
    U = A * (1 + r ** q) ** (-(N - P) / P)
    V = -sp.diff(U, r)  # positive for r > 0
    p_star = N * P / (N - P)
    lhs = sp.diff(r ** (N - 1) * V ** (P - 1), r) / r ** (N - 1)
    return sp, r, A, U, lhs, U ** (p_star - 1)


def radial_ode_residual(N: int, p: float, radii: Sequence[float],
                        a: float | None = None, digits: int = 40) -> np.ndarray:
    """Relative residual of the radial equation at ``radii``.

    Evaluates ``(r^{1-N} (r^{N-1} |U'|^{p-1})' - U^{p*-1}) / U^{p*-1}`` for the
    closed-form profile with constant ``a`` (default :func:`bubble_constant`),
    symbolically differentiated and evaluated in ``digits``-digit arithmetic.
    """
    import mpmath

    sp, r, A, _, lhs, rhs = _symbolic_profile(N, p)
    a = bubble_constant(N, p) if a is None else a
    rel = sp.lambdify((r, A), lhs / rhs - 1, modules="mpmath")
    with mpmath.workdps(digits):
        return np.array([float(rel(mpmath.mpf(float(x)), mpmath.mpf(a))) for x in radii])


def derive_bubble_constant(N: int, p: float, r0: float = 1.0) -> float:
    """Solve the radial equation for ``a`` at one radius, independently of the closed form.

    The equation is ``a^{p-1} f(r) = a^{p*-1} g(r)``, so
    ``a = (f/g)^{1/(p*-p)}`` with ``f, g`` taken at ``a = 1``.
    """
    sp, r, A, _, lhs, rhs = _symbolic_profile(N, p)
    P = sp.nsimplify(p)
    p_star = N * P / (N - P)
    ratio = (lhs / rhs).subs({A: 1, r: sp.nsimplify(r0)})
    return float(sp.N(ratio ** (1 / (p_star - P)), 30))
