"""Uniform tensor lattices with Dirichlet masks and the discrete p-calculus.

A :class:`Grid` is the lattice ``[-L, L]^N`` with ``n`` nodes per axis (``n``
odd, so the origin is a node) together with a :class:`DomainMask`.  Nodal
values live in a :class:`Field`; exterior nodes carry exact zeros, which is
the discrete stand-in for ``D_0^{1,p}``.

The p-Dirichlet energy is a sum over the ``(n-1)^N`` lattice cells.  Each
cell contributes the mean of ``|g|^p`` over its two antipodal corner
gradients: ``g_lo`` built from the ``N`` edges leaving the lower corner and
``g_hi`` from the ``N`` edges entering the upper corner.  The two corner
evaluations cancel each other's first-order bias, and for ``p = 2`` the
energy reduces to the plain sum of squared edge differences, so the induced
operator is the standard ``2N+1``-point Laplacian.
:func:`p_laplacian_apply` is the exact gradient of this energy divided by
the cell volume, i.e. the discrete counterpart of ``div(|grad u|^{p-2} grad u)``.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Iterator, Sequence

import numpy as np

from .exceptions import (
    ConfigurationError,
    InvalidFieldError,
    ParameterError,
    SingularFluxWarning,
)

__all__ = [
    "DomainMask",
    "Grid",
    "Field",
    "integrate_power",
    "discrete_gradient",
    "p_dirichlet_energy",
    "p_laplacian_apply",
    "interpolate",
    "default_mu",
]


@dataclass(frozen=True)
class DomainMask:
    """Shape of the domain, always intersected with the open lattice span.

    ``kind`` is one of ``"ball"`` (needs ``radius``), ``"box"`` (the span
    itself) or ``"halfspace"`` (``{x : x.normal > offset}``, needs a unit
    ``normal``).
    """

    kind: str = "box"
    radius: float | None = None
    normal: tuple[float, ...] | None = None
    offset: float = 0.0

    def __post_init__(self):
        if self.kind == "ball":
            if self.radius is None or not self.radius > 0:
                raise ConfigurationError("ball mask needs a positive radius")
        elif self.kind == "halfspace":
            if self.normal is None:
                raise ConfigurationError("halfspace mask needs a normal vector")
            nrm = np.asarray(self.normal, dtype=float)
            if not np.isclose(np.linalg.norm(nrm), 1.0, atol=1e-12):
                raise ConfigurationError("halfspace normal must be a unit vector")
            object.__setattr__(self, "normal", tuple(float(c) for c in nrm))
        elif self.kind != "box":
            raise ConfigurationError(f"unknown mask kind {self.kind!r}")

    @classmethod
    def ball(cls, radius: float) -> "DomainMask":
        return cls("ball", radius=float(radius))

    @classmethod
    def box(cls) -> "DomainMask":
        return cls("box")

    @classmethod
    def halfspace(cls, normal: Sequence[float], offset: float) -> "DomainMask":
        return cls("halfspace", normal=tuple(float(c) for c in normal), offset=float(offset))

    def shape_distance(self, coords: Sequence[np.ndarray]) -> np.ndarray:
        """Signed distance to the shape boundary (positive inside), ignoring the span."""
        if self.kind == "ball":
            r = np.sqrt(sum(c * c for c in coords))
            return self.radius - r
        if self.kind == "halfspace":
            return sum(n * c for n, c in zip(self.normal, coords)) - self.offset
        return np.full(np.broadcast(*coords).shape, np.inf)

    def signed_distance(self, coords: Sequence[np.ndarray], half_extent: float) -> np.ndarray:
        """Signed distance to the boundary of shape ∩ span, positive inside.

        Exact for a single active constraint; a lower bound near corners of
        the intersection, which is all the mask logic needs.
        """
        box = half_extent - np.max(np.abs(np.broadcast_arrays(*coords)), axis=0)
        return np.minimum(self.shape_distance(coords), box)

    def inward_normal(self, point: np.ndarray, half_extent: float) -> np.ndarray:
        """Inward unit normal at the boundary point closest to ``point``."""
        point = np.asarray(point, dtype=float)
        dim = point.size
        box_gap = half_extent - np.abs(point)
        k = int(np.argmin(box_gap))
        box_normal = np.zeros(dim)
        box_normal[k] = -1.0 if point[k] >= 0 else 1.0
        shape_gap = float(self.shape_distance([np.asarray(c) for c in point]))
        if shape_gap <= box_gap[k]:
            if self.kind == "ball":
                r = np.linalg.norm(point)
                if r == 0:
                    out = np.zeros(dim)
                    out[0] = -1.0
                    return out
                return -point / r
            if self.kind == "halfspace":
                return np.asarray(self.normal, dtype=float)
        return box_normal

    def to_dict(self) -> dict:
        out: dict = {"kind": self.kind}
        if self.kind == "ball":
            out["radius"] = self.radius
        elif self.kind == "halfspace":
            out["normal"] = list(self.normal)
            out["offset"] = self.offset
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "DomainMask":
        kind = data.get("kind", "box")
        if kind == "ball":
            return cls.ball(data["radius"])
        if kind == "halfspace":
            return cls.halfspace(data["normal"], data.get("offset", 0.0))
        return cls.box()


@dataclass(frozen=True)
class Grid:
    """Lattice ``[-L, L]^dim`` with ``nodes_per_axis`` nodes per axis."""

    dim: int
    nodes_per_axis: int
    half_extent: float
    mask: DomainMask = field(default_factory=DomainMask.box)

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 2:
            raise ConfigurationError(f"dim must be an integer >= 2, got {self.dim}")
        n = self.nodes_per_axis
        if int(n) != n or n < 3 or n % 2 == 0:
            raise ConfigurationError(f"nodes_per_axis must be odd and >= 3, got {n}")
        if not (self.half_extent > 0 and math.isfinite(self.half_extent)):
            raise ConfigurationError(f"half_extent must be positive, got {self.half_extent}")
        if self.mask.kind == "halfspace" and len(self.mask.normal) != self.dim:
            raise ConfigurationError("halfspace normal has the wrong dimension")

    @classmethod
    def from_spacing(cls, dim: int, half_extent: float, spacing: float,
                     mask: DomainMask | None = None) -> "Grid":
        n = int(round(2 * half_extent / spacing)) + 1
        if not math.isclose((n - 1) * spacing, 2 * half_extent, rel_tol=1e-9):
            raise ConfigurationError("spacing must divide the lattice span 2L")
        return cls(dim, n, half_extent, mask or DomainMask.box())

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_extent / (self.nodes_per_axis - 1)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.nodes_per_axis,) * self.dim

    @property
    def cell_volume(self) -> float:
        return self.spacing ** self.dim

    @property
    def size(self) -> int:
        return self.nodes_per_axis ** self.dim

    @cached_property
    def axis(self) -> np.ndarray:
        """1-D node coordinates, exactly symmetric about 0."""
        i = np.arange(self.nodes_per_axis) - (self.nodes_per_axis - 1) // 2
        return i * self.spacing

    def coordinates(self, rows: slice | None = None) -> list[np.ndarray]:
        """Open-grid coordinate arrays, broadcastable to the node shape.

        ``rows`` restricts axis 0, which is how the slab iterators work.
        """
        out = []
        for k in range(self.dim):
            a = self.axis if (k or rows is None) else self.axis[rows]
            shp = [1] * self.dim
            shp[k] = a.size
            out.append(a.reshape(shp))
        return out

    def interior_rows(self, rows: slice | None = None) -> np.ndarray:
        coords = self.coordinates(rows)
        return self.mask.signed_distance(coords, self.half_extent) > 0

    def closed_rows(self, rows: slice | None = None) -> np.ndarray:
        """Nodes in the closed mask region (boundary included)."""
        coords = self.coordinates(rows)
        tol = 1e-9 * self.spacing
        return self.mask.signed_distance(coords, self.half_extent) >= -tol

    @cached_property
    def interior(self) -> np.ndarray:
        """Boolean node array; ``True`` where values may be nonzero."""
        out = self.interior_rows()
        out.flags.writeable = False
        return out

    def boundary_distance(self) -> np.ndarray:
        return self.mask.signed_distance(self.coordinates(), self.half_extent)

    def contains(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        coords = [points[:, k] for k in range(self.dim)]
        return self.mask.signed_distance(coords, self.half_extent) > 0

    def refine(self) -> "Grid":
        """Same span and mask, spacing halved."""
        return Grid(self.dim, 2 * self.nodes_per_axis - 1, self.half_extent, self.mask)

    def zeros(self) -> "Field":
        return Field(self, np.zeros(self.shape))

    def field(self, values: np.ndarray) -> "Field":
        """Wrap ``values``, zeroing exterior nodes."""
        values = np.array(values, dtype=float, copy=True)
        if values.shape != self.shape:
            raise InvalidFieldError(f"expected shape {self.shape}, got {values.shape}")
        values[~self.interior] = 0.0
        return Field(self, values)

    def sample(self, func: Callable[..., np.ndarray], masked: bool = True) -> "Field":
        """Evaluate ``func(*coords)`` on the open coordinate grid."""
        vals = np.broadcast_to(func(*self.coordinates()), self.shape)
        if masked:
            return self.field(vals)
        return Field(self, np.array(vals, dtype=float), masked=False)

    def iter_slabs(self, width: int, halo: int = 0) -> Iterator[tuple[int, int, slice]]:
        """Yield ``(start, stop, rows)`` covering axis 0 in chunks.

        ``rows`` spans ``[start - halo, stop + halo)`` clipped to the lattice,
        so kernels with a stencil radius ``halo`` are exact on ``[start, stop)``.
        """
        n = self.nodes_per_axis
        for start in range(0, n, width):
            stop = min(start + width, n)
            yield start, stop, slice(max(start - halo, 0), min(stop + halo, n))

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "nodes_per_axis": self.nodes_per_axis,
            "half_extent": self.half_extent,
            "mask": self.mask.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Grid":
        return cls(int(data["dim"]), int(data["nodes_per_axis"]), float(data["half_extent"]),
                   DomainMask.from_dict(data.get("mask", {"kind": "box"})))


@dataclass(frozen=True, eq=False)
class Field:
    """Immutable nodal values on a grid.

    With ``masked=False`` the zero-exterior invariant is not enforced; that
    mode exists for consistency checks on unmasked test functions.
    """

    grid: Grid
    values: np.ndarray
    masked: bool = True

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != self.grid.shape:
            raise InvalidFieldError(f"expected shape {self.grid.shape}, got {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise InvalidFieldError("field contains non-finite values")
        if self.masked and np.any(vals[~self.grid.interior] != 0.0):
            raise InvalidFieldError("exterior nodes must carry exact zeros")
        if vals is self.values and vals.flags.writeable:
            vals = vals.copy()
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    def with_values(self, values: np.ndarray) -> "Field":
        return Field(self.grid, values, self.masked)

    def __mul__(self, scalar: float) -> "Field":
        return self.with_values(self.values * float(scalar))

    __rmul__ = __mul__

    def __add__(self, other: "Field") -> "Field":
        return self.with_values(self.values + other.values)

    def __sub__(self, other: "Field") -> "Field":
        return self.with_values(self.values - other.values)

    def __neg__(self) -> "Field":
        return self.with_values(-self.values)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))


def _check(u) -> Field:
    if not isinstance(u, Field):
        raise InvalidFieldError(f"expected a Field, got {type(u).__name__}")
    return u


def _check_p(p: float, dim: int) -> None:
    if not (1.0 < p < dim):
        raise ParameterError(f"p must satisfy 1 < p < N = {dim}, got p = {p}")


# ---------------------------------------------------------------------------
# array kernels (shared with the chunked samplers and the solver)


def _side(ndim: int, k: int, along: slice, other: slice) -> tuple[slice, ...]:
    return tuple(along if i == k else other for i in range(ndim))


_ALL = slice(None)
_LO = slice(None, -1)
_HI = slice(1, None)


def _edge_differences(a: np.ndarray, h: float) -> list[np.ndarray]:
    return [np.diff(a, axis=k) / h for k in range(a.ndim)]


def _corner_gradients(diffs: list[np.ndarray]) -> tuple[list[np.ndarray], list[np.ndarray]]:
    nd = len(diffs)
    lo = [d[_side(nd, k, _ALL, _LO)] for k, d in enumerate(diffs)]
    hi = [d[_side(nd, k, _ALL, _HI)] for k, d in enumerate(diffs)]
    return lo, hi


def _sumsq(parts: list[np.ndarray]) -> np.ndarray:
    s = parts[0] * parts[0]
    for g in parts[1:]:
        s += g * g
    return s


def _pow_half(s: np.ndarray, p: float) -> np.ndarray:
    """``s**(p/2)`` with the cheap exact branch for p = 2."""
    if p == 2.0:
        return s
    return s ** (0.5 * p)


def cells_inside(closed: np.ndarray) -> np.ndarray:
    """Cells whose ``2^N`` corners all lie in the boolean node set ``closed``."""
    out = closed
    for k in range(closed.ndim):
        out = out[_side(closed.ndim, k, _LO, _ALL)] & out[_side(closed.ndim, k, _HI, _ALL)]
    return out


def p_energy_array(a: np.ndarray, h: float, p: float,
                   cell_mask: np.ndarray | None = None) -> float:
    """Cell-sum p-Dirichlet energy of raw nodal data.

    ``cell_mask`` restricts the sum to selected cells (test mode); masked
    fields need no restriction because their exterior values are zero.
    """
    lo, hi = _corner_gradients(_edge_differences(a, h))
    dens = _pow_half(_sumsq(lo), p) + _pow_half(_sumsq(hi), p)
    total = dens.sum() if cell_mask is None else dens[cell_mask].sum()
    return 0.5 * float(total) * h ** a.ndim


def _flux_factor(s: np.ndarray, p: float, mu: float) -> np.ndarray:
    if p == 2.0:
        return np.ones_like(s)
    if mu > 0:
        return (s + mu * mu) ** (0.5 * (p - 2.0))
    if p > 2.0:
        return s ** (0.5 * (p - 2.0))
    zero = s == 0.0
    if np.any(zero):
        warnings.warn("vanishing gradient with p < 2 and mu = 0; flux set to 0 there",
                      SingularFluxWarning, stacklevel=3)
        s = np.where(zero, 1.0, s)
        return np.where(zero, 0.0, s ** (0.5 * (p - 2.0)))
    return s ** (0.5 * (p - 2.0))


def p_energy_and_laplacian(a: np.ndarray, h: float, p: float,
                           mu: float = 0.0) -> tuple[float, np.ndarray]:
    """Return ``(||u||^p, Δ_p u)`` for raw nodal data.

    ``Δ_p u`` is ``-(1/(p h^N)) d||u||^p/du`` evaluated at every node; the
    caller restricts it to interior nodes.
    """
    nd = a.ndim
    diffs = _edge_differences(a, h)
    lo, hi = _corner_gradients(diffs)
    s_lo, s_hi = _sumsq(lo), _sumsq(hi)
    energy = 0.5 * float(_pow_half(s_lo, p).sum() + _pow_half(s_hi, p).sum()) * h ** nd
    f_lo, f_hi = _flux_factor(s_lo, p, mu), _flux_factor(s_hi, p, mu)
    div = np.zeros_like(a, dtype=float)
    for k in range(nd):
        edge = np.zeros_like(diffs[k])
        edge[_side(nd, k, _ALL, _LO)] += f_lo * lo[k]
        edge[_side(nd, k, _ALL, _HI)] += f_hi * hi[k]
        edge *= 0.5 / h
        div[_side(nd, k, _LO, _ALL)] += edge
        div[_side(nd, k, _HI, _ALL)] -= edge
    return energy, div


def default_mu(u: Field | np.ndarray, p: float, h: float) -> float:
    """Flux regularization used when none is given: zero unless p < 2."""
    if p >= 2.0:
        return 0.0
    vals = u.values if isinstance(u, Field) else u
    return 1e-8 * float(np.max(np.abs(vals))) / h


# ---------------------------------------------------------------------------
# public operations


def integrate_power(u: Field, q: float) -> float:
    """Rectangle-rule integral ``h^N Σ |u|^q``.

    Masked fields sum over all nodes (exterior values are zero); unmasked
    test-mode fields sum over the closed mask region.
    """
    u = _check(u)
    if not (math.isfinite(q) and q >= 1):
        raise ParameterError(f"q must be finite and >= 1, got {q}")
    a = np.abs(u.values)
    if not u.masked:
        a = np.where(u.grid.closed_rows(), a, 0.0)
    s = a.sum() if q == 1 else (a * a).sum() if q == 2 else (a ** q).sum()
    return float(s) * u.grid.cell_volume


def discrete_gradient(u: Field) -> np.ndarray:
    """Forward differences at the lower corner of each cell.

    Returns an array of shape ``(N, n-1, ..., n-1)``; component ``k`` of cell
    ``c`` is ``(u(c + h e_k) - u(c)) / h``.
    """
    u = _check(u)
    lo, _ = _corner_gradients(_edge_differences(u.values, u.grid.spacing))
    return np.stack(lo)


def p_dirichlet_energy(u: Field, p: float) -> float:
    """Discrete ``||u||^p = ∫|∇u|^p``.

    For unmasked test-mode fields the cell sum runs over cells lying in the
    closed mask region, i.e. the integral over the domain without the
    Dirichlet cut at its boundary.
    """
    u = _check(u)
    _check_p(p, u.grid.dim)
    cells = None if u.masked else cells_inside(u.grid.closed_rows())
    return p_energy_array(u.values, u.grid.spacing, p, cells)


def p_laplacian_apply(u: Field, p: float, mu: float | None = None) -> Field:
    """Discrete ``Δ_p u = div(|∇u|^{p-2} ∇u)``; exterior nodes are 0.

    ``mu`` regularizes ``|∇u|`` as ``sqrt(|∇u|^2 + mu^2)`` inside the flux;
    ``None`` selects :func:`default_mu`.
    """
    u = _check(u)
    _check_p(p, u.grid.dim)
    h = u.grid.spacing
    if mu is None:
        mu = default_mu(u, p, h)
    if mu < 0:
        raise ParameterError("mu must be >= 0")
    _, div = p_energy_and_laplacian(u.values, h, p, mu)
    if u.masked:
        div[~u.grid.interior] = 0.0
    return Field(u.grid, div, masked=u.masked)


def interpolate_array(values: np.ndarray, grid: Grid, points: np.ndarray) -> np.ndarray:
    """Multilinear interpolation of nodal data at ``points`` (shape ``(M, N)``)."""
    points = np.asarray(points, dtype=float)
    h, L, n = grid.spacing, grid.half_extent, grid.nodes_per_axis
    t = (points + L) / h
    tol = 1e-9
    inside = np.all((t >= -tol) & (t <= n - 1 + tol), axis=1)
    base = np.clip(np.floor(t).astype(np.intp), 0, n - 2)
    frac = np.clip(t - base, 0.0, 1.0)
    out = np.zeros(points.shape[0])
    for corner in itertools.product((0, 1), repeat=grid.dim):
        w = np.ones(points.shape[0])
        idx = []
        for k, c in enumerate(corner):
            w *= frac[:, k] if c else 1.0 - frac[:, k]
            idx.append(base[:, k] + c)
        out += w * values[tuple(idx)]
    out[~inside] = 0.0
    return out


def interpolate(u: Field, x: np.ndarray) -> float | np.ndarray:
    """Multilinear interpolation; points outside the lattice span give 0.

    A single point returns a float, an ``(M, N)`` array returns ``M`` values.
    """
    u = _check(u)
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    if pts.shape[1] != u.grid.dim:
        raise InvalidFieldError(f"points must have {u.grid.dim} coordinates")
    vals = interpolate_array(u.values, u.grid, pts)
    return float(vals[0]) if single else vals
