"""Concentration instrumentation: windowed critical mass, blow-up scale and
center extraction, rescaled profiles, and classification of a sequence of
profiles as converging, concentrating inside, or concentrating at the
boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import fft as sfft
from sklearn.base import BaseEstimator

from .exceptions import ParameterError, ResolutionError
from .functional import ProblemParams
from .grid import Field, Grid, integrate_power, interpolate_array
from .symmetry import SymmetryConfig, fixed_subspace
from .validation import check_field, check_is_fitted

__all__ = [
    "CONVERGING",
    "CONCENTRATING_INTERIOR",
    "CONCENTRATING_BOUNDARY",
    "UNDETERMINED",
    "Classification",
    "ProfileRecord",
    "concentration_function",
    "extract_scale",
    "rescale_field",
    "profile_record",
    "classify_sequence",
    "ConcentrationProfiler",
    "DEFAULT_DELTA_FRACTION",
]

CONVERGING = "Converging"
CONCENTRATING_INTERIOR = "ConcentratingInterior"
CONCENTRATING_BOUNDARY = "ConcentratingBoundary"
UNDETERMINED = "Undetermined"

DEFAULT_DELTA_FRACTION = 0.45


@dataclass(frozen=True)
class Classification:
    """Sequence label; ``normal`` and ``offset`` only for the boundary case.

    The limiting half-space in rescaled coordinates is ``{y : y.normal > offset}``.
    """

    label: str
    normal: tuple[float, ...] | None = None
    offset: float | None = None
    evidence: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {"label": self.label, "evidence": self.evidence}
        if self.normal is not None:
            out["normal"] = list(self.normal)
            out["offset"] = self.offset
        return out


@dataclass(frozen=True)
class ProfileRecord:
    delta: float
    eps: float
    xi: np.ndarray
    rescaled: Field | None = None
    classification: Classification | None = None
    total_mass: float | None = None

    def __post_init__(self):
        if not self.delta > 0:
            raise ParameterError("delta must be positive")
        if not self.eps > 0:
            raise ParameterError("eps must be positive")
        object.__setattr__(self, "xi", np.asarray(self.xi, dtype=float))

    def to_dict(self, include_field: bool = False) -> dict:
        out = {
            "delta": self.delta,
            "eps": self.eps,
            "xi": [float(c) for c in self.xi],
            "total_mass": self.total_mass,
            "classification": None if self.classification is None else self.classification.to_dict(),
        }
        if self.rescaled is not None:
            out["rescaled_grid"] = self.rescaled.grid.to_dict()
            if include_field:
                out["rescaled_values"] = self.rescaled.values.ravel().tolist()
        return out


def _window_offsets(grid: Grid, eps: float) -> np.ndarray:
    """Boolean kernel of lattice offsets within ``eps`` of the center."""
    m = min(int(math.floor(eps / grid.spacing + 1e-9)), grid.nodes_per_axis - 1)
    ax = np.arange(-m, m + 1) * grid.spacing
    r2 = sum(np.meshgrid(*([ax * ax] * grid.dim), indexing="ij", sparse=True))
    return r2 <= eps * eps * (1 + 1e-12)


def _mass_density(u: Field, q: float) -> np.ndarray:
    return np.abs(u.values) ** q * u.grid.cell_volume


def concentration_function(u: Field, eps: float, q: float | None = None,
                           p: float | None = None) -> tuple[float, np.ndarray]:
    """Largest mass ``h^N Σ |u|^q`` in a lattice ball of radius ``eps``.

    ``q`` defaults to the critical exponent of ``p`` (itself defaulting to 2).
    Returns ``(Q, center)`` with the maximizing lattice node.  Windows are
    summed by FFT convolution; results are exact up to rounding of order
    ``1e-16`` times the total mass.
    """
    u = check_field(u)
    grid = u.grid
    if eps < grid.spacing * (1 - 1e-12):
        raise ResolutionError(f"eps = {eps} is below the lattice spacing {grid.spacing}")
    if q is None:
        q = ProblemParams(grid.dim, 2.0 if p is None else p).p_star
    dens = _mass_density(u, q)
    total = float(dens.sum())
    if total == 0.0:
        return 0.0, np.zeros(grid.dim)
    diameter = 2.0 * grid.half_extent * math.sqrt(grid.dim)
    if eps >= diameter:
        return total, np.zeros(grid.dim)
    sums = _window_sums(dens, _window_offsets(grid, eps))
    idx = np.unravel_index(int(np.argmax(sums)), sums.shape)
    center = grid.axis[list(idx)]
    return min(float(sums[idx]), total), center


def _window_sums(dens: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Sum of ``dens`` over the symmetric ``kernel`` around every node.

    Circular FFT convolution on a period of ``n + m`` per axis (``m`` the
    kernel radius), which is alias-free on the ``n`` output nodes because
    the padding is zero.
    """
    n = dens.shape[0]
    m = kernel.shape[0] // 2
    period = (n + m,) * dens.ndim
    kpad = np.zeros(period)
    # center the kernel at index 0 with wrap-around
    idx = np.arange(-m, m + 1) % (n + m)
    kpad[np.ix_(*([idx] * dens.ndim))] = kernel
    spec = sfft.rfftn(dens, s=period) * sfft.rfftn(kpad)
    out = sfft.irfftn(spec, s=period)
    return np.maximum(out[tuple(slice(0, n) for _ in range(dens.ndim))], 0.0)


def _candidate_radii(grid: Grid) -> np.ndarray:
    """Distinct lattice-ball radii ``h sqrt(m)`` from ``h`` to the diameter."""
    n = grid.nodes_per_axis - 1
    max_m = grid.dim * n * n
    squares = np.arange(n + 1) ** 2
    reach = {0}
    for _ in range(grid.dim):
        reach = {a + b for a in reach for b in squares if a + b <= max_m}
    ms = np.array(sorted(m for m in reach if m >= 1))
    return grid.spacing * np.sqrt(ms)


def _snap_to_fixed(xi: np.ndarray, eps: float, symmetry: SymmetryConfig | None) -> np.ndarray:
    if symmetry is None:
        return xi
    basis = fixed_subspace(symmetry)
    proj = basis.T @ (basis @ xi) if basis.size else np.zeros_like(xi)
    return proj if np.linalg.norm(xi - proj) <= eps else xi


def extract_scale(u: Field, delta: float, p: float = 2.0,
                  symmetry: SymmetryConfig | None = None) -> tuple[float, np.ndarray]:
    """Smallest lattice-ball radius holding mass ``delta``, and its center.

    ``delta`` must lie in ``(0, M/2]`` with ``M`` the total critical mass.
    The search bisects over the distinct lattice radii, where ``Q`` is a
    nondecreasing step function.  With ``symmetry`` the center is replaced
    by its projection onto the fixed-point subspace when it is within one
    window radius of it.
    """
    u = check_field(u)
    q = ProblemParams(u.grid.dim, p).p_star
    total = float(_mass_density(u, q).sum())
    if not (delta > 0 and delta <= 0.5 * total * (1 + 1e-12)):
        raise ParameterError(
            f"delta must lie in (0, total/2] = (0, {0.5 * total:.6g}], got {delta:.6g}")
    radii = _candidate_radii(u.grid)
    # bracket by doubling from the smallest window, then bisect
    lo, hi = 0, 0
    Q_hi, c_hi = concentration_function(u, radii[0], q)
    while Q_hi < delta and hi < len(radii) - 1:
        lo = hi + 1
        hi = min(2 * hi + 1, len(radii) - 1)
        Q_hi, c_hi = concentration_function(u, radii[hi], q)
    while lo < hi:
        mid = (lo + hi) // 2
        Q, c = concentration_function(u, radii[mid], q)
        if Q >= delta:
            hi, c_hi = mid, c
        else:
            lo = mid + 1
    eps = float(radii[hi])
    return eps, _snap_to_fixed(np.asarray(c_hi, dtype=float), eps, symmetry)


def default_reference_grid(dim: int) -> Grid:
    return Grid(dim, 33 if dim <= 4 else 5, 4.0 if dim <= 4 else 2.0)


def rescale_field(u: Field, eps: float, xi, params: ProblemParams,
                  reference: Grid | None = None) -> Field:
    """``w(y) = eps^{(N-p)/p} u(eps y + xi)`` sampled on ``reference``.

    The result is an unmasked (test-mode) field: it samples a window of
    ``u`` and is not forced to vanish on the reference boundary.
    """
    u = check_field(u)
    if not eps > 0:
        raise ParameterError("eps must be positive")
    ref = reference or default_reference_grid(u.grid.dim)
    if ref.dim != u.grid.dim:
        raise ParameterError("reference grid dimension differs from the field")
    xi = np.asarray(xi, dtype=float)
    pts = np.stack([np.broadcast_to(c, ref.shape).ravel() for c in ref.coordinates()], axis=1)
    vals = interpolate_array(u.values, u.grid, eps * pts + xi)
    w = eps ** params.decay_exponent * vals.reshape(ref.shape)
    return Field(ref, w, masked=False)


def profile_record(u: Field, params: ProblemParams, symmetry: SymmetryConfig | None = None,
                   delta: float | None = None, reference: Grid | None = None,
                   rescale: bool = True) -> ProfileRecord:
    """Extract ``(eps, xi)`` at ``delta`` (default 0.45 of the mass) and rescale."""
    total = integrate_power(u, params.p_star)
    if delta is None:
        delta = DEFAULT_DELTA_FRACTION * total
    eps, xi = extract_scale(u, delta, params.p, symmetry)
    w = rescale_field(u, eps, xi, params, reference) if rescale else None
    return ProfileRecord(delta, eps, xi, w, None, total)


def _boundary_distance(point: np.ndarray, grid: Grid) -> float:
    return float(grid.mask.signed_distance([np.asarray(c) for c in point], grid.half_extent))


def classify_sequence(records: Sequence[ProfileRecord], grid: Grid, eps_min: float = 0.05,
                      d_ratio_max: float = 4.0, stable_ratio: float = 0.8,
                      cauchy_tol: float = 0.1, p: float = 2.0) -> Classification:
    """Finite-sequence evidence for the concentration alternatives.

    * Converging: every ``eps`` at least ``eps_min``, consecutive ratios
      within ``[stable_ratio, 1/stable_ratio]``, and consecutive rescaled
      profiles within ``cauchy_tol`` relative in the critical norm (when
      profiles are attached and share a reference grid).
    * Concentrating: ``eps`` nonincreasing with the last value below
      ``eps_min``; interior if ``dist(xi, boundary)/eps > d_ratio_max``,
      otherwise boundary with the inward normal at the nearest boundary
      point and offset ``-dist/eps``.
    * Undetermined otherwise.
    """
    if len(records) < 2:
        raise ParameterError("classify_sequence needs at least two records")
    eps = np.array([r.eps for r in records])
    ratios = eps[1:] / eps[:-1]
    ev = {"eps": eps.tolist()}
    if np.all(eps >= eps_min) and np.all((ratios >= stable_ratio) & (ratios <= 1 / stable_ratio)):
        gaps = _profile_gaps(records, p)
        ev["profile_gaps"] = gaps
        if all(g <= cauchy_tol for g in gaps):
            return Classification(CONVERGING, evidence=ev)
        return Classification(UNDETERMINED, evidence=ev)
    if eps[-1] < eps_min and np.all(ratios <= 1.0 + 1e-12) and eps[-1] < eps[0]:
        last = records[-1]
        dist = _boundary_distance(last.xi, grid)
        ratio = dist / last.eps
        ev["d_ratio"] = [_boundary_distance(r.xi, grid) / r.eps for r in records]
        if ratio > d_ratio_max:
            return Classification(CONCENTRATING_INTERIOR, evidence=ev)
        nu = grid.mask.inward_normal(last.xi, grid.half_extent)
        return Classification(CONCENTRATING_BOUNDARY, tuple(float(c) for c in nu),
                              -float(ratio), ev)
    return Classification(UNDETERMINED, evidence=ev)


def _profile_gaps(records: Sequence[ProfileRecord], p: float) -> list[float]:
    gaps = []
    for a, b in zip(records[:-1], records[1:]):
        if a.rescaled is None or b.rescaled is None or a.rescaled.grid != b.rescaled.grid:
            continue
        q = ProblemParams(a.rescaled.grid.dim, p).p_star
        diff = integrate_power(b.rescaled - a.rescaled, q) ** (1 / q)
        ref = max(integrate_power(b.rescaled, q) ** (1 / q), 1e-300)
        gaps.append(diff / ref)
    return gaps


class ConcentrationProfiler(BaseEstimator):
    """Estimator wrapper: ``fit`` a sequence of fields, read ``classification_``.

    ``transform(u)`` returns the rescaled profile of one field.
    """

    def __init__(self, p: float = 2.0, delta_fraction: float = DEFAULT_DELTA_FRACTION,
                 eps_min: float = 0.05, d_ratio_max: float = 4.0, cauchy_tol: float = 0.1,
                 j: int | None = None):
        self.p = p
        self.delta_fraction = delta_fraction
        self.eps_min = eps_min
        self.d_ratio_max = d_ratio_max
        self.cauchy_tol = cauchy_tol
        self.j = j

    def _record(self, u: Field, reference: Grid | None) -> ProfileRecord:
        params = ProblemParams(u.grid.dim, self.p)
        sym = None if self.j is None else SymmetryConfig(u.grid.dim, self.j)
        total = integrate_power(u, params.p_star)
        return profile_record(u, params, sym, self.delta_fraction * total, reference)

    def fit(self, X: Sequence[Field], y=None, reference: Grid | None = None):
        fields = [check_field(u) for u in X]
        self.records_ = [self._record(u, reference) for u in fields]
        self.classification_ = classify_sequence(
            self.records_, fields[-1].grid, self.eps_min, self.d_ratio_max,
            cauchy_tol=self.cauchy_tol, p=self.p)
        return self

    def transform(self, X):
        check_is_fitted(self, "records_")
        return [self._record(check_field(u), None).rescaled for u in X]
