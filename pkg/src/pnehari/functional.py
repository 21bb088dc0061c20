"""Energy ``J(u) = ||u||^p/p - |u|_{p*}^{p*}/p*`` and the Nehari machinery.

Every scaling along a ray uses the exact homogeneity
``J(tu) = t^p/p ||u||^p - t^{p*}/p* |u|_{p*}^{p*}``; nothing is re-integrated.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .exceptions import DegenerateInputError, ParameterError, PreconditionError
from .grid import Field, integrate_power, p_dirichlet_energy, p_energy_and_laplacian
from .validation import check_same_grid

__all__ = [
    "ProblemParams",
    "EnergyReport",
    "energy",
    "energy_and_gradient",
    "weak_derivative_action",
    "nehari_scale",
    "kappa",
    "mountain_pass_profile",
    "MountainPassProfile",
    "truncate",
    "monotonicity_gap",
    "MonotonicityGap",
]


@dataclass(frozen=True)
class ProblemParams:
    N: int
    p: float

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 2:
            raise ParameterError(f"N must be an integer >= 2, got {self.N}")
        if not (1.0 < self.p < self.N):
            raise ParameterError(f"p must satisfy 1 < p < N = {self.N}, got p = {self.p}")

    @property
    def p_star(self) -> float:
        return self.N * self.p / (self.N - self.p)

    @property
    def decay_exponent(self) -> float:
        """``(N-p)/p``, the dilation weight of ``D^{1,p}``."""
        return (self.N - self.p) / self.p


@dataclass(frozen=True)
class EnergyReport:
    J: float
    grad_norm_p: float
    crit_norm: float
    nehari_defect: float
    dual_residual: float | None = None

    CSV_FIELDS = ("step", "J", "grad_norm_p", "crit_norm", "nehari_defect", "dual_residual")

    @classmethod
    def from_norms(cls, grad_norm_p: float, crit_norm: float, params: ProblemParams,
                   dual_residual: float | None = None) -> "EnergyReport":
        J = grad_norm_p / params.p - crit_norm / params.p_star
        return cls(J, grad_norm_p, crit_norm, grad_norm_p - crit_norm, dual_residual)

    @property
    def relative_defect(self) -> float:
        return abs(self.nehari_defect) / self.grad_norm_p if self.grad_norm_p > 0 else 0.0

    def csv_row(self, step: int) -> list[str]:
        vals = [self.J, self.grad_norm_p, self.crit_norm, self.nehari_defect]
        row = [str(step)] + [repr(float(v)) for v in vals]
        row.append("" if self.dual_residual is None else repr(float(self.dual_residual)))
        return row

    def to_dict(self) -> dict:
        return asdict(self)


def write_trace_csv(trace: Sequence[EnergyReport], stream=None) -> str:
    """Serialize an energy trace; returns the text when no stream is given."""
    buf = stream if stream is not None else io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(EnergyReport.CSV_FIELDS)
    for step, rep in enumerate(trace):
        writer.writerow(rep.csv_row(step))
    return buf.getvalue() if stream is None else ""


def _crit(values: np.ndarray, q: float, h_n: float) -> float:
    a = np.abs(values)
    return float((a ** q).sum()) * h_n


def energy_and_gradient(values: np.ndarray, grid, params: ProblemParams,
                        mu: float = 0.0) -> tuple[EnergyReport, np.ndarray]:
    """Energy report and the L²-scaled gradient ``-Δ_p u - |u|^{p*-2} u``.

    The gradient is the nodal derivative of ``J`` divided by the cell volume
    and vanishes on exterior nodes.
    """
    h = grid.spacing
    gp, lap = p_energy_and_laplacian(values, h, params.p, mu)
    q = params.p_star
    a = np.abs(values)
    pw = a ** (q - 2.0)
    crit = float((pw * a * a).sum()) * grid.cell_volume
    grad = -lap - pw * values
    grad[~grid.interior] = 0.0
    return EnergyReport.from_norms(gp, crit, params), grad


def energy(u: Field, params: ProblemParams,
           test_fields: Sequence[Field] | None = None) -> EnergyReport:
    """Energy report of ``u``; ``dual_residual`` only when ``test_fields`` are given.

    The dual residual is ``max |J'(u) e| / ||e||`` over the test fields.
    """
    if u.grid.dim != params.N:
        raise ParameterError("field dimension differs from N")
    gp = p_dirichlet_energy(u, params.p)
    crit = integrate_power(u, params.p_star)
    dual = None
    if test_fields:
        _, grad = energy_and_gradient(u.values, u.grid, params)
        dual = dual_residual(grad, test_fields, params)
    return EnergyReport.from_norms(gp, crit, params, dual)


def dual_residual(grad: np.ndarray, test_fields: Sequence[Field], params: ProblemParams) -> float:
    worst = 0.0
    for e in test_fields:
        norm = p_dirichlet_energy(e, params.p) ** (1.0 / params.p)
        if norm > 0:
            worst = max(worst, abs(float((grad * e.values).sum())) * e.grid.cell_volume / norm)
    return worst


def weak_derivative_action(u: Field, v: Field, params: ProblemParams) -> float:
    """``J'(u) v = ∫|∇u|^{p-2}∇u·∇v - ∫|u|^{p*-2} u v`` with the discrete sums."""
    check_same_grid(u, v)
    _, grad = energy_and_gradient(u.values, u.grid, params)
    return float((grad * v.values).sum()) * u.grid.cell_volume


def nehari_scale(u: Field, params: ProblemParams) -> tuple[float, Field]:
    """Scale ``u`` onto the Nehari set ``||tu||^p = |tu|_{p*}^{p*}``."""
    gp = p_dirichlet_energy(u, params.p)
    crit = integrate_power(u, params.p_star)
    t = nehari_factor(gp, crit, params)
    return t, u * t


def nehari_factor(grad_norm_p: float, crit_norm: float, params: ProblemParams) -> float:
    if not (grad_norm_p > 0 and crit_norm > 0):
        raise DegenerateInputError("cannot scale the zero field onto the Nehari set")
    return (grad_norm_p / crit_norm) ** (1.0 / (params.p_star - params.p))


def kappa(u: Field, params: ProblemParams) -> float:
    """``|u|_{p*}^{p*} / ||u||^p``, and 0 for the zero field."""
    gp = p_dirichlet_energy(u, params.p)
    if gp == 0.0:
        return 0.0
    return integrate_power(u, params.p_star) / gp


class MountainPassProfile(NamedTuple):
    t: np.ndarray
    J: np.ndarray
    s_u: float
    J_s_u: float


def ray_energy(t, grad_norm_p: float, crit_norm: float, params: ProblemParams):
    t = np.asarray(t, dtype=float)
    return t ** params.p / params.p * grad_norm_p - t ** params.p_star / params.p_star * crit_norm


def mountain_pass_profile(u: Field, params: ProblemParams, t_grid: Sequence[float],
                          tol: float = 1e-8) -> MountainPassProfile:
    """``t -> J(tu)`` for ``u`` on the Nehari set, plus a point past the barrier.

    ``s_u = (p*/p)^{1/(p*-p)}`` is where the ray energy returns to 0, so any
    ``s > s_u`` has ``J(su) < 0``; the returned point is ``1.01 s_u``.
    """
    gp = p_dirichlet_energy(u, params.p)
    crit = integrate_power(u, params.p_star)
    if gp <= 0 or abs(gp - crit) > tol * gp:
        raise PreconditionError("u is not on the Nehari set within tolerance")
    t = np.asarray(t_grid, dtype=float)
    vals = ray_energy(t, gp, crit, params)
    s_zero = (params.p_star / params.p) ** (1.0 / (params.p_star - params.p))
    s_u = 1.01 * s_zero
    return MountainPassProfile(t, vals, s_u, float(ray_energy(s_u, gp, crit, params)))


def truncate(t):
    """``t`` on ``[-1, 1]``, ``t/|t|`` outside; works elementwise on arrays."""
    if np.ndim(t) == 0:
        t = float(t)
        return t if abs(t) <= 1.0 else math.copysign(1.0, t)
    return np.clip(np.asarray(t, dtype=float), -1.0, 1.0)


class MonotonicityGap(NamedTuple):
    lhs: np.ndarray | float
    lower_bound_ratio: np.ndarray | float
    degenerate: np.ndarray | bool


def monotonicity_gap(eta, xi, p: float) -> MonotonicityGap:
    """``(|η|^{p-2}η - |ξ|^{p-2}ξ)·(η - ξ)`` and its ratio to the lower bound shape.

    The ratio divides by ``|η-ξ|^p`` for ``p >= 2`` and by
    ``|η-ξ|^2 / (|ξ|^p + |η|^p + 1)^{2-p}`` for ``1 < p < 2``.  Rows with
    ``η = ξ`` get ``lhs = 0``, ``ratio = nan`` and ``degenerate = True``.
    Accepts single vectors or stacked rows.
    """
    if not p > 1:
        raise ParameterError("p must be > 1")
    eta = np.asarray(eta, dtype=float)
    xi = np.asarray(xi, dtype=float)
    if eta.shape != xi.shape:
        raise ParameterError("eta and xi must have the same shape")
    single = eta.ndim == 1
    eta2, xi2 = np.atleast_2d(eta), np.atleast_2d(xi)
    ne = np.linalg.norm(eta2, axis=1)
    nx = np.linalg.norm(xi2, axis=1)

    def flux(v, nv):
        with np.errstate(divide="ignore", invalid="ignore"):
            f = np.where(nv > 0, nv ** (p - 2.0), 0.0)
        return f[:, None] * v

    diff = eta2 - xi2
    lhs = np.einsum("ij,ij->i", flux(eta2, ne) - flux(xi2, nx), diff)
    nd = np.linalg.norm(diff, axis=1)
    degenerate = nd == 0
    with np.errstate(divide="ignore", invalid="ignore"):
        if p >= 2:
            ratio = lhs / nd ** p
        else:
            ratio = lhs * (nx ** p + ne ** p + 1.0) ** (2.0 - p) / nd ** 2
    lhs = np.where(degenerate, 0.0, lhs)
    ratio = np.where(degenerate, np.nan, ratio)
    if single:
        return MonotonicityGap(float(lhs[0]), float(ratio[0]), bool(degenerate[0]))
    return MonotonicityGap(lhs, ratio, degenerate)
