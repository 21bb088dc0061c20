"""Projected, Nehari-rescaled steepest descent for equivariant critical points.

Each iterate is ``u = t P v``: ``P`` is the signed Haar average of the
symmetry group, ``v`` a latent nodal field and ``t`` the Nehari factor of
``P v``.  A step moves ``v`` along ``-P^T ∇J(u)`` and rescales; the Nehari
rescale makes ``J(u+)`` a 0-homogeneous function of ``v`` whose slope at
``u`` is ``-||P^T ∇J(u)||^2``, so Armijo backtracking always succeeds for
small steps.  Keeping ``v`` (rather than re-projecting ``u``) matters
because the sampled average is idempotent only up to ``O(h^2)``.

Without a symmetry group ``P`` is the identity, which is how the positive
ground-state reference level is computed.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator

from .bubble import BubbleParams, bubble_on_coords
from .exceptions import (
    ConfigurationError,
    DegenerateInitializationError,
    ParameterError,
    SingularFluxWarning,
)
from .functional import (
    EnergyReport,
    ProblemParams,
    energy_and_gradient,
    nehari_factor,
)
from .grid import Field, Grid, p_energy_array
from .symmetry import (
    EquivariantProjector,
    SymmetryConfig,
    equivariance_defect,
)
from .validation import check_is_fitted

__all__ = [
    "SolveConfig",
    "SolveResult",
    "Iterate",
    "StepInfo",
    "DescentOperators",
    "initialize",
    "start",
    "step",
    "solve",
    "ps_diagnostics",
    "PSReport",
    "NehariDescent",
]

MAX_HALVINGS = 60
INIT_KINDS = ("projected-bubble", "random-smooth")
TERMINATIONS = ("converged", "max_iters", "stagnation")


@dataclass(frozen=True)
class SolveConfig:
    """Everything a run depends on.

    ``symmetry=None`` drops the equivariance constraint.  ``tol_residual``
    is relative to the dual residual of the initial iterate.
    ``alpha0=None`` starts the line search at ``h^2 / (2N)``.  Without an
    ``init_center`` the bubble seed sits at 0.5 on the first axis of every
    symmetry block.
    """

    problem: ProblemParams
    grid: Grid
    symmetry: SymmetryConfig | None = None
    init: str = "projected-bubble"
    init_center: tuple[float, ...] | None = None
    init_eps: float = 0.5
    seed: int = 0
    alpha0: float | None = None
    beta: float = 0.5
    c1: float = 1e-4
    tol_defect: float = 1e-6
    tol_residual: float = 1e-3
    tol_energy: float = 1e-8
    max_iters: int = 2000
    test_bank: int = 16
    diagnostics_every: int = 0

    def __post_init__(self):
        if self.grid.dim != self.problem.N:
            raise ConfigurationError("grid dimension differs from N")
        if self.symmetry is not None and self.symmetry.N != self.problem.N:
            raise ConfigurationError("symmetry N differs from N")
        if self.init not in INIT_KINDS:
            raise ConfigurationError(f"init must be one of {INIT_KINDS}, got {self.init!r}")
        if not 0 < self.beta < 1:
            raise ParameterError("beta must lie in (0, 1)")
        if not 0 < self.c1 < 1:
            raise ParameterError("c1 must lie in (0, 1)")
        if self.alpha0 is not None and not self.alpha0 > 0:
            raise ParameterError("alpha0 must be positive")
        if not self.init_eps > 0:
            raise ParameterError("init_eps must be positive")
        if self.max_iters < 0:
            raise ParameterError("max_iters must be >= 0")
        for name in ("tol_defect", "tol_residual", "tol_energy"):
            if not getattr(self, name) >= 0:
                raise ParameterError(f"{name} must be >= 0")
        if self.test_bank < 1:
            raise ParameterError("test_bank must be >= 1")
        center = self.center
        if self.init == "projected-bubble" and self.symmetry is not None:
            # ρ in a block where the center has no component fixes the bubble
            # and flips the sign, so the signed average vanishes
            blocks = center[:4 * self.symmetry.j].reshape(self.symmetry.j, 4)
            dead = [b for b in range(self.symmetry.j) if np.linalg.norm(blocks[b]) <= 1e-12]
            if dead:
                where = ("lies in the fixed-point subspace" if len(dead) == self.symmetry.j
                         else f"has no component in C^2 block(s) {[b + 1 for b in dead]}")
                raise DegenerateInitializationError(
                    f"init_center {where}, where the signed average of a radial bubble "
                    "vanishes; give it a nonzero component in every block "
                    "(e.g. 0.5 on the first axis of each) or use init = 'random-smooth'")

    @property
    def center(self) -> np.ndarray:
        if self.init_center is not None:
            c = np.asarray(self.init_center, dtype=float)
            if c.shape != (self.problem.N,):
                raise ConfigurationError(f"init_center must have {self.problem.N} coordinates")
            return c
        c = np.zeros(self.problem.N)
        if self.symmetry is not None:
            c[0:4 * self.symmetry.j:4] = 0.5
        return c

    @property
    def first_step(self) -> float:
        if self.alpha0 is not None:
            return self.alpha0
        return self.grid.spacing ** 2 / (2.0 * self.grid.dim)

    def ground_state(self) -> "SolveConfig":
        """Same grid and tolerances, no symmetry, bubble seed at the origin."""
        return replace(self, symmetry=None, init="projected-bubble",
                       init_center=tuple([0.0] * self.problem.N))

    def to_dict(self) -> dict:
        return {
            "problem": {"N": self.problem.N, "p": self.problem.p},
            "grid": self.grid.to_dict(),
            "symmetry": None if self.symmetry is None else self.symmetry.to_dict(),
            "init": self.init,
            "init_center": list(self.center),
            "init_eps": self.init_eps,
            "seed": self.seed,
            "alpha0": self.alpha0,
            "beta": self.beta,
            "c1": self.c1,
            "tol_defect": self.tol_defect,
            "tol_residual": self.tol_residual,
            "tol_energy": self.tol_energy,
            "max_iters": self.max_iters,
            "test_bank": self.test_bank,
            "diagnostics_every": self.diagnostics_every,
        }


class DescentOperators:
    """Projector, its adjoint and the dual-residual test bank for one config."""

    def __init__(self, config: SolveConfig):
        self.config = config
        self.grid = config.grid
        self.params = config.problem
        self.interior = config.grid.interior
        if config.symmetry is None:
            self._proj = None
        else:
            self._proj = EquivariantProjector.from_config(config.symmetry).fit(config.grid)
        self.bank = self._test_bank()

    def project(self, v: np.ndarray) -> np.ndarray:
        if self._proj is None:
            return np.where(self.interior, v, 0.0)
        return self._proj.project_values(v)

    def adjoint(self, g: np.ndarray) -> np.ndarray:
        if self._proj is None:
            return np.where(self.interior, g, 0.0)
        out = self._proj.adjoint_values(g)
        out[~self.interior] = 0.0
        return out

    def norms(self, u: np.ndarray) -> tuple[float, float]:
        gp = p_energy_array(u, self.grid.spacing, self.params.p)
        crit = float((np.abs(u) ** self.params.p_star).sum()) * self.grid.cell_volume
        return gp, crit

    def gradient(self, u: np.ndarray) -> tuple[EnergyReport, np.ndarray]:
        with warnings.catch_warnings():
            # p < 2 with mu = 0: the zero flux at flat cells is the exact subgradient
            warnings.simplefilter("ignore", SingularFluxWarning)
            return energy_and_gradient(u, self.grid, self.params)

    def dual_residual(self, grad: np.ndarray) -> float:
        h_n = self.grid.cell_volume
        return max(abs(float(np.vdot(grad, e))) * h_n for e in self.bank)

    def _test_bank(self) -> list[np.ndarray]:
        """Projected Gaussian bumps, normalized to unit ``||.||``."""
        rng = np.random.default_rng(self.config.seed + 7919)
        grid, p = self.grid, self.params.p
        coords = grid.coordinates()
        reach = _inner_radius(grid)
        bank: list[np.ndarray] = []
        tries = 0
        while len(bank) < self.config.test_bank and tries < 20 * self.config.test_bank:
            tries += 1
            c = rng.uniform(-0.6, 0.6, size=grid.dim) * reach
            w = reach * rng.uniform(0.15, 0.35)
            bump = np.exp(-sum((x - ci) ** 2 for x, ci in zip(coords, c)) / (2 * w * w))
            e = self.project(bump)
            norm = p_energy_array(e, grid.spacing, p) ** (1.0 / p)
            if norm > 1e-8 * p_energy_array(np.where(self.interior, bump, 0.0), grid.spacing, p) ** (1.0 / p):
                bank.append(e / norm)
        if not bank:
            raise DegenerateInitializationError("the projection annihilates every test bump")
        return bank


def _inner_radius(grid: Grid) -> float:
    if grid.mask.kind == "ball":
        return min(grid.mask.radius, grid.half_extent)
    return grid.half_extent


@dataclass(frozen=True)
class Iterate:
    """``u = t P v`` together with its energy report and gradient."""

    u: np.ndarray
    v: np.ndarray
    report: EnergyReport
    grad: np.ndarray
    direction: np.ndarray
    dnorm2: float


@dataclass(frozen=True)
class StepInfo:
    alpha: float
    halvings: int
    stagnated: bool


def _make_iterate(ops: DescentOperators, v: np.ndarray, pv: np.ndarray | None = None) -> Iterate:
    pv = ops.project(v) if pv is None else pv
    gp, crit = ops.norms(pv)
    t = nehari_factor(gp, crit, ops.params)
    u, v = t * pv, t * v
    rep, grad = ops.gradient(u)
    d = ops.adjoint(grad)
    rep = replace(rep, dual_residual=ops.dual_residual(grad))
    return Iterate(u, v, rep, grad, d, float(np.vdot(d, d)) * ops.grid.cell_volume)


def _seed(config: SolveConfig, rng: np.random.Generator) -> np.ndarray:
    grid = config.grid
    coords = grid.coordinates()
    if config.init == "projected-bubble":
        bp = BubbleParams(config.problem.N, config.problem.p, config.init_eps,
                          tuple(config.center))
        vals = bubble_on_coords(bp, coords)
    else:
        reach = _inner_radius(grid)
        vals = np.zeros(grid.shape)
        for _ in range(6):
            c = rng.uniform(-0.5, 0.5, size=grid.dim) * reach
            w = reach * rng.uniform(0.15, 0.3)
            vals = vals + rng.normal() * np.exp(
                -sum((x - ci) ** 2 for x, ci in zip(coords, c)) / (2 * w * w))
    return np.where(grid.interior, np.broadcast_to(vals, grid.shape), 0.0)


def start(config: SolveConfig, ops: DescentOperators | None = None) -> Iterate:
    """Initial iterate: Nehari-scaled projection of the configured seed."""
    ops = ops or DescentOperators(config)
    rng = np.random.default_rng(config.seed)
    for attempt in range(10):
        seed = _seed(config, rng)
        pv = ops.project(seed)
        scale = float(np.max(np.abs(seed)))
        if scale > 0 and float(np.max(np.abs(pv))) > 1e-10 * scale:
            return _make_iterate(ops, seed, pv)
        if config.init == "projected-bubble":
            break
    raise DegenerateInitializationError(
        "the equivariant projection annihilates the initial seed; place the bubble "
        "center off the fixed-point subspace or use init = 'random-smooth'")


def initialize(config: SolveConfig) -> Field:
    """Nehari-scaled, equivariantly projected seed field."""
    it = start(config)
    return Field(config.grid, it.u)


def step(it: Iterate, ops: DescentOperators, alpha: float) -> tuple[Iterate, StepInfo]:
    """One Armijo-backtracked step from ``it`` with initial trial ``alpha``.

    Accepts the first trial with ``J(u+) <= J(u) - c1 alpha ||d||^2``; after
    :data:`MAX_HALVINGS` failed halvings ``it`` is returned unchanged and the
    step is flagged as stagnated.
    """
    cfg = ops.config
    J0 = it.report.J
    if it.dnorm2 == 0.0:
        return it, StepInfo(0.0, 0, True)
    for k in range(MAX_HALVINGS + 1):
        v_try = it.v - alpha * it.direction
        pv = ops.project(v_try)
        gp, crit = ops.norms(pv)
        if gp > 0 and crit > 0:
            t = nehari_factor(gp, crit, ops.params)
            J_try = (t ** cfg.problem.p * gp) / cfg.problem.N
            if J_try <= J0 - cfg.c1 * alpha * it.dnorm2:
                return _make_iterate(ops, v_try, pv), StepInfo(alpha, k, False)
        alpha *= cfg.beta
    return it, StepInfo(alpha, MAX_HALVINGS, True)


def _bb_step(prev: Iterate, cur: Iterate, alpha: float, fallback: float, k: int) -> float:
    """Barzilai-Borwein trial step, alternating the long and short formulas."""
    s = -alpha * prev.direction
    y = cur.direction - prev.direction
    sy = float(np.vdot(s, y))
    if sy <= 0:
        return 2.0 * fallback
    if k % 2:
        return float(np.vdot(s, s)) / sy
    return sy / float(np.vdot(y, y))


@dataclass(frozen=True)
class SolveResult:
    """Outcome of :func:`solve`; ``field`` is the final iterate ``W``."""

    field: Field
    trace: tuple[EnergyReport, ...]
    iterations: int
    termination: str
    sign_change: tuple[float, float]
    equivariance_defect: float
    near_zero_fraction: float
    steps: tuple[float, ...] = ()
    diagnostics: tuple = ()

    @property
    def converged(self) -> bool:
        return self.termination == "converged"

    @property
    def energy(self) -> float:
        return self.trace[-1].J

    @property
    def changes_sign(self) -> bool:
        lo, hi = self.sign_change
        tol = 1e-8 * max(abs(lo), abs(hi), 1e-300)
        return lo < -tol and hi > tol

    def summary(self) -> dict:
        last = self.trace[-1]
        return {
            "termination": self.termination,
            "iterations": self.iterations,
            "J": last.J,
            "grad_norm_p": last.grad_norm_p,
            "crit_norm": last.crit_norm,
            "relative_defect": last.relative_defect,
            "dual_residual": last.dual_residual,
            "min": self.sign_change[0],
            "max": self.sign_change[1],
            "equivariance_defect": self.equivariance_defect,
            "near_zero_fraction": self.near_zero_fraction,
        }


def _converged_once(prev: EnergyReport, cur: EnergyReport, dual0: float,
                    cfg: SolveConfig) -> bool:
    drop = (prev.J - cur.J) / abs(cur.J) if cur.J else 0.0
    return (cur.relative_defect <= cfg.tol_defect
            and drop <= cfg.tol_energy
            and cur.dual_residual <= cfg.tol_residual * dual0)


def near_zero_fraction(u: np.ndarray, grid: Grid, rel: float = 1e-3) -> float:
    """Share of interior nodes where ``|u| <= rel * max|u|``."""
    inside = grid.interior
    peak = float(np.max(np.abs(u)))
    if peak == 0:
        return 1.0
    return float(np.count_nonzero((np.abs(u) <= rel * peak) & inside)) / max(int(inside.sum()), 1)


def solve(config: SolveConfig, ops: DescentOperators | None = None,
          callback=None) -> SolveResult:
    """Iterate :func:`step` until convergence, stagnation or ``max_iters``.

    Convergence needs the defect, energy-decrease and dual-residual tests to
    hold on two consecutive iterates.  Never raises for non-convergence.
    ``callback(k, iterate)`` is invoked after every accepted step.
    """
    ops = ops or DescentOperators(config)
    it = start(config, ops)
    trace = [it.report]
    alphas: list[float] = []
    diags: list = []
    dual0 = it.report.dual_residual
    alpha = config.first_step
    termination = "max_iters"
    streak = 0
    k = 0
    while k < config.max_iters:
        new, info = step(it, ops, alpha)
        if info.stagnated:
            termination = "stagnation"
            break
        k += 1
        alphas.append(info.alpha)
        trace.append(new.report)
        alpha = min(_bb_step(it, new, info.alpha, info.alpha, k), 1e6 * config.first_step)
        streak = streak + 1 if _converged_once(it.report, new.report, dual0, config) else 0
        it = new
        if callback is not None:
            callback(k, it)
        if config.diagnostics_every and k % config.diagnostics_every == 0:
            diags.append(_diagnose(config, it, k))
        if streak >= 2:
            termination = "converged"
            break
    return _result(config, it, trace, k, termination, alphas, diags)


def _diagnose(config: SolveConfig, it: Iterate, k: int) -> dict:
    from .diagnostics import profile_record

    rec = profile_record(Field(config.grid, it.u), config.problem, config.symmetry)
    out = rec.to_dict(include_field=False)
    out["iteration"] = k
    return out


def _result(config: SolveConfig, it: Iterate, trace, k, termination, alphas, diags) -> SolveResult:
    W = Field(config.grid, it.u)
    defect = 0.0 if config.symmetry is None else equivariance_defect(W, config.symmetry)
    return SolveResult(
        field=W,
        trace=tuple(trace),
        iterations=k,
        termination=termination,
        sign_change=(float(it.u.min()), float(it.u.max())),
        equivariance_defect=float(defect),
        near_zero_fraction=near_zero_fraction(it.u, config.grid),
        steps=tuple(alphas),
        diagnostics=tuple(diags),
    )


@dataclass(frozen=True)
class PSReport:
    """Palais-Smale style summary of an energy trace."""

    monotone: bool
    violations: tuple[int, ...]
    energy_plateau: bool
    dual_ratio: float | None
    dual_decreasing: bool
    ps_like: bool

    def to_dict(self) -> dict:
        return {
            "monotone": self.monotone,
            "violations": list(self.violations),
            "energy_plateau": self.energy_plateau,
            "dual_ratio": self.dual_ratio,
            "dual_decreasing": self.dual_decreasing,
            "ps_like": self.ps_like,
        }


def ps_diagnostics(trace: Sequence[EnergyReport], rtol: float = 1e-12,
                   plateau: float = 1e-6) -> PSReport:
    """Monotonicity of ``J`` and the trend of the dual residual.

    ``violations`` lists steps where ``J`` rose by more than ``rtol``
    relative.  The energy plateaus when the relative change over the last
    half of the trace is at most ``plateau``; ``ps_like`` is set when it
    plateaus while the dual residual decreases.
    """
    if len(trace) < 2:
        raise ParameterError("ps_diagnostics needs at least two trace entries")
    J = np.array([r.J for r in trace])
    scale = np.maximum(np.abs(J[:-1]), 1e-300)
    bad = np.nonzero(J[1:] - J[:-1] > rtol * scale)[0] + 1
    half = J[len(J) // 2:]
    ref = max(abs(half[-1]), 1e-300)
    is_plateau = bool((half.max() - half.min()) / ref <= plateau)
    duals = [r.dual_residual for r in trace if r.dual_residual is not None]
    ratio, decreasing = None, False
    if len(duals) >= 2 and duals[0] > 0:
        ratio = duals[-1] / duals[0]
        decreasing = ratio < 1.0
    return PSReport(bad.size == 0, tuple(int(i) for i in bad), is_plateau, ratio,
                    decreasing, bool(is_plateau and decreasing))


class NehariDescent(BaseEstimator):
    """Estimator front end for :func:`solve`.

    ``fit(grid)`` runs the descent on the given grid and stores
    ``solution_`` (the final field), ``result_`` and ``energy_trace_``.
    With ``j=None`` no symmetry is imposed.

    Examples
    --------
    >>> from pnehari import Grid, DomainMask, NehariDescent
    >>> grid = Grid(4, 9, 2.0, DomainMask.ball(2.0))
    >>> est = NehariDescent(p=2.0, j=1, max_iters=3).fit(grid)
    >>> est.result_.iterations
    3
    """

    def __init__(self, p: float = 2.0, j: int | None = 1, samples_per_circle: int = 8,
                 lambda_samples: int = 8, init: str = "projected-bubble",
                 init_center=None, init_eps: float = 0.5, seed: int = 0,
                 alpha0: float | None = None, beta: float = 0.5, c1: float = 1e-4,
                 tol_defect: float = 1e-6, tol_residual: float = 1e-3,
                 tol_energy: float = 1e-8, max_iters: int = 2000, test_bank: int = 16):
        self.p = p
        self.j = j
        self.samples_per_circle = samples_per_circle
        self.lambda_samples = lambda_samples
        self.init = init
        self.init_center = init_center
        self.init_eps = init_eps
        self.seed = seed
        self.alpha0 = alpha0
        self.beta = beta
        self.c1 = c1
        self.tol_defect = tol_defect
        self.tol_residual = tol_residual
        self.tol_energy = tol_energy
        self.max_iters = max_iters
        self.test_bank = test_bank

    def make_config(self, grid: Grid) -> SolveConfig:
        sym = None
        if self.j is not None:
            sym = SymmetryConfig(grid.dim, self.j, self.samples_per_circle,
                                 self.lambda_samples, self.seed)
        center = None if self.init_center is None else tuple(self.init_center)
        return SolveConfig(ProblemParams(grid.dim, self.p), grid, sym, self.init, center,
                           self.init_eps, self.seed, self.alpha0, self.beta, self.c1,
                           self.tol_defect, self.tol_residual, self.tol_energy,
                           self.max_iters, self.test_bank)

    def fit(self, X, y=None):
        grid = X.grid if isinstance(X, Field) else X
        if not isinstance(grid, Grid):
            raise ConfigurationError("fit expects a Grid or a Field")
        self.config_ = self.make_config(grid)
        self.result_ = solve(self.config_)
        self.solution_ = self.result_.field
        self.energy_trace_ = list(self.result_.trace)
        return self

    def score(self, X=None, y=None) -> float:
        """Negative final energy, so that higher is better."""
        check_is_fitted(self, "result_")
        return -self.result_.energy
