"""The groups ``G_j = Γ^j × Λ_j`` and their sign homomorphisms.

Coordinates are split as ``R^N = (C^2)^j × R^{N-4j}``; block ``b`` holds
``ζ1 = x[4b] + i x[4b+1]`` and ``ζ2 = x[4b+2] + i x[4b+3]``.  ``Γ`` is
generated by the diagonal circle ``e^{iθ}(ζ1, ζ2) = (e^{iθ}ζ1, e^{iθ}ζ2)``
and ``ρ(ζ1, ζ2) = (-conj ζ2, conj ζ1)``; every element has the normal form
``ρ^f e^{iθ}`` with ``f ∈ {0, 1}``, and the relations ``ρ e^{iθ} = e^{-iθ} ρ``,
``ρ² = e^{iπ}`` make composition exact.  ``Λ_j`` is ``O(N-4j)`` for ``j < n``
and trivial for ``j = n``.  The sign of an element is ``(-1)^{Σ f_b}``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.stats import ortho_group
from sklearn.base import BaseEstimator, TransformerMixin

from .exceptions import (
    ConfigurationError,
    NoSeparationError,
    PreconditionError,
)
from .grid import Field, Grid, interpolate_array
from .validation import check_field, check_is_fitted

__all__ = [
    "SymmetryConfig",
    "GroupElement",
    "act",
    "sign",
    "haar_sample",
    "random_element",
    "EquivariantProjector",
    "equivariant_project",
    "project_reference",
    "equivariance_defect",
    "fixed_subspace",
    "check_hypotheses",
    "HypothesisReport",
    "separate_orbit",
    "distinctness_witness",
    "DistinctnessWitness",
    "mask_violation",
]

TWO_PI = 2.0 * math.pi
# largest per-block operator (nonzeros) assembled explicitly by the projector
FUSE_NNZ = 4_000_000


@dataclass(frozen=True)
class SymmetryConfig:
    N: int
    j: int = 1
    samples_per_circle: int = 8
    lambda_samples: int = 8
    seed: int = 0

    def __post_init__(self):
        if self.N < 4:
            raise ConfigurationError(f"N must be >= 4, got {self.N}")
        n = self.N // 4
        if not (1 <= self.j and 4 * self.j <= self.N):
            raise ConfigurationError(
                f"need 1 <= j and 4j <= N (j <= n = {n}), got j = {self.j}, N = {self.N}")
        if self.samples_per_circle < 8:
            raise ConfigurationError("samples_per_circle must be >= 8")
        if self.lambda_samples < 1:
            raise ConfigurationError("lambda_samples must be >= 1")

    @property
    def n(self) -> int:
        return self.N // 4

    @property
    def m(self) -> int:
        return self.N % 4

    @property
    def lambda_dim(self) -> int:
        return self.N - 4 * self.j

    @property
    def lambda_trivial(self) -> bool:
        """``Λ_n = {1}``; ``Λ_j = O(N-4j)`` otherwise."""
        return self.j == self.n or self.lambda_dim == 0

    def to_dict(self) -> dict:
        return {"N": self.N, "j": self.j, "samples_per_circle": self.samples_per_circle,
                "lambda_samples": self.lambda_samples, "seed": self.seed}


def _rho_block(z: np.ndarray) -> np.ndarray:
    a0, a1, a2, a3 = z[..., 0], z[..., 1], z[..., 2], z[..., 3]
    return np.stack([-a2, a3, a0, -a1], axis=-1)


def _rotate_block(z: np.ndarray, theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    a0, a1, a2, a3 = z[..., 0], z[..., 1], z[..., 2], z[..., 3]
    return np.stack([c * a0 - s * a1, s * a0 + c * a1,
                     c * a2 - s * a3, s * a2 + c * a3], axis=-1)


@dataclass(frozen=True, eq=False)
class GroupElement:
    """``(ρ^{f_1} e^{iθ_1}, ..., ρ^{f_j} e^{iθ_j}, η)`` in normal form."""

    angles: tuple[float, ...]
    flags: tuple[int, ...]
    lam: np.ndarray | None = None

    def __post_init__(self):
        if len(self.angles) != len(self.flags):
            raise ConfigurationError("angles and flags must have equal length")
        object.__setattr__(self, "angles", tuple(float(t) % TWO_PI for t in self.angles))
        object.__setattr__(self, "flags", tuple(int(f) & 1 for f in self.flags))

    @classmethod
    def identity(cls, config: SymmetryConfig) -> "GroupElement":
        lam = None if config.lambda_trivial else np.eye(config.lambda_dim)
        return cls((0.0,) * config.j, (0,) * config.j, lam)

    @classmethod
    def rho(cls, config: SymmetryConfig, block: int = 0) -> "GroupElement":
        flags = tuple(int(b == block) for b in range(config.j))
        lam = None if config.lambda_trivial else np.eye(config.lambda_dim)
        return cls((0.0,) * config.j, flags, lam)

    @property
    def sign(self) -> int:
        return -1 if sum(self.flags) % 2 else 1

    def __matmul__(self, other: "GroupElement") -> "GroupElement":
        """Composition ``(self ∘ other)(x) = self(other(x))``."""
        angles, flags = [], []
        for t1, f1, t2, f2 in zip(self.angles, self.flags, other.angles, other.flags):
            if f2 == 0:
                t, f = t1 + t2, f1
            else:
                t, f = t2 - t1, f1 + 1
            if f == 2:
                t, f = t + math.pi, 0
            angles.append(t)
            flags.append(f)
        if self.lam is None:
            lam = other.lam
        elif other.lam is None:
            lam = self.lam
        else:
            lam = self.lam @ other.lam
        return GroupElement(tuple(angles), tuple(flags), lam)


def act(g: GroupElement, x: np.ndarray) -> np.ndarray:
    """Apply ``g`` to one point ``(N,)`` or a batch ``(M, N)``."""
    x = np.asarray(x, dtype=float)
    N = x.shape[-1]
    j = len(g.angles)
    if 4 * j > N:
        raise ConfigurationError(f"point of dimension {N} cannot host {j} blocks")
    tail = N - 4 * j
    if g.lam is not None and g.lam.shape != (tail, tail):
        raise ConfigurationError("dimension mismatch between point and Λ part")
    out = np.empty_like(x)
    for b, (theta, f) in enumerate(zip(g.angles, g.flags)):
        z = _rotate_block(x[..., 4 * b:4 * b + 4], theta)
        out[..., 4 * b:4 * b + 4] = _rho_block(z) if f else z
    if tail:
        y = x[..., 4 * j:]
        out[..., 4 * j:] = y if g.lam is None else y @ g.lam.T
    return out


def sign(g: GroupElement) -> int:
    return g.sign


def _lambda_matrices(config: SymmetryConfig) -> list[np.ndarray]:
    if config.lambda_trivial:
        return []
    rng = np.random.default_rng(config.seed)
    mats = ortho_group.rvs(config.lambda_dim, size=config.lambda_samples, random_state=rng)
    return list(np.asarray(mats).reshape(config.lambda_samples, config.lambda_dim, config.lambda_dim))


def haar_sample(config: SymmetryConfig) -> list[tuple[GroupElement, float]]:
    """Tensor quadrature of the Haar measure with uniform weights.

    Per block: ``M`` equispaced angles times both ρ-cosets; times
    ``lambda_samples`` Haar-random orthogonal matrices when ``Λ`` is not
    trivial.
    """
    M = config.samples_per_circle
    per_block = [(2.0 * math.pi * k / M, f) for k in range(M) for f in (0, 1)]
    lams = _lambda_matrices(config) or [None]
    total = (2 * M) ** config.j * len(lams)
    out = []
    for combo in itertools.product(per_block, repeat=config.j):
        angles = tuple(c[0] for c in combo)
        flags = tuple(c[1] for c in combo)
        for lam in lams:
            out.append((GroupElement(angles, flags, lam), 1.0 / total))
    return out


def random_element(config: SymmetryConfig, rng: np.random.Generator) -> GroupElement:
    """Draw one element from the exact Haar measure."""
    angles = tuple(rng.uniform(0.0, TWO_PI, size=config.j))
    flags = tuple(int(f) for f in rng.integers(0, 2, size=config.j))
    lam = None
    if not config.lambda_trivial:
        lam = ortho_group.rvs(config.lambda_dim, random_state=rng)
    return GroupElement(angles, flags, lam)


# ---------------------------------------------------------------------------
# lattice operators


def _signed_permutation_apply(values: np.ndarray, axes: Sequence[int],
                              perm: Sequence[int], signs: Sequence[int]) -> np.ndarray:
    """Nodal data of ``v ∘ Q`` for a signed permutation on ``axes``.

    ``Q`` sends coordinate ``perm[r]`` to slot ``r`` with factor ``signs[r]``,
    i.e. ``(Qx)_{axes[r]} = signs[r] * x_{axes[perm[r]]}``.
    """
    order = list(range(values.ndim))
    for r, c in enumerate(perm):
        order[axes[c]] = axes[r]
    out = np.transpose(values, order)
    flips = tuple(axes[perm[r]] for r in range(len(axes)) if signs[r] < 0)
    if flips:
        out = np.flip(out, axis=flips)
    return out


# ρ(a0, a1, a2, a3) = (-a2, a3, a0, -a1) and its inverse ρ^3 = (a2, -a3, -a0, a1)
_RHO = ((2, 3, 0, 1), (-1, 1, 1, -1))
_RHO_INV = ((2, 3, 0, 1), (1, -1, -1, 1))


def _interp_matrix(points: np.ndarray, axis: np.ndarray) -> sp.csr_matrix:
    """Sparse multilinear interpolation from a tensor lattice to ``points``."""
    n = axis.size
    h = axis[1] - axis[0]
    L = -axis[0]
    npts, d = points.shape
    t = (points + L) / h
    inside = np.all((t >= -1e-9) & (t <= n - 1 + 1e-9), axis=1)
    base = np.clip(np.floor(t).astype(np.intp), 0, n - 2)
    frac = np.clip(t - base, 0.0, 1.0)
    strides = n ** np.arange(d - 1, -1, -1)
    rows, cols, data = [], [], []
    for corner in itertools.product((0, 1), repeat=d):
        w = np.ones(npts)
        col = np.zeros(npts, dtype=np.intp)
        for k, c in enumerate(corner):
            w = w * (frac[:, k] if c else 1.0 - frac[:, k])
            col += (base[:, k] + c) * strides[k]
        keep = inside & (w > 1e-15)
        rows.append(np.nonzero(keep)[0])
        cols.append(col[keep])
        data.append(w[keep])
    mat = sp.csr_matrix((np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
                        shape=(npts, n ** d))
    mat.sum_duplicates()
    return mat


def _antisymmetrizer(n: int) -> sp.csr_matrix:
    """``(I - S) / 2`` on one flattened ``C^2`` block, ``S`` the nodal action of ``ρ``."""
    size = n ** 4
    src = _signed_permutation_apply(np.arange(size).reshape((n,) * 4), range(4), *_RHO).ravel()
    S = sp.csr_matrix((np.ones(size), (np.arange(size), src)), shape=(size, size))
    return ((sp.identity(size, format="csr") - S) * 0.5).tocsr()


def _lattice_points(axis: np.ndarray, d: int) -> np.ndarray:
    mesh = np.meshgrid(*([axis] * d), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def _apply_on_axes(values: np.ndarray, axes: Sequence[int], mat: sp.spmatrix) -> np.ndarray:
    """Contract ``mat`` against the flattened sub-lattice spanned by ``axes``."""
    moved = np.moveaxis(values, list(axes), list(range(len(axes))))
    shp = moved.shape
    flat = moved.reshape(mat.shape[1], -1)
    res = (mat @ flat).reshape(shp)
    return np.moveaxis(res, list(range(len(axes))), list(axes))


def mask_violation(grid: Grid, config: SymmetryConfig, samples: int = 64) -> float:
    """Largest depth by which an image ``g x`` of an interior node leaves the mask.

    Images within one lattice cell diagonal of the mask are tolerated.
    """
    rng = np.random.default_rng(config.seed + 7)
    interior = np.argwhere(grid.interior)
    if interior.size == 0:
        return 0.0
    pick = interior if len(interior) <= 4096 else interior[rng.choice(len(interior), 4096, replace=False)]
    pts = grid.axis[pick]
    elements = [random_element(config, rng) for _ in range(samples)]
    elements.append(GroupElement.rho(config, 0))
    worst = 0.0
    for g in elements:
        img = act(g, pts)
        sd = grid.mask.signed_distance([img[:, k] for k in range(grid.dim)], grid.half_extent)
        worst = max(worst, float(np.max(-sd)))
    return max(worst - grid.spacing * math.sqrt(grid.dim), 0.0)


class EquivariantProjector(TransformerMixin, BaseEstimator):
    """Signed Haar average ``ũ(x) = Σ_g w_g sign(g) u(g x)`` on a lattice.

    Fitting on a :class:`~pnehari.grid.Grid` (or a field on it) assembles the
    per-block operators: the exact signed permutation for ``ρ``, one sparse
    bilinear rotation matrix per sampled angle acting on each complex plane,
    and sparse multilinear maps for the ``Λ`` samples.  The averaged operator
    factorizes over blocks because the sampled measure is a product measure.

    Parameters
    ----------
    j : int
        Number of ``C^2`` blocks.
    samples_per_circle : int
        Equispaced angles per circle factor.
    lambda_samples : int
        Random orthogonal matrices for ``Λ_j`` when it is not trivial.
    seed : int
        Seed for the ``Λ`` samples.
    """

    def __init__(self, j: int = 1, samples_per_circle: int = 8, lambda_samples: int = 8,
                 seed: int = 0):
        self.j = j
        self.samples_per_circle = samples_per_circle
        self.lambda_samples = lambda_samples
        self.seed = seed

    @classmethod
    def from_config(cls, config: SymmetryConfig) -> "EquivariantProjector":
        return cls(config.j, config.samples_per_circle, config.lambda_samples, config.seed)

    def symmetry_config(self, N: int) -> SymmetryConfig:
        return SymmetryConfig(N, self.j, self.samples_per_circle, self.lambda_samples, self.seed)

    def fit(self, X, y=None):
        grid = X.grid if isinstance(X, Field) else X
        if not isinstance(grid, Grid):
            raise ConfigurationError("fit expects a Grid or a Field")
        config = self.symmetry_config(grid.dim)
        depth = mask_violation(grid, config)
        if depth > 0:
            raise ConfigurationError(
                f"mask {grid.mask.kind!r} is not invariant under G_{config.j} "
                f"(images leave it by {depth:.3g})")
        M = config.samples_per_circle
        plane = _lattice_points(grid.axis, 2)
        rot = []
        for k in range(M):
            theta = TWO_PI * k / M
            c, s = math.cos(theta), math.sin(theta)
            img = np.stack([c * plane[:, 0] - s * plane[:, 1], s * plane[:, 0] + c * plane[:, 1]], axis=1)
            rot.append(_interp_matrix(img, grid.axis).tocsr())
        self.rotations_ = rot
        self.rotations_T_ = [m.T.tocsr() for m in rot]
        self.block_ = None
        if 16 * M * grid.nodes_per_axis ** 4 <= FUSE_NNZ:
            # small lattices: one sparse operator per block for ρ and all angles
            circle = sum(sp.kron(m, m, format="csr") for m in rot) / M
            self.block_ = (circle @ _antisymmetrizer(grid.nodes_per_axis)).tocsr()
            self.block_T_ = self.block_.T.tocsr()
        self.lambda_mean_ = None
        if not config.lambda_trivial:
            pts = _lattice_points(grid.axis, config.lambda_dim)
            mats = [_interp_matrix(pts @ Q.T, grid.axis) for Q in _lambda_matrices(config)]
            self.lambda_mean_ = (sum(mats) / len(mats)).tocsr()
            self.lambda_mean_T_ = self.lambda_mean_.T.tocsr()
        self.grid_ = grid
        self.config_ = config
        return self

    def _average(self, values: np.ndarray, adjoint: bool) -> np.ndarray:
        cfg = self.config_
        rots = self.rotations_T_ if adjoint else self.rotations_
        lam = None
        if self.lambda_mean_ is not None:
            lam = self.lambda_mean_T_ if adjoint else self.lambda_mean_
        out = values
        if adjoint and lam is not None:
            out = _apply_on_axes(out, range(4 * cfg.j, cfg.N), lam)
        for b in range(cfg.j):
            ax = [4 * b + k for k in range(4)]
            pa, pb = ax[:2], ax[2:]
            if self.block_ is not None:
                out = _apply_on_axes(out, ax, self.block_T_ if adjoint else self.block_)
            elif adjoint:
                out = sum(_apply_on_axes(_apply_on_axes(out, pa, m), pb, m) for m in rots) / len(rots)
                out = 0.5 * (out - _signed_permutation_apply(out, ax, *_RHO_INV))
            else:
                out = 0.5 * (out - _signed_permutation_apply(out, ax, *_RHO))
                out = sum(_apply_on_axes(_apply_on_axes(out, pa, m), pb, m) for m in rots) / len(rots)
        if not adjoint and lam is not None:
            out = _apply_on_axes(out, range(4 * cfg.j, cfg.N), lam)
        return np.ascontiguousarray(out)

    def project_values(self, values: np.ndarray) -> np.ndarray:
        check_is_fitted(self, "grid_")
        out = self._average(values, adjoint=False)
        out[~self.grid_.interior] = 0.0
        return out

    def adjoint_values(self, values: np.ndarray) -> np.ndarray:
        """Transpose of :meth:`project_values` in the nodal inner product."""
        check_is_fitted(self, "grid_")
        vals = np.where(self.grid_.interior, values, 0.0)
        return self._average(vals, adjoint=True)

    def transform(self, X):
        check_is_fitted(self, "grid_")
        u = check_field(X, self.grid_)
        return Field(u.grid, self.project_values(u.values))

    def adjoint(self, X):
        check_is_fitted(self, "grid_")
        u = check_field(X, self.grid_)
        out = self.adjoint_values(u.values)
        out[~self.grid_.interior] = 0.0
        return Field(u.grid, out)


def equivariant_project(u: Field, config: SymmetryConfig) -> Field:
    """One-shot convenience wrapper around :class:`EquivariantProjector`."""
    if config.N != u.grid.dim:
        raise ConfigurationError("symmetry N does not match the grid dimension")
    return EquivariantProjector.from_config(config).fit(u.grid).transform(u)


def project_reference(u: Field, config: SymmetryConfig) -> Field:
    """Direct sum over :func:`haar_sample`; slow, used to cross-check the projector."""
    grid = u.grid
    pts = _lattice_points(grid.axis, grid.dim)
    inside = grid.interior.ravel()
    acc = np.zeros(pts.shape[0])
    sub = pts[inside]
    for g, w in haar_sample(config):
        acc[inside] += w * g.sign * interpolate_array(u.values, grid, act(g, sub))
    return Field(grid, acc.reshape(grid.shape))


def _probe_points(grid: Grid, probes: int, rng: np.random.Generator) -> np.ndarray:
    out = []
    need = probes
    while need > 0:
        cand = rng.uniform(-grid.half_extent, grid.half_extent, size=(4 * need + 16, grid.dim))
        ok = cand[grid.contains(cand)]
        out.append(ok[:need])
        need -= len(ok[:need])
    return np.concatenate(out)


def equivariance_defect(u: Field, config: SymmetryConfig, probes: int = 256,
                        seed: int = 12345) -> float:
    """``max |u(g x) - sign(g) u(x)|`` over random probes and exact-Haar draws."""
    if probes < 1:
        raise PreconditionError("probes must be >= 1")
    rng = np.random.default_rng(seed)
    x = _probe_points(u.grid, probes, rng)
    base = interpolate_array(u.values, u.grid, x)
    worst = 0.0
    for i in range(probes):
        g = random_element(config, rng)
        gx = act(g, x[i:i + 1])
        val = interpolate_array(u.values, u.grid, gx)[0]
        worst = max(worst, abs(val - g.sign * base[i]))
    return worst


def fixed_subspace(config: SymmetryConfig) -> np.ndarray:
    """Orthonormal basis (rows) of ``(R^N)^G``; shape ``(k, N)``."""
    if config.lambda_trivial and config.lambda_dim > 0:
        return np.eye(config.N)[4 * config.j:]
    return np.zeros((0, config.N))


def _project_fixed(x: np.ndarray, config: SymmetryConfig) -> np.ndarray:
    basis = fixed_subspace(config)
    return basis.T @ (basis @ x) if basis.size else np.zeros_like(x)


@dataclass
class HypothesisReport:
    s1: bool
    s2: bool
    s3: bool
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.s1 and self.s2 and self.s3

    def to_dict(self) -> dict:
        return {"S1": self.s1, "S2": self.s2, "S3": self.s3, "passed": self.passed,
                "details": self.details}


def stabilizer_witness(config: SymmetryConfig) -> np.ndarray:
    """Point with a unit ``ζ1`` in every block and zero ``Λ`` component."""
    xi = np.zeros(config.N)
    xi[0:4 * config.j:4] = 1.0
    return xi


def check_hypotheses(config: SymmetryConfig, trials: int = 32, seed: int = 0,
                     tol: float = 1e-9) -> HypothesisReport:
    """Sample-based certificate of (S1)-(S3) for ``G_j``."""
    if trials < 1:
        raise PreconditionError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    details: dict = {}

    g_neg = GroupElement.rho(config, 0)
    s2 = g_neg.sign == -1
    details["S2"] = {"witness": {"angles": list(g_neg.angles), "flags": list(g_neg.flags)},
                     "sign": g_neg.sign}

    xi = stabilizer_witness(config)
    sample = [g for g, _ in haar_sample(config)]
    sample += [random_element(config, rng) for _ in range(trials)]
    stab = [g for g in sample if np.linalg.norm(act(g, xi) - xi) < tol]
    bad = [g for g in stab if g.sign != 1]
    s3 = bool(stab) and not bad
    details["S3"] = {"xi": xi.tolist(), "stabilizer_size": len(stab), "negative_elements": len(bad)}
    if bad:
        details["S3"]["violating_witness"] = {"angles": list(bad[0].angles), "flags": list(bad[0].flags)}

    s1 = True
    diam_moving, diam_fixed = [], []
    orbit_elems = [random_element(config, rng) for _ in range(24)]
    basis = fixed_subspace(config)
    for _ in range(trials):
        x = rng.normal(size=config.N)
        orbit = np.stack([act(g, x) for g in orbit_elems])
        d = float(np.max(np.linalg.norm(orbit - orbit[0], axis=1)))
        diam_moving.append(d)
        if not d > tol:
            s1 = False
            details.setdefault("S1_violations", []).append(x.tolist())
        if basis.size:
            xf = basis.T @ rng.normal(size=basis.shape[0])
            orbit_f = np.stack([act(g, xf) for g in orbit_elems])
            df = float(np.max(np.linalg.norm(orbit_f - xf, axis=1)))
            diam_fixed.append(df)
            if df > 1e-9 * max(1.0, np.linalg.norm(xf)):
                s1 = False
                details.setdefault("S1_violations", []).append(xf.tolist())
    details["S1"] = {"min_orbit_diameter_moving": min(diam_moving),
                     "max_orbit_diameter_fixed": max(diam_fixed) if diam_fixed else None}
    return HypothesisReport(s1, s2, s3, details)


def _plane_rotation(y: np.ndarray, theta: float) -> np.ndarray:
    """Orthogonal matrix rotating by ``theta`` in the plane of ``y`` and a fixed normal."""
    d = y.size
    e1 = y / np.linalg.norm(y)
    trial = np.eye(d)[int(np.argmin(np.abs(e1)))]
    e2 = trial - (trial @ e1) * e1
    e2 /= np.linalg.norm(e2)
    c, s = math.cos(theta), math.sin(theta)
    return (np.eye(d) + (c - 1.0) * (np.outer(e1, e1) + np.outer(e2, e2))
            + s * (np.outer(e2, e1) - np.outer(e1, e2)))


def separate_orbit(x: np.ndarray, m: int, config: SymmetryConfig,
                   tol: float = 1e-12) -> tuple[list[GroupElement], float]:
    """``m`` group elements whose images of ``x`` are pairwise apart.

    Uses rotations by ``2πi/m`` in the first moving block, so the returned
    separation is ``2 |z| sin(π/m)`` where ``z`` is that block's component.
    """
    x = np.asarray(x, dtype=float)
    if m < 2:
        raise PreconditionError("m must be >= 2")
    lam_id = None if config.lambda_trivial else np.eye(config.lambda_dim)
    elements = None
    for b in range(config.j):
        if np.linalg.norm(x[4 * b:4 * b + 4]) > tol:
            elements = []
            for i in range(m):
                angles = tuple(TWO_PI * i / m if c == b else 0.0 for c in range(config.j))
                elements.append(GroupElement(angles, (0,) * config.j, lam_id))
            break
    if elements is None and not config.lambda_trivial:
        y = x[4 * config.j:]
        if np.linalg.norm(y) > tol:
            elements = [GroupElement((0.0,) * config.j, (0,) * config.j,
                                     _plane_rotation(y, TWO_PI * i / m)) for i in range(m)]
    if elements is None:
        raise NoSeparationError("x is a G-fixed point; its orbit is {x}")
    imgs = np.stack([act(g, x) for g in elements])
    dist = np.linalg.norm(imgs[:, None, :] - imgs[None, :, :], axis=-1)
    delta = float(np.min(dist[~np.eye(m, dtype=bool)]))
    return elements, delta


@dataclass
class DistinctnessWitness:
    distinct: bool
    point: np.ndarray | None
    base_point: np.ndarray | None
    certified_margin: float
    measured_margin: float
    tolerance: float

    def to_dict(self) -> dict:
        return {
            "distinct": self.distinct,
            "point": None if self.point is None else self.point.tolist(),
            "base_point": None if self.base_point is None else self.base_point.tolist(),
            "certified_margin": self.certified_margin,
            "measured_margin": self.measured_margin,
            "tolerance": self.tolerance,
        }


def distinctness_witness(u: Field, v: Field, i: int, j: int,
                         tol: float | None = None) -> DistinctnessWitness:
    """Point where a ``φ_i``- and a ``φ_j``-equivariant field must differ (``i < j``).

    At a node ``x`` with ``|u(x)| > tol`` put ``x' = ρ_j x`` (``ρ`` in block
    ``j``).  ``ρ_j`` lies in ``Λ_i``, so equivariance forces ``u(x') = u(x)``
    while ``v(x') = -v(x)``.  Hence either ``x`` or ``x'`` separates the two
    fields by at least ``|u(x)|``; that bound is the certified margin.  The
    measured margin reads the nodal data at the returned point.
    """
    if not i < j:
        raise PreconditionError("need i < j")
    if u.grid != v.grid:
        raise PreconditionError("fields live on different grids")
    if 4 * j > u.grid.dim:
        raise PreconditionError("symmetry index j exceeds N/4")
    if tol is None:
        tol = 1e-8 * max(u.max_abs(), v.max_abs(), 1e-300)
    a, b = u.values, v.values
    if u.max_abs() <= tol:
        raise PreconditionError("u vanishes within tolerance")
    ax = [4 * (j - 1) + k for k in range(4)]
    a_rho = _signed_permutation_apply(a, ax, *_RHO)
    b_rho = _signed_permutation_apply(b, ax, *_RHO)
    cert = np.maximum(np.abs(a - b), np.abs(a + b))
    cert = np.where(np.abs(a) > tol, cert, 0.0)
    idx = np.unravel_index(int(np.argmax(cert)), a.shape)
    certified = float(cert[idx])
    base = u.grid.axis[np.array(idx)]
    direct = abs(a[idx] - b[idx])
    mirrored = abs(a_rho[idx] - b_rho[idx])
    if direct > tol and direct >= mirrored:
        point, measured = base, float(direct)
    else:
        point = act(GroupElement.rho(SymmetryConfig(u.grid.dim, j, 8, 1), j - 1), base)
        measured = float(mirrored)
    return DistinctnessWitness(certified > tol, point, base, certified, measured, float(tol))
