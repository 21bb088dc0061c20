"""Independent reference computations used by the tests.

Nothing here imports the lattice kernels: radial integrals use adaptive
1-D quadrature of the closed-form profile, window sums are brute force,
and the Laplacian stencil is written out by hand.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.integrate import quad


def sphere_area(N: int) -> float:
    """Surface area of the unit sphere in ``R^N``."""
    return 2.0 * math.pi ** (N / 2) / math.gamma(N / 2)


def a_closed(N: int, p: float) -> float:
    return (N * ((N - p) / (p - 1.0)) ** (p - 1.0)) ** ((N - p) / p ** 2)


def profile(r, N: int, p: float, eps: float = 1.0):
    a = a_closed(N, p)
    s = np.asarray(r) / eps
    return eps ** (-(N - p) / p) * a * (1.0 + s ** (p / (p - 1.0))) ** (-(N - p) / p)


def profile_slope(r, N: int, p: float, eps: float = 1.0):
    """``|U'(r)|`` of the dilated profile."""
    a = a_closed(N, p)
    q = p / (p - 1.0)
    s = np.asarray(r) / eps
    return (eps ** (-(N - p) / p - 1.0) * a * (N - p) / (p - 1.0)
            * (1.0 + s ** q) ** (-(N - p) / p - 1.0) * s ** (q - 1.0))


def radial_integral(f, N: int, R: float) -> float:
    """``∫_{|x|<R} f(|x|) dx`` by adaptive quadrature."""
    val, _ = quad(lambda r: f(r) * r ** (N - 1), 0.0, R, limit=400, epsabs=1e-13, epsrel=1e-12)
    return sphere_area(N) * val


def bubble_norms(N: int, p: float, R: float, eps: float = 1.0) -> tuple[float, float]:
    """``(∫|∇U|^p, ∫U^{p*})`` over the ball of radius ``R``."""
    ps = N * p / (N - p)
    gp = radial_integral(lambda r: profile_slope(r, N, p, eps) ** p, N, R)
    crit = radial_integral(lambda r: profile(r, N, p, eps) ** ps, N, R)
    return gp, crit


def decay_scan(N: int, p: float, r_max: float, samples: int = 200001) -> float:
    """``sup_r a (1 + r^{(N-p)/(p-1)}) / (1 + r^{p/(p-1)})^{(N-p)/p}`` on ``[0, r_max]``."""
    r = np.linspace(0.0, r_max, samples)
    return float(np.max(profile(r, N, p) * (1.0 + r ** ((N - p) / (p - 1.0)))))


def five_point_laplacian(a: np.ndarray, h: float) -> np.ndarray:
    """Standard ``2N+1`` stencil on interior nodes (edges left at 0)."""
    out = np.zeros_like(a)
    inner = tuple(slice(1, -1) for _ in range(a.ndim))
    acc = -2.0 * a.ndim * a[inner]
    for k in range(a.ndim):
        up = tuple(slice(2, None) if i == k else slice(1, -1) for i in range(a.ndim))
        dn = tuple(slice(None, -2) if i == k else slice(1, -1) for i in range(a.ndim))
        acc = acc + a[up] + a[dn]
    out[inner] = acc / h ** 2
    return out


def brute_window_max(values: np.ndarray, axis: np.ndarray, eps: float, q: float,
                     cell_volume: float) -> tuple[float, np.ndarray]:
    """Max over lattice centers of the mass in the closed ball, by direct loops."""
    dens = np.abs(values) ** q * cell_volume
    pts = np.stack(np.meshgrid(*([axis] * values.ndim), indexing="ij"), axis=-1).reshape(-1, values.ndim)
    flat = dens.ravel()
    nz = flat > 0
    best, arg = -1.0, None
    for c in pts:
        d2 = ((pts[nz] - c) ** 2).sum(axis=1)
        s = float(flat[nz][d2 <= eps * eps * (1 + 1e-12)].sum())
        if s > best:
            best, arg = s, c
    return best, arg


def signed_circle_average(f, x0: np.ndarray, samples: int = 4096) -> float:
    """Signed average over ``(e^{iθ}, ρ e^{iθ})`` of ``f`` at ``x0`` in ``C^2``."""
    acc = 0.0
    for k in range(samples):
        t = 2 * math.pi * k / samples
        c, s = math.cos(t), math.sin(t)
        z = np.array([c * x0[0] - s * x0[1], s * x0[0] + c * x0[1],
                      c * x0[2] - s * x0[3], s * x0[2] + c * x0[3]])
        rz = np.array([-z[2], z[3], z[0], -z[1]])
        acc += f(z) - f(rz)
    return acc / (2 * samples)
