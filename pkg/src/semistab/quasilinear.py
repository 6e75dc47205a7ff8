"""Dissipative quasilinear testbed ``z' = A z + f(z)`` on (0, pi).

States are vectors of coefficients in the orthonormal Dirichlet sine
basis ``sqrt(2/pi) sin(n x)``, ``n = 1..N``, so Euclidean norms are L2
norms and ``A = diag(-n^2)``.  The nonlinearity is the smooth rank-one map
``f(z) = eps * tanh(<z, w>) * v`` whose derivative
``Df(z) h = eps * sech^2(<z, w>) <h, w> v`` is bounded by ``eps`` and
Lipschitz with constant ``eps * 4/(3 sqrt 3)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .core import fit_loglog_slope
from .integrators import ETDRK4, step_count

# max_s |d/ds sech^2(s)|, attained at tanh(s) = 1/sqrt(3)
SECH2_SLOPE_MAX = 4.0 / (3.0 * np.sqrt(3.0))


def _unit(n_modes: int, k: int = 1) -> np.ndarray:
    e = np.zeros(n_modes)
    e[k - 1] = 1.0
    return e


@dataclass(frozen=True)
class QuasilinearTestbed:
    n_modes: int = 16
    coupling: float = 0.5
    w: np.ndarray = field(default=None)
    v: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.n_modes < 1:
            raise ValueError("n_modes must be >= 1")
        if self.coupling < 0:
            raise ValueError("coupling must be non-negative")
        for name in ("w", "v"):
            vec = getattr(self, name)
            vec = _unit(self.n_modes) if vec is None else np.asarray(vec, dtype=np.float64)
            if vec.shape != (self.n_modes,):
                raise ValueError(f"{name} must have shape ({self.n_modes},)")
            norm = np.linalg.norm(vec)
            if norm == 0:
                raise ValueError(f"{name} must be nonzero")
            vec = vec / norm
            vec.setflags(write=False)
            object.__setattr__(self, name, vec)

    @property
    def symbols(self) -> np.ndarray:
        n = np.arange(1, self.n_modes + 1, dtype=np.float64)
        return -(n**2)

    def apply_A(self, z):
        return self.symbols * z

    def f(self, z):
        return self.coupling * np.tanh(np.dot(z, self.w)) * self.v


def testbed_rhs(tb: QuasilinearTestbed, z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    return tb.apply_A(z) + tb.f(z)


def df_apply(tb: QuasilinearTestbed, z_base, h) -> np.ndarray:
    """Frechet derivative of ``f`` at ``z_base`` applied to ``h``."""
    s = np.dot(z_base, tb.w)
    return tb.coupling / np.cosh(s) ** 2 * np.dot(h, tb.w) * tb.v


class GronwallConstants(NamedTuple):
    K: float
    M: float
    L: float


def gronwall_constants(tb: QuasilinearTestbed, z_center, r: float) -> GronwallConstants:
    """Derivative bound ``K`` on the ball of radius ``r`` about ``z_center``,
    the derivative norm ``M`` at the center and the Lipschitz constant ``L``
    of the derivative.  For this nonlinearity ``K`` and ``L`` are global."""
    if not r > 0:
        raise ValueError("r must be positive")
    eps = tb.coupling
    M = eps / np.cosh(np.dot(z_center, tb.w)) ** 2
    return GronwallConstants(K=float(eps), M=float(M), L=float(eps * SECH2_SLOPE_MAX))


def k_of_tf(K: float, M: float, L: float, t_f: float) -> float:
    """Remainder constant ``L/(2(K-M)) (e^{2K t_f} - e^{2M t_f})``.

    The ``K = M`` limit ``L t_f e^{2K t_f}`` is used when ``|K - M| < 1e-12``.
    """
    if min(K, M, L) < 0:
        raise ValueError("K, M and L must be non-negative")
    if not t_f > 0:
        raise ValueError("t_f must be positive")
    if abs(K - M) < 1e-12:
        return float(L * t_f * np.exp(2 * K * t_f))
    return float(L / (2 * (K - M)) * (np.exp(2 * K * t_f) - np.exp(2 * M * t_f)))


def _scheme(tb: QuasilinearTestbed, dt: float) -> ETDRK4:
    n = tb.n_modes
    eps, w, v = tb.coupling, tb.w, tb.v

    def nonlinear(u):
        z, psi = u[:n], u[n:]
        s = np.dot(z, w)
        out = np.empty_like(u)
        out[:n] = eps * np.tanh(s) * v
        out[n:] = eps / np.cosh(s) ** 2 * np.dot(psi, w) * v
        return out

    return ETDRK4(np.concatenate([tb.symbols, tb.symbols]), nonlinear, dt)


def simulate_with_tangent(tb: QuasilinearTestbed, z0, psi0, t_final: float, dt: float = 1e-3):
    """Integrate ``z' = Az + f(z)`` together with ``psi' = A psi + Df(z) psi``.

    Returns ``(times, z, psi)`` sampled at every step.  The tangent stages
    are the exact derivatives of the nonlinear stages, so ``psi`` is the
    derivative of the discrete flow.
    """
    n_steps, dt = step_count(t_final, dt)
    u0 = np.concatenate([np.asarray(z0, dtype=np.float64), np.asarray(psi0, dtype=np.float64)])
    steps, samples = _scheme(tb, dt).integrate(u0, n_steps)
    u = np.array(samples)
    return steps * dt, u[:, : tb.n_modes], u[:, tb.n_modes:]


def simulate(tb: QuasilinearTestbed, z0, t_final: float, dt: float = 1e-3):
    times, z, _ = simulate_with_tangent(tb, z0, np.zeros(tb.n_modes), t_final, dt)
    return times, z


@dataclass(frozen=True)
class RemainderBoundReport:
    scales: np.ndarray
    max_remainder: np.ndarray
    remainder_bounds: np.ndarray
    bound_holds: np.ndarray
    max_separation_ratio: np.ndarray
    separation_holds: np.ndarray
    K: float
    M: float
    L: float
    k: float
    t_final: float
    fitted_order: float

    @property
    def all_bounds_hold(self) -> bool:
        return bool(np.all(self.bound_holds) and np.all(self.separation_holds))

    def to_dict(self) -> dict:
        return {
            "t_final": self.t_final,
            "K": self.K,
            "M": self.M,
            "L": self.L,
            "k": self.k,
            "fitted_order": self.fitted_order,
            "all_bounds_hold": self.all_bounds_hold,
            "scales": self.scales.tolist(),
            "max_remainder": self.max_remainder.tolist(),
            "remainder_bounds": self.remainder_bounds.tolist(),
            "bound_holds": [bool(b) for b in self.bound_holds],
            "max_separation_ratio": self.max_separation_ratio.tolist(),
            "separation_holds": [bool(b) for b in self.separation_holds],
        }


def default_direction(n_modes: int) -> np.ndarray:
    h = 1.0 / np.arange(1, n_modes + 1)
    return h / np.linalg.norm(h)


def _separation_scheme(tb: QuasilinearTestbed, dt: float) -> ETDRK4:
    # blocks: base z, separation d = y - z, tangent psi
    n = tb.n_modes
    eps, w, v = tb.coupling, tb.w, tb.v

    def nonlinear(u):
        z, d, psi = u[:n], u[n:2 * n], u[2 * n:]
        s = np.dot(z, w)
        out = np.empty_like(u)
        out[:n] = eps * np.tanh(s) * v
        out[n:2 * n] = eps * (np.tanh(s + np.dot(d, w)) - np.tanh(s)) * v
        out[2 * n:] = eps / np.cosh(s) ** 2 * np.dot(psi, w) * v
        return out

    return ETDRK4(np.tile(tb.symbols, 3), nonlinear, dt)


def verify_remainder_bound(tb: QuasilinearTestbed, z0, scales: Sequence[float], t_f: float,
                           direction=None, dt: float = 1e-3) -> RemainderBoundReport:
    """Check ``||phi(t)|| <= k(t_f) ||h0||^2`` and ``||y(t)-z(t)||^2 <= ||h0||^2 e^{2Kt}``.

    ``phi = y - z - psi`` where ``z`` starts at ``z0``, ``y`` at
    ``z0 + s*h`` and ``psi`` solves the linearized equation along ``z``
    from ``h0 = s*h``.  The separation ``y - z`` is integrated directly rather
    than formed by subtraction.  Every integrator step in ``[0, t_f]`` is
    checked.  ``M`` is the largest ``||Df(z(t))||`` met along the base
    trajectory, so it bounds the derivative on the whole interval.
    """
    scales = np.asarray(scales, dtype=np.float64)
    if scales.size == 0 or np.any(scales <= 0) or np.any(np.diff(scales) >= 0):
        raise ValueError("scales must be positive and strictly decreasing")
    z0 = np.asarray(z0, dtype=np.float64)
    h = default_direction(tb.n_modes) if direction is None else np.asarray(direction, dtype=np.float64)
    h = h / np.linalg.norm(h)
    n = tb.n_modes

    n_steps, step = step_count(t_f, dt)
    scheme = _separation_scheme(tb, step)
    K, _, L = gronwall_constants(tb, z0, 1.0)

    runs = []
    for s in scales:
        steps, samples = scheme.integrate(np.concatenate([z0, s * h, s * h]), n_steps)
        runs.append(np.array(samples))
    times = steps * step
    proj = runs[0][:, :n] @ tb.w
    M = float(np.max(tb.coupling / np.cosh(proj) ** 2))
    k = k_of_tf(K, M, L, t_f)

    max_rem, bounds, holds, sep_ratio, sep_holds = [], [], [], [], []
    growth = np.exp(2 * K * times)
    for s, u in zip(scales, runs):
        sep = u[:, n:2 * n]
        phi_norm = np.linalg.norm(sep - u[:, 2 * n:], axis=1)
        sep_sq = np.sum(sep**2, axis=1)
        bound = k * sep_sq[0]
        max_rem.append(float(phi_norm.max()))
        bounds.append(bound)
        holds.append(bool(np.all(phi_norm <= bound)))
        sep_bound = sep_sq[0] * growth
        sep_ratio.append(float(np.max(sep_sq / sep_bound)))
        sep_holds.append(bool(np.all(sep_sq <= sep_bound)))

    return RemainderBoundReport(
        scales=scales,
        max_remainder=np.array(max_rem),
        remainder_bounds=np.array(bounds),
        bound_holds=np.array(holds),
        max_separation_ratio=np.array(sep_ratio),
        separation_holds=np.array(sep_holds),
        K=float(K), M=M, L=float(L), k=float(k), t_final=float(t_f),
        fitted_order=fit_loglog_slope(scales, max_rem),
    )
