"""Pseudospectral Kuramoto-Sivashinsky solver on (-pi, pi).

``z_t = A z + J(z)`` with ``A z = -nu z_xxxx - z_xx`` and
``J(z) = -z z_x``.  Fields are :class:`~semistab.core.SpectralField`
objects; quadratic products are evaluated on a grid of ``3(N+1)`` points,
which leaves the top third of the grid spectrum as padding (2/3 rule), so
products are exact for the retained modes ``|n| <= N``.

The mean ``c`` of a field is conserved, and ``-z z_x = -c w_x - w w_x`` for
the zero-mean part ``w``.  :func:`simulate` therefore folds the advection
by the mean into the exactly integrated linear part; the explicit part is
only the zero-mean self-interaction.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .core import SpectralField, Trajectory, l2_norm
from .integrators import ETDRK4, StepUnstable, step_count

__all__ = [
    "KsModel",
    "StepUnstable",
    "linear_symbol",
    "nonlinear_term",
    "gateaux_jacobian_apply",
    "linearized_generator_apply",
    "eigenvalues_at_constant",
    "simulate",
    "simulate_linearized",
    "dist_to_constants",
    "product",
]

OVERFLOW_GUARD = 1e8


@dataclass(frozen=True)
class KsModel:
    nu: float
    n_modes: int = 32
    dt: float = 0.01

    def __post_init__(self):
        if not self.nu > 0:
            raise ValueError("nu must be positive")
        if int(self.n_modes) != self.n_modes or self.n_modes < 4:
            raise ValueError("n_modes must be an integer >= 4")
        if not self.dt > 0:
            raise ValueError("dt must be positive")

    @property
    def wavenumbers(self) -> np.ndarray:
        return np.arange(self.n_modes + 1, dtype=np.float64)

    def symbols(self) -> np.ndarray:
        k = self.wavenumbers
        return -self.nu * k**4 + k**2


def linear_symbol(model: KsModel, n: int) -> float:
    """Fourier symbol ``-nu n^4 + n^2`` of ``A`` on ``e^{inx}``."""
    if abs(n) > model.n_modes:
        raise IndexError(f"mode {n} outside truncation {model.n_modes}")
    return float(-model.nu * n**4 + n**2)


def _product_coeffs(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    n = a.size - 1
    m = 3 * (n + 1)
    pa = np.zeros(m // 2 + 1, dtype=np.complex128)
    pb = np.zeros(m // 2 + 1, dtype=np.complex128)
    pa[: n + 1] = a
    pb[: n + 1] = b
    ua = np.fft.irfft(pa, n=m) * m
    ub = ua if a is b else np.fft.irfft(pb, n=m) * m
    return np.fft.rfft(ua * ub)[: n + 1] / m


def product(a: SpectralField, b: SpectralField) -> SpectralField:
    """Dealiased product ``a*b`` truncated to ``|n| <= N``."""
    if a.n_modes != b.n_modes:
        raise ValueError(f"truncation mismatch: {a.n_modes} vs {b.n_modes}")
    return SpectralField(_product_coeffs(a.coeffs, b.coeffs))


def nonlinear_term(z: SpectralField) -> SpectralField:
    """``J(z) = -z z_x = -(z^2)_x / 2``."""
    ik = 1j * np.arange(z.n_modes + 1)
    return SpectralField(-0.5 * ik * _product_coeffs(z.coeffs, z.coeffs))


def gateaux_jacobian_apply(z_base: SpectralField, v: SpectralField) -> SpectralField:
    """Directional derivative of ``J`` at ``z_base`` along ``v``: ``-(z_base v)_x``."""
    if z_base.n_modes != v.n_modes:
        raise ValueError(f"truncation mismatch: {z_base.n_modes} vs {v.n_modes}")
    ik = 1j * np.arange(v.n_modes + 1)
    return SpectralField(-ik * _product_coeffs(z_base.coeffs, v.coeffs))


def linearized_generator_apply(model: KsModel, z_base: SpectralField, v: SpectralField) -> SpectralField:
    """``A v - (z_base v)_x``, the generator of the linearized flow."""
    if v.n_modes != model.n_modes:
        raise ValueError("field truncation differs from the model")
    jv = gateaux_jacobian_apply(z_base, v)
    return SpectralField(model.symbols() * v.coeffs + jv.coeffs)


def eigenvalues_at_constant(model: KsModel, z_e: float, n_range: Iterable[int]) -> np.ndarray:
    """``lambda_n = n^2 (1 - nu n^2) - i n z_e`` for each ``n`` in ``n_range``."""
    n = np.asarray(list(n_range), dtype=np.float64)
    if n.size and np.max(np.abs(n)) > model.n_modes:
        raise IndexError("n_range exceeds the truncation")
    return n**2 * (1.0 - model.nu * n**2) - 1j * n * z_e


def dist_to_constants(z: SpectralField) -> float:
    """L2 distance to the nearest constant function, which is the mean."""
    c = z.coeffs
    return float(np.sqrt(2.0 * np.pi * 2.0 * np.sum(np.abs(c[1:]) ** 2)))


def _sample_every(sample_interval: float | None, dt: float, n_steps: int) -> int:
    if sample_interval is None:
        return n_steps
    return max(1, int(round(sample_interval / dt)))


def simulate(model: KsModel, z0: SpectralField, t_final: float, sample_interval: float | None = 0.1,
             reference: float | None = None, guard: float = OVERFLOW_GUARD) -> Trajectory:
    """Integrate the truncated KS equation with ETDRK4.

    ``reference`` is the constant equilibrium the recorded norms are
    measured against (default: the mean of ``z0``).  Raises
    :class:`StepUnstable` when a coefficient magnitude exceeds ``guard``.
    """
    if z0.n_modes != model.n_modes:
        raise ValueError("initial field truncation differs from the model")
    n_steps, dt = step_count(t_final, model.dt)
    mean = z0.mean
    k = model.wavenumbers
    ik = 1j * k

    def nonlinear(u):
        w = u.copy()
        w[0] = 0.0
        return -0.5 * ik * _product_coeffs(w, w)

    scheme = ETDRK4(model.symbols() - ik * mean, nonlinear, dt)
    every = _sample_every(sample_interval, dt, n_steps)
    steps, samples = scheme.integrate(z0.coeffs.copy(), n_steps, every, guard)
    states = [SpectralField(s) for s in samples]
    ref = SpectralField.constant(mean if reference is None else reference, model.n_modes)
    norms = [l2_norm(SpectralField(s.coeffs - ref.coeffs)) for s in states]
    return Trajectory(steps * dt, states, norms, [dist_to_constants(s) for s in states])


def simulate_linearized(model: KsModel, z_e: float, h0: SpectralField, t_final: float,
                        sample_interval: float | None = 0.1, times=None) -> Trajectory:
    """Exact flow of ``h' = A h - z_e h_x``: ``h_n(t) = e^{lambda_n t} h_n(0)``.

    Norms are those of the perturbation ``h`` itself.  ``times`` overrides
    the uniform sampling.
    """
    if h0.n_modes != model.n_modes:
        raise ValueError("perturbation truncation differs from the model")
    if times is None:
        if t_final <= 0:
            raise ValueError("t_final must be positive")
        if sample_interval is None:
            times = np.array([0.0, t_final])
        else:
            count = max(1, int(round(t_final / sample_interval)))
            times = np.linspace(0.0, t_final, count + 1)
    times = np.asarray(times, dtype=np.float64)
    lam = eigenvalues_at_constant(model, z_e, range(model.n_modes + 1))
    states = [SpectralField(np.exp(lam * t) * h0.coeffs) for t in times]
    return Trajectory(times, states, [l2_norm(s) for s in states], [dist_to_constants(s) for s in states])


def flow(model: KsModel, z0: SpectralField, t: float) -> SpectralField:
    """Endpoint of :func:`simulate` at time ``t`` (``t = 0`` returns ``z0``)."""
    if t == 0:
        return z0
    return simulate(model, z0, t, sample_interval=None).states[-1]


def linearized_flow(model: KsModel, z_e: float, h0: SpectralField, t: float) -> SpectralField:
    lam = eigenvalues_at_constant(model, z_e, range(model.n_modes + 1))
    return SpectralField(np.exp(lam * t) * h0.coeffs)
