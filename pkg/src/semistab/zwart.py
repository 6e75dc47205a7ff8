"""The l2 system ``z_n' = -z_n/n + z_n**2`` and its linearization at zero.

Every coordinate evolves independently and has a closed-form solution,
so all flows here are evaluated exactly rather than integrated.  The
zero equilibrium is approached at rate ``1/n`` by the n-th mode of the
linear flow, so the linear decay is not uniform in ``n``; the nonlinear
flow has the nearby equilibria ``{n: 1/n}``, arbitrarily close to zero.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import SequenceState, Trajectory, l2_norm

# |n*z0 - 1| below this is treated as the stationary value z0 = 1/n, so that
# the float nearest 1/n is not pushed off its equilibrium by rounding.
_STATIONARY_TOL = 4 * np.finfo(float).eps


class BlowUp(ArithmeticError):
    """Coordinate ``n`` of the exact solution diverges at ``t_star``."""

    def __init__(self, n: int, t_star: float):
        super().__init__(f"coordinate {n} blows up at t*={t_star:.17g}")
        self.n = n
        self.t_star = t_star


@dataclass(frozen=True)
class ZwartModel:
    """Marker for the fixed dynamics ``z_n' = -z_n/n + z_n**2``."""

    def rhs(self, z: SequenceState) -> SequenceState:
        n = z.indices.astype(np.float64)
        return SequenceState.from_arrays(z.indices, -z.values / n + z.values**2)


def blow_up_time(n: int, z0n: float) -> float:
    """Time at which coordinate ``n`` started at ``z0n`` diverges (inf if never)."""
    u = n * z0n
    if u <= 1.0 or abs(u - 1.0) <= _STATIONARY_TOL:
        return np.inf
    return float(-n * np.log1p(-1.0 / u))


def _check_blow_up(z0: SequenceState, t: float):
    u = z0.indices * z0.values
    risky = (u > 1.0) & (np.abs(u - 1.0) > _STATIONARY_TOL)
    for n, v in zip(z0.indices[risky], z0.values[risky]):
        t_star = blow_up_time(int(n), float(v))
        if t_star <= t:
            raise BlowUp(int(n), t_star)


def _coordinate_solution(n: np.ndarray, z0: np.ndarray, t: float) -> np.ndarray:
    # z0 e^{-t/n} / (n z0 (e^{-t/n} - 1) + 1), rewritten as
    # z0 / (u + (1 - u) e^{t/n}) with u = n z0 to avoid cancellation near u = 1.
    u = n * z0
    one_minus_u = 1.0 - u
    stationary = np.abs(one_minus_u) <= _STATIONARY_TOL
    with np.errstate(over="ignore", invalid="ignore"):
        growth = np.exp(t / n)
        denom = u + np.where(stationary, 0.0, one_minus_u) * growth
        out = np.where(stationary, z0, z0 / np.where(stationary, 1.0, denom))
    # exp overflow with 0 < u < 1 or u < 0: the coordinate has decayed to zero
    return np.where(np.isfinite(out), out, 0.0)


def exact_solution(z0: SequenceState, t: float) -> SequenceState:
    """Closed-form nonlinear flow; raises :class:`BlowUp` past a blow-up time."""
    if t < 0:
        raise ValueError("t must be non-negative")
    if t == 0 or len(z0) == 0:
        return z0
    _check_blow_up(z0, t)
    n = z0.indices.astype(np.float64)
    return SequenceState.from_arrays(z0.indices, _coordinate_solution(n, z0.values, t))


def linear_solution(z0: SequenceState, t: float) -> SequenceState:
    """Flow of ``z_n' = -z_n/n``."""
    if t < 0:
        raise ValueError("t must be non-negative")
    n = z0.indices.astype(np.float64)
    return SequenceState.from_arrays(z0.indices, z0.values * np.exp(-t / n))


def dist_to_equilibria(z: SequenceState) -> float:
    """Distance to ``E = {z : z_n in {0, 1/n}}``, chosen coordinate-wise."""
    n = z.indices.astype(np.float64)
    v = z.values
    return float(np.sqrt(np.sum(np.minimum(v**2, (v - 1.0 / n) ** 2))))


def counterexample_state(n: int) -> SequenceState:
    """The equilibrium ``{n: 1/n}``, at distance ``1/n`` from zero."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return SequenceState({n: 1.0 / n})


def orbit(z0: SequenceState, t_grid: Sequence[float], linear: bool = False) -> Trajectory:
    """Exact trajectory sampled on ``t_grid`` (each time evaluated directly)."""
    flow = linear_solution if linear else exact_solution
    t_grid = np.asarray(t_grid, dtype=np.float64)
    states = [flow(z0, float(t)) for t in t_grid]
    return Trajectory(
        t_grid,
        states,
        [l2_norm(s) for s in states],
        [dist_to_equilibria(s) for s in states],
    )


def counterexample_orbit(n: int, t_grid: Sequence[float]) -> Trajectory:
    t_grid = np.asarray(t_grid, dtype=np.float64)
    if t_grid.size == 0 or t_grid[0] < 0:
        raise ValueError("t_grid must be non-empty and start at t >= 0")
    return orbit(counterexample_state(n), t_grid)


def truncated_limit(z0: SequenceState, N: int) -> float:
    """``lim_{t->inf} ||z(t)||`` for the system truncated to ``n <= N``.

    Coordinates with ``|z0_n| < 1/n`` (or negative) decay to zero and
    stationary ones (``z0_n = 1/n``) keep their value.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    keep = z0.indices <= N
    n = z0.indices[keep]
    v = z0.values[keep]
    u = n * v
    stationary = np.abs(u - 1.0) <= _STATIONARY_TOL
    bad = (u > 1.0) & ~stationary
    if np.any(bad):
        k = int(np.argmax(bad))
        raise BlowUp(int(n[k]), blow_up_time(int(n[k]), float(v[k])))
    limits = np.where(stationary, v, 0.0)
    return float(np.sqrt(np.sum(limits**2)))
