"""Sampled checks of linearized stability for a flow and its derivative.

All checks work on a :class:`FlowPair`: a nonlinear flow ``S(t)``, the
candidate derivative flow ``T(t)`` about a reference equilibrium, and a
seeded generator of perturbation directions.  The results are evidence
summaries and carry every raw ratio and fit they were built from.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from . import ks, quasilinear, zwart
from .core import (
    FrechetReport,
    SequenceState,
    SpectralField,
    StabilityClass,
    StabilityVerdict,
    State,
    Trajectory,
    fit_loglog_slope,
    l2_norm,
    state_axpy,
    state_scale,
    state_sub,
)
from .integrators import StepUnstable

# Exceptions a flow may raise to signal that the orbit left the model's domain.
FLOW_FAILURES = (zwart.BlowUp, StepUnstable, FloatingPointError, OverflowError)

# Ratios at or below this count as an exact zero remainder.
EXACT_REMAINDER = 1e-12


@dataclass(frozen=True)
class FlowPair:
    """``nonlinear_flow(z, t) = S(t) z``; ``linear_flow(h, t) = T(t) h``.

    ``random_direction(rng)`` draws a perturbation direction;
    ``special_perturbations(delta)`` may list model-specific perturbations
    of size ``delta`` (for instance nearby equilibria) that every probe
    ensemble should include.
    """

    nonlinear_flow: Callable[[State, float], State]
    linear_flow: Callable[[State, float], State]
    reference: State
    random_direction: Callable[[np.random.Generator], State] | None = None
    special_perturbations: Callable[[float], list] | None = None
    name: str = ""

    def direction(self, rng: np.random.Generator) -> State:
        if self.random_direction is None:
            raise ValueError(f"flow pair {self.name!r} has no direction sampler")
        return self.random_direction(rng)

    def nonlinear_orbit(self, z0: State, times: Sequence[float]):
        """States ``S(t) z0`` on ascending ``times``, built by composing
        the flow over successive increments."""
        out, z, t_prev = [], z0, 0.0
        for t in times:
            z = self.nonlinear_flow(z, t - t_prev) if t > t_prev else z
            out.append(z)
            t_prev = t
        return out


def _map(func, items, max_workers: int):
    if max_workers <= 1:
        return [func(x) for x in items]
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(func, items))


# --------------------------------------------------------------------------
# Frechet remainder scan


def frechet_ratio_scan(pair: FlowPair, direction: State, scales: Sequence[float], t: float,
                       max_workers: int = 1) -> FrechetReport:
    """Remainders ``S(t)(z+s h) - S(t) z - T(t)(s h)`` over decreasing ``s``.

    The fitted order is the log-log slope of ``||remainder||`` against
    ``s``; 2 means a quadratic remainder.  A flow failure at one scale is
    recorded and the scan continues.
    """
    h_norm = l2_norm(direction)
    if h_norm == 0:
        raise ValueError("direction must be nonzero")
    if not t > 0:
        raise ValueError("t must be positive")
    scales = np.asarray(scales, dtype=np.float64)
    z_ref = pair.reference
    base = pair.nonlinear_flow(z_ref, t)

    def one(s):
        step = state_scale(s, direction)
        try:
            moved = pair.nonlinear_flow(state_axpy(1.0, step, z_ref), t)
        except FLOW_FAILURES as exc:
            return math.nan, f"{type(exc).__name__}: {exc}"
        rem = state_sub(state_sub(moved, base), pair.linear_flow(step, t))
        return l2_norm(rem), None

    results = _map(one, scales, max_workers)
    remainders = np.array([r for r, _ in results])
    failures = [(float(s), msg) for s, (_, msg) in zip(scales, results) if msg]
    ratios = remainders / (scales * h_norm)
    if np.all(np.isfinite(ratios)) and np.max(ratios) <= EXACT_REMAINDER:
        order = math.inf
    else:
        order = fit_loglog_slope(scales, remainders)
    return FrechetReport(scales, remainders, ratios, order, float(t), failures)


def remainder_vanishes(report: FrechetReport, min_order: float = 1.5) -> bool:
    if report.failures:
        return False
    if np.max(report.ratios) <= EXACT_REMAINDER:
        return True
    return report.ratios_decreasing() and report.fitted_order >= min_order


# --------------------------------------------------------------------------
# Growth constants and contraction


class GrowthConstants(NamedTuple):
    M: float
    gamma: float
    inconclusive: bool = False


def estimate_growth_constants(traj: Trajectory, t_min: float | None = None,
                              t_max: float | None = None) -> GrowthConstants:
    """Fit ``||z(t) - z_e|| <= M e^{-gamma t} ||z_0 - z_e||``.

    ``gamma`` is minus the least-squares slope of ``log norm`` against
    ``t`` over ``[t_min, t_max]`` (default: the whole trajectory).  ``M``
    is the smallest constant making the bound hold at every sample, with
    ``||z_0 - z_e||`` the first norm of the trajectory, clamped to at least 1.
    """
    times, norms = traj.times, traj.norms
    window = np.ones(times.size, dtype=bool)
    if t_min is not None:
        window &= times >= t_min
    if t_max is not None:
        window &= times <= t_max
    if window.sum() < 2 or np.any(norms[window] <= 0) or not norms[0] > 0:
        return GrowthConstants(1.0, math.nan, True)
    slope = np.polyfit(times[window], np.log(norms[window]), 1)[0]
    gamma = float(-slope)
    keep = times <= (t_max if t_max is not None else times[-1])
    M = float(np.max(norms[keep] * np.exp(gamma * times[keep])) / norms[0])
    return GrowthConstants(max(M, 1.0), gamma, False)


def contraction_time(M: float, gamma: float) -> float:
    """Horizon ``ln(4M)/gamma`` after which the linear flow contracts by 1/4."""
    if M < 1:
        raise ValueError("M must be >= 1")
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    return math.log(4.0 * M) / gamma


@dataclass(frozen=True)
class HalfContractionReport:
    t_bar: float
    deltas: np.ndarray
    max_ratio: np.ndarray
    passed: np.ndarray
    n_probes: np.ndarray
    failures: tuple
    linear_factor: float

    @property
    def largest_passing_delta(self) -> float | None:
        ok = self.deltas[self.passed]
        return float(ok.max()) if ok.size else None

    def passes_at_or_below(self, delta: float) -> bool:
        sel = self.deltas <= delta
        return bool(sel.any() and np.all(self.passed[sel]))

    def to_dict(self) -> dict:
        return {
            "t_bar": self.t_bar,
            "deltas": self.deltas.tolist(),
            "max_ratio": self.max_ratio.tolist(),
            "passed": [bool(p) for p in self.passed],
            "n_probes": self.n_probes.tolist(),
            "largest_passing_delta": self.largest_passing_delta,
            "linear_factor": self.linear_factor,
            "failures": [list(f) for f in self.failures],
        }


def verify_half_contraction(pair: FlowPair, t_bar: float, deltas: Sequence[float], *, seed: int,
                            samples: int = 20, perturbations=None,
                            max_workers: int = 1) -> HalfContractionReport:
    """Probe ``||S(t_bar) z0 - z_e|| <= ||z0 - z_e|| / 2`` with ``||z0 - z_e|| = delta``.

    ``samples`` directions are drawn once from ``pair.random_direction``
    with ``seed`` and reused for every delta; ``perturbations(delta, rng)``
    replaces them when given.  The pair's special perturbations are always
    added.  ``linear_factor`` is the largest ``||T(t_bar) d|| / ||d||`` over
    the random directions.
    """
    if not t_bar > 0:
        raise ValueError("t_bar must be positive")
    deltas = np.asarray(deltas, dtype=np.float64)
    if deltas.size == 0 or np.any(deltas <= 0) or np.any(np.diff(deltas) >= 0):
        raise ValueError("deltas must be positive and strictly decreasing")
    rng = np.random.default_rng(seed)
    directions = [pair.direction(rng) for _ in range(samples)] if perturbations is None else []

    linear_factor = math.nan
    if directions:
        linear_factor = max(l2_norm(pair.linear_flow(d, t_bar)) / l2_norm(d) for d in directions)

    tasks = []
    for delta in deltas:
        probes = [state_scale(delta / l2_norm(d), d) for d in directions]
        if perturbations is not None:
            p = perturbations(float(delta), rng)
            probes.append(state_scale(delta / l2_norm(p), p))
        if pair.special_perturbations is not None:
            probes.extend(pair.special_perturbations(float(delta)))
        tasks.extend((float(delta), p) for p in probes)

    def one(task):
        delta, p = task
        try:
            z = pair.nonlinear_flow(state_axpy(1.0, p, pair.reference), t_bar)
        except FLOW_FAILURES as exc:
            return math.inf, f"{type(exc).__name__}: {exc}"
        return l2_norm(state_sub(z, pair.reference)) / l2_norm(p), None

    results = _map(one, tasks, max_workers)
    max_ratio, passed, counts, failures = [], [], [], []
    for delta in deltas:
        mine = [r for (d, _), r in zip(tasks, results) if d == delta]
        ratios = [r for r, _ in mine]
        failures.extend((float(delta), msg) for _, msg in mine if msg)
        worst = max(ratios) if ratios else math.nan
        max_ratio.append(worst)
        passed.append(bool(ratios) and worst <= 0.5)
        counts.append(len(ratios))
    return HalfContractionReport(float(t_bar), deltas, np.array(max_ratio), np.array(passed, dtype=bool),
                                 np.array(counts), tuple(failures), float(linear_factor))


# --------------------------------------------------------------------------
# Classification


@dataclass(frozen=True)
class ProbeConfig:
    """Probe ladder for :func:`classify`.

    ``horizons`` should double from one entry to the next; the gamma
    estimates over ``[0, T]`` along that ladder separate uniform
    exponential decay from decay whose rate drifts to zero.
    """

    seed: int
    deltas: tuple = (1e-2, 1e-3, 1e-4)
    samples: int = 8
    horizons: tuple = (20.0, 40.0, 80.0)
    n_times: int = 201
    fit_start: float = 0.0
    asymptotic_threshold: float = 1e-3
    decay_tol: float = 0.1
    scales: tuple = (1e-1, 1e-2, 1e-3, 1e-4)
    frechet_time: float = 1.0
    min_order: float = 1.5
    escape_radius: float = 1e-2
    escape_horizon: float = 80.0
    escape_checks: int = 40
    escape_samples: int = 2
    max_workers: int = 1

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError("samples must be >= 1")
        if len(self.horizons) < 2 or any(b <= a for a, b in zip(self.horizons, self.horizons[1:])):
            raise ValueError("horizons must be an increasing ladder of at least two entries")


def _linear_envelope(pair: FlowPair, directions, horizon: float, n_times: int) -> Trajectory:
    times = np.linspace(0.0, horizon, n_times)
    ratios = np.array([[l2_norm(pair.linear_flow(d, t)) / l2_norm(d) for t in times] for d in directions])
    env = ratios.max(axis=0)
    return Trajectory(times, [None] * times.size, env)


def _linear_probe(pair: FlowPair, probes: ProbeConfig, rng):
    directions = [pair.direction(rng) for _ in range(probes.samples)]
    gammas, fits = [], []
    final_ratio = math.nan
    for T in probes.horizons:
        env = _linear_envelope(pair, directions, T, probes.n_times)
        fit = estimate_growth_constants(env, t_min=min(probes.fit_start, 0.5 * T))
        fits.append(fit)
        gammas.append(fit.gamma)
        final_ratio = float(env.norms[-1])
    thr = probes.asymptotic_threshold
    g_first, g_last = gammas[0], gammas[-1]
    if any(f.inconclusive for f in fits):
        # exact zero norm: the linear flow annihilates every probe
        cls = StabilityClass.INCONCLUSIVE
    elif g_last > thr and g_last >= 0.5 * g_first:
        cls = StabilityClass.EXPONENTIALLY_STABLE
    elif g_last < -thr:
        cls = StabilityClass.UNSTABLE
    elif (g_last < thr and final_ratio < probes.decay_tol
          and all(b <= a for a, b in zip(gammas, gammas[1:]))):
        cls = StabilityClass.ASYMPTOTICALLY_STABLE_ONLY
    else:
        cls = StabilityClass.INCONCLUSIVE
    info = {
        "horizons": list(probes.horizons),
        "gamma_by_horizon": gammas,
        "M_by_horizon": [f.M for f in fits],
        "final_norm_ratio": final_ratio,
    }
    return cls, fits[-1], info


def _escape_probe(pair: FlowPair, probes: ProbeConfig, rng):
    times = np.linspace(0.0, probes.escape_horizon, probes.escape_checks + 1)[1:]
    directions = [pair.direction(rng) for _ in range(probes.escape_samples)]
    escaped = []
    for delta in probes.deltas:
        hit = None
        for d in directions:
            z = state_axpy(delta / l2_norm(d), d, pair.reference)
            t_prev = 0.0
            try:
                for t in times:
                    z = pair.nonlinear_flow(z, t - t_prev)
                    t_prev = t
                    if l2_norm(state_sub(z, pair.reference)) > probes.escape_radius:
                        hit = float(t)
                        break
            except FLOW_FAILURES:
                hit = float(t_prev)
            if hit is not None:
                break
        escaped.append(hit)
    return escaped


def classify(pair: FlowPair, probes: ProbeConfig) -> StabilityVerdict:
    """Classify the reference equilibrium from sampled evidence.

    * ExponentiallyStable: the linear envelope decays at a rate that stays
      positive along the horizon ladder, the Frechet remainder vanishes and
      the nonlinear flow halves small perturbations at ``ln(4M)/gamma``.
    * Unstable: the linear flow grows and, for every delta, some nonlinear
      probe started at distance delta leaves the escape ball.
    * AsymptoticallyStableOnly: linear norms decay but the rate estimate
      falls below the threshold as the horizon doubles, and no nonlinear
      probe failed to contract.  A failing probe in that situation gives
      Inconclusive with the counterexample flag, since linear decay that
      is not exponential says nothing about the nonlinear flow.
    """
    rng = np.random.default_rng(probes.seed)
    linear_class, fit, linear_info = _linear_probe(pair, probes, rng)
    details = {"linear": linear_info}
    M = fit.M if not fit.inconclusive else 1.0
    gamma = fit.gamma if not fit.inconclusive else math.nan

    if linear_class is StabilityClass.EXPONENTIALLY_STABLE:
        t_bar = contraction_time(M, gamma)
        scan = frechet_ratio_scan(pair, pair.direction(rng), probes.scales, probes.frechet_time,
                                  probes.max_workers)
        half = verify_half_contraction(pair, t_bar, probes.deltas, seed=probes.seed + 1,
                                       samples=probes.samples, max_workers=probes.max_workers)
        details.update(frechet=scan.to_dict(), half_contraction=half.to_dict())
        vanishing = remainder_vanishes(scan, probes.min_order)
        contracting = half.largest_passing_delta is not None and half.passes_at_or_below(
            half.largest_passing_delta)
        evidence = (f"linear gamma={gamma:.6g}, M={M:.6g}; t_bar={t_bar:.6g}; "
                    f"frechet order={scan.fitted_order:.4g} ({'vanishing' if vanishing else 'not vanishing'}); "
                    f"half-contraction largest passing delta={half.largest_passing_delta}")
        if vanishing and contracting:
            return StabilityVerdict(StabilityClass.EXPONENTIALLY_STABLE, M, gamma, math.log(2.0) / t_bar,
                                    evidence, linear_class, False, details)
        return StabilityVerdict(StabilityClass.INCONCLUSIVE, M, gamma, math.nan, evidence, linear_class,
                                False, details)

    if linear_class is StabilityClass.UNSTABLE:
        escaped = _escape_probe(pair, probes, rng)
        details["escape"] = {"radius": probes.escape_radius, "horizon": probes.escape_horizon,
                             "deltas": list(probes.deltas), "escape_time": escaped}
        all_escaped = all(t is not None for t in escaped)
        evidence = (f"linear gamma={gamma:.6g} (growth); escape from radius {probes.escape_radius:g} "
                    f"for {sum(t is not None for t in escaped)}/{len(escaped)} deltas")
        verdict = StabilityClass.UNSTABLE if all_escaped else StabilityClass.INCONCLUSIVE
        return StabilityVerdict(verdict, M, gamma, math.nan, evidence, linear_class, False, details)

    if linear_class is StabilityClass.ASYMPTOTICALLY_STABLE_ONLY:
        horizon = probes.horizons[-1]
        half = verify_half_contraction(pair, horizon, probes.deltas, seed=probes.seed + 1,
                                       samples=probes.samples, max_workers=probes.max_workers)
        details["half_contraction"] = half.to_dict()
        failed = not bool(np.all(half.passed))
        evidence = (f"linear decay rate drifts to {gamma:.3g} as the horizon doubles (heuristic "
                    f"asymptotic-only test); nonlinear half-contraction at t={horizon:g} "
                    f"{'fails' if failed else 'passes'} for deltas {list(probes.deltas)}")
        verdict = StabilityClass.INCONCLUSIVE if failed else StabilityClass.ASYMPTOTICALLY_STABLE_ONLY
        return StabilityVerdict(verdict, M, gamma, math.nan, evidence, linear_class, failed, details)

    evidence = f"linear gamma ladder {linear_info['gamma_by_horizon']} shows neither uniform decay nor growth"
    return StabilityVerdict(StabilityClass.INCONCLUSIVE, M, gamma, math.nan, evidence, linear_class, False,
                            details)


# --------------------------------------------------------------------------
# Flow pairs for the bundled models


def ks_pair(model: ks.KsModel, z_e: float = 0.0) -> FlowPair:
    """KS flow about the constant ``z_e``; directions are zero-mean, so the
    conserved mean stays at ``z_e``."""
    n = model.n_modes
    weights = 1.0 / np.arange(1, n + 1) ** 2

    def direction(rng):
        c = np.zeros(n + 1, dtype=np.complex128)
        c[1:] = weights * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
        return SpectralField(c)

    return FlowPair(
        nonlinear_flow=lambda z, t: ks.flow(model, z, t),
        linear_flow=lambda h, t: ks.linearized_flow(model, z_e, h, t),
        reference=SpectralField.constant(z_e, n),
        random_direction=direction,
        name=f"ks(nu={model.nu:g}, z_e={z_e:g})",
    )


def zwart_pair(support: int = 10_000, counterexamples: bool = True) -> FlowPair:
    """Zwart flow about zero.

    Random directions have ``d_n ~ N(0,1)/n`` on ``n <= support``; scaled to
    the probe deltas used here they stay below ``1/n`` coordinate-wise, away
    from the blow-up region.  With ``counterexamples`` every probe set also
    contains the equilibrium ``{n: 1/n}`` with ``n = ceil(1/delta)``.
    """
    idx = np.arange(1, support + 1)

    def direction(rng):
        return SequenceState.from_arrays(idx, rng.standard_normal(support) / idx)

    def special(delta):
        return [zwart.counterexample_state(math.ceil(1.0 / delta - 1e-12))]

    return FlowPair(
        nonlinear_flow=zwart.exact_solution,
        linear_flow=zwart.linear_solution,
        reference=SequenceState(),
        random_direction=direction,
        special_perturbations=special if counterexamples else None,
        name="zwart",
    )


def quasilinear_pair(tb: quasilinear.QuasilinearTestbed, z0=None, dt: float = 1e-3) -> FlowPair:
    """Testbed flow about ``z0`` with the tangent flow along ``S(t) z0``."""
    n = tb.n_modes
    z0 = np.zeros(n) if z0 is None else np.asarray(z0, dtype=np.float64)

    def nonlinear(z, t):
        if t == 0:
            return np.asarray(z, dtype=np.float64)
        return quasilinear.simulate(tb, z, t, dt)[1][-1]

    def linear(h, t):
        if t == 0:
            return np.asarray(h, dtype=np.float64)
        return quasilinear.simulate_with_tangent(tb, z0, h, t, dt)[2][-1]

    return FlowPair(
        nonlinear_flow=nonlinear,
        linear_flow=linear,
        reference=z0,
        random_direction=lambda rng: rng.standard_normal(n) / np.arange(1, n + 1),
        name=f"quasilinear(eps={tb.coupling:g})",
    )


def linear_pair(flow: Callable[[State, float], State], reference: State,
                random_direction=None, name: str = "linear") -> FlowPair:
    """A linear flow paired with itself (its own derivative)."""
    return FlowPair(flow, flow, reference, random_direction, None, name)
