"""Shared state types, norms and trajectory records.

Two concrete representations are used throughout the package:

* :class:`SequenceState` -- a finitely supported element of l2, indices >= 1.
* :class:`SpectralField` -- a real 2*pi-periodic field stored by its Fourier
  coefficients ``c_n`` for ``n = 0..N`` (the negative half is implied by
  Hermitian symmetry, ``c_{-n} = conj(c_n)``).

Quasilinear states are plain 1-D float arrays of orthonormal sine
coefficients; their norm is the Euclidean one.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Mapping, Sequence, Union

import numpy as np

TWO_PI = 2.0 * np.pi


class SequenceState:
    """Finitely supported real sequence ``z = (z_1, z_2, ...)``.

    Indices absent from the support are exactly zero.  Instances are
    immutable; arithmetic returns new objects.
    """

    __slots__ = ("_idx", "_val")

    def __init__(self, entries: Mapping[int, float] | None = None):
        entries = dict(entries or {})
        idx = np.array(sorted(entries), dtype=np.int64)
        val = np.array([float(entries[i]) for i in idx], dtype=np.float64)
        self._set(idx, val)

    @classmethod
    def from_arrays(cls, indices, values) -> "SequenceState":
        idx = np.asarray(indices, dtype=np.int64)
        val = np.asarray(values, dtype=np.float64)
        if idx.shape != val.shape or idx.ndim != 1:
            raise ValueError("indices and values must be 1-D arrays of equal length")
        order = np.argsort(idx, kind="stable")
        idx, val = idx[order], val[order]
        if idx.size > 1 and np.any(np.diff(idx) == 0):
            raise ValueError("duplicate indices")
        obj = cls.__new__(cls)
        obj._set(idx, val)
        return obj

    def _set(self, idx, val):
        if idx.size and idx[0] < 1:
            raise ValueError("sequence indices start at 1")
        if not np.all(np.isfinite(val)):
            raise ValueError("sequence values must be finite")
        idx.setflags(write=False)
        val.setflags(write=False)
        self._idx = idx
        self._val = val

    @property
    def indices(self) -> np.ndarray:
        return self._idx

    @property
    def values(self) -> np.ndarray:
        return self._val

    @property
    def entries(self) -> dict[int, float]:
        return {int(i): float(v) for i, v in zip(self._idx, self._val)}

    def __getitem__(self, n: int) -> float:
        pos = np.searchsorted(self._idx, n)
        if pos < self._idx.size and self._idx[pos] == n:
            return float(self._val[pos])
        return 0.0

    def __len__(self):
        return int(self._idx.size)

    def __eq__(self, other):
        if not isinstance(other, SequenceState):
            return NotImplemented
        return self.entries == other.entries

    __hash__ = None

    def __repr__(self):
        if len(self) > 6:
            return f"SequenceState(<{len(self)} entries, max index {self._idx[-1]}>)"
        return f"SequenceState({self.entries})"


class SpectralField:
    """Real periodic field on (-pi, pi), ``z(x) = sum_{|n|<=N} c_n e^{inx}``.

    ``coeffs[n]`` holds ``c_n`` for ``n = 0..N``.  The zero mode is forced
    real, so the represented field is real by construction.
    """

    __slots__ = ("_c",)

    def __init__(self, coeffs):
        c = np.array(coeffs, dtype=np.complex128)
        if c.ndim != 1 or c.size < 2:
            raise ValueError("coeffs must be a 1-D array with at least modes 0 and 1")
        if not np.all(np.isfinite(c)):
            raise ValueError("spectral coefficients must be finite")
        c[0] = c[0].real
        c.setflags(write=False)
        self._c = c

    @property
    def coeffs(self) -> np.ndarray:
        return self._c

    @property
    def n_modes(self) -> int:
        return self._c.size - 1

    def coefficient(self, n: int) -> complex:
        if abs(n) > self.n_modes:
            raise IndexError(f"mode {n} outside truncation {self.n_modes}")
        return complex(self._c[n]) if n >= 0 else complex(np.conj(self._c[-n]))

    @property
    def mean(self) -> float:
        return float(self._c[0].real)

    @classmethod
    def zeros(cls, n_modes: int) -> "SpectralField":
        return cls(np.zeros(n_modes + 1))

    @classmethod
    def constant(cls, value: float, n_modes: int) -> "SpectralField":
        c = np.zeros(n_modes + 1, dtype=np.complex128)
        c[0] = value
        return cls(c)

    @classmethod
    def cosine(cls, k: int, amplitude: float, n_modes: int, offset: float = 0.0) -> "SpectralField":
        """``offset + amplitude*cos(k x)``."""
        if not 1 <= k <= n_modes:
            raise ValueError(f"mode {k} outside 1..{n_modes}")
        c = np.zeros(n_modes + 1, dtype=np.complex128)
        c[0] = offset
        c[k] = 0.5 * amplitude
        return cls(c)

    @classmethod
    def from_function(cls, func: Callable[[np.ndarray], np.ndarray], n_modes: int) -> "SpectralField":
        m = 4 * (n_modes + 1)
        x = grid(m)
        c = np.fft.rfft(func(x)) / m
        return cls(c[: n_modes + 1])

    def to_physical(self, m: int | None = None) -> np.ndarray:
        """Samples on ``grid(m)``; ``m`` defaults to ``2N + 2``."""
        m = 2 * self.n_modes + 2 if m is None else m
        if m < 2 * self.n_modes + 1:
            raise ValueError("grid too coarse for the truncation")
        padded = np.zeros(m // 2 + 1, dtype=np.complex128)
        padded[: self.n_modes + 1] = self._c
        return np.fft.irfft(padded, n=m) * m

    def __eq__(self, other):
        if not isinstance(other, SpectralField):
            return NotImplemented
        return np.array_equal(self._c, other._c)

    __hash__ = None

    def __repr__(self):
        return f"SpectralField(n_modes={self.n_modes}, mean={self.mean:.6g})"


State = Union[SequenceState, SpectralField, np.ndarray]


def grid(m: int) -> np.ndarray:
    """Uniform periodic grid of ``m`` points covering one period."""
    return TWO_PI * np.arange(m) / m


def l2_norm(state: State) -> float:
    """l2 norm for sequences and sine vectors; L2(-pi, pi) norm for fields."""
    if isinstance(state, SequenceState):
        return float(np.sqrt(np.sum(state.values**2)))
    if isinstance(state, SpectralField):
        c = state.coeffs
        energy = c[0].real ** 2 + 2.0 * np.sum(np.abs(c[1:]) ** 2)
        return float(np.sqrt(TWO_PI * energy))
    return float(np.linalg.norm(np.asarray(state, dtype=np.float64)))


def state_axpy(a: float, x: State, y: State) -> State:
    """Return ``a*x + y`` in the representation shared by ``x`` and ``y``."""
    if isinstance(x, SequenceState) and isinstance(y, SequenceState):
        idx = np.union1d(x.indices, y.indices)
        out = np.zeros(idx.size)
        out[np.searchsorted(idx, x.indices)] += a * x.values
        out[np.searchsorted(idx, y.indices)] += y.values
        return SequenceState.from_arrays(idx, out)
    if isinstance(x, SpectralField) and isinstance(y, SpectralField):
        if x.n_modes != y.n_modes:
            raise ValueError(f"truncation mismatch: {x.n_modes} vs {y.n_modes}")
        return SpectralField(a * x.coeffs + y.coeffs)
    if isinstance(x, (SequenceState, SpectralField)) or isinstance(y, (SequenceState, SpectralField)):
        raise TypeError(f"cannot combine {type(x).__name__} with {type(y).__name__}")
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"truncation mismatch: {x.shape} vs {y.shape}")
    return a * x + y


def state_scale(a: float, x: State) -> State:
    return state_axpy(a, x, zeros_like(x))


def state_sub(x: State, y: State) -> State:
    return state_axpy(-1.0, y, x)


def zeros_like(x: State) -> State:
    if isinstance(x, SequenceState):
        return SequenceState()
    if isinstance(x, SpectralField):
        return SpectralField.zeros(x.n_modes)
    return np.zeros_like(np.asarray(x, dtype=np.float64))


@dataclass(frozen=True)
class Trajectory:
    """Sampled orbit ``z(t)`` with norms against a reference equilibrium.

    ``dists`` holds the distance to the model's whole equilibrium set when
    the producer knows it, otherwise it is empty.
    """

    times: np.ndarray
    states: tuple
    norms: np.ndarray
    dists: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self):
        times = np.asarray(self.times, dtype=np.float64)
        norms = np.asarray(self.norms, dtype=np.float64)
        dists = np.asarray(self.dists, dtype=np.float64)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "norms", norms)
        object.__setattr__(self, "dists", dists)
        if times.ndim != 1 or times.size == 0:
            raise ValueError("trajectory needs at least one sample time")
        if np.any(np.diff(times) <= 0):
            raise ValueError("trajectory times must be strictly increasing")
        if len(self.states) != times.size or norms.size != times.size:
            raise ValueError("states and norms must align with times")
        if dists.size not in (0, times.size):
            raise ValueError("dists must be empty or align with times")

    def __len__(self):
        return self.times.size

    @classmethod
    def from_states(cls, times, states, reference: State,
                    dist: Callable[[State], float] | None = None) -> "Trajectory":
        states = tuple(states)
        norms = [l2_norm(state_sub(s, reference)) for s in states]
        dists = [dist(s) for s in states] if dist is not None else []
        return cls(np.asarray(times, dtype=np.float64), states, norms, dists)


class StabilityClass(str, Enum):
    EXPONENTIALLY_STABLE = "ExponentiallyStable"
    ASYMPTOTICALLY_STABLE_ONLY = "AsymptoticallyStableOnly"
    UNSTABLE = "Unstable"
    INCONCLUSIVE = "Inconclusive"


@dataclass(frozen=True)
class StabilityVerdict:
    """Outcome of :func:`semistab.analysis.classify`.

    ``linear_class`` is the behaviour seen for the linearized flow alone;
    ``counterexample`` is set when a nonlinear probe started arbitrarily
    close to the equilibrium failed to contract.
    """

    verdict: StabilityClass
    M_est: float
    gamma_est: float
    alpha_est: float
    evidence: str
    linear_class: StabilityClass = StabilityClass.INCONCLUSIVE
    counterexample: bool = False
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.M_est < 1.0:
            raise ValueError("M_est must be >= 1")
        if self.verdict is StabilityClass.EXPONENTIALLY_STABLE and not self.gamma_est > 0:
            raise ValueError("an exponentially stable verdict needs gamma_est > 0")

    def to_dict(self) -> dict:
        return {
            "class": self.verdict.value,
            "linear_class": self.linear_class.value,
            "counterexample": self.counterexample,
            "M_est": self.M_est,
            "gamma_est": self.gamma_est,
            "alpha_est": self.alpha_est,
            "evidence": self.evidence,
            "details": self.details,
        }


@dataclass(frozen=True)
class FrechetReport:
    scales: np.ndarray
    remainders: np.ndarray
    ratios: np.ndarray
    fitted_order: float
    time: float
    failures: tuple = ()

    def __post_init__(self):
        scales = np.asarray(self.scales, dtype=np.float64)
        if scales.size == 0 or np.any(scales <= 0) or np.any(np.diff(scales) >= 0):
            raise ValueError("scales must be positive and strictly decreasing")
        ratios = np.asarray(self.ratios, dtype=np.float64)
        if np.any(ratios[np.isfinite(ratios)] < 0):
            raise ValueError("ratios must be non-negative")
        object.__setattr__(self, "scales", scales)
        object.__setattr__(self, "remainders", np.asarray(self.remainders, dtype=np.float64))
        object.__setattr__(self, "ratios", ratios)
        object.__setattr__(self, "failures", tuple(self.failures))

    def ratios_decreasing(self) -> bool:
        r = self.ratios
        return bool(np.all(np.isfinite(r)) and np.all(np.diff(r) < 0))

    def to_dict(self) -> dict:
        return {
            "time": self.time,
            "fitted_order": self.fitted_order,
            "scales": self.scales.tolist(),
            "remainder_norms": self.remainders.tolist(),
            "ratios": self.ratios.tolist(),
            "failures": [list(f) for f in self.failures],
        }


def fit_loglog_slope(x: Sequence[float], y: Sequence[float]) -> float:
    """Least-squares slope of ``log y`` against ``log x`` over positive pairs."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    ok = (x > 0) & (y > 0) & np.isfinite(y)
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(x[ok]), np.log(y[ok]), 1)[0])
