import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad

from semistab.core import (
    FrechetReport,
    SequenceState,
    SpectralField,
    StabilityClass,
    StabilityVerdict,
    Trajectory,
    l2_norm,
    state_axpy,
    zeros_like,
)
from conftest import random_field, random_sequence

finite = st.one_of(st.just(0.0), st.floats(1e-100, 1e3), st.floats(-1e3, -1e-100))


def test_norm_of_zero():
    assert l2_norm(SequenceState()) == 0.0
    assert l2_norm(SpectralField.zeros(8)) == 0.0


def test_norm_pythagorean():
    assert l2_norm(SequenceState({1: 3, 2: 4})) == 5.0


def test_spectral_norm_matches_quadrature():
    field = SpectralField.cosine(1, 1.0, 8)
    oracle = np.sqrt(quad(lambda x: np.cos(x) ** 2, -np.pi, np.pi, epsabs=1e-14)[0])
    assert l2_norm(field) == pytest.approx(oracle, rel=1e-12)
    assert l2_norm(field) == pytest.approx(np.sqrt(np.pi), rel=1e-14)


def test_spectral_norm_parseval_vs_quadrature(rng):
    field = random_field(rng, 12)
    energy = quad(lambda x: _evaluate(field, np.array([x]))[0] ** 2, -np.pi, np.pi, limit=200, epsabs=1e-13)[0]
    assert l2_norm(field) == pytest.approx(np.sqrt(energy), rel=1e-10)


def _evaluate(field, x):
    n = np.arange(-field.n_modes, field.n_modes + 1)
    c = np.array([field.coefficient(k) for k in n])
    return np.real(np.exp(1j * np.outer(x, n)) @ c)


def test_to_physical_matches_direct_evaluation(rng):
    field = random_field(rng, 6)
    m = 20
    x = 2 * np.pi * np.arange(m) / m
    np.testing.assert_allclose(field.to_physical(m), _evaluate(field, x), atol=1e-12)


def test_from_function_recovers_cosine():
    field = SpectralField.from_function(lambda x: 2.0 + np.cos(3 * x), 8)
    expected = SpectralField.cosine(3, 1.0, 8, offset=2.0)
    np.testing.assert_allclose(field.coeffs, expected.coeffs, atol=1e-14)


def test_axpy_examples(rng):
    x = random_sequence(rng)
    y = random_sequence(rng)
    assert state_axpy(0.0, x, y).entries == {**{k: 0.0 for k in x.entries if k not in y.entries},
                                             **y.entries}
    assert l2_norm(state_axpy(1.0, x, state_axpy(-1.0, x, zeros_like(x)))) == 0.0
    assert state_axpy(2.0, SequenceState({1: 1}), SequenceState({1: 3})) == SequenceState({1: 5})


def test_axpy_spectral_cancellation(rng):
    x = random_field(rng, 8)
    minus_x = state_axpy(-1.0, x, SpectralField.zeros(8))
    assert l2_norm(state_axpy(1.0, x, minus_x)) == 0.0


def test_axpy_rejects_mismatched_truncation():
    with pytest.raises(ValueError):
        state_axpy(1.0, SpectralField.zeros(4), SpectralField.zeros(5))
    with pytest.raises(TypeError):
        state_axpy(1.0, SpectralField.zeros(4), SequenceState())


def test_sequence_state_validation():
    with pytest.raises(ValueError):
        SequenceState({0: 1.0})
    with pytest.raises(ValueError):
        SequenceState({1: float("nan")})
    z = SequenceState({3: 2.0})
    assert z[3] == 2.0 and z[4] == 0.0
    with pytest.raises(ValueError):
        z.values[0] = 1.0


def test_spectral_field_is_real_and_hermitian():
    f = SpectralField([1 + 2j, 0.5j, 0.25])
    assert f.coeffs[0] == 1.0
    assert f.coefficient(-1) == np.conj(f.coefficient(1))
    with pytest.raises(IndexError):
        f.coefficient(3)


@given(a=finite, seed=st.integers(0, 2**32 - 1))
def test_norm_homogeneity_sequences(a, seed):
    x = random_sequence(np.random.default_rng(seed))
    scaled = state_axpy(a, x, zeros_like(x))
    assert l2_norm(scaled) == pytest.approx(abs(a) * l2_norm(x), rel=1e-12, abs=1e-300)


@given(a=finite, seed=st.integers(0, 2**32 - 1))
def test_norm_homogeneity_fields(a, seed):
    x = random_field(np.random.default_rng(seed), 10)
    scaled = state_axpy(a, x, zeros_like(x))
    assert l2_norm(scaled) == pytest.approx(abs(a) * l2_norm(x), rel=1e-12, abs=1e-300)


@given(seed=st.integers(0, 2**32 - 1))
def test_triangle_inequality(seed):
    rng = np.random.default_rng(seed)
    x, y = random_sequence(rng), random_sequence(rng)
    assert l2_norm(state_axpy(1.0, x, y)) <= l2_norm(x) + l2_norm(y) + 1e-12
    f, g = random_field(rng, 8), random_field(rng, 8)
    assert l2_norm(state_axpy(1.0, f, g)) <= l2_norm(f) + l2_norm(g) + 1e-12


@given(a=finite, seed=st.integers(0, 2**32 - 1))
def test_axpy_preserves_hermitian_symmetry(a, seed):
    rng = np.random.default_rng(seed)
    out = state_axpy(a, random_field(rng, 6), random_field(rng, 6))
    for n in range(1, 7):
        assert out.coefficient(-n) == np.conj(out.coefficient(n))
    assert out.coeffs[0].imag == 0.0


def test_trajectory_invariants():
    Trajectory([0.0, 1.0], [None, None], [1.0, 0.5])
    with pytest.raises(ValueError):
        Trajectory([0.0, 0.0], [None, None], [1.0, 0.5])
    with pytest.raises(ValueError):
        Trajectory([0.0, 1.0], [None], [1.0, 0.5])


def test_frechet_report_invariants():
    with pytest.raises(ValueError):
        FrechetReport([1e-2, 1e-1], [0, 0], [0, 0], 2.0, 1.0)
    with pytest.raises(ValueError):
        FrechetReport([1e-1, 1e-2], [0, 0], [-1.0, 0], 2.0, 1.0)


def test_verdict_invariants():
    with pytest.raises(ValueError):
        StabilityVerdict(StabilityClass.EXPONENTIALLY_STABLE, 1.0, -0.1, 0.0, "")
    with pytest.raises(ValueError):
        StabilityVerdict(StabilityClass.INCONCLUSIVE, 0.5, 0.1, 0.0, "")
