"""Exit criteria.  Each test records a one-line label; the terminal summary
prints one PASS/FAIL line per criterion."""
import math
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from semistab import ks, quasilinear, zwart
from semistab.analysis import (
    ProbeConfig,
    classify,
    contraction_time,
    estimate_growth_constants,
    frechet_ratio_scan,
    ks_pair,
    verify_half_contraction,
)
from semistab.cli import main, read_csv
from semistab.core import SequenceState, SpectralField, StabilityClass, l2_norm
from conftest import brute_force_product

pytestmark = pytest.mark.acceptance


@pytest.fixture
def criterion(record_property):
    def label(text):
        record_property("criterion", text)
        return time.perf_counter()
    return label


def elapsed(start):
    return time.perf_counter() - start


def test_ac1_zwart_counterexample(criterion, tmp_path):
    start = criterion("AC1 Zwart orbit n=10 has norm 0.1 on [0,100]; linear flow <= 1e-6 by 10 n ln 1e5")
    n = 10
    traj = zwart.counterexample_orbit(n, np.arange(0.0, 101.0))
    assert np.max(np.abs(traj.norms - 0.1)) <= 1e-14
    t_lin = 10 * n * math.log(1e5)
    assert l2_norm(zwart.linear_solution(zwart.counterexample_state(n), t_lin)) <= 1e-6
    cfg = tmp_path / "orbit.toml"
    cfg.write_text("n = 10\nt_final = 100.0\n")
    assert main(["zwart-orbit", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    _, data = read_csv(tmp_path / "zwart_orbit.csv")
    assert data[-1, 0] == 100.0
    assert np.max(np.abs(data[:, 1] - 0.1)) <= 1e-14
    assert elapsed(start) < 1.0


def test_ac2_truncation_paradox(criterion):
    start = criterion("AC2 truncated system with z0_n = 0.9/n, n <= 100 has limit exactly 0")
    idx = np.arange(1, 101)
    z0 = SequenceState.from_arrays(idx, 0.9 / idx)
    assert zwart.truncated_limit(z0, 100) == 0.0
    orbit = zwart.counterexample_orbit(10, [0.0, 1e3, 1e6])
    assert np.all(orbit.norms == 0.1)
    assert elapsed(start) < 1.0


def test_ac3_ks_decay_rate(criterion):
    start = criterion("AC3 KS nu=1.2 decay rate of dist_to_constants on [2,20] is -0.2 +- 10%")
    model = ks.KsModel(1.2, 32, 0.01)
    traj = ks.simulate(model, SpectralField.cosine(1, 1e-3, 32), 20.0)
    window = (traj.times >= 2.0) & (traj.times <= 20.0)
    rate = np.polyfit(traj.times[window], np.log(traj.dists[window]), 1)[0]
    lam1 = ks.eigenvalues_at_constant(model, 0.0, [1])[0].real
    assert lam1 == pytest.approx(-0.2, abs=1e-15)
    assert abs(rate - lam1) <= 0.1 * abs(lam1)
    assert elapsed(start) < 5.0


def test_ac4_ks_instability(criterion):
    start = criterion("AC4 KS nu=0.8 growth rate +0.2 +- 10% while ||z|| <= 1e-3; classify -> Unstable")
    model = ks.KsModel(0.8, 32, 0.01)
    traj = ks.simulate(model, SpectralField.cosine(1, 1e-6, 32), 40.0)
    window = traj.norms <= 1e-3
    rate = np.polyfit(traj.times[window], np.log(traj.norms[window]), 1)[0]
    assert abs(rate - 0.2) <= 0.1 * 0.2
    verdict = classify(ks_pair(model, 0.0), ProbeConfig(seed=2024, samples=4))
    assert verdict.verdict is StabilityClass.UNSTABLE
    assert elapsed(start) < 5.0


def test_ac5_ks_frechet_differentiability(criterion):
    start = criterion("AC5 KS Frechet scan at 0, nu=1.2, t=1: ratios decrease, order 2.0 +- 0.2")
    pair = ks_pair(ks.KsModel(1.2, 32, 0.01), 0.0)
    scales = [1e-1, 1e-2, 1e-3, 1e-4]
    report = frechet_ratio_scan(pair, SpectralField.cosine(1, 1.0, 32), scales, 1.0)
    assert report.ratios_decreasing()
    assert abs(report.fitted_order - 2.0) <= 0.2
    seeded = frechet_ratio_scan(pair, pair.direction(np.random.default_rng(5)), scales, 1.0)
    assert seeded.ratios_decreasing() and abs(seeded.fitted_order - 2.0) <= 0.2
    assert elapsed(start) < 30.0


@pytest.mark.parametrize("z0_amplitude", [0.0, 0.5])
def test_ac6_quasilinear_bound(criterion, z0_amplitude):
    start = criterion(f"AC6 quasilinear eps=0.5 (z0 = {z0_amplitude} w): remainder and separation bounds on [0,1]")
    tb = quasilinear.QuasilinearTestbed(16, 0.5)
    z0 = z0_amplitude * tb.w
    report = quasilinear.verify_remainder_bound(tb, z0, [1e-1, 1e-2, 1e-3, 1e-4], 1.0)
    K, M, L = quasilinear.gronwall_constants(tb, z0, 1.0)
    assert (report.K, report.L) == (K, L)
    assert report.M >= M
    if z0_amplitude == 0.0:
        assert report.M == M
    assert np.all(report.bound_holds)
    assert np.all(report.separation_holds)
    assert elapsed(start) < 10.0


def test_ac7_contraction_chain(criterion):
    start = criterion("AC7 KS nu=1.2 half-contraction at ln(4M)/gamma for delta <= 1e-3 (20 probes); linear factor <= 0.30")
    model = ks.KsModel(1.2, 32, 0.01)
    pair = ks_pair(model, 0.0)
    h0 = pair.direction(np.random.default_rng(7))
    fit = estimate_growth_constants(ks.simulate_linearized(model, 0.0, h0, 40.0))
    assert not fit.inconclusive and fit.gamma > 0
    t_bar = contraction_time(fit.M, fit.gamma)
    report = verify_half_contraction(pair, t_bar, [1e-3, 1e-4, 1e-5], seed=77, samples=20)
    assert np.all(report.n_probes >= 20)
    assert report.passes_at_or_below(1e-3)
    assert report.linear_factor <= 0.25 + 0.05
    assert elapsed(start) < 30.0


def test_ac8_oracle_equivalence(criterion):
    start = criterion("AC8 Zwart closed form vs RK45 (100 cases, rel 1e-8); KS J(z) vs convolution (N=8, abs 1e-12)")
    rng = np.random.default_rng(8)
    for _ in range(100):
        idx = np.sort(rng.choice(np.arange(1, 31), size=8, replace=False))
        z0 = SequenceState.from_arrays(idx, rng.uniform(-0.5, 0.5, idx.size) / idx)
        t = float(rng.uniform(0.0, 20.0))
        n = idx.astype(float)
        sol = solve_ivp(lambda _, z: -z / n + z**2, (0.0, t), z0.values, method="RK45",
                        rtol=1e-12, atol=1e-16)
        np.testing.assert_allclose(zwart.exact_solution(z0, t).values, sol.y[:, -1], rtol=1e-8, atol=1e-300)
    for _ in range(10):
        c = rng.standard_normal(9) + 1j * rng.standard_normal(9)
        z = SpectralField(c)
        expected = -0.5j * np.arange(9) * brute_force_product(z, z)
        np.testing.assert_allclose(ks.nonlinear_term(z).coeffs, expected, atol=1e-12, rtol=0)
    assert elapsed(start) < 10.0


CONFIGS = {
    "zwart-orbit": "n = 10\nt_final = 100.0\n",
    "zwart-truncation": "n_max = 100\nfraction = 0.9\n",
    "ks-eigs": "nu = 1.2\nn_max = 4\n",
    "simulate-ks": "nu = 1.2\nt_final = 20.0\namplitude = 1e-3\n",
    "frechet-scan": 'model = "ks"\nnu = 1.2\ntime = 1.0\n',
    "quasilinear-bound": "epsilon_c = 0.5\n",
    "classify": "nu = 0.8\nsamples = 2\n",
}


def produce_artifacts(root: Path, seed: int) -> dict:
    root.mkdir(parents=True)
    for command, text in CONFIGS.items():
        cfg = root / f"{command}.toml"
        cfg.write_text(text)
        assert main([command, "--config", str(cfg), "--out", str(root / command), "--seed", str(seed)]) == 0
    return {p.relative_to(root): p.read_bytes() for p in sorted(root.rglob("*")) if p.suffix in (".csv", ".json")}


def test_ac9_determinism(criterion, tmp_path):
    criterion("AC9 two artifact runs with identical seeds are byte-identical")
    first = produce_artifacts(tmp_path / "run1", seed=123)
    second = produce_artifacts(tmp_path / "run2", seed=123)
    assert len(first) >= 10
    assert first.keys() == second.keys()
    for name in first:
        assert first[name] == second[name], name
