"""``semistab <command> --config <path> [--out <dir>] [--seed <u64>]``.

Configs are flat TOML documents.  Every key is validated against the
command's schema; unknown keys are rejected.  Outputs are CSV (numbers
written with 17 significant digits) and JSON, each written to a temporary
file and renamed into place only once the whole command has succeeded.

Exit status: 0 on success, 1 on a configuration error, 2 when the model
signals instability (blow-up or the overflow guard).
"""
from __future__ import annotations

import argparse
import io
import csv
import json
import math
import os
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import analysis, ks, quasilinear, zwart
from .core import SequenceState, SpectralField, fit_loglog_slope, l2_norm
from .integrators import StepUnstable

COMMANDS = ("simulate-ks", "ks-eigs", "zwart-orbit", "zwart-truncation",
            "frechet-scan", "quasilinear-bound", "classify")
RANDOMIZED = {"frechet-scan", "classify"}
MAX_SEED = 2**64 - 1


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


class MissingKey(ConfigError):
    def __init__(self, key):
        super().__init__(key, "required key is missing")


class UnknownKey(ConfigError):
    def __init__(self, key):
        super().__init__(key, "unknown key")


class OutOfRange(ConfigError):
    pass


# --------------------------------------------------------------------------
# Validators


def _number(key, value):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise OutOfRange(key, f"expected a number, got {value!r}")
    if not math.isfinite(value):
        raise OutOfRange(key, "must be finite")
    return float(value)


def positive(key, value):
    value = _number(key, value)
    if not value > 0:
        raise OutOfRange(key, f"must be > 0, got {value!r}")
    return value


def non_negative(key, value):
    value = _number(key, value)
    if value < 0:
        raise OutOfRange(key, f"must be >= 0, got {value!r}")
    return value


def real(key, value):
    return _number(key, value)


def integer(lo, hi=None):
    def check(key, value):
        if isinstance(value, bool) or not isinstance(value, int):
            raise OutOfRange(key, f"expected an integer, got {value!r}")
        if value < lo or (hi is not None and value > hi):
            raise OutOfRange(key, f"must lie in [{lo}, {hi if hi is not None else 'inf'}], got {value}")
        return value
    return check


def descending(key, value):
    if not isinstance(value, list) or not value:
        raise OutOfRange(key, "expected a non-empty list of numbers")
    out = [positive(key, v) for v in value]
    if any(b >= a for a, b in zip(out, out[1:])):
        raise OutOfRange(key, "values must be strictly decreasing")
    return out


def ascending(key, value):
    if not isinstance(value, list) or len(value) < 2:
        raise OutOfRange(key, "expected a list of at least two numbers")
    out = [positive(key, v) for v in value]
    if any(b <= a for a, b in zip(out, out[1:])):
        raise OutOfRange(key, "values must be strictly increasing")
    return out


def choice(*options):
    def check(key, value):
        if value not in options:
            raise OutOfRange(key, f"must be one of {list(options)}, got {value!r}")
        return value
    return check


REQUIRED = object()
SCALES = [1e-1, 1e-2, 1e-3, 1e-4]

# key -> (validator, default); REQUIRED marks mandatory keys
SCHEMAS: dict[str, dict[str, tuple[Callable, Any]]] = {
    "simulate-ks": {
        "nu": (positive, REQUIRED),
        "n_modes": (integer(4), 32),
        "dt": (positive, 0.01),
        "t_final": (positive, 20.0),
        "z_e": (real, 0.0),
        "amplitude": (real, 1e-3),
        "sample_interval": (positive, 0.1),
        "guard": (positive, ks.OVERFLOW_GUARD),
    },
    "ks-eigs": {
        "nu": (positive, REQUIRED),
        "z_e": (real, 0.0),
        "n_max": (integer(0), 4),
        "n_modes": (integer(4), 32),
    },
    "zwart-orbit": {
        "n": (integer(1), REQUIRED),
        "t_final": (positive, 100.0),
        "t_step": (positive, 1.0),
    },
    "zwart-truncation": {
        "n_max": (integer(1), 100),
        "fraction": (non_negative, 0.9),
        "n": (integer(1), 10),
        "t_final": (positive, 100.0),
    },
    "frechet-scan": {
        "model": (choice("ks", "quasilinear", "zwart"), "ks"),
        "nu": (positive, 1.2),
        "n_modes": (integer(1), None),
        "dt": (positive, None),
        "time": (positive, 1.0),
        "z_e": (real, 0.0),
        "epsilon_c": (non_negative, 0.5),
        "scales": (descending, SCALES),
        "seed": (integer(0, MAX_SEED), REQUIRED),
    },
    "quasilinear-bound": {
        "epsilon_c": (non_negative, 0.5),
        "n_modes": (integer(1), 16),
        "dt": (positive, 1e-3),
        "t_final": (positive, 1.0),
        "z0_amplitude": (real, 0.0),
        "scales": (descending, SCALES),
    },
    "classify": {
        "model": (choice("ks", "zwart"), "ks"),
        "nu": (positive, 1.2),
        "n_modes": (integer(4), 32),
        "dt": (positive, 0.01),
        "z_e": (real, 0.0),
        "seed": (integer(0, MAX_SEED), REQUIRED),
        "samples": (integer(1), 8),
        "deltas": (descending, [1e-2, 1e-3, 1e-4]),
        "scales": (descending, SCALES),
        "horizons": (ascending, None),
    },
}


@dataclass(frozen=True)
class RunConfig:
    command: str
    params: dict = field(default_factory=dict)
    output_path: str = "."

    def __getattr__(self, name):
        try:
            return self.__dict__["params"][name]
        except KeyError:
            raise AttributeError(name) from None


def parse_config(text: str, command: str | None = None, seed: int | None = None,
                 output_path: str | None = None) -> RunConfig:
    """Validate a TOML document into a :class:`RunConfig`.

    ``command`` may be given in the document or by the caller (the two
    must agree).  ``seed`` overrides the document's seed.
    """
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("<document>", f"not valid TOML: {exc}") from None
    doc_command = raw.pop("command", None)
    if command is None:
        command = doc_command
    elif doc_command is not None and doc_command != command:
        raise OutOfRange("command", f"document says {doc_command!r} but {command!r} was requested")
    if command is None:
        raise MissingKey("command")
    if command not in SCHEMAS:
        raise OutOfRange("command", f"must be one of {list(COMMANDS)}, got {command!r}")
    doc_output = raw.pop("output_path", None)
    if doc_output is not None and not isinstance(doc_output, str):
        raise OutOfRange("output_path", "must be a string")
    schema = SCHEMAS[command]
    for key, value in raw.items():
        if key not in schema:
            raise UnknownKey(key)
        if isinstance(value, dict):
            raise OutOfRange(key, "nested tables are not allowed")
    if seed is not None and "seed" in schema:
        raw["seed"] = seed
    params = {}
    for key, (check, default) in schema.items():
        if key in raw:
            params[key] = check(key, raw[key])
        elif default is REQUIRED:
            raise MissingKey(key)
        else:
            params[key] = default
    if command in RANDOMIZED and params.get("seed") is None:
        raise MissingKey("seed")
    out = output_path if output_path is not None else (doc_output or ".")
    return RunConfig(command, params, out)


# --------------------------------------------------------------------------
# Output helpers


def fmt(x) -> str:
    return format(float(x), ".17g")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) if not isinstance(v, (int, np.integer)) else str(v) for v in row])
    return buf.getvalue()


def json_text(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def read_csv(path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array([[float(v) for v in r] for r in rows[1:]])


class Outputs:
    """Files staged in memory and committed atomically."""

    def __init__(self, directory):
        self.directory = Path(directory)
        self.files: dict[str, str] = {}

    def add(self, name: str, text: str):
        self.files[name] = text

    def commit(self):
        self.directory.mkdir(parents=True, exist_ok=True)
        for name, text in self.files.items():
            target = self.directory / name
            fd, tmp = tempfile.mkstemp(dir=self.directory, prefix=f".{name}.", suffix=".tmp")
            try:
                with os.fdopen(fd, "w", newline="") as fh:
                    fh.write(text)
                os.replace(tmp, target)
            except BaseException:
                if os.path.exists(tmp):
                    os.unlink(tmp)
                raise


class ModelInstability(Exception):
    def __init__(self, report: dict, cause: Exception):
        super().__init__(str(cause))
        self.report = report


# --------------------------------------------------------------------------
# Commands


def _simulate_ks(cfg: RunConfig, out: Outputs):
    model = ks.KsModel(cfg.nu, cfg.n_modes, cfg.dt)
    z0 = SpectralField.cosine(1, cfg.amplitude, model.n_modes, offset=cfg.z_e)
    summary = {"command": cfg.command, "config": cfg.params}
    try:
        traj = ks.simulate(model, z0, cfg.t_final, cfg.sample_interval, reference=cfg.z_e, guard=cfg.guard)
    except StepUnstable as exc:
        summary.update(status="unstable", verdict="Unstable", t_unstable=exc.t, magnitude=exc.magnitude,
                       note=str(exc))
        raise ModelInstability(summary, exc) from exc
    rows = [(t, n, d, s.mean) for t, n, d, s in zip(traj.times, traj.norms, traj.dists, traj.states)]
    out.add("ks_trajectory.csv", csv_text(["t", "norm", "dist_equilibria", "mean"], rows))
    t_start = min(2.0, 0.1 * cfg.t_final)
    mask = (traj.times >= t_start) & (traj.dists > 0)
    rate = float(np.polyfit(traj.times[mask], np.log(traj.dists[mask]), 1)[0]) if mask.sum() >= 2 else None
    eig = ks.eigenvalues_at_constant(model, cfg.z_e, [1])[0]
    summary.update(status="ok", fitted_rate=rate, fit_window=[t_start, cfg.t_final],
                   predicted_rate=eig.real, final_norm=traj.norms[-1], final_dist=traj.dists[-1],
                   mean_drift=float(np.max(np.abs([s.mean - z0.mean for s in traj.states]))))
    out.add("ks_report.json", json_text(summary))


def _ks_eigs(cfg: RunConfig, out: Outputs):
    n_max = cfg.n_max
    model = ks.KsModel(cfg.nu, max(cfg.n_modes, n_max, 4))
    lam = ks.eigenvalues_at_constant(model, cfg.z_e, range(n_max + 1))
    out.add("ks_eigs.csv", csv_text(["n", "re", "im"], [(n, l.real, l.imag) for n, l in enumerate(lam)]))


def _zwart_grid(t_final, t_step):
    count = int(round(t_final / t_step))
    return np.linspace(0.0, count * t_step, count + 1) if count >= 1 else np.array([0.0, t_final])


def _zwart_orbit(cfg: RunConfig, out: Outputs):
    times = _zwart_grid(cfg.t_final, cfg.t_step)
    traj = zwart.counterexample_orbit(cfg.n, times)
    out.add("zwart_orbit.csv", csv_text(["t", "norm", "dist_E"], zip(traj.times, traj.norms, traj.dists)))
    z0 = zwart.counterexample_state(cfg.n)
    lin = zwart.orbit(z0, times, linear=True)
    out.add("zwart_orbit.json", json_text({
        "command": cfg.command, "config": cfg.params,
        "initial_norm": traj.norms[0], "final_norm": traj.norms[-1],
        "max_norm_deviation": float(np.max(np.abs(traj.norms - 1.0 / cfg.n))),
        "linear_final_norm": lin.norms[-1],
    }))


def _zwart_truncation(cfg: RunConfig, out: Outputs):
    idx = np.arange(1, cfg.n_max + 1)
    z0 = SequenceState.from_arrays(idx, cfg.fraction / idx)
    limit = zwart.truncated_limit(z0, cfg.n_max)
    orbit = zwart.counterexample_orbit(cfg.n, [0.0, cfg.t_final])
    out.add("zwart_truncation.json", json_text({
        "command": cfg.command, "config": cfg.params,
        "initial_norm": l2_norm(z0),
        "truncated_limit": limit,
        "full_system_orbit_norm": orbit.norms[-1],
        "full_system_orbit_n": cfg.n,
    }))


def _scan_pair(cfg: RunConfig, rng):
    if cfg.model == "ks":
        model = ks.KsModel(cfg.nu, cfg.n_modes or 32, cfg.dt or 0.01)
        pair = analysis.ks_pair(model, cfg.z_e)
    elif cfg.model == "quasilinear":
        tb = quasilinear.QuasilinearTestbed(cfg.n_modes or 16, cfg.epsilon_c)
        pair = analysis.quasilinear_pair(tb, dt=cfg.dt or 1e-3)
    else:
        pair = analysis.zwart_pair(support=cfg.n_modes or 1000)
    return pair, pair.direction(rng)


def _frechet_scan(cfg: RunConfig, out: Outputs):
    rng = np.random.default_rng(cfg.seed)
    pair, direction = _scan_pair(cfg, rng)
    report = analysis.frechet_ratio_scan(pair, direction, cfg.scales, cfg.time)
    out.add("frechet_scan.csv", csv_text(["scale", "remainder_norm", "ratio"],
                                         zip(report.scales, report.remainders, report.ratios)))
    out.add("frechet_scan.json", json_text({
        "command": cfg.command, "config": cfg.params, "pair": pair.name,
        "ratios_decreasing": report.ratios_decreasing(),
        "vanishing": analysis.remainder_vanishes(report),
        **report.to_dict(),
    }))


def _quasilinear_bound(cfg: RunConfig, out: Outputs):
    tb = quasilinear.QuasilinearTestbed(cfg.n_modes, cfg.epsilon_c)
    z0 = cfg.z0_amplitude * tb.w
    report = quasilinear.verify_remainder_bound(tb, z0, cfg.scales, cfg.t_final, dt=cfg.dt)
    out.add("quasilinear_bound.csv", csv_text(["scale", "remainder_norm", "ratio"],
                                              zip(report.scales, report.max_remainder,
                                                  report.max_remainder / report.scales)))
    out.add("quasilinear_bound.json", json_text({"command": cfg.command, "config": cfg.params,
                                                 **report.to_dict()}))


def _classify(cfg: RunConfig, out: Outputs):
    if cfg.model == "ks":
        pair = analysis.ks_pair(ks.KsModel(cfg.nu, cfg.n_modes, cfg.dt), cfg.z_e)
        horizons = cfg.horizons or [20.0, 40.0, 80.0]
    else:
        pair = analysis.zwart_pair()
        horizons = cfg.horizons or [100.0 * 2**k for k in range(9)]
    probes = analysis.ProbeConfig(seed=cfg.seed, samples=cfg.samples, deltas=tuple(cfg.deltas),
                                  scales=tuple(cfg.scales), horizons=tuple(horizons))
    verdict = analysis.classify(pair, probes)
    out.add("classify.json", json_text({"command": cfg.command, "config": cfg.params, "pair": pair.name,
                                        **verdict.to_dict()}))


HANDLERS = {
    "simulate-ks": _simulate_ks,
    "ks-eigs": _ks_eigs,
    "zwart-orbit": _zwart_orbit,
    "zwart-truncation": _zwart_truncation,
    "frechet-scan": _frechet_scan,
    "quasilinear-bound": _quasilinear_bound,
    "classify": _classify,
}

REPORT_NAMES = {"simulate-ks": "ks_report.json", "zwart-truncation": "zwart_truncation.json"}


def run(cfg: RunConfig) -> int:
    """Execute ``cfg`` and write its outputs; return the exit status."""
    out = Outputs(cfg.output_path)
    try:
        HANDLERS[cfg.command](cfg, out)
    except ModelInstability as exc:
        report = Outputs(cfg.output_path)
        report.add(REPORT_NAMES.get(cfg.command, "report.json"), json_text(exc.report))
        report.commit()
        print(f"semistab: model instability: {exc}", file=sys.stderr)
        return 2
    except zwart.BlowUp as exc:
        report = Outputs(cfg.output_path)
        report.add(REPORT_NAMES.get(cfg.command, "report.json"), json_text({
            "command": cfg.command, "config": cfg.params, "status": "blow-up",
            "verdict": "Unstable", "n": exc.n, "t_star": exc.t_star, "note": str(exc)}))
        report.commit()
        print(f"semistab: model instability: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        # model constructors reject parameter combinations the schema cannot see
        print(f"semistab: configuration error: {exc}", file=sys.stderr)
        return 1
    out.commit()
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="semistab", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, type=Path, help="flat TOML run configuration")
    parser.add_argument("--out", default=None, help="output directory (default: config output_path or .)")
    parser.add_argument("--seed", type=int, default=None, help="seed override for randomized commands")
    args = parser.parse_args(argv)
    try:
        text = args.config.read_text(encoding="utf-8")
    except OSError as exc:
        print(f"semistab: cannot read config: {exc}", file=sys.stderr)
        return 1
    try:
        cfg = parse_config(text, args.command, seed=args.seed, output_path=args.out)
    except ConfigError as exc:
        print(f"semistab: configuration error: {exc}", file=sys.stderr)
        return 1
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
