"""Batch front end: ``vibroimpact {simulate,family,grazing-report,chaos-report} --config run.toml``.

Configs are TOML with a strict schema; every run writes its outputs plus a
``manifest.json`` (config echo, versions, SHA-256 of each emitted file) to the
output directory. Exit codes: 0 ok, 1 config, 2 model, 3 integrator,
4 continuation stall, 5 no grazing detected.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import platform
import sys as _sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
import scipy

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .chaosdiag import ChaosOptions, StroboscopicMap, chaos_report
from .errors import (ConfigError, ContinuationStall, ConvergenceError, GrazingError, IntegratorError, ModelError,
                     TransversalityError, VibroImpactError)
from .fixtures import REGISTRY, free_orbit, make_system
from .grazing import GammaSampleSpec, grazing_report
from .integrator import IntegratorOptions, State, simulate, write_impacts_csv, write_trajectory_csv
from .orbit import OrbitOptions, continue_family, detect_grazing, find_periodic, settle

log = logging.getLogger("vibroimpact")

EXIT_OK, EXIT_CONFIG, EXIT_MODEL, EXIT_INTEGRATOR, EXIT_STALL, EXIT_NO_GRAZING = range(6)

# ---------------------------------------------------------------------------
# configuration

SCHEMA = {
    "system": {"name": str, "params": dict},
    "tolerances": {f.name: (int if f.name == "max_impacts" else float) for f in fields(IntegratorOptions)},
    "simulate": {"mu": float, "t_span": list, "initial_state": list},
    "family": {"mu_start": float, "mu_end": float, "theta": float, "mu_grid": list, "initial_guess": list,
               "settle_periods": int, "detect_grazing": bool},
    "continuation": {f.name: (int if f.type in ("int", int) else float) for f in fields(OrbitOptions)},
    "grazing": {"theta_seq": list, "leev_samples": int, "seed": int, "gamma_theta": float},
    "chaos": {"mu": float, "m_max": int, "n_iter": int, "burn_in": int, "seed_grid_half_width": float,
              "seed_grid_n": int, "depth": int, "max_gap": float, "max_length": float, "seed_delta": float,
              "n_saddles": int, "write_manifolds": bool},
    "output": {"dir": str},
}

REQUIRED = {
    "system": ("name",),
    "simulate": ("t_span", "initial_state"),
    "family": ("mu_start", "mu_end"),
    "chaos": ("mu",),
}


@dataclass
class RunConfig:
    system: dict
    tolerances: dict = field(default_factory=dict)
    simulate: dict = field(default_factory=dict)
    family: dict = field(default_factory=dict)
    continuation: dict = field(default_factory=dict)
    grazing: dict = field(default_factory=dict)
    chaos: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    def integrator_options(self):
        try:
            return IntegratorOptions(**self.tolerances)
        except ValueError as exc:
            raise ConfigError(f"tolerances: {exc}") from None

    def orbit_options(self):
        try:
            opts = OrbitOptions(**self.continuation)
        except TypeError as exc:
            raise ConfigError(f"continuation: {exc}") from None
        for k, v in self.continuation.items():
            if not v > 0:
                raise ConfigError(f"continuation.{k} must be positive")
        return opts

    def make_system(self):
        try:
            return make_system(self.system["name"], **self.system.get("params", {}))
        except KeyError as exc:
            raise ConfigError(f"system.name: {exc.args[0]}") from None
        except TypeError as exc:
            raise ConfigError(f"system.params: {exc}") from None
        except ValueError as exc:
            raise ConfigError(f"system.params: {exc}") from None


def _check_type(key, value, typ):
    if typ is float:
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    elif typ is int:
        ok = isinstance(value, int) and not isinstance(value, bool)
    else:
        ok = isinstance(value, typ)
    if not ok:
        raise ConfigError(f"{key}: expected {typ.__name__}, got {type(value).__name__}")


def parse_config(data: dict) -> RunConfig:
    """Validate a parsed TOML document; unknown sections or keys are rejected by name."""
    for section, body in data.items():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section {section!r}")
        if not isinstance(body, dict):
            raise ConfigError(f"{section}: expected a table")
        for key, value in body.items():
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            _check_type(f"{section}.{key}", value, SCHEMA[section][key])
    if "system" not in data:
        raise ConfigError("missing section [system]")
    for key in REQUIRED["system"]:
        if key not in data["system"]:
            raise ConfigError(f"missing key system.{key}")
    for key, value in data.get("tolerances", {}).items():
        if key != "max_impacts" and not value > 0:
            raise ConfigError(f"tolerances.{key} must be positive")
    if data["system"]["name"] not in REGISTRY:
        raise ConfigError(f"system.name: unknown system {data['system']['name']!r}; known: {sorted(REGISTRY)}")
    cfg = RunConfig(raw=data, **{k: dict(v) for k, v in data.items()})
    return cfg


def load_config(path) -> RunConfig:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from None
    return parse_config(data)


def _require(cfg: RunConfig, section):
    body = getattr(cfg, section)
    for key in REQUIRED.get(section, ()):
        if key not in body:
            raise ConfigError(f"missing key {section}.{key}")
    return body


def _state_vector(sys, values, key):
    z = np.asarray(values, dtype=float)
    if z.shape != (sys.dim,):
        raise ConfigError(f"{key}: expected {sys.dim} numbers, got {len(values)}")
    return z


def _check_mu(sys, mu, key):
    lo, hi = sys.mu_range
    if not lo <= mu <= hi:
        raise ConfigError(f"{key}: mu={mu} outside mu_range [{lo}, {hi}]")


# ---------------------------------------------------------------------------
# output


def _clean(obj):
    """JSON-ready copy: numpy scalars/arrays to lists, non-finite floats to null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, complex):
        return [_clean(obj.real), _clean(obj.imag)]
    return obj


def write_json(path, obj):
    # repr of a float is its shortest exact round-trip decimal
    with open(path, "w") as fh:
        json.dump(_clean(obj), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out: Path, command, cfg: RunConfig, files, status):
    manifest = {
        "command": command,
        "status": status,
        "config": cfg.raw,
        "versions": {"vibroimpact": __version__, "python": platform.python_version(), "numpy": np.__version__,
                     "scipy": scipy.__version__},
        "files": {name: _sha256(out / name) for name in sorted(files)},
    }
    write_json(out / "manifest.json", manifest)


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(cfg: RunConfig, out: Path, jobs=1):
    sys = cfg.make_system()
    body = _require(cfg, "simulate")
    t_span = body["t_span"]
    if len(t_span) != 2:
        raise ConfigError("simulate.t_span: expected [t0, t1]")
    mu = float(body.get("mu", 0.0))
    _check_mu(sys, mu, "simulate.mu")
    z0 = _state_vector(sys, body["initial_state"], "simulate.initial_state")
    traj = simulate(sys, State(float(t_span[0]), z0), float(t_span[1]), mu, cfg.integrator_options())
    write_trajectory_csv(traj, out / "trajectory.csv")
    write_impacts_csv(traj, out / "impacts.csv")
    summary = {
        "system": sys.name,
        "mu": mu,
        "t_span": [float(t_span[0]), float(t_span[1])],
        "n_segments": len(traj.segments),
        "n_impacts": len(traj.impacts),
        "n_grazing_flags": sum(1 for ev in traj.impacts if ev.grazing_flag),
        "sticking_intervals": [[s.t_enter, s.t_release] for s in traj.sticking],
        "z_final": traj.z_final,
    }
    write_json(out / "summary.json", summary)
    return ["trajectory.csv", "impacts.csv", "summary.json"]


def _family_setup(cfg: RunConfig):
    sys = cfg.make_system()
    body = _require(cfg, "family")
    opts, oopts = cfg.integrator_options(), cfg.orbit_options()
    mu_start, mu_end = float(body["mu_start"]), float(body["mu_end"])
    _check_mu(sys, mu_start, "family.mu_start")
    _check_mu(sys, mu_end, "family.mu_end")
    grid = body.get("mu_grid")
    if grid is not None:
        for i, m in enumerate(grid):
            _check_type(f"family.mu_grid[{i}]", m, float)
            _check_mu(sys, m, "family.mu_grid")
    theta = float(body.get("theta", sys.period / 4))
    if not 0 < theta < sys.period / 2:
        raise ConfigError(f"family.theta must lie in (0, T/2) with T={sys.period}")
    if "initial_guess" in body:
        z = _state_vector(sys, body["initial_guess"], "family.initial_guess")
    else:
        try:
            z = free_orbit(sys, -theta, mu_start)
        except (AttributeError, KeyError, TypeError, ValueError):
            raise ConfigError("family.initial_guess is required for this system") from None
        z[0] = max(z[0], 0.0)
    z = settle(sys, theta, mu_start, z, body.get("settle_periods", 300), opts)
    orb0 = find_periodic(sys, theta, mu_start, z, opts, oopts)
    return sys, theta, orb0, opts, oopts, grid


def _run_family(cfg: RunConfig):
    sys, theta, orb0, opts, oopts, grid = _family_setup(cfg)
    body = cfg.family
    return continue_family(sys, theta, orb0.mu, float(body["mu_end"]), orb0, opts, oopts, mu_grid=grid), opts, oopts


def cmd_family(cfg: RunConfig, out: Path, jobs=1):
    try:
        fam, opts, oopts = _run_family(cfg)
    except ContinuationStall as exc:
        if exc.family is not None:
            exc.family.write_csv(out / "family.csv")
            exc.files = ["family.csv"]
        raise
    fam.write_csv(out / "family.csv")
    files = ["family.csv"]
    if cfg.family.get("detect_grazing", True) and fam.stop_reason == "grazing":
        rec = detect_grazing(fam, opts, oopts)
        write_json(out / "grazing_record.json", rec.as_dict())
        files.append("grazing_record.json")
    return files


def cmd_grazing_report(cfg: RunConfig, out: Path, jobs=1):
    try:
        fam, opts, oopts = _run_family(cfg)
    except ContinuationStall as exc:
        if exc.family is not None:
            exc.family.write_csv(out / "family.csv")
            exc.files = ["family.csv"]
        raise
    fam.write_csv(out / "family.csv")
    if fam.stop_reason != "grazing":
        exc = GrazingError("no grazing detected")
        exc.files = ["family.csv"]
        raise exc
    detect_grazing(fam, opts, oopts)
    g = cfg.grazing
    theta_seq = g.get("theta_seq")
    rep = grazing_report(fam.sys, fam, theta_seq=theta_seq, gamma_spec=GammaSampleSpec(),
                         gamma_theta=g.get("gamma_theta"), leev_samples=g.get("leev_samples", 100),
                         seed=g.get("seed", 0), opts=opts)
    write_json(out / "grazing_report.json", rep.as_dict())
    return ["family.csv", "grazing_report.json"]


def cmd_chaos_report(cfg: RunConfig, out: Path, jobs=1):
    sys, theta, orb0, opts, oopts, _ = _family_setup(cfg)
    c = _require(cfg, "chaos")
    mu = float(c["mu"])
    _check_mu(sys, mu, "chaos.mu")
    fam = continue_family(sys, theta, orb0.mu, mu, orb0, opts, oopts, mu_grid=[mu])
    orb = fam.samples[-1]
    copts = ChaosOptions(
        seed_delta=c.get("seed_delta"),
        depth=c.get("depth", ChaosOptions.depth),
        max_gap=c.get("max_gap", ChaosOptions.max_gap),
        max_length=c.get("max_length", ChaosOptions.max_length),
        lyap_iter=c.get("n_iter", ChaosOptions.lyap_iter),
        lyap_burn_in=c.get("burn_in", ChaosOptions.lyap_burn_in),
        m_max=c.get("m_max", ChaosOptions.m_max),
        n_saddles=c.get("n_saddles", ChaosOptions.n_saddles),
        seed_grid_half_width=c.get("seed_grid_half_width", ChaosOptions.seed_grid_half_width),
        seed_grid_n=c.get("seed_grid_n", ChaosOptions.seed_grid_n),
        jobs=jobs,
    )
    rep = chaos_report(StroboscopicMap(sys, theta, mu, opts), orb.z_star, orb.jacobian, copts)
    write_json(out / "chaos_report.json", rep.as_dict())
    files = ["chaos_report.json"]
    if c.get("write_manifolds", True):
        for W in rep.manifolds:
            name = f"manifold_{W.kind}.csv"
            W.write_csv(out / name)
            files.append(name)
    return files


COMMANDS = {
    "simulate": cmd_simulate,
    "family": cmd_family,
    "grazing-report": cmd_grazing_report,
    "chaos-report": cmd_chaos_report,
}


def _exit_code(exc):
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, ModelError):
        return EXIT_MODEL
    if isinstance(exc, GrazingError):
        return EXIT_NO_GRAZING
    if isinstance(exc, (ContinuationStall, ConvergenceError)):
        return EXIT_STALL
    if isinstance(exc, (IntegratorError, TransversalityError)):
        return EXIT_INTEGRATOR
    return EXIT_INTEGRATOR


def build_parser():
    p = argparse.ArgumentParser(prog="vibroimpact", description="Vibro-impact simulation and grazing analysis.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="TOML run configuration")
    p.add_argument("--out", help="output directory (overrides [output].dir)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for the periodic-point search")
    p.add_argument("--seed-override", type=int, help="replace [grazing].seed")
    return p


def main(argv=None) -> int:
    level = os.environ.get("GRAZE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed_override is not None:
            cfg.grazing["seed"] = args.seed_override
            cfg.raw.setdefault("grazing", {})["seed"] = args.seed_override
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
    except ConfigError as exc:
        print(f"config error: {exc}", file=_sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out or cfg.output.get("dir", "out"))
    out.mkdir(parents=True, exist_ok=True)
    try:
        files = COMMANDS[args.command](cfg, out, args.jobs)
    except VibroImpactError as exc:
        code = _exit_code(exc)
        files = getattr(exc, "files", [])
        if code != EXIT_CONFIG:
            write_manifest(out, args.command, cfg, files, status=f"error: {exc}")
        print(f"{args.command} failed: {exc}", file=_sys.stderr)
        return code
    write_manifest(out, args.command, cfg, files, status="ok")
    log.info("wrote %s", ", ".join(files))
    return EXIT_OK


if __name__ == "__main__":
    _sys.exit(main())
