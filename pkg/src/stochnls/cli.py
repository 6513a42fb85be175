"""Configuration, experiment orchestration, and artifact emission.

Config files are flat ``key = value`` lines (a TOML-compatible subset):
comments start with ``#``, keys are dotted (``grid.n = 256``), values are
ints, floats, booleans, quoted strings, or (nested) arrays.  Unknown keys
are hard errors with a best-guess suggestion; silent defaults never paper
over a misspelling.

Every run writes into ``<out>/<kind>-<confighash>-seed<seed>/``: the
artifacts of the experiment plus ``manifest.json`` echoing the config, the
package and numpy versions, the seed, and the wall time.  Artifacts are
deterministic functions of (config, seed); the manifest is the one file
that records wall-clock time and is therefore excluded from byte-identity
comparisons.
"""

from __future__ import annotations

import argparse
import difflib
import hashlib
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .averaged import (
    AveragedDensityMatrix,
    AveragedField,
    solve_liouville_averaged,
    solve_scalar_averaged,
    write_density_csv,
    write_trace_csv,
)
from .diagnostics import build_report, decay_fit
from .ensemble import EnsembleConfig, run_ensemble, write_summary_json
from .grid import SpatialGrid, WaveField
from .markov import MarkovModel, sample_path
from .potential import (
    HartreeKernel,
    PotentialFamily,
    make_amplitude_family,
    make_translate_family,
    shape_field,
)
from .propagator import SolverConfig, dump_snapshot, evolve_path, write_scalars_csv
from .spectral import (
    assemble_h,
    default_lambda_grid,
    eigen_analysis,
    kb_scan,
    write_scan_csv,
    write_spectrum_csv,
)

EXPERIMENT_KINDS = ("path", "average", "liouville", "ensemble", "spectrum",
                    "kb-scan", "verify-all")

# key -> (type tag, default); "number" accepts int or float
KNOWN_KEYS = {
    "experiment.kind": ("choice", "verify-all"),
    "grid.d": ("int", 1),
    "grid.n": ("int", 256),
    "grid.L": ("number", 40.0),
    "markov.matrix": ("array", [[1.0, -1.0], [-1.0, 1.0]]),
    "markov.matrix_csv": ("str", ""),
    "markov.initial_law": ("array_or_str", "uniform"),
    "markov.initial_state": ("int", -1),  # >= 0 selects a Dirac start
    "potential.family": ("str", "amplitude"),
    "potential.shape": ("str", "sech2"),
    "potential.amplitude": ("number", -2.0),
    "potential.width": ("number", 1.0),
    "potential.center": ("number", -1.0),  # < 0 means box center
    "potential.mod_shape": ("str", "sech2"),
    "potential.mod_amplitude": ("number", 1.0),
    "potential.mod_width": ("number", 1.0),
    "potential.amplitudes": ("array", [-1.0, 1.0]),
    "potential.shifts": ("array", [0]),
    "solver.dt": ("number", 0.01),
    "solver.order": ("int", 2),
    "solver.epsilon": ("number", 0.0),
    "solver.T": ("number", 2.0),
    "solver.sample_count": ("int", 9),
    "solver.chi_shape": ("str", "gaussian"),
    "solver.chi_amplitude": ("number", 1.0),
    "solver.chi_width": ("number", 1.0),
    "ensemble.N": ("int", 400),
    "ensemble.seed": ("int", 7),
    "ensemble.store_density_matrix": ("bool", False),
    "verify.scale": ("str", "default"),  # "default" (fast) or "full"
}


class ConfigError(ValueError):
    pass


def _parse_value(text: str):
    text = text.strip()
    if text.startswith("["):
        depth = 0
        items, buf = [], ""
        body = text[1:-1] if text.endswith("]") else None
        if body is None:
            raise ConfigError(f"unterminated array: {text!r}")
        for ch in body:
            if ch == "[":
                depth += 1
            elif ch == "]":
                depth -= 1
            if ch == "," and depth == 0:
                items.append(buf)
                buf = ""
            else:
                buf += ch
        if buf.strip():
            items.append(buf)
        return [_parse_value(item) for item in items]
    if text.startswith('"') and text.endswith('"') and len(text) >= 2:
        return text[1:-1]
    if text in ("true", "false"):
        return text == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"cannot parse value {text!r}")


def _strip_comment(line: str) -> str:
    out, in_string = [], False
    for ch in line:
        if ch == '"':
            in_string = not in_string
        if ch == "#" and not in_string:
            break
        out.append(ch)
    return "".join(out)


def _check_type(key: str, value, tag: str):
    ok = {
        "int": lambda v: isinstance(v, int) and not isinstance(v, bool),
        "number": lambda v: isinstance(v, (int, float)) and not isinstance(v, bool),
        "str": lambda v: isinstance(v, str),
        "bool": lambda v: isinstance(v, bool),
        "array": lambda v: isinstance(v, list),
        "array_or_str": lambda v: isinstance(v, (list, str)),
        "choice": lambda v: isinstance(v, str),
    }[tag]
    if not ok(value):
        raise ConfigError(f"key {key!r}: expected {tag}, got {value!r}")


def parse_config(path: str | None = None, text: str | None = None) -> dict:
    """Read, validate and default-fill an experiment config.

    Returns the flat {dotted key: value} mapping.  Violations are collected
    and reported together; unknown keys name their closest known key.
    """
    if text is None:
        if path is None:
            text = ""
        else:
            with open(path) as fh:
                text = fh.read()
    values: dict = {}
    errors: list[str] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw).strip()
        if not line:
            continue
        if "=" not in line:
            errors.append(f"line {lineno}: expected 'key = value', got {raw!r}")
            continue
        key, _, rhs = line.partition("=")
        key = key.strip()
        if key not in KNOWN_KEYS:
            hint = difflib.get_close_matches(key, KNOWN_KEYS, n=1)
            suffix = f" (did you mean {hint[0]!r}?)" if hint else ""
            errors.append(f"line {lineno}: unknown key {key!r}{suffix}")
            continue
        if key in values:
            errors.append(f"line {lineno}: duplicate key {key!r}")
            continue
        try:
            value = _parse_value(rhs)
            _check_type(key, value, KNOWN_KEYS[key][0])
            values[key] = value
        except ConfigError as exc:
            errors.append(f"line {lineno}: {exc}")
    for key, (_tag, default) in KNOWN_KEYS.items():
        values.setdefault(key, default)
    errors.extend(_cross_validate(values))
    if errors:
        raise ConfigError("invalid config:\n  " + "\n  ".join(errors))
    return values


def _matrix_from_config(cfg: dict) -> np.ndarray:
    if cfg["markov.matrix_csv"]:
        return np.loadtxt(cfg["markov.matrix_csv"], delimiter=",", ndmin=2)
    return np.asarray(cfg["markov.matrix"], dtype=float)


def _cross_validate(cfg: dict) -> list[str]:
    errors = []
    if cfg["experiment.kind"] not in EXPERIMENT_KINDS:
        errors.append(f"experiment.kind must be one of {EXPERIMENT_KINDS}")
    if cfg["grid.n"] < 2 or cfg["grid.n"] & (cfg["grid.n"] - 1):
        errors.append("grid.n must be a power of two")
    if cfg["markov.matrix_csv"] and not os.path.exists(cfg["markov.matrix_csv"]):
        errors.append(f"markov.matrix_csv file not found: {cfg['markov.matrix_csv']!r}")
    try:
        A = _matrix_from_config(cfg)
    except Exception as exc:  # unreadable csv etc.
        errors.append(f"markov matrix: {exc}")
        return errors
    m = A.shape[0]
    if cfg["potential.family"] == "amplitude" and len(cfg["potential.amplitudes"]) != m:
        errors.append(
            f"potential.amplitudes has {len(cfg['potential.amplitudes'])} entries "
            f"but markov.matrix has {m} states")
    if cfg["potential.family"] == "translate" and len(cfg["potential.shifts"]) != m:
        errors.append(
            f"potential.shifts has {len(cfg['potential.shifts'])} entries "
            f"but markov.matrix has {m} states")
    law = cfg["markov.initial_law"]
    if isinstance(law, list) and len(law) != m:
        errors.append(f"markov.initial_law has {len(law)} entries for {m} states")
    if cfg["ensemble.N"] < 1:
        errors.append("ensemble.N must be >= 1")
    if cfg["solver.dt"] <= 0:
        errors.append("solver.dt must be positive")
    if cfg["solver.T"] <= 0:
        errors.append("solver.T must be positive")
    if cfg["solver.order"] not in (1, 2):
        errors.append("solver.order must be 1 or 2")
    if cfg["verify.scale"] not in ("default", "full"):
        errors.append("verify.scale must be 'default' or 'full'")
    return errors


def config_hash(cfg: dict) -> str:
    canon = "\n".join(f"{k}={cfg[k]!r}" for k in sorted(cfg))
    return hashlib.sha256(canon.encode()).hexdigest()[:12]


def build_objects(cfg: dict, seed: int | None = None):
    """Instantiate grid, model, family, kernel, solver and ensemble configs."""
    grid = SpatialGrid(cfg["grid.d"], cfg["grid.n"], float(cfg["grid.L"]))
    A = _matrix_from_config(cfg)
    if cfg["markov.initial_state"] >= 0:
        model = MarkovModel(A, initial_law=cfg["markov.initial_state"])
    elif cfg["markov.initial_law"] == "uniform":
        model = MarkovModel(A, initial_law=np.full(A.shape[0], 1.0 / A.shape[0]))
    else:
        model = MarkovModel(A, initial_law=np.asarray(cfg["markov.initial_law"], float))

    center = cfg["potential.center"]
    center = None if center < 0 else center
    base = shape_field(grid, cfg["potential.shape"], cfg["potential.amplitude"],
                       cfg["potential.width"], center)
    if cfg["potential.family"] == "amplitude":
        mod = shape_field(grid, cfg["potential.mod_shape"],
                          cfg["potential.mod_amplitude"],
                          cfg["potential.mod_width"], center)
        family = make_amplitude_family(base, mod, cfg["potential.amplitudes"], grid)
    elif cfg["potential.family"] == "translate":
        family = make_translate_family(base, grid, cfg["potential.shifts"])
    elif cfg["potential.family"] == "none":
        family = PotentialFamily(grid, np.zeros((model.m, grid.size)))
    else:
        raise ConfigError(f"unknown potential.family {cfg['potential.family']!r}")
    if family.m != model.m:
        raise ConfigError("potential family and markov model state counts differ")

    chi = shape_field(grid, cfg["solver.chi_shape"], cfg["solver.chi_amplitude"],
                      cfg["solver.chi_width"], center=0.0)
    kernel = HartreeKernel(grid, chi, epsilon=float(cfg["solver.epsilon"]))

    T = float(cfg["solver.T"])
    dt = float(cfg["solver.dt"])
    count = max(2, cfg["solver.sample_count"])
    raw = np.linspace(0.0, T, count)
    sample_times = np.round(raw / dt) * dt  # snap to the step grid
    sample_times[-1] = np.round(T / dt) * dt
    sample_times = np.unique(sample_times)
    solver_cfg = SolverConfig(dt=dt, sample_times=sample_times,
                              order=cfg["solver.order"],
                              epsilon=float(cfg["solver.epsilon"]))
    ecfg = EnsembleConfig(N=cfg["ensemble.N"],
                          master_seed=cfg["ensemble.seed"] if seed is None else seed,
                          horizon=float(sample_times[-1]),
                          store_density_matrix=cfg["ensemble.store_density_matrix"])
    return grid, model, family, kernel, solver_cfg, ecfg


def _default_initial_field(grid: SpatialGrid) -> WaveField:
    """Unit-mass Gaussian centered at the box middle."""
    L = grid.box_length
    vals = np.ones(grid.size, dtype=complex)
    for c in grid.coordinates():
        x = ((c - L / 2.0 + L / 2.0) % L) - L / 2.0
        vals = vals * np.exp(-x**2 / 2.0)
    vals /= np.sqrt(grid.cell_volume * np.sum(np.abs(vals) ** 2))
    return WaveField(grid, vals)


def run(cfg: dict, out_root: str, seed: int | None = None,
        threads: int | None = None) -> int:
    """Execute the configured experiment; returns the process exit code."""
    kind = cfg["experiment.kind"]
    seed_val = cfg["ensemble.seed"] if seed is None else seed
    out_dir = os.path.join(out_root, f"{kind}-{config_hash(cfg)}-seed{seed_val}")
    os.makedirs(out_dir, exist_ok=True)
    started = time.time()
    checks: dict[str, dict] = {}

    grid, model, family, kernel, solver_cfg, ecfg = build_objects(cfg, seed=seed)
    psi0 = _default_initial_field(grid)

    if kind == "path":
        path = sample_path(model, float(solver_cfg.sample_times[-1]),
                           seed=(ecfg.master_seed, 0))
        out = evolve_path(psi0, family, path, kernel, solver_cfg)
        write_scalars_csv(os.path.join(out_dir, "scalars.csv"), out)
        dump_snapshot(os.path.join(out_dir, "final_snapshot.bin"),
                      out.snapshots[-1], float(out.sample_times[-1]))
        drift = float(np.max(np.abs(out.scalars["l2"] - out.scalars["l2"][0])))
        rel = drift / out.scalars["l2"][0]
        checks["unitarity"] = {"passed": bool(rel <= 1e-10), "relative_drift": rel}
    elif kind == "average":
        g0 = AveragedField(grid, np.vstack([psi0.values * model.initial_law[y]
                                            for y in range(model.m)]))
        series = solve_scalar_averaged(g0, family, model, solver_cfg)
        with open(os.path.join(out_dir, "averaged_field.csv"), "w") as fh:
            fh.write("t,y,l2\n")
            for snap in series:
                for y in range(model.m):
                    l2 = float(np.sqrt(grid.cell_volume
                                       * np.sum(np.abs(snap.g[y]) ** 2)))
                    fh.write(f"{snap.t:.17g},{y},{l2:.17g}\n")
        checks["finite"] = {"passed": True}
    elif kind == "liouville":
        f0 = np.array([model.initial_law[y]
                       * np.outer(psi0.values, psi0.values.conj())
                       for y in range(model.m)])
        series = solve_liouville_averaged(AveragedDensityMatrix(grid, f0),
                                          family, model, solver_cfg)
        write_density_csv(os.path.join(out_dir, "density.csv"), series)
        write_trace_csv(os.path.join(out_dir, "trace.csv"), series)
        from .averaged import psd_check, trace as trace_of

        totals = np.array([trace_of(s)[1] for s in series])
        herm = max(s.hermiticity_residual() for s in series)
        scale = max(float(np.max(np.abs(s.f))) for s in series)
        min_eig = min(float(psd_check(s).min()) for s in series)
        checks["trace_conservation"] = {
            "passed": bool(np.max(np.abs(totals - totals[0]))
                           <= 1e-8 * abs(totals[0])),
            "max_drift": float(np.max(np.abs(totals - totals[0]))),
        }
        checks["hermiticity"] = {"passed": bool(herm <= 1e-12 * scale),
                                 "residual": herm}
        checks["positivity"] = {"passed": bool(min_eig >= -1e-8 * totals[0]),
                                "min_eigenvalue": min_eig}
    elif kind == "ensemble":
        avg, series = run_ensemble(psi0, family, model, kernel, solver_cfg, ecfg,
                                   workers=max(1, threads or 1))
        write_summary_json(os.path.join(out_dir, "summary.json"), avg, series, ecfg)
        from .ensemble import strichartz_orders

        checks["exact_conditioning"] = {
            "passed": bool(np.all(avg.counts.sum(axis=1) == ecfg.N))}
        try:
            checks["spacetime_norms"] = {"passed": True,
                                         **strichartz_orders(series)}
        except ValueError:
            pass  # non-uniform sample times: both-order norms undefined
    elif kind == "spectrum":
        ham = assemble_h(family, model)
        report = eigen_analysis(ham)
        write_spectrum_csv(os.path.join(out_dir, "spectrum.csv"), report)
        checks["upper_half_plane"] = {
            "passed": bool(report.min_imag >= -1e-8 * max(report.norm, 1.0)),
            "min_imag": report.min_imag,
        }
    elif kind == "kb-scan":
        scan = kb_scan(family, model, default_lambda_grid())
        write_scan_csv(os.path.join(out_dir, "scan.csv"), scan)
        checks["invertible"] = {"passed": bool(scan["global_min"] > 0.0),
                                "global_min": scan["global_min"]}
    elif kind == "verify-all":
        from .verify import verify_all

        checks = verify_all(out_dir, scale=cfg["verify.scale"],
                            seed=ecfg.master_seed)
    else:  # pragma: no cover - guarded by config validation
        raise ConfigError(f"unhandled experiment kind {kind!r}")

    # wall-clock info belongs in the manifest, never in deterministic artifacts
    stripped = {k: {kk: vv for kk, vv in entry.items() if kk != "runtime_s"}
                for k, entry in checks.items()}
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        fh.write(build_report(stripped))
    manifest = {
        "config": {k: cfg[k] for k in sorted(cfg)},
        "config_hash": config_hash(cfg),
        "package_version": __version__,
        "numpy_version": np.__version__,
        "python_version": sys.version.split()[0],
        "seed": seed_val,
        "wall_time_s": time.time() - started,
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    passed = all(entry.get("passed", True) for entry in checks.values())
    return 0 if passed else 1


def _cmd_fit_decay(args) -> int:
    """Fit a power law to a column of a scalars CSV."""
    rows = np.genfromtxt(args.input, delimiter=",", names=True)
    if args.column not in rows.dtype.names:
        print(f"column {args.column!r} not in {rows.dtype.names}", file=sys.stderr)
        return 2
    fit = decay_fit(rows["t"], rows[args.column], (args.t_min, args.t_max))
    print(json.dumps({
        "column": args.column, "window": [args.t_min, args.t_max],
        "slope": fit.slope, "intercept": fit.intercept,
        "residual": fit.residual,
        "confidence_halfwidth": fit.confidence_halfwidth,
    }, indent=2, sort_keys=True))
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="stochnls",
        description="Schrodinger dynamics with a Markov-switched potential: "
                    "per-path runs, averaged equations, ensembles, spectra, "
                    "and the verification battery.")
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in EXPERIMENT_KINDS:
        p = sub.add_parser(kind, help=f"run the {kind} experiment")
        p.add_argument("--config", default=None, help="config file (key = value)")
        p.add_argument("--out", default="out", help="output root directory")
        p.add_argument("--seed", type=int, default=None, help="master seed override")
        p.add_argument("--threads", type=int,
                       default=int(os.environ.get("STOCHNLS_THREADS", "1")),
                       help="worker count (env STOCHNLS_THREADS)")
    fit = sub.add_parser("fit-decay", help="power-law fit on a scalars CSV column")
    fit.add_argument("--input", required=True)
    fit.add_argument("--column", default="suml2linf")
    fit.add_argument("--t-min", type=float, required=True)
    fit.add_argument("--t-max", type=float, required=True)
    args = parser.parse_args(argv)

    if args.command == "fit-decay":
        return _cmd_fit_decay(args)
    try:
        cfg = parse_config(args.config)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return 2
    cfg = dict(cfg)
    cfg["experiment.kind"] = args.command
    return run(cfg, args.out, seed=args.seed, threads=args.threads)


if __name__ == "__main__":
    sys.exit(main())
