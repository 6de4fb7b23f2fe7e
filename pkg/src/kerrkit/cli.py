"""Command-line entry point: ``kerrkit run|validate|spectrum``."""

from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import math
import os
import re
import sys
import warnings
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .experiments import ConfigError, ExperimentConfig, run_experiment
from .fock import TruncationError, required_dim
from .io import csv_text, json_text
from .model import TWO_PI, SingularityError, SystemParams, derived_params, h_kcq_matrix
from .spectrum import SPECTRUM_HEADER, SpectrumError, kcq_gap, kcq_spectrum_vs_alpha, spectrum_rows, \
    transition_frequencies
from .dynamics import RK4_STABILITY

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_VALIDATION = 2
EXIT_CONVERGENCE = 3


class CLIError(Exception):
    def __init__(self, code: str, message: str, field_path: str | None = None, exit_code: int = EXIT_VALIDATION):
        super().__init__(message)
        self.code = code
        self.message = message
        self.field_path = field_path
        self.exit_code = exit_code

    def to_json(self) -> str:
        out = {"code": self.code, "message": self.message}
        if self.field_path is not None:
            out["field_path"] = self.field_path
        return json.dumps(out, sort_keys=True)


def load_schema() -> dict:
    text = resources.files("kerrkit").joinpath("schema/config.schema.json").read_text(encoding="utf-8")
    return json.loads(text)


# --- config loading and validation ---------------------------------------------------


def _error_path(err: jsonschema.ValidationError) -> str:
    parts = [str(p) for p in err.absolute_path]
    if err.validator == "required":
        m = re.match(r"'([^']+)' is a required property", err.message)
        if m:
            parts.append(m.group(1))
    return ".".join(parts) if parts else "$"


def read_config(path: str | Path) -> tuple[dict, bytes]:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise CLIError("config_unreadable", str(exc), "config") from None
    try:
        cfg = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CLIError("config_parse", f"invalid JSON: {exc}", "$") from None
    return cfg, raw


def schema_errors(cfg: dict) -> list[CLIError]:
    validator = jsonschema.Draft202012Validator(load_schema())
    errs = sorted(validator.iter_errors(cfg), key=lambda e: (list(map(str, e.absolute_path)), e.message))
    return [CLIError("schema", e.message, _error_path(e)) for e in errs]


def _params(cfg: dict) -> SystemParams:
    try:
        return SystemParams.from_config(cfg["params"])
    except KeyError as exc:
        raise CLIError("schema", f"unknown parameter {exc.args[0]!r}", f"params.{exc.args[0]}") from None
    except (TypeError, ValueError) as exc:
        raise CLIError("physics", str(exc), "params") from None


def _max_alpha_sq(cfg: dict, params: SystemParams) -> float:
    values = [params.alpha_sq]
    sweep = cfg.get("sweep", {})
    for key in ("alpha_sq",):
        values += [float(v) for v in sweep.get(key, []) if v is not None]
    values += [float(v) ** 2 for v in sweep.get("alpha", []) if v is not None]
    spec = cfg.get("spectrum", {})
    values += [float(v) for v in spec.get("alpha_sq", [])]
    if params.K:
        values += [float(v) / abs(params.K) for v in spec.get("eps2_MHz", [])]
    return max(values)


def physics_checks(cfg: dict) -> tuple[list[CLIError], list[dict]]:
    """Truncation safety, resonance-denominator guards and RK4 step stability."""
    errors: list[CLIError] = []
    notes: list[dict] = []
    params = _params(cfg)
    a2 = _max_alpha_sq(cfg, params)
    dims = [("numerics.dim", cfg.get("numerics", {}).get("dim")), ("spectrum.dim", cfg.get("spectrum", {}).get("dim"))]
    for path, dim in dims:
        if dim is not None and dim < required_dim(math.sqrt(a2)):
            errors.append(CLIError("truncation",
                                   f"dim {dim} is below the {required_dim(math.sqrt(a2))} needed at alpha^2 = {a2:g}",
                                   path))
    if params.g3 is not None and params.g4 is not None and params.g is not None:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            try:
                derived_params(params.g3, params.g4, params.g, params.omega_a * 1e3, params.omega_b * 1e3,
                               complex(params.eps2 or 0.0))
            except SingularityError as exc:
                notes.append({"code": "singularity", "message": str(exc), "field_path": "params"})
        for w in caught:
            notes.append({"code": "dispersive", "message": str(w.message), "field_path": "params.g_MHz"})
    dt = cfg.get("numerics", {}).get("dt")
    if dt is not None:
        scale = cfg.get("scale_factor", 50.0) if cfg.get("param_set", "scaled") == "scaled" else 1.0
        dim = cfg.get("numerics", {}).get("dim") or max(16, required_dim(math.sqrt(a2)))
        h = h_kcq_matrix(int(dim), TWO_PI * params.K * scale, TWO_PI * params.K * scale * a2)
        norm = float(np.linalg.norm(h, 2))
        if dt * norm > RK4_STABILITY:
            errors.append(CLIError("dt_stability",
                                   f"dt * ||H|| = {dt * norm:.3g} exceeds {RK4_STABILITY}; use dt <= "
                                   f"{RK4_STABILITY / norm:.3g}", "numerics.dt"))
    return errors, notes


def validate_config(cfg: dict) -> tuple[list[CLIError], list[dict]]:
    errs = schema_errors(cfg)
    if errs:
        return errs, []
    return physics_checks(cfg)


# --- run plumbing -------------------------------------------------------------------


def resolve_seed(flag: int | None, cfg: dict) -> int:
    if flag is not None:
        return int(flag)
    env = os.environ.get("KERRKIT_SEED")
    if env not in (None, ""):
        try:
            return int(env)
        except ValueError:
            raise CLIError("seed", f"KERRKIT_SEED={env!r} is not an integer", "KERRKIT_SEED") from None
    return int(cfg.get("seed", 0))


def _timestamp(flag: str | None) -> str:
    if flag:
        if not re.fullmatch(r"[A-Za-z0-9\-]+", flag):
            raise CLIError("timestamp", "timestamp may only contain letters, digits and '-'", "--timestamp")
        return flag
    return _dt.datetime.now(_dt.timezone.utc).strftime("%Y%m%dT%H%M%SZ")


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    config_path: str
    config_sha256: str
    seed: int
    version: str
    start: str
    end: str = ""
    outputs: list = field(default_factory=list)
    exit_code: int = 0
    timings: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def _write_outputs(out_dir: Path, files: dict[str, str]) -> list[str]:
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name, text in files.items():
        (out_dir / name).write_bytes(text.encode("utf-8"))
        written.append(name)
    return written


def _emit_error(err: CLIError) -> int:
    print(err.to_json(), file=sys.stderr)
    return err.exit_code


def cmd_run(args) -> int:
    start = _now()
    cfg, raw = read_config(args.config)
    errs, notes = validate_config(cfg)
    if errs:
        raise errs[0]
    if cfg.get("experiment") not in (None, args.experiment):
        raise CLIError("experiment_mismatch",
                       f"config names {cfg['experiment']!r} but {args.experiment!r} was requested", "experiment")
    cfg = dict(cfg)
    cfg["experiment"] = args.experiment
    cfg["seed"] = resolve_seed(args.seed, cfg)
    if args.mode:
        cfg["mode"] = args.mode
    if args.param_set:
        cfg["param_set"] = args.param_set
    try:
        config = ExperimentConfig.from_dict(cfg)
    except ConfigError as exc:
        raise CLIError("config", str(exc), exc.field_path) from None
    try:
        report = run_experiment(config, jobs=args.jobs)
    except TruncationError as exc:
        raise CLIError("truncation", str(exc), "numerics.dim") from None
    except ConfigError as exc:
        raise CLIError("config", str(exc), exc.field_path) from None

    stem = f"{args.experiment}_{_timestamp(args.timestamp)}_{config.seed}"
    files = {f"{stem}_{name}.csv": csv_text(t.header, t.rows) for name, t in report.tables.items()}
    body = report.to_dict(include_tables=False)
    body["data_files"] = sorted(files)
    files[f"{stem}_report.json"] = json_text(body)
    out_dir = Path(args.out)
    written = _write_outputs(out_dir, files)
    code = EXIT_OK if report.converged else EXIT_CONVERGENCE
    manifest = RunManifest(str(args.config), hashlib.sha256(raw).hexdigest(), config.seed, __version__, start,
                           _now(), sorted(written), code, dict(report.timings))
    (out_dir / f"{stem}_manifest.json").write_bytes(json_text(manifest.to_dict()).encode("utf-8"))
    for n in notes:
        print(json.dumps(n, sort_keys=True), file=sys.stderr)
    if code == EXIT_CONVERGENCE:
        failed = [c["name"] for c in report.convergence if not c["converged"]]
        print(CLIError("convergence", f"convergence recheck failed for {', '.join(failed)}", "numerics",
                       EXIT_CONVERGENCE).to_json(), file=sys.stderr)
    return code


def cmd_validate(args) -> int:
    cfg, _ = read_config(args.config)
    errs, notes = validate_config(cfg)
    report = {"valid": not errs,
              "errors": [{"code": e.code, "message": e.message, "field_path": e.field_path} for e in errs],
              "warnings": notes}
    sys.stdout.write(json_text(report))
    return EXIT_VALIDATION if errs else EXIT_OK


def spectrum_tables(cfg: dict) -> dict:
    """Level table, gap table and the alpha^2 grid for a ``spectrum`` config section."""
    params = _params(cfg)
    sec = cfg.get("spectrum")
    if not sec:
        raise CLIError("schema", "a 'spectrum' section is required", "spectrum")
    if "alpha_sq" in sec:
        grid = [float(v) for v in sec["alpha_sq"]]
    else:
        grid = [float(v) / params.K for v in sec["eps2_MHz"]]
    if not grid:
        raise CLIError("schema", "spectrum grid is empty", "spectrum")
    n_levels = int(sec.get("n_levels", 6))
    dim = sec.get("dim")
    try:
        lines = kcq_spectrum_vs_alpha(params, grid, n_levels, dim)
    except (SpectrumError, TruncationError) as exc:
        raise CLIError("spectrum", str(exc), "spectrum") from None
    gap_rows = []
    for a2 in grid:
        trans = transition_frequencies(params, [a2], 2, dim)
        keep = {r["from_plus"]: r["detuning_MHz"] for r in trans}
        gap_rows.append((a2, a2 * params.K, kcq_gap(params, a2, dim), keep.get("parity_preserving", math.nan),
                         keep.get("parity_changing", math.nan)))
    return {
        "levels": (SPECTRUM_HEADER, spectrum_rows(lines)),
        "gap": (("alpha_sq", "eps2_MHz", "E_gap_MHz", "E_gap_parity_preserving_MHz",
                 "E_gap_parity_changing_MHz"), gap_rows),
        "ambiguous": int(sum(int(np.sum(line.ambiguous)) for line in lines)),
    }


def cmd_spectrum(args) -> int:
    start = _now()
    cfg, raw = read_config(args.config)
    errs, notes = validate_config(cfg)
    if errs:
        raise errs[0]
    seed = resolve_seed(args.seed, cfg)
    tables = spectrum_tables(cfg)
    stem = f"spectrum_{_timestamp(args.timestamp)}_{seed}"
    files = {f"{stem}_levels.csv": csv_text(*tables["levels"]), f"{stem}_gap.csv": csv_text(*tables["gap"])}
    files[f"{stem}_report.json"] = json_text({"experiment": "spectrum", "params": cfg["params"],
                                              "spectrum": cfg["spectrum"], "seed": seed,
                                              "ambiguous_assignments": tables["ambiguous"],
                                              "data_files": sorted(files)})
    out_dir = Path(args.out)
    written = _write_outputs(out_dir, files)
    manifest = RunManifest(str(args.config), hashlib.sha256(raw).hexdigest(), seed, __version__, start, _now(),
                           sorted(written), EXIT_OK)
    (out_dir / f"{stem}_manifest.json").write_bytes(json_text(manifest.to_dict()).encode("utf-8"))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kerrkit", description="Kerr-cat qubit simulations and virtual experiments.")
    p.add_argument("--version", action="version", version=f"kerrkit {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment from a config file")
    run.add_argument("experiment")
    run.add_argument("--config", required=True)
    run.add_argument("--out", default=".")
    run.add_argument("--seed", type=int, default=None)
    mode = run.add_mutually_exclusive_group()
    mode.add_argument("--exact", dest="mode", action="store_const", const="exact")
    mode.add_argument("--sampled", dest="mode", action="store_const", const="sampled")
    pset = run.add_mutually_exclusive_group()
    pset.add_argument("--scaled", dest="param_set", action="store_const", const="scaled")
    pset.add_argument("--paper-params", dest="param_set", action="store_const", const="paper")
    run.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    run.add_argument("--timestamp", default=None, help="label used in output file names (default: UTC now)")
    run.set_defaults(func=cmd_run)

    val = sub.add_parser("validate", help="schema and physics checks for a config file")
    val.add_argument("--config", required=True)
    val.set_defaults(func=cmd_validate)

    spec = sub.add_parser("spectrum", help="KCQ spectrum versus cat size")
    spec.add_argument("--config", required=True)
    spec.add_argument("--out", default=".")
    spec.add_argument("--seed", type=int, default=None)
    spec.add_argument("--timestamp", default=None)
    spec.set_defaults(func=cmd_spectrum)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CLIError as err:
        return _emit_error(err)
    except Exception as exc:  # noqa: BLE001 - surfaced as machine-readable JSON
        return _emit_error(CLIError("runtime", f"{type(exc).__name__}: {exc}", None, EXIT_RUNTIME))


if __name__ == "__main__":
    sys.exit(main())
