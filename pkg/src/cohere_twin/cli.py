"""``cohere-twin`` command-line interface.

Every command writes ``manifest.json`` next to its outputs. A manifest can
be passed back as ``--config`` to repeat the run: it stores the resolved
configuration and the inputs (relative to the manifest's directory).
"""

from __future__ import annotations

import argparse
import copy
import json
import os
import re
import sys
from importlib import resources
from pathlib import Path

from . import __version__
from .analysis import (
    AggregationConsistencyError,
    DegenerateDataError,
    EstimatorFailure,
    FitConvergenceError,
    FitResult,
    InitializationError,
    format_visibility_csv,
)
from .geometry import InstrumentConfig, collimation_ok, fringe_period, min_collimation_radius
from .pipeline import AnalysisSettings, extract_visibilities, fit_points
from .report import ReportError, build_report
from .scan import DatasetError, PlanValidationError, ScanPlan, load_dataset, run_scan, save_dataset

__all__ = ["main", "ConfigError", "load_config", "apply_override", "parse_quantity", "BUNDLED_CONFIGS"]

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

SECTIONS = ("mode", "instrument", "source", "scan", "noise", "analysis", "collimation")
COLLIMATION_KEYS = ("delta_y_max_m", "wavelength_m", "radius_R_m")
BUNDLED_CONFIGS = ("spdc", "spdc_noiseless", "thermal_spectrum", "thermal_interferogram")
MANIFEST = "manifest.json"
DATASET_NAME = "dataset"

_UNITS = {
    "m": 1.0, "mm": 1e-3, "um": 1e-6, "µm": 1e-6, "nm": 1e-9,
    "s": 1.0, "ps": 1e-12, "fs": 1e-15, "rad": 1.0, "mrad": 1e-3,
}  # fmt: skip
_QUANTITY = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*(mm|um|µm|nm|m|fs|ps|s|mrad|rad)\s*$")

NUMERICAL_ERRORS = (
    FitConvergenceError,
    EstimatorFailure,
    DegenerateDataError,
    InitializationError,
    AggregationConsistencyError,
)


class ConfigError(ValueError):
    pass


class CommandError(RuntimeError):
    pass


def parse_quantity(text: str):
    """``"20um"`` -> ``2e-05``; plain numbers pass through; otherwise ``None``."""
    m = _QUANTITY.match(text)
    if m:
        return float(m.group(1)) * _UNITS[m.group(2)]
    return None


def _coerce(value):
    if isinstance(value, str):
        q = parse_quantity(value)
        return value if q is None else q
    if isinstance(value, list):
        return [_coerce(v) for v in value]
    if isinstance(value, dict):
        return {k: _coerce(v) for k, v in value.items()}
    return value


def _parse_value(text: str):
    q = parse_quantity(text)
    if q is not None:
        return q
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(config: dict, assignment: str) -> dict:
    """Apply ``a.b.c=value`` to a copy of ``config``."""
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} is not of the form key=value")
    path, _, raw = assignment.partition("=")
    keys = path.strip().split(".")
    if not all(keys):
        raise ConfigError(f"override {assignment!r} has an empty key")
    out = copy.deepcopy(config)
    node = out
    for key in keys[:-1]:
        child = node.setdefault(key, {})
        if not isinstance(child, dict):
            raise ConfigError(f"override {assignment!r}: {key!r} is not a section")
        node = child
    node[keys[-1]] = _parse_value(raw)
    return out


def _bundled(name: str) -> dict:
    text = resources.files("cohere_twin").joinpath("configs", f"{name}.json").read_text()
    return json.loads(text)


def load_config(source: str | None) -> tuple[dict, dict, Path | None]:
    """Return ``(config, manifest_inputs, manifest_dir)`` from a file, manifest or bundled name."""
    if source is None:
        return {}, {}, None
    path = Path(source)
    if path.exists():
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    elif source in BUNDLED_CONFIGS:
        data, path = _bundled(source), None
    else:
        raise ConfigError(f"config {source!r} is neither a file nor one of {BUNDLED_CONFIGS}")
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    if "config" in data and "command" in data:
        return data["config"], data.get("inputs", {}), path.parent if path else None
    return data, {}, None


def _check_sections(config: dict) -> None:
    unknown = set(config) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    for name in SECTIONS[1:]:
        if name in config and not isinstance(config[name], dict):
            raise ConfigError(f"config section {name!r} must be an object")
    extra = set(config.get("collimation", {})) - set(COLLIMATION_KEYS)
    if extra:
        raise ConfigError(f"unknown collimation keys: {sorted(extra)}")


def _resolve_config(args) -> tuple[dict, dict, Path | None]:
    config, inputs, base = load_config(args.config)
    for item in args.set or ():
        config = apply_override(config, item)
    config = _coerce(config)
    _check_sections(config)
    return config, inputs, base


def _plan_from(config: dict) -> ScanPlan:
    return ScanPlan.from_dict({k: config[k] for k in ("mode", "instrument", "source", "scan", "noise") if k in config})


def _settings_from(config: dict) -> AnalysisSettings:
    try:
        return AnalysisSettings.from_dict(config.get("analysis"))
    except (KeyError, TypeError) as exc:
        raise ConfigError(str(exc).strip("'\"")) from None


def _rel(path: Path, base: Path) -> str:
    try:
        return Path(path).resolve().relative_to(base.resolve()).as_posix()
    except ValueError:
        return Path(os.path.relpath(Path(path).resolve(), base.resolve())).as_posix()


def _input_path(args_value, inputs: dict, key: str, base: Path | None) -> Path:
    if args_value is not None:
        return Path(args_value)
    if key in inputs and base is not None:
        return base / inputs[key]
    raise ConfigError(f"--{key} is required")


def _write_manifest(out: Path, command: str, config: dict, inputs: dict, outputs: list[str]) -> None:
    manifest = {
        "command": command,
        "config": config,
        "inputs": inputs,
        "outputs": sorted(outputs + [MANIFEST]),
        "version": __version__,
    }
    (out / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _full_config(dataset, settings: AnalysisSettings, config: dict) -> dict:
    full = dataset.plan.to_dict()
    full["analysis"] = settings.to_dict()
    if "collimation" in config:
        full["collimation"] = config["collimation"]
    return full


def _load_dataset_arg(args, inputs, base):
    path = _input_path(args.dataset, inputs, "dataset", base)
    return path, load_dataset(path)


def cmd_simulate(args) -> dict:
    config, _, _ = _resolve_config(args)
    plan = _plan_from(config)
    settings = _settings_from(config)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    dataset = run_scan(plan)
    csv_path, json_path = save_dataset(dataset, out / DATASET_NAME)
    full = plan.to_dict()
    full["analysis"] = settings.to_dict()
    _write_manifest(out, "simulate", full, {}, [csv_path.name, json_path.name])
    return {"outputs": [csv_path.name, json_path.name], "fingerprint": dataset.fingerprint()}


def cmd_analyze(args) -> dict:
    config, inputs, base = _resolve_config(args)
    settings = _settings_from(config)
    path, dataset = _load_dataset_arg(args, inputs, base)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    points = extract_visibilities(dataset, settings)
    (out / "visibilities.csv").write_text(format_visibility_csv(points))
    ins = {"dataset": _rel(path, out), "dataset_fingerprint": dataset.fingerprint()}
    _write_manifest(out, "analyze", _full_config(dataset, settings, config), ins, ["visibilities.csv"])
    return {"outputs": ["visibilities.csv"], "n_points": len(points)}


def cmd_fit(args) -> dict:
    config, inputs, base = _resolve_config(args)
    settings = _settings_from(config)
    path, dataset = _load_dataset_arg(args, inputs, base)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    ins = {"dataset": _rel(path, out), "dataset_fingerprint": dataset.fingerprint()}
    full = _full_config(dataset, settings, config)
    try:
        points = extract_visibilities(dataset, settings)
        fit = fit_points(points, dataset, settings)
    except NUMERICAL_ERRORS as exc:
        diag = {"error": type(exc).__name__, "message": str(exc)}
        if isinstance(exc, FitConvergenceError):
            diag["last_iterate"] = exc.result.to_dict()
        (out / "diagnostics.json").write_text(json.dumps(diag, indent=2, sort_keys=True) + "\n")
        _write_manifest(out, "fit", full, ins, ["diagnostics.json"])
        raise
    (out / "fit.json").write_text(fit.to_json() + "\n")
    (out / "visibilities.csv").write_text(format_visibility_csv(points))
    _write_manifest(out, "fit", full, ins, ["fit.json", "visibilities.csv"])
    return {"outputs": ["fit.json", "visibilities.csv"], "model": fit.model, "params": fit.params}


def cmd_report(args) -> dict:
    config, inputs, base = _resolve_config(args)
    path, dataset = _load_dataset_arg(args, inputs, base)
    fit_path = _input_path(args.fit, inputs, "fit", base)
    try:
        fit = FitResult.from_json(Path(fit_path).read_text())
    except (OSError, ValueError, KeyError) as exc:
        raise CommandError(f"cannot read fit result {fit_path}: {exc}") from None
    files = build_report(fit, dataset)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    for name in sorted(files):
        (out / name).write_text(files[name])
    settings = AnalysisSettings.from_dict(fit.meta.get("analysis"))
    ins = {"dataset": _rel(path, out), "dataset_fingerprint": dataset.fingerprint(), "fit": _rel(fit_path, out)}
    _write_manifest(out, "report", _full_config(dataset, settings, config), ins, sorted(files))
    return {"outputs": sorted(files)}


def cmd_check_collimation(args) -> dict:
    config, _, _ = _resolve_config(args)
    instrument = InstrumentConfig.from_dict(config.get("instrument", {}))
    col = dict(config.get("collimation", {}))
    for key, flag in (("delta_y_max_m", args.delta_y_max), ("wavelength_m", args.wavelength), ("radius_R_m", args.radius)):
        if flag is not None:
            col[key] = _quantity_arg(flag, key)
    aperture = _quantity_arg(args.aperture, "aperture") if args.aperture is not None else instrument.aperture_Phi
    distance = _quantity_arg(args.distance, "distance") if args.distance is not None else instrument.detector_distance_d
    if "delta_y_max_m" not in col:
        shears = config.get("scan", {}).get("delta_y_m")
        if isinstance(shears, list) and shears:
            col["delta_y_max_m"] = max(abs(float(v)) for v in shears)
    if "wavelength_m" not in col and "source" in config:
        src = config["source"]
        if "lambda0_m" in src:
            col["wavelength_m"] = src["lambda0_m"]
        elif "pump_wavelength_m" in src:
            col["wavelength_m"] = 2.0 * src["pump_wavelength_m"]
    for key in ("delta_y_max_m", "wavelength_m"):
        if key not in col:
            raise ConfigError(f"collimation check needs {key} (flag or config)")
    try:
        r_min = min_collimation_radius(col["delta_y_max_m"], aperture, col["wavelength_m"], distance)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    result = {
        "r_min_m": r_min,
        "delta_y_max_m": col["delta_y_max_m"],
        "aperture_Phi_m": aperture,
        "wavelength_m": col["wavelength_m"],
        "detector_distance_d_m": distance,
    }
    if "radius_R_m" in col:
        R = col["radius_R_m"]
        result["radius_R_m"] = R
        result["fringe_period_m"] = fringe_period(R, col["delta_y_max_m"], col["wavelength_m"], distance)
        result["collimation_ok"] = collimation_ok(R, col["delta_y_max_m"], aperture, col["wavelength_m"], distance)
    if args.output:
        out = Path(args.output)
        out.mkdir(parents=True, exist_ok=True)
        (out / "collimation.json").write_text(json.dumps(result, indent=2, sort_keys=True) + "\n")
        resolved = dict(config)
        inst = instrument.to_dict()
        inst.update(aperture_Phi_m=aperture, detector_distance_d_m=distance)
        resolved["instrument"] = inst
        resolved["collimation"] = {k: col[k] for k in COLLIMATION_KEYS if k in col}
        _write_manifest(out, "check-collimation", resolved, {}, ["collimation.json"])
        result["outputs"] = ["collimation.json"]
    return result


def _quantity_arg(text, name: str) -> float:
    if isinstance(text, (int, float)):
        return float(text)
    q = parse_quantity(text)
    if q is None:
        try:
            return float(text)
        except ValueError:
            raise ConfigError(f"{name}: cannot parse {text!r} as a length") from None
    return q


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cohere-twin", description="Simulate and analyse shearing-interferometer coherence scans.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_output=True):
        p.add_argument("--config", help=f"JSON config, a manifest, or a bundled name {BUNDLED_CONFIGS}")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a dotted config key, e.g. scan.seed=7")
        p.add_argument("-o", "--output", required=needs_output, help="output directory")

    p = sub.add_parser("simulate", help="generate a synthetic dataset")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", help="extract visibilities from a dataset")
    common(p)
    p.add_argument("--dataset", help="dataset path (with or without .csv/.json)")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("fit", help="extract visibilities and fit the coherence model")
    common(p)
    p.add_argument("--dataset", help="dataset path (with or without .csv/.json)")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("report", help="render SVG plots and a JSON summary")
    common(p)
    p.add_argument("--dataset", help="dataset path")
    p.add_argument("--fit", help="fit.json written by the fit command")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("check-collimation", help="minimum wavefront radius for fringe-free detection")
    common(p, needs_output=False)
    p.add_argument("--delta-y-max", help="largest shear, e.g. 1mm")
    p.add_argument("--aperture", help="detector aperture diameter, e.g. 2mm")
    p.add_argument("--wavelength", help="wavelength, e.g. 700nm")
    p.add_argument("--distance", help="distance from C1 to the detector, e.g. 100mm")
    p.add_argument("--radius", help="wavefront radius of curvature to test")
    p.set_defaults(func=cmd_check_collimation)
    return parser


def _fail(code: int, exc: BaseException) -> int:
    message = " ".join(str(exc).split()) or type(exc).__name__
    payload = {"status": "error", "exit_code": code, "error": type(exc).__name__, "message": message}
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)
    return code


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and EXIT_CONFIG
    try:
        result = args.func(args)
    except NUMERICAL_ERRORS as exc:
        return _fail(EXIT_NUMERICAL, exc)
    except (ConfigError, PlanValidationError, KeyError, TypeError) as exc:
        return _fail(EXIT_CONFIG, exc)
    except (DatasetError, ReportError, CommandError, OSError) as exc:
        return _fail(EXIT_RUNTIME, exc)
    except ValueError as exc:
        return _fail(EXIT_CONFIG, exc)
    payload = {"status": "ok", "command": args.command}
    payload.update(result)
    print(json.dumps(payload, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
