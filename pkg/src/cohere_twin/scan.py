"""Synthetic shear/delay sweeps and their on-disk format.

A dataset is a CSV table plus a JSON sidecar holding the full plan, the
column dtypes and the format version. Every shear point ``i`` draws its
noise from the stream keyed by ``(seed, i)``, so datasets are identical
however the points are scheduled.
"""

from __future__ import annotations

import hashlib
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._rng import point_rng
from .geometry import SPEED_OF_LIGHT, InstrumentConfig, max_delay, max_shear
from .quantum import CoincidenceRecord, QuantumSourceSpec, g_spatial
from .thermal import SpectrumTrace, ThermalSourceSpec, interferogram_model, spectrum_model

__all__ = [
    "MODES",
    "FORMAT_VERSION",
    "NoiseSpec",
    "ScanPlan",
    "ScanDataset",
    "PlanValidationError",
    "DatasetError",
    "MissingMetadataError",
    "UnsupportedFormatError",
    "DatasetParseError",
    "default_tau_grid",
    "run_scan",
    "save_dataset",
    "load_dataset",
]

MODES = ("spdc_coincidence", "thermal_spectrum", "thermal_interferogram")
FORMAT_VERSION = "1"
THREADS_ENV = "COHERE_TWIN_THREADS"

COLUMNS = {
    "spdc_coincidence": (("tau_s", "float64"), ("delta_y_m", "float64"), ("counts", None), ("window_pairs", "int64")),
    "thermal_spectrum": (
        ("delta_y_m", "float64"),
        ("tau_s", "float64"),
        ("wavelength_m", "float64"),
        ("intensity", "float64"),
    ),
    "thermal_interferogram": (("tau_s", "float64"), ("delta_y_m", "float64"), ("intensity", "float64")),
}


class PlanValidationError(ValueError):
    def __init__(self, message: str, offending=()):
        super().__init__(message)
        self.offending = list(offending)


class DatasetError(Exception):
    pass


class MissingMetadataError(DatasetError):
    pass


class UnsupportedFormatError(DatasetError):
    pass


class DatasetParseError(DatasetError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class NoiseSpec:
    counting: str = "none"
    spectrometer_sigma: float = 0.0
    rate_scale: float = 1.0

    def __post_init__(self):
        if self.counting not in ("none", "binomial"):
            raise PlanValidationError(f"counting must be 'none' or 'binomial', got {self.counting!r}")
        if not self.spectrometer_sigma >= 0:
            raise PlanValidationError("spectrometer_sigma must be >= 0")
        if self.counting == "binomial" and not (self.rate_scale >= 1 and float(self.rate_scale).is_integer()):
            raise PlanValidationError("binomial counting needs an integer rate_scale >= 1")
        if not self.rate_scale > 0:
            raise PlanValidationError("rate_scale must be positive")

    def to_dict(self) -> dict:
        return {"counting": self.counting, "spectrometer_sigma": self.spectrometer_sigma, "rate_scale": self.rate_scale}


def default_tau_grid(wavelength: float, span_periods: float = 5.0, samples_per_period: int = 30) -> tuple:
    """Delays covering ``+/- span_periods`` carrier periods, endpoints included."""
    period = wavelength / SPEED_OF_LIGHT
    n = int(round(2 * span_periods * samples_per_period))
    return tuple(float(t) for t in (np.arange(n + 1) - n / 2) * (period / samples_per_period))


def _wavelength_grid(lo: float, hi: float, step: float) -> np.ndarray:
    n = int(round((hi - lo) / step)) + 1
    return lo + step * np.arange(n)


@dataclass(frozen=True)
class ScanPlan:
    """Everything needed to regenerate a dataset bit for bit.

    ``tau_grid`` applies to the two interferogram modes and defaults to
    +/- 5 carrier periods at 30 samples per period. ``tau_fixed`` is the
    delay of a spectral sweep. ``visibility_scale`` multiplies all fringe
    contrast to mimic instrumental loss.
    """

    mode: str
    delta_y_values: tuple
    source: QuantumSourceSpec | ThermalSourceSpec
    instrument: InstrumentConfig = field(default_factory=InstrumentConfig)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    seed: int = 0
    tau_grid: tuple | None = None
    tau_fixed: float = 93e-15
    wavelength_range: tuple = (600e-9, 760e-9, 0.1e-9)
    resolution_fwhm: float = 1e-9
    visibility_scale: float = 1.0
    phase_phi: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "delta_y_values", tuple(float(v) for v in self.delta_y_values))
        if self.mode not in MODES:
            raise PlanValidationError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.mode == "spdc_coincidence" and not isinstance(self.source, QuantumSourceSpec):
            raise PlanValidationError("spdc_coincidence needs a QuantumSourceSpec")
        if self.mode != "spdc_coincidence" and not isinstance(self.source, ThermalSourceSpec):
            raise PlanValidationError(f"{self.mode} needs a ThermalSourceSpec")
        if self.tau_grid is None and self.mode != "thermal_spectrum":
            object.__setattr__(self, "tau_grid", default_tau_grid(self.carrier_wavelength))
        if self.tau_grid is not None:
            object.__setattr__(self, "tau_grid", tuple(float(t) for t in self.tau_grid))
        object.__setattr__(self, "wavelength_range", tuple(float(v) for v in self.wavelength_range))
        self.validate()

    @property
    def carrier_wavelength(self) -> float:
        if isinstance(self.source, QuantumSourceSpec):
            return self.source.downconv_wavelength_lambda0
        return self.source.lambda0

    @property
    def wavelength_grid(self) -> np.ndarray:
        return _wavelength_grid(*self.wavelength_range)

    @property
    def cardinality(self) -> int:
        per_point = self.wavelength_grid.size if self.mode == "thermal_spectrum" else len(self.tau_grid)
        return len(self.delta_y_values) * per_point

    def validate(self) -> None:
        if not self.delta_y_values:
            raise PlanValidationError("delta_y_values must not be empty")
        limit = max_shear(self.instrument.walkoff_D)
        bad = [v for v in self.delta_y_values if not (math.isfinite(v) and abs(v) < limit)]
        if bad:
            raise PlanValidationError(
                f"delta_y values not realisable with D={self.instrument.walkoff_D} m (|dy| < {limit:.6g} m): {bad}",
                bad,
            )
        tmax = max_delay(self.instrument.walkoff_D)
        taus = list(self.tau_grid or ()) + ([self.tau_fixed] if self.mode == "thermal_spectrum" else [])
        bad_tau = [t for t in taus if not (math.isfinite(t) and abs(t) < tmax)]
        if bad_tau:
            raise PlanValidationError(f"delays not realisable (|tau| < {tmax:.6g} s): {bad_tau[:10]}", bad_tau)
        if self.mode == "thermal_spectrum":
            lo, hi, step = self.wavelength_range
            if not (0 < lo < hi and step > 0):
                raise PlanValidationError("wavelength_range must satisfy 0 < min < max and step > 0")
            if not self.resolution_fwhm >= 0:
                raise PlanValidationError("resolution_fwhm must be >= 0")
        if not 0 <= self.visibility_scale <= 1:
            raise PlanValidationError("visibility_scale must lie in [0, 1]")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or self.seed < 0:
            raise PlanValidationError("seed must be a non-negative integer")

    def to_dict(self) -> dict:
        scan = {"delta_y_m": list(self.delta_y_values), "seed": self.seed, "visibility_scale": self.visibility_scale}
        if self.mode == "thermal_spectrum":
            lo, hi, step = self.wavelength_range
            scan.update(
                tau_fixed_s=self.tau_fixed,
                wavelength_min_m=lo,
                wavelength_max_m=hi,
                wavelength_step_m=step,
                resolution_fwhm_m=self.resolution_fwhm,
            )
        else:
            scan["tau_s"] = list(self.tau_grid)
            if self.mode == "thermal_interferogram":
                scan["phase_rad"] = self.phase_phi
        source = self.source.to_dict()
        return {
            "mode": self.mode,
            "instrument": self.instrument.to_dict(),
            "source": source,
            "scan": scan,
            "noise": self.noise.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ScanPlan":
        """Build a plan from the config layout; unknown keys are rejected."""
        allowed = {"mode", "instrument", "source", "scan", "noise"}
        unknown = set(data) - allowed
        if unknown:
            raise PlanValidationError(f"unknown plan sections: {sorted(unknown)}")
        mode = data.get("mode")
        if mode not in MODES:
            raise PlanValidationError(f"mode must be one of {MODES}, got {mode!r}")
        try:
            instrument = InstrumentConfig.from_dict(data.get("instrument", {}))
            src = data.get("source", {})
            source = QuantumSourceSpec.from_dict(src) if mode == "spdc_coincidence" else ThermalSourceSpec.from_dict(src)
            noise_d = dict(data.get("noise", {}))
            bad_noise = set(noise_d) - {"counting", "spectrometer_sigma", "rate_scale"}
            if bad_noise:
                raise KeyError(f"unknown noise keys: {sorted(bad_noise)}")
            noise = NoiseSpec(**noise_d)
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, PlanValidationError):
                raise
            raise PlanValidationError(str(exc)) from exc

        scan = dict(data.get("scan", {}))
        known = {
            "delta_y_m", "seed", "visibility_scale", "tau_s", "phase_rad", "tau_fixed_s",
            "wavelength_min_m", "wavelength_max_m", "wavelength_step_m", "resolution_fwhm_m",
            "tau_span_periods", "samples_per_period",
        }  # fmt: skip
        unknown = set(scan) - known
        if unknown:
            raise PlanValidationError(f"unknown scan keys: {sorted(unknown)}")
        dy = scan.get("delta_y_m")
        if isinstance(dy, dict):
            extra = set(dy) - {"start", "stop", "step"}
            if extra:
                raise PlanValidationError(f"unknown delta_y_m range keys: {sorted(extra)}")
            n = int(round((dy["stop"] - dy["start"]) / dy["step"])) + 1
            dy = [dy["start"] + i * dy["step"] for i in range(n)]
        if dy is None:
            raise PlanValidationError("scan.delta_y_m is required")
        kwargs = dict(
            mode=mode,
            delta_y_values=tuple(dy),
            source=source,
            instrument=instrument,
            noise=noise,
            seed=scan.get("seed", 0),
            visibility_scale=float(scan.get("visibility_scale", 1.0)),
        )
        if mode == "thermal_spectrum":
            kwargs["tau_fixed"] = float(scan.get("tau_fixed_s", 93e-15))
            kwargs["wavelength_range"] = (
                scan.get("wavelength_min_m", 600e-9),
                scan.get("wavelength_max_m", 760e-9),
                scan.get("wavelength_step_m", 0.1e-9),
            )
            kwargs["resolution_fwhm"] = float(scan.get("resolution_fwhm_m", 1e-9))
        else:
            if "tau_s" in scan:
                kwargs["tau_grid"] = tuple(scan["tau_s"])
            else:
                lam = source.downconv_wavelength_lambda0 if mode == "spdc_coincidence" else source.lambda0
                kwargs["tau_grid"] = default_tau_grid(
                    lam, scan.get("tau_span_periods", 5.0), int(scan.get("samples_per_period", 30))
                )
            kwargs["phase_phi"] = float(scan.get("phase_rad", 0.0))
        return cls(**kwargs)


@dataclass(eq=False)
class ScanDataset:
    plan: ScanPlan
    table: dict
    format_version: str = FORMAT_VERSION

    def __post_init__(self):
        names = [c for c, _ in COLUMNS[self.plan.mode]]
        if list(self.table) != names:
            raise DatasetError(f"columns {list(self.table)} do not match {names}")
        lengths = {len(v) for v in self.table.values()}
        if len(lengths) > 1:
            raise DatasetError("columns differ in length")
        if self.n_records != self.plan.cardinality:
            raise DatasetError(f"{self.n_records} records but the plan defines {self.plan.cardinality}")

    @property
    def mode(self) -> str:
        return self.plan.mode

    @property
    def n_records(self) -> int:
        return len(next(iter(self.table.values())))

    def __eq__(self, other) -> bool:
        if not isinstance(other, ScanDataset):
            return NotImplemented
        return (
            self.format_version == other.format_version
            and self.plan.to_dict() == other.plan.to_dict()
            and list(self.table) == list(other.table)
            and all(
                self.table[k].dtype == other.table[k].dtype and np.array_equal(self.table[k], other.table[k])
                for k in self.table
            )
        )

    def _points(self):
        n = len(self.plan.delta_y_values)
        per = self.n_records // n if n else 0
        for i, value in enumerate(self.plan.delta_y_values):
            yield value, slice(i * per, (i + 1) * per)

    def coincidence_records(self) -> list[CoincidenceRecord]:
        t = self.table
        counts = t["counts"]
        cast = int if counts.dtype.kind == "i" else float
        return [
            CoincidenceRecord(float(t["tau_s"][j]), float(t["delta_y_m"][j]), cast(counts[j]), int(t["window_pairs"][j]), self.plan.seed)
            for j in range(self.n_records)
        ]

    def interferograms(self) -> list[tuple[float, np.ndarray, np.ndarray]]:
        """``(delta_y, tau, signal)`` per shear; SPDC signal is counts / pairs."""
        out = []
        for dy, sl in self._points():
            if self.mode == "spdc_coincidence":
                signal = self.table["counts"][sl] / self.table["window_pairs"][sl]
            else:
                signal = self.table["intensity"][sl]
            out.append((dy, self.table["tau_s"][sl], np.asarray(signal, dtype=float)))
        return out

    def spectrum_traces(self) -> list[SpectrumTrace]:
        if self.mode != "thermal_spectrum":
            raise DatasetError("spectrum traces exist only in thermal_spectrum datasets")
        return [
            SpectrumTrace(self.table["wavelength_m"][sl], self.table["intensity"][sl], float(self.table["tau_s"][sl][0]), dy)
            for dy, sl in self._points()
        ]

    def sidecar(self) -> dict:
        return {
            "format_version": self.format_version,
            "plan": self.plan.to_dict(),
            "seed": self.plan.seed,
            "columns": [{"name": k, "dtype": str(v.dtype)} for k, v in self.table.items()],
            "n_rows": self.n_records,
        }

    def fingerprint(self) -> str:
        """SHA-256 over the serialised sidecar and table."""
        h = hashlib.sha256()
        h.update(_sidecar_text(self, "").encode())
        h.update(_csv_text(self).encode())
        return h.hexdigest()


def _threads() -> int:
    raw = os.environ.get(THREADS_ENV, "0")
    try:
        n = int(raw)
    except ValueError:
        n = 0
    return n if n > 0 else (os.cpu_count() or 1)


def _simulate_point(plan: ScanPlan, i: int, dy: float) -> dict:
    rng = point_rng(plan.seed, i)
    noise = plan.noise
    if plan.mode == "spdc_coincidence":
        tau = np.asarray(plan.tau_grid, dtype=float)
        g = plan.visibility_scale * g_spatial(dy, plan.source)
        p = np.clip(0.5 + 0.5 * g * np.cos(plan.source.omega0 * tau), 0.0, 1.0)
        pairs = int(noise.rate_scale)
        counts = rng.binomial(pairs, p).astype(np.int64) if noise.counting == "binomial" else p * pairs
        return {"tau_s": tau, "delta_y_m": np.full(tau.size, dy), "counts": counts, "window_pairs": np.full(tau.size, pairs, dtype=np.int64)}

    if plan.mode == "thermal_interferogram":
        tau, intensity = interferogram_model(plan.tau_grid, dy, plan.phase_phi, plan.source, plan.visibility_scale)
        if noise.counting == "binomial":
            n = int(noise.rate_scale)
            intensity = 2.0 * rng.binomial(n, np.clip(intensity / 2.0, 0.0, 1.0)) / n
        return {"tau_s": tau, "delta_y_m": np.full(tau.size, dy), "intensity": np.asarray(intensity, dtype=float)}

    trace = spectrum_model(
        plan.wavelength_grid, plan.tau_fixed, dy, plan.source, plan.resolution_fwhm or None, plan.visibility_scale
    )
    intensity = trace.intensity
    if noise.spectrometer_sigma > 0:
        intensity = np.clip(intensity * (1.0 + noise.spectrometer_sigma * rng.standard_normal(intensity.size)), 0.0, None)
    n = intensity.size
    return {
        "delta_y_m": np.full(n, dy),
        "tau_s": np.full(n, plan.tau_fixed),
        "wavelength_m": trace.wavelength_grid,
        "intensity": intensity,
    }


def run_scan(plan: ScanPlan) -> ScanDataset:
    """Generate every shear point of ``plan``.

    Points run on up to ``COHERE_TWIN_THREADS`` threads (0 or unset = one
    per CPU); the output does not depend on the thread count.
    """
    plan.validate()
    jobs = list(enumerate(plan.delta_y_values))
    workers = min(_threads(), len(jobs))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda job: _simulate_point(plan, *job), jobs))
    else:
        parts = [_simulate_point(plan, i, dy) for i, dy in jobs]
    table = {}
    for name, dtype in COLUMNS[plan.mode]:
        arrays = [np.asarray(p[name]) for p in parts]
        col = np.concatenate(arrays) if arrays else np.array([])
        table[name] = col.astype(dtype) if dtype else col
    if plan.mode == "spdc_coincidence" and plan.noise.counting == "none":
        table["counts"] = table["counts"].astype(np.float64)
    return ScanDataset(plan, table)


def _paths(path) -> tuple[Path, Path]:
    p = Path(path)
    if p.suffix in (".csv", ".json"):
        p = p.with_suffix("")
    return p.with_name(p.name + ".csv"), p.with_name(p.name + ".json")


def _format(value, kind: str) -> str:
    return str(int(value)) if kind == "i" else f"{value:.17g}"


def _csv_text(ds: ScanDataset) -> str:
    buf = io.StringIO()
    names = list(ds.table)
    buf.write(",".join(names) + "\n")
    kinds = [ds.table[k].dtype.kind for k in names]
    cols = [ds.table[k].tolist() for k in names]
    for row in zip(*cols):
        buf.write(",".join(_format(v, k) for v, k in zip(row, kinds)) + "\n")
    return buf.getvalue()


def _sidecar_text(ds: ScanDataset, csv_name: str) -> str:
    meta = ds.sidecar()
    meta["csv"] = csv_name
    return json.dumps(meta, indent=2, sort_keys=True) + "\n"


def save_dataset(ds: ScanDataset, path) -> tuple[Path, Path]:
    """Write ``<name>.csv`` and ``<name>.json``; returns both paths."""
    csv_path, json_path = _paths(path)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    csv_path.write_text(_csv_text(ds))
    json_path.write_text(_sidecar_text(ds, csv_path.name))
    return csv_path, json_path


def load_dataset(path) -> ScanDataset:
    csv_path, json_path = _paths(path)
    if not json_path.exists():
        raise MissingMetadataError(f"sidecar {json_path} not found")
    try:
        meta = json.loads(json_path.read_text())
    except json.JSONDecodeError as exc:
        raise DatasetParseError(f"sidecar is not valid JSON: {exc.msg}", exc.lineno) from None
    version = meta.get("format_version")
    if version != FORMAT_VERSION:
        raise UnsupportedFormatError(f"format_version {version!r} is not supported (expected {FORMAT_VERSION!r})")
    for key in ("plan", "columns", "n_rows"):
        if key not in meta:
            raise MissingMetadataError(f"sidecar lacks {key!r}")
    plan = ScanPlan.from_dict(meta["plan"])
    if meta.get("seed", plan.seed) != plan.seed:
        raise DatasetError("sidecar seed disagrees with the plan seed")
    if not csv_path.exists():
        raise DatasetError(f"table {csv_path} not found")

    names = [c["name"] for c in meta["columns"]]
    dtypes = [np.dtype(c["dtype"]) for c in meta["columns"]]
    lines = csv_path.read_text().splitlines()
    if not lines or lines[0].split(",") != names:
        raise DatasetParseError(f"header does not match sidecar columns {names}", 1)
    parsers = [int if dt.kind == "i" else float for dt in dtypes]
    columns = [[] for _ in names]
    for line_no, line in enumerate(lines[1:], start=2):
        fields = line.split(",")
        if len(fields) != len(names):
            raise DatasetParseError(f"expected {len(names)} fields, got {len(fields)}", line_no)
        try:
            for col, parse, text in zip(columns, parsers, fields):
                col.append(parse(text))
        except ValueError as exc:
            raise DatasetParseError(str(exc), line_no) from None
    if len(lines) - 1 != meta["n_rows"]:
        raise DatasetParseError(f"expected {meta['n_rows']} rows, found {len(lines) - 1}", len(lines))
    table = {n: np.array(c, dtype=dt) for n, c, dt in zip(names, columns, dtypes)}
    try:
        return ScanDataset(plan, table, version)
    except DatasetError as exc:
        raise DatasetParseError(str(exc), 1) from None
