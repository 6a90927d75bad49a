"""Report artifacts: SVG plots of data and model plus a JSON summary."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .analysis import FitResult, VisibilityPoint, format_visibility_csv
from .pipeline import AnalysisSettings, extract_visibilities
from .scan import ScanDataset
from .svgplot import Figure
from .thermal import reduced_spectrum

__all__ = ["ReportError", "ProvenanceMismatch", "build_report", "render_report"]

MAX_TRACES = 4


class ReportError(ValueError):
    pass


class ProvenanceMismatch(ReportError):
    pass


def _visibility_figure(fit: FitResult, points: list[VisibilityPoint]) -> Figure:
    reduced = points[0].coordinate == "delta_y_reduced"
    to_axis = 1.0 if reduced else 1e6
    x = np.array([p.x for p in points])
    fig = Figure(
        "Visibility versus shear",
        "reduced shear dy/lambda" if reduced else "shear dy (um)",
        "visibility",
    )
    grid = np.linspace(0.0, float(np.max(np.abs(x))) * 1.05, 400)
    fig.line(grid * to_axis, fit.evaluate(grid), "curve", f"{fit.model} fit")
    fig.markers(x * to_axis, [p.visibility for p in points], "marker", "data", [p.uncertainty for p in points])
    return fig


def _subset(items):
    if len(items) <= MAX_TRACES:
        return list(items)
    idx = np.unique(np.linspace(0, len(items) - 1, MAX_TRACES).round().astype(int))
    return [items[i] for i in idx]


def _reduced_figure(fit: FitResult, dataset: ScanDataset) -> Figure:
    fig = Figure("Reduced spectra and coherence envelope", "reduced shear dy/lambda", "S / S0")
    lo, hi = np.inf, -np.inf
    for trace in dataset.spectrum_traces():
        rs = reduced_spectrum(trace, dataset.plan.source)
        fig.line(rs.delta_y_reduced, rs.normalized, "oscillatory", f"dy = {trace.delta_y * 1e6:.6g} um")
        lo, hi = min(lo, rs.delta_y_reduced[0]), max(hi, rs.delta_y_reduced[-1])
    grid = np.linspace(lo, hi, 600)
    if fit.meta.get("coordinate") == "delta_y_reduced":
        env = np.asarray(fit.evaluate(grid))
        fig.line(grid, 1.0 + env, "envelope", "1 + envelope")
        fig.line(grid, 1.0 - env, "envelope")
    return fig


def _spectra_figure(dataset: ScanDataset) -> Figure:
    fig = Figure("Spectra", "wavelength (nm)", "intensity (relative)")
    for trace in _subset(dataset.spectrum_traces()):
        fig.line(trace.wavelength_grid * 1e9, trace.intensity, "spectrum", f"dy = {trace.delta_y * 1e6:.6g} um")
    return fig


def _interferogram_figure(dataset: ScanDataset) -> Figure:
    ylabel = "coincidences per pair" if dataset.mode == "spdc_coincidence" else "intensity (relative)"
    fig = Figure("Interferograms", "delay tau (fs)", ylabel)
    for dy, tau, signal in _subset(dataset.interferograms()):
        fig.line(tau * 1e15, signal, "interferogram", f"dy = {dy * 1e6:.6g} um")
    return fig


def build_report(fit: FitResult, dataset: ScanDataset, points: list[VisibilityPoint] | None = None) -> dict:
    """Return ``{file name: text}`` for every artifact without touching disk."""
    if dataset is None or dataset.n_records == 0:
        raise ReportError("dataset is empty; nothing to report")
    fingerprint = dataset.fingerprint()
    if fit.provenance != fingerprint:
        raise ProvenanceMismatch(
            f"fit provenance {fit.provenance!r} does not match dataset fingerprint {fingerprint!r}"
        )
    if points is None:
        settings = AnalysisSettings.from_dict(fit.meta.get("analysis"))
        points = extract_visibilities(dataset, settings)
    if not points:
        raise ReportError("no visibility points to plot")

    files = {"visibility.svg": _visibility_figure(fit, points).to_svg()}
    if dataset.mode == "thermal_spectrum":
        files["reduced_spectrum.svg"] = _reduced_figure(fit, dataset).to_svg()
        files["spectra.svg"] = _spectra_figure(dataset).to_svg()
    else:
        files["interferograms.svg"] = _interferogram_figure(dataset).to_svg()

    files["visibilities.csv"] = format_visibility_csv(points)

    derived = {}
    if fit.model == "gaussian":
        derived["coherence_length_delta_m"] = fit.params["delta"]
        derived["coherence_length_delta_stderr_m"] = fit.stderr("delta")
    else:
        derived["radius_r_m"] = fit.params["radius_r"]
        derived["diameter_m"] = fit.diameter
        derived["diameter_stderr_m"] = 2.0 * fit.stderr("radius_r")
    summary = {
        "mode": dataset.mode,
        "dataset_fingerprint": fingerprint,
        "n_points": len(points),
        "fit": fit.to_dict(),
        "derived": derived,
        "files": sorted(files) + ["summary.json"],
    }
    files["summary.json"] = json.dumps(summary, indent=2, sort_keys=True) + "\n"
    return files


def render_report(
    fit: FitResult, dataset: ScanDataset, output_dir, points: list[VisibilityPoint] | None = None
) -> list[Path]:
    """Write the report into ``output_dir``; nothing is written if any artifact fails."""
    files = build_report(fit, dataset, points)
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for name in sorted(files):
        path = out / name
        path.write_text(files[name])
        paths.append(path)
    return paths
