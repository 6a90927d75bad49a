import numpy as np
import pytest

from cohere_twin.pipeline import AnalysisSettings, extract_visibilities, fit_dataset
from cohere_twin.quantum import QuantumSourceSpec
from cohere_twin.scan import NoiseSpec, ScanPlan, run_scan
from cohere_twin.thermal import ThermalSourceSpec, mu_circ


def test_settings_resolution_per_mode():
    s = AnalysisSettings()
    spdc = s.resolved("spdc_coincidence")
    assert (spdc.estimator, spdc.envelope_degree, spdc.model) == ("interferogram", 0, "gaussian")
    si = s.resolved("thermal_interferogram")
    assert (si.envelope_degree, si.model, si.wavelength_mode) == (6, "circ", "at_lambda0")
    ss = s.resolved("thermal_spectrum")
    assert (ss.estimator, ss.wavelength_mode) == ("reduced", "reduced")
    with pytest.raises(ValueError):
        AnalysisSettings(estimator="reduced").resolved("spdc_coincidence")
    with pytest.raises(ValueError):
        AnalysisSettings(model="lorentzian")
    with pytest.raises(KeyError):
        AnalysisSettings.from_dict({"colour": 1})
    assert AnalysisSettings.from_dict(ss.to_dict()) == ss


def test_fitted_coherence_length_round_trip():
    """Data generated at a 250 um coherence length fit back to it."""
    spec = QuantumSourceSpec.for_coherence_length(250e-6)
    plan = ScanPlan("spdc_coincidence", np.arange(0, 801e-6, 20e-6), spec, noise=NoiseSpec("binomial", 0, 10_000), seed=12)
    fit, points = fit_dataset(run_scan(plan))
    assert fit.params["delta"] == pytest.approx(250e-6, rel=0.03)
    assert fit.params["delta"] == pytest.approx(250e-6, abs=4 * fit.stderr("delta"))
    assert len(points) == 41


def test_instrumental_scale_leaves_delta_unchanged():
    spec = QuantumSourceSpec.for_coherence_length(230e-6)
    dy = np.arange(0, 801e-6, 20e-6)
    full, _ = fit_dataset(run_scan(ScanPlan("spdc_coincidence", dy, spec)))
    lossy, _ = fit_dataset(run_scan(ScanPlan("spdc_coincidence", dy, spec, visibility_scale=0.8)))
    assert lossy.params["V0"] == pytest.approx(0.8 * full.params["V0"], rel=1e-9)
    assert lossy.params["delta"] == pytest.approx(full.params["delta"], rel=1e-9)


def test_spectral_window_estimator_at_lambda0():
    spec = ThermalSourceSpec()
    dy = np.arange(20e-6, 361e-6, 20e-6)
    plan = ScanPlan("thermal_spectrum", dy, spec, resolution_fwhm=0.0)
    ds = run_scan(plan)
    pts = extract_visibilities(ds, AnalysisSettings(estimator="spectrum_window"))
    assert all(p.coordinate == "delta_y" for p in pts)
    v = np.array([p.visibility for p in pts])
    # the window fit sees mu(dy, lambda) across +/- 40 nm, so it must land inside that range
    window = np.linspace(spec.lambda0 - 40e-9, spec.lambda0 + 40e-9, 161)
    mu = mu_circ(dy[:, None], window[None, :], spec)
    assert np.all(v >= mu.min(axis=1) - 1e-4) and np.all(v <= mu.max(axis=1) + 1e-4)
    np.testing.assert_allclose(v, mu_circ(dy, spec.lambda0, spec), atol=5e-3)
    fit, _ = fit_dataset(ds, AnalysisSettings(estimator="spectrum_window"))
    assert fit.params["radius_r"] == pytest.approx(0.5e-3, rel=0.01)


def test_fit_carries_provenance_and_settings():
    noise = NoiseSpec("binomial", 0, 100_000)
    ds = run_scan(ScanPlan("thermal_interferogram", np.arange(0, 801e-6, 40e-6), ThermalSourceSpec(), noise=noise, seed=4))
    fit, _ = fit_dataset(ds)
    assert fit.provenance == ds.fingerprint()
    assert fit.meta["analysis"]["model"] == "circ"
    assert fit.diameter == pytest.approx(1e-3, rel=0.01)
