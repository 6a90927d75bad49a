import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import least_squares

from cohere_twin.analysis import (
    AggregationConsistencyError,
    DegenerateDataError,
    EstimatorFailure,
    FitConvergenceError,
    FitResult,
    InitializationError,
    InsufficientFringes,
    VisibilityAboveUnity,
    VisibilityPoint,
    aggregate_reduced,
    circ_jacobian,
    circ_model,
    circ_wavenumber,
    fit_circ_coherence,
    fit_gaussian_coherence,
    gaussian_jacobian,
    gaussian_model,
    levenberg_marquardt,
    local_envelope,
    read_visibility_csv,
    visibility_from_interferogram,
    visibility_from_spectrum,
    write_visibility_csv,
)
from cohere_twin.analysis import fitting
from cohere_twin.geometry import SPEED_OF_LIGHT
from cohere_twin.quantum import QuantumSourceSpec, coincidence_probability, g_spatial
from cohere_twin.specfun import JINC_FIRST_ZERO
from cohere_twin.thermal import (
    ThermalSourceSpec,
    interferogram_model,
    mu_circ,
    mu_circ_reduced,
    spectrum_model,
)

QSPEC = QuantumSourceSpec()
TSPEC = ThermalSourceSpec()
OMEGA = QSPEC.omega0
PERIOD = 2 * math.pi / OMEGA
TAU = (np.arange(301) - 150) * PERIOD / 30
LAM = 600e-9 + 0.1e-9 * np.arange(1601)


# --- interferogram estimator ---------------------------------------------------


def test_interferogram_model_matched_fit_is_exact():
    est = visibility_from_interferogram(TAU, 1 + 0.5 * np.cos(OMEGA * TAU), OMEGA)
    assert est.visibility == pytest.approx(0.5, abs=1e-13)
    assert est.phase == pytest.approx(0.0, abs=1e-12)
    assert est.uncertainty < 1e-12


@given(st.floats(0.01, 0.99), st.floats(-3.0, 3.0), st.floats(0.1, 100.0))
def test_interferogram_phase_and_scale_invariance(v, phi, scale):
    y = scale * (1 + v * np.cos(OMEGA * TAU + phi))
    est = visibility_from_interferogram(TAU, y, OMEGA)
    assert est.visibility == pytest.approx(v, abs=1e-10)
    assert math.cos(est.phase - phi) == pytest.approx(1.0, abs=1e-9)


def test_interferogram_input_checks():
    with pytest.raises(ValueError):
        visibility_from_interferogram(TAU[:20], np.ones(20), OMEGA)  # under two periods
    with pytest.raises(ValueError):
        visibility_from_interferogram(TAU[::15], np.ones(21), OMEGA)  # two samples per period
    with pytest.raises(EstimatorFailure):
        visibility_from_interferogram(TAU, -1 - 0.1 * np.cos(OMEGA * TAU), OMEGA)


def test_thermal_interferogram_envelope_estimator():
    omega = TSPEC.omega0
    tau = (np.arange(301) - 150) * (2 * math.pi / omega) / 30
    for dy in (0.0, 40e-6, 200e-6, 300e-6):
        _, y = interferogram_model(tau, dy, 0.4, TSPEC)
        est = visibility_from_interferogram(tau, y, omega, envelope_degree=6)
        assert est.visibility == pytest.approx(mu_circ(dy, TSPEC.lambda0, TSPEC), abs=1e-4)


def test_interferogram_uncertainty_is_calibrated():
    """Reported standard error matches the Monte Carlo spread of the estimate."""
    rng = np.random.default_rng(20)
    n = 10_000
    p = coincidence_probability(TAU, 150e-6, QSPEC)
    est = np.array([visibility_from_interferogram(TAU, rng.binomial(n, p) / n, OMEGA) for _ in range(500)])
    v, sigma = est[:, 0], est[:, 2]
    truth = g_spatial(150e-6, QSPEC)
    assert np.std(v, ddof=1) == pytest.approx(np.mean(sigma), rel=0.15)
    assert abs(np.mean(v) - truth) < 4 * np.std(v, ddof=1) / math.sqrt(v.size)


# --- spectrum estimator --------------------------------------------------------


def test_spectrum_estimator_reference_point():
    trace = spectrum_model(LAM, 93e-15, 40e-6, TSPEC)
    est = visibility_from_spectrum(trace, TSPEC.baseline, 93e-15)
    assert est.visibility == pytest.approx(mu_circ(40e-6, TSPEC.lambda0, TSPEC), abs=1e-3)


def test_spectrum_estimator_at_first_zero_reports_window_average():
    dy0 = JINC_FIRST_ZERO * TSPEC.focal_f * TSPEC.lambda0 / (2 * math.pi * TSPEC.source_radius_r)
    trace = spectrum_model(LAM, 93e-15, dy0, TSPEC)
    est = visibility_from_spectrum(trace, TSPEC.baseline, 93e-15)
    sel = np.abs(LAM - TSPEC.lambda0) <= 40e-9
    # |mu| averaged over the window with the cos^2 weight of the fringe basis
    weight = np.cos(2 * math.pi * SPEED_OF_LIGHT * 93e-15 / LAM[sel]) ** 2
    oracle = np.sum(weight * mu_circ(dy0, LAM[sel], TSPEC)) / np.sum(weight)
    assert est.visibility < 0.03
    assert est.visibility == pytest.approx(oracle, abs=5e-3)


def test_spectrum_estimator_needs_fringes():
    trace = spectrum_model(LAM, 5e-15, 40e-6, TSPEC)
    with pytest.raises(InsufficientFringes):
        visibility_from_spectrum(trace, TSPEC.baseline, 5e-15)


def test_spectrum_estimator_instrumental_scale():
    trace = spectrum_model(LAM, 93e-15, 40e-6, TSPEC, visibility_scale=0.926 / 0.983)
    est = visibility_from_spectrum(trace, TSPEC.baseline, 93e-15)
    assert est.visibility == pytest.approx(0.926, abs=2e-3)


# --- reduced-coordinate aggregation -------------------------------------------


def test_local_envelope_linear_amplitude_is_exact():
    x = np.linspace(0, 50, 5001)
    m = 0.3 + 0.004 * x
    cs, env, err = local_envelope(x, 1 + m * np.cos(2 * math.pi * x / 1.7 + 0.3), 1.7)
    np.testing.assert_allclose(env, 0.3 + 0.004 * cs, atol=1e-10)
    assert np.all(err < 1e-10)
    assert np.all(np.diff(cs) == pytest.approx(0.85))


def test_aggregate_recovers_reduced_coherence():
    traces = [spectrum_model(LAM, 93e-15, dy, TSPEC) for dy in (100e-6, 300e-6, 500e-6, 700e-6)]
    pts = aggregate_reduced(traces, TSPEC)
    x = np.array([p.x for p in pts])
    v = np.array([p.visibility for p in pts])
    assert all(p.coordinate == "delta_y_reduced" for p in pts)
    assert np.all(np.diff(x) >= 0)
    truth = mu_circ_reduced(x, TSPEC)
    z = 2 * math.pi * TSPEC.source_radius_r * x / TSPEC.focal_f
    zeros = np.array([JINC_FIRST_ZERO, 7.0155866698])
    smooth = np.min(np.abs(z[:, None] - zeros[None, :]), axis=1) > 0.3
    np.testing.assert_allclose(v[smooth], truth[smooth], atol=2e-4)
    np.testing.assert_allclose(v, truth, atol=3e-3)


def test_aggregate_single_trace():
    pts = aggregate_reduced([spectrum_model(LAM, 93e-15, 200e-6, TSPEC)], TSPEC)
    assert len(pts) > 10


def test_aggregate_flags_inconsistent_overlap():
    a = spectrum_model(LAM, 93e-15, 150e-6, TSPEC)
    b = spectrum_model(LAM, 93e-15, 160e-6, TSPEC, visibility_scale=0.5)
    with pytest.raises(AggregationConsistencyError):
        aggregate_reduced([a, b], TSPEC)


def test_aggregate_zero_delay_has_no_fringes():
    with pytest.raises(InsufficientFringes):
        aggregate_reduced([spectrum_model(LAM, 0.0, 200e-6, TSPEC)], TSPEC)
    assert aggregate_reduced([], TSPEC) == []


def test_visibility_point_warns_above_unity():
    with pytest.warns(VisibilityAboveUnity):
        p = VisibilityPoint(0.0, 1.2, 0.01)
    assert p.above_unity and p.visibility == 1.2
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert not VisibilityPoint(0.0, 1.01, 0.01).above_unity


# --- Jacobians and LM -----------------------------------------------------------


def _column_error(J, fd):
    """Largest deviation in each column relative to that column's magnitude."""
    return np.max(np.abs(J - fd), axis=0) / np.max(np.abs(J), axis=0)


def _fd_columns(model, x, p, rel=1e-6):
    cols = []
    for i in range(len(p)):
        h = rel * abs(p[i])
        up, dn = list(p), list(p)
        up[i] += h
        dn[i] -= h
        cols.append((model(x, *up) - model(x, *dn)) / (2 * h))
    return np.column_stack(cols)


def test_gaussian_jacobian_vs_finite_differences():
    rng = np.random.default_rng(7)
    for _ in range(100):
        v0, delta = rng.uniform(0.2, 1.0), rng.uniform(50e-6, 400e-6)
        x = rng.uniform(0, 4 * delta, 8)
        J = gaussian_jacobian(x, v0, delta)
        fd = _fd_columns(gaussian_model, x, [v0, delta])
        assert np.all(_column_error(J, fd) <= 1e-6)


def test_circ_jacobian_vs_finite_differences():
    rng = np.random.default_rng(8)
    k = circ_wavenumber(0.5, "at_lambda0", 680e-9)
    zeros = np.array([JINC_FIRST_ZERO, 7.0155866698, 10.1734681351])
    done = 0
    while done < 100:
        v0, r = rng.uniform(0.2, 1.0), rng.uniform(0.2e-3, 1.0e-3)
        x = rng.uniform(0, 1.2e-3, 8)
        z = k * r * x
        if np.min(np.abs(z[:, None] - zeros[None, :])) < 1e-3:
            continue  # |J1| kinks at its zeros
        J = circ_jacobian(x, v0, r, k)
        fd = _fd_columns(lambda xx, a, b: circ_model(xx, a, b, k), x, [v0, r])
        assert np.all(_column_error(J, fd) <= 1e-6)
        done += 1


def test_lm_matches_reference_solver():
    rng = np.random.default_rng(3)
    x = np.linspace(0, 4, 40)
    y = 2.5 * np.exp(-1.3 * x) + 0.4 + 0.01 * rng.standard_normal(x.size)

    def fun(p):
        return p[0] * np.exp(-p[1] * x) + p[2] - y

    def jac(p):
        e = np.exp(-p[1] * x)
        return np.column_stack([e, -p[0] * x * e, np.ones_like(x)])

    ours = levenberg_marquardt(fun, jac, [1.0, 0.5, 0.0])
    ref = least_squares(fun, [1.0, 0.5, 0.0], jac=jac, xtol=1e-15, ftol=1e-15, gtol=1e-15)
    assert ours.converged
    np.testing.assert_allclose(ours.x, ref.x, rtol=1e-8)
    assert ours.cost == pytest.approx(ref.cost, rel=1e-10)


def test_lm_reports_non_convergence():
    x = np.linspace(0, 4, 40)

    def fun(p):
        return p[0] * np.exp(-p[1] * x) - 2 * np.exp(-0.7 * x)

    def jac(p):
        e = np.exp(-p[1] * x)
        return np.column_stack([e, -p[0] * x * e])

    res = levenberg_marquardt(fun, jac, [0.1, 5.0], max_iter=1, damping=10.0)
    assert not res.converged and res.iterations == 1


# --- coherence fits -----------------------------------------------------------------


def _gauss_points(delta, v0=1.0, n=41, xmax=800e-6):
    x = np.linspace(0, xmax, n)
    return [VisibilityPoint(float(a), float(v0 * math.exp(-0.5 * (a / delta) ** 2)), 0.0) for a in x]


def test_gaussian_fit_noiseless():
    res = fit_gaussian_coherence(_gauss_points(230e-6))
    assert res.converged
    assert res.params["delta"] == pytest.approx(230e-6, rel=1e-9)
    assert res.params["V0"] == pytest.approx(1.0, rel=1e-9)
    assert res.model == "gaussian" and res.n_points == 41


@given(st.floats(0.05, 1.0))
def test_gaussian_fit_scale_invariance(k):
    base = fit_gaussian_coherence(_gauss_points(250e-6))
    scaled = fit_gaussian_coherence(_gauss_points(250e-6, v0=k))
    assert scaled.params["V0"] == pytest.approx(k * base.params["V0"], rel=1e-9)
    assert scaled.params["delta"] == pytest.approx(base.params["delta"], rel=1e-9)


def test_gaussian_fit_guards():
    with pytest.raises(ValueError):
        fit_gaussian_coherence(_gauss_points(230e-6, n=3))
    flat = [VisibilityPoint(float(x), 0.5, 0.01) for x in np.linspace(0, 1e-3, 10)]
    with pytest.raises(DegenerateDataError):
        fit_gaussian_coherence(flat)
    with pytest.raises(InitializationError):
        fit_gaussian_coherence(_gauss_points(230e-6), delta_init=-1.0)


def test_gaussian_fit_reports_non_convergence(monkeypatch):
    monkeypatch.setattr(fitting, "LM_MAX_ITER", 1)
    with pytest.raises(FitConvergenceError) as info:
        fit_gaussian_coherence(_gauss_points(230e-6), delta_init=30e-6)
    assert not info.value.result.converged


def _circ_points(r, coordinate, lam=680e-9, v0=1.0):
    spec = ThermalSourceSpec(source_radius_r=r)
    if coordinate == "delta_y":
        x = np.linspace(0, 1e-3, 51)
        v = v0 * mu_circ(x, lam, spec)
    else:
        x = np.linspace(100, 1200, 80)
        v = v0 * mu_circ_reduced(x, spec)
    return [VisibilityPoint(float(a), float(b), 0.0, coordinate) for a, b in zip(x, v)]


@pytest.mark.parametrize("r", [0.5e-3, 0.75e-3, 1.0e-3])
def test_circ_fit_noiseless_reduced(r):
    res = fit_circ_coherence(_circ_points(r, "delta_y_reduced"), 0.5)
    assert res.params["radius_r"] == pytest.approx(r, rel=1e-8)
    assert res.diameter == pytest.approx(2 * r, rel=1e-8)


def test_circ_fit_noiseless_at_lambda0():
    res = fit_circ_coherence(_circ_points(0.5e-3, "delta_y", v0=0.9), 0.5, "at_lambda0", 680e-9)
    assert res.params["radius_r"] == pytest.approx(0.5e-3, rel=1e-8)
    assert res.params["V0"] == pytest.approx(0.9, rel=1e-8)


def test_circ_fit_guards():
    pts = _circ_points(0.5e-3, "delta_y")
    with pytest.raises(ValueError):
        fit_circ_coherence(pts, 0.5, "reduced")
    with pytest.raises(ValueError):
        fit_circ_coherence(pts, 0.5, "at_lambda0")  # no lambda0
    with pytest.raises(InitializationError):
        fit_circ_coherence(pts, 0.5, "at_lambda0", 680e-9, radius_init=1.0)
    with pytest.raises(ValueError):
        circ_wavenumber(0.5, "other")


def test_fit_result_serialisation_round_trip():
    res = fit_gaussian_coherence(_gauss_points(230e-6))
    res.provenance = "abc"
    back = FitResult.from_json(res.to_json())
    assert back.params == res.params and back.provenance == "abc"
    np.testing.assert_array_equal(back.covariance, res.covariance)
    np.testing.assert_allclose(back.evaluate([0.0, 1e-4]), res.evaluate([0.0, 1e-4]))


def test_visibility_csv_round_trip(tmp_path):
    pts = [VisibilityPoint(0.1 * i + 1e-17, 1 / (i + 1), 1e-3 * i, "delta_y_reduced") for i in range(5)]
    write_visibility_csv(pts, tmp_path / "v.csv")
    back = read_visibility_csv(tmp_path / "v.csv")
    assert [(p.x, p.visibility, p.uncertainty, p.coordinate) for p in back] == [
        (p.x, p.visibility, p.uncertainty, p.coordinate) for p in pts
    ]
    (tmp_path / "bad.csv").write_text("delta_y_m,visibility,uncertainty\n0,1,0\n1,x,0\n")
    with pytest.raises(ValueError, match=":3:"):
        read_visibility_csv(tmp_path / "bad.csv")
