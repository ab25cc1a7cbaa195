#!/usr/bin/env python3
"""
Tests for partial traces, the decoherence envelope, FID/spectrum synthesis,
peak picking, CSV output and the cosine fit.

Usage:
    python test_analysis_service.py
    pytest test_analysis_service.py
"""

import numpy as np
import pytest

from entity.sim_state import SimState
from entity.spectral import DecoherenceCurve, FidRecord, Spectrum
from entity.spin_system import SpinSystem
from service.analysis_service import AnalysisService
from service.engine_service import EngineService
from service.errors import AnalysisError, FitError
from service.fit_service import FitService

J_TCE = [[0.0, 103.1, 9.23],
         [103.1, 0.0, 201.3],
         [9.23, 201.3, 0.0]]

engine = EngineService()
ops = engine.ops
analysis = AnalysisService(ops, engine.hamiltonians)
fitter = FitService()


def tce_system() -> SpinSystem:
    return SpinSystem(['C1', 'C2', 'H'], offset_hz=[450.0816, -450.0816, 0.0], j_hz=J_TCE,
                      zero_quantum_filter=True)


def product(*factors, n=3, scale=1.0):
    return ops.product_operator(list(factors), n, scale)


def bell_state(sys):
    n = sys.n
    rho = 2 * (product(('x', 1), ('x', 2), n=n) - product(('z', 1), ('z', 2), n=n)
               - product(('y', 1), ('y', 2), n=n))
    return SimState(rho, sys)


def single_spin_fid(rho, offset_hz=125.0, n_samples=256, **kwargs):
    sys = SpinSystem(['C1'], offset_hz=[offset_hz])
    options = dict(lb_hz=0.0, halve_first_point=False)
    options.update(kwargs)
    return analysis.simulate_fid(SimState(rho, sys), {1}, 1e-3, n_samples, **options)


def random_matrix(rng, dim):
    return rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))


# Partial trace

def test_partial_trace_of_product_states():
    rng = np.random.default_rng(11)
    a, b, c = random_matrix(rng, 2), random_matrix(rng, 2), random_matrix(rng, 2)
    rho = np.kron(np.kron(a, b), c)
    assert np.allclose(analysis.partial_trace(rho, 3, [3]), np.trace(c) * np.kron(a, b))
    assert np.allclose(analysis.partial_trace(rho, 3, [1]), np.trace(a) * np.kron(b, c))
    assert np.allclose(analysis.partial_trace(rho, 3, [1, 3]), np.trace(a) * np.trace(c) * b)


def test_partial_trace_is_unnormalized():
    rho = product(('z', 1), ('z', 2))
    assert np.allclose(analysis.partial_trace(rho, 3, [3]), 2 * product(('z', 1), ('z', 2), n=2))


def test_partial_trace_errors():
    rho = np.eye(8)
    with pytest.raises(AnalysisError):
        analysis.partial_trace(rho, 3, [])
    with pytest.raises(AnalysisError):
        analysis.partial_trace(rho, 3, [1, 2, 3])
    with pytest.raises(AnalysisError):
        analysis.partial_trace(rho, 3, [4])
    with pytest.raises(AnalysisError):
        analysis.partial_trace(rho, 2, [1])


def test_partial_trace_is_linear():
    rng = np.random.default_rng(41)
    for traced in ([3], [1], [2], [1, 3]):
        rho1, rho2 = random_matrix(rng, 8), random_matrix(rng, 8)
        a, b = complex(*rng.normal(size=2)), complex(*rng.normal(size=2))
        combined = analysis.partial_trace(a * rho1 + b * rho2, 3, traced)
        separate = a * analysis.partial_trace(rho1, 3, traced) + b * analysis.partial_trace(rho2, 3, traced)
        assert np.max(np.abs(combined - separate)) < 1e-12 * max(1.0, np.max(np.abs(combined)))


def test_partial_trace_keeps_density_matrices():
    """A positive unit-trace state reduces to a positive unit-trace state"""
    rng = np.random.default_rng(43)
    for _ in range(20):
        A = random_matrix(rng, 8)
        rho = A @ A.conj().T
        rho = rho / np.trace(rho).real
        for traced in ([3], [1], [1, 2], [2, 3]):
            reduced = analysis.partial_trace(rho, 3, traced)
            assert ops.is_hermitian(reduced, 1e-12)
            assert np.trace(reduced).real == pytest.approx(1.0, abs=1e-12)
            assert abs(np.trace(reduced).imag) < 1e-12
            assert np.min(np.linalg.eigvalsh(reduced)) >= -1e-12


# Population form and envelope

def test_population_form_of_bell_state():
    reduced = analysis.reduced_system_state(bell_state(tce_system()))
    expected = np.array([[1, 0, 0, -1], [0, 0, 0, 0], [0, 0, 0, 0], [-1, 0, 0, 1]])
    assert np.allclose(analysis.population_form(reduced), expected)
    assert analysis.corner_coherence(reduced) == pytest.approx(-1.0)


def test_corner_coherence_scales_with_c():
    for c in (1.0, 0.3, -0.7, 0.0):
        rho = (c * (product(('x', 1), ('x', 2), n=2) - product(('y', 1), ('y', 2), n=2))
               - product(('z', 1), ('z', 2), n=2))
        assert analysis.corner_coherence(rho) == pytest.approx(-c)


def test_population_form_errors():
    with pytest.raises(AnalysisError):
        analysis.population_form(np.eye(8))
    with pytest.raises(AnalysisError):
        analysis.population_form(product(('x', 1), ('x', 2), n=2))


def test_analytic_envelope():
    couplings = [(9.23, 201.3)]
    assert analysis.analytic_envelope(0.0, couplings) == pytest.approx(1.0)
    t = np.array([0.0, 0.0035, 1 / 210.53])
    expected = np.cos(np.pi * 210.53 * t)
    assert np.allclose(analysis.analytic_envelope(t, couplings), expected)
    assert analysis.analytic_envelope(0.001, []) == pytest.approx(1.0)
    with pytest.raises(AnalysisError):
        analysis.analytic_envelope(-0.001, couplings)


def test_traced_corner_follows_envelope_on_tce():
    sys = tce_system()
    couplings = analysis.environment_couplings(sys)
    assert couplings == [(9.23, 201.3)]
    for t in (0.0, 0.0035, 0.0071, 0.0166):
        evolved = engine.refocused_evolve(bell_state(sys), t)
        corner = analysis.corner_coherence(analysis.reduced_system_state(evolved))
        assert corner == pytest.approx(-np.cos(np.pi * 210.53 * t), abs=1e-9)


# FID and spectra

def test_fid_positive_offset_rotates_forward():
    fid = single_spin_fid(ops.spin_operator('x', 1, 1))
    t = np.arange(256) * 1e-3
    assert np.allclose(fid.samples, 0.5 * np.exp(2j * np.pi * 125.0 * t))
    assert fid.acquired == 256


def test_fid_processing_options():
    rho = ops.spin_operator('x', 1, 1)
    fid = single_spin_fid(rho, n_samples=300, lb_hz=2.0, halve_first_point=True)
    assert len(fid) == 512 and fid.acquired == 300
    assert fid.samples[0] == pytest.approx(0.25)
    assert abs(fid.samples[100]) == pytest.approx(0.5 * np.exp(-np.pi * 2.0 * 0.1))
    assert not np.any(fid.samples[300:])


def test_fid_rejects_non_system_detection():
    state = bell_state(tce_system())
    with pytest.raises(AnalysisError):
        analysis.simulate_fid(state, {3}, 1e-4, 64)
    with pytest.raises(AnalysisError):
        analysis.simulate_fid(state, {1}, 0.0, 64)


def test_spectrum_peak_on_bin():
    fid = single_spin_fid(ops.spin_operator('x', 1, 1))
    spec = analysis.spectrum(fid)
    assert np.all(np.diff(spec.freq_axis) > 0)
    assert spec.freq_axis[0] == pytest.approx(-500.0)
    index = analysis.peak_index(spec, (100.0, 150.0))
    assert spec.freq_axis[index] == pytest.approx(125.0)
    assert analysis.peak_amplitude(spec, (100.0, 150.0)) == pytest.approx(128.0)


def test_fid_and_spectrum_power_agree():
    """Parseval: sum |X|^2 / N equals sum |x|^2 for every mode and phase"""
    rng = np.random.default_rng(47)
    sys = tce_system()
    for _ in range(5):
        A = random_matrix(rng, 8)
        state = SimState(A + A.conj().T, sys)
        fid = analysis.simulate_fid(state, {1, 2}, 1e-4, int(rng.integers(100, 1500)),
                                    lb_hz=float(rng.uniform(0.0, 3.0)))
        fid_power = float(np.sum(np.abs(fid.samples) ** 2))
        for mode in ('magnitude', 'real'):
            spec = analysis.spectrum(fid, mode, float(rng.uniform(-np.pi, np.pi)))
            spectrum_power = float(np.sum(np.abs(spec.amplitude) ** 2)) / len(spec)
            assert spectrum_power == pytest.approx(fid_power, rel=1e-9)


def test_real_mode_phase_and_sign():
    fid = single_spin_fid(ops.spin_operator('y', 1, 1))
    window = (100.0, 150.0)
    phase = analysis.zero_order_phase(analysis.spectrum(fid), window)
    assert phase == pytest.approx(np.pi / 2)
    assert analysis.peak_amplitude(analysis.spectrum(fid, 'real', phase), window) == pytest.approx(128.0)
    assert analysis.peak_amplitude(analysis.spectrum(fid, 'real', -phase), window) == pytest.approx(-128.0)


def test_window_errors():
    spec = analysis.spectrum(single_spin_fid(ops.spin_operator('x', 1, 1)))
    with pytest.raises(AnalysisError):
        analysis.peak_amplitude(spec, (150.0, 100.0))
    with pytest.raises(AnalysisError):
        analysis.peak_amplitude(spec, (400.0, 900.0))
    with pytest.raises(AnalysisError):
        analysis.peak_amplitude(spec, (125.5, 126.0))
    with pytest.raises(AnalysisError):
        analysis.spectrum(FidRecord(1e-3, np.ones(4), (1,)), mode='power')


# CSV output

def test_curve_csv_full_precision():
    text = analysis.curve_csv(DecoherenceCurve([(0.0, 1.0), (0.001, 0.1)]))
    assert text == "t_seconds,amplitude\n0,1\n0.001,0.10000000000000001\n"


def test_spectrum_and_envelope_csv_headers():
    spec = Spectrum(np.array([-1.0, 0.0, 1.0]), np.array([0, 1 + 2j, 0]), 'magnitude')
    lines = analysis.spectrum_csv(spec).splitlines()
    assert lines[0] == "freq_hz,re,im"
    assert lines[2] == "0,1,2"
    with_ppm = analysis.spectrum_csv(spec, np.array([120.0, 120.5, 121.0])).splitlines()
    assert with_ppm[0] == "freq_hz,re,im,ppm"
    assert with_ppm[2] == "0,1,2,120.5"
    envelope = analysis.envelope_csv([0.0], [1.0], [-1.0]).splitlines()
    assert envelope == ["t_seconds,envelope,corner_coherence", "0,1,-1"]


# Cosine fit

def _curve(amplitude, period, times):
    return DecoherenceCurve((t, amplitude * np.cos(2 * np.pi * t / period)) for t in times)


def test_fit_recovers_period_and_amplitude():
    times = np.linspace(0.0, 0.02, 41)
    fit = fitter.fit_cosine(_curve(5.8, 0.0095, times))
    assert fit.amplitude == pytest.approx(5.8, rel=1e-6)
    assert fit.period == pytest.approx(0.0095, rel=1e-6)
    assert fit.rms_residual < 1e-8


def test_fit_with_negative_amplitude_and_ripple():
    times = np.linspace(0.0, 0.02, 81)
    ripple = 1e-3 * np.sin(2 * np.pi * 1234.5 * times)
    curve = DecoherenceCurve(zip(times, -3.0 * np.cos(2 * np.pi * times / 0.0087) + ripple))
    fit = fitter.fit_cosine(curve)
    assert fit.amplitude == pytest.approx(-3.0, rel=1e-3)
    assert fit.period == pytest.approx(0.0087, rel=1e-3)
    assert fit.to_dict()['T_ms'] == pytest.approx(fit.period * 1e3)


def test_fit_rejects_degenerate_data():
    times = np.linspace(0.0, 0.02, 11)
    with pytest.raises(FitError):
        fitter.fit_cosine(DecoherenceCurve((t, 0.0) for t in times))
    with pytest.raises(FitError):
        fitter.fit_cosine(DecoherenceCurve((t, 2.5) for t in times))
    with pytest.raises(FitError):
        fitter.fit_cosine(_curve(1.0, 0.01, times[:4]))


def test_fit_rejects_span_below_half_period():
    with pytest.raises(FitError):
        fitter.fit_cosine(_curve(1.0, 1.0, np.linspace(0.0, 0.1, 21)))


def test_curve_validation():
    with pytest.raises(ValueError):
        DecoherenceCurve([(0.0, 1.0), (0.0, 2.0)])
    with pytest.raises(ValueError):
        DecoherenceCurve([(-1.0, 1.0)])


def main():
    """Run every test in this file and print a summary"""
    tests = [value for name, value in sorted(globals().items()) if name.startswith('test_')]
    failed = 0
    for test in tests:
        try:
            test()
            print(f"✓ {test.__name__}")
        except Exception as e:
            failed += 1
            print(f"✗ {test.__name__}: {e}")
    print("=" * 50)
    print(f"{len(tests) - failed}/{len(tests)} analysis tests passed")
    return failed == 0


if __name__ == "__main__":
    raise SystemExit(0 if main() else 1)
