# service/analysis_service.py
import csv
import io
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np

from entity.sim_state import SimState
from entity.spectral import FidRecord, Spectrum, DecoherenceCurve, SPECTRUM_MODES
from service.errors import AnalysisError
from service.hamiltonian_service import HamiltonianService
from service.operator_service import OperatorService

CSV_FLOAT = '{:.17g}'


def _fmt(value: float) -> str:
    return CSV_FLOAT.format(float(value))


class AnalysisService:
    """Partial trace, decoherence envelopes, FID/spectrum synthesis and peak picking"""

    def __init__(self, operator_service: Optional[OperatorService] = None,
                 hamiltonian_service: Optional[HamiltonianService] = None):
        self.ops = operator_service or OperatorService()
        self.hamiltonians = hamiltonian_service or HamiltonianService(self.ops)

    # Reduced states

    def partial_trace(self, rho: np.ndarray, n: int, traced: Iterable[int]) -> np.ndarray:
        """
        Trace the given spins out of an n-spin operator

        Args:
            rho: 2^n x 2^n operator
            n: Spin count
            traced: 1-based spins to trace over (nonempty, not all)

        Returns:
            np.ndarray: 2^(n-|traced|) square operator over the remaining spins, in order
        """
        rho = np.asarray(rho)
        if rho.shape != (2 ** n, 2 ** n):
            raise AnalysisError(f"Operator of shape {rho.shape} does not match {n} spins")
        traced = sorted(set(int(k) for k in traced))
        if not traced:
            raise AnalysisError("partial_trace needs at least one spin to trace over")
        if traced[0] < 1 or traced[-1] > n:
            raise AnalysisError(f"Traced spins {traced} out of range 1..{n}")
        if len(traced) == n:
            raise AnalysisError("Tracing every spin leaves a scalar; use the full trace instead")

        tensor = rho.reshape([2] * (2 * n))
        remaining = n
        for k in reversed(traced):
            tensor = np.trace(tensor, axis1=k - 1, axis2=k - 1 + remaining)
            remaining -= 1
        dim = 2 ** remaining
        return tensor.reshape(dim, dim)

    def reduced_system_state(self, state: SimState) -> np.ndarray:
        """State of the system spins with the environment traced out"""
        if not state.sys.env_spins:
            return state.rho.copy()
        return self.partial_trace(state.rho, state.n, state.sys.env_spins)

    @staticmethod
    def population_form(rho_reduced: np.ndarray) -> np.ndarray:
        """
        Two-spin deviation matrix rescaled so the |up,up> population reads 1/2, plus 1/2

        States of the form c*(IxIx - IyIy) - IzIz map to diag(1, 0, 0, 1) with corners -c.
        """
        rho_reduced = np.asarray(rho_reduced, dtype=complex)
        if rho_reduced.shape != (4, 4):
            raise AnalysisError(f"Expected a 4x4 two-spin operator, got shape {rho_reduced.shape}")
        d = rho_reduced - np.trace(rho_reduced) / 4 * np.eye(4)
        peak = np.max(np.abs(d))
        if peak == 0 or abs(d[0, 0]) <= 1e-12 * peak:
            raise AnalysisError("The |up,up> population deviation vanishes; no reference scale")
        return d * (0.5 / d[0, 0].real) + 0.5 * np.eye(4)

    def corner_coherence(self, rho_reduced: np.ndarray) -> float:
        """Real part of the (|up,up>, |down,down>) entry of the population form"""
        return float(self.population_form(rho_reduced)[0, 3].real)

    @staticmethod
    def analytic_envelope(t, couplings: Sequence[Tuple[float, float]]):
        """prod_k cos(pi*(J_1k + J_2k)*t); t may be a scalar or an array"""
        t_arr = np.asarray(t, dtype=float)
        if np.any(t_arr < 0):
            raise AnalysisError("Envelope times must be >= 0")
        result = np.ones_like(t_arr)
        for j1, j2 in couplings:
            result = result * np.cos(np.pi * (j1 + j2) * t_arr)
        return float(result) if result.ndim == 0 else result

    @staticmethod
    def environment_couplings(sys) -> list:
        """(J_1k, J_2k) per environment spin"""
        return [(float(sys.j_hz[0, k - 1]), float(sys.j_hz[1, k - 1])) for k in sorted(sys.env_spins)]

    # Acquisition

    def simulate_fid(self, state: SimState, detect: Iterable[int], dwell: float, n_samples: int,
                     decouple_env: bool = True, lb_hz: float = 0.0,
                     halve_first_point: bool = True) -> FidRecord:
        """
        Complex FID trace(rho(t) * sum_k (Ix_k - i*Iy_k)) with exponential line broadening

        Positive offsets appear at positive frequency.

        Args:
            state: State at the start of acquisition
            detect: System spins whose transverse magnetization is recorded
            dwell: Seconds between samples
            n_samples: Samples to acquire (zero-padded to a power of two)
            decouple_env: Remove environment couplings during acquisition
            lb_hz: Exponential line broadening in Hz
            halve_first_point: Scale sample 0 by 1/2

        Returns:
            FidRecord: The recorded FID
        """
        sys = state.sys
        detect = frozenset(int(k) for k in detect)
        if not detect:
            raise AnalysisError("At least one detect spin is required")
        if not detect <= sys.system_spins:
            raise AnalysisError(f"Detect spins {sorted(detect - sys.system_spins)} are not system spins")
        if not dwell > 0:
            raise AnalysisError(f"dwell must be positive, got {dwell}")
        if n_samples < 2:
            raise AnalysisError(f"n_samples must be >= 2, got {n_samples}")
        if lb_hz < 0:
            raise AnalysisError(f"Line broadening must be >= 0, got {lb_hz}")

        decoupled = state.decoupled | (sys.env_spins if decouple_env else frozenset())
        active = sys.all_spins - decoupled
        if active:
            energies = np.diag(self.hamiltonians.closed_hamiltonian(sys, active)).real
        else:
            energies = np.zeros(2 ** sys.n)

        lowering = sum(self.ops.spin_operator('x', k, sys.n) - 1j * self.ops.spin_operator('y', k, sys.n)
                       for k in sorted(detect))
        weights = state.rho * lowering.T
        rows, cols = np.nonzero(np.abs(weights) > 0)
        times = np.arange(n_samples) * dwell
        if rows.size:
            omega = energies[rows] - energies[cols]
            samples = np.exp(-1j * np.outer(times, omega)) @ weights[rows, cols]
        else:
            samples = np.zeros(n_samples, dtype=complex)
        samples = samples * np.exp(-np.pi * lb_hz * times)
        if halve_first_point:
            samples[0] *= 0.5
        return FidRecord(dwell, samples, detect, lb_hz)

    # Spectra

    @staticmethod
    def spectrum(fid: FidRecord, mode: str = 'magnitude', phase: float = 0.0) -> Spectrum:
        """Centered DFT of the FID, frequency axis in Hz over [-1/(2*dwell), 1/(2*dwell))"""
        if mode not in SPECTRUM_MODES:
            raise AnalysisError(f"Spectrum mode must be one of {SPECTRUM_MODES}, got {mode!r}")
        n = len(fid)
        amplitude = np.fft.fftshift(np.fft.fft(fid.samples))
        freq = np.fft.fftshift(np.fft.fftfreq(n, fid.dwell))
        if phase:
            amplitude = amplitude * np.exp(1j * phase)
        return Spectrum(freq, amplitude, mode, phase)

    @staticmethod
    def _window_indices(spec: Spectrum, window: Tuple[float, float]) -> np.ndarray:
        lo, hi = float(window[0]), float(window[1])
        if not lo < hi:
            raise AnalysisError(f"Empty window [{lo}, {hi}] Hz")
        if lo < spec.freq_axis[0] or hi > spec.freq_axis[-1]:
            raise AnalysisError(
                f"Window [{lo:g}, {hi:g}] Hz outside the axis [{spec.freq_axis[0]:g}, {spec.freq_axis[-1]:g}] Hz")
        indices = np.nonzero((spec.freq_axis >= lo) & (spec.freq_axis <= hi))[0]
        if indices.size == 0:
            raise AnalysisError(f"Window [{lo:g}, {hi:g}] Hz contains no frequency bin")
        return indices

    def peak_index(self, spec: Spectrum, window: Tuple[float, float]) -> int:
        indices = self._window_indices(spec, window)
        return int(indices[np.argmax(np.abs(spec.amplitude[indices]))])

    def zero_order_phase(self, spec: Spectrum, window: Tuple[float, float]) -> float:
        """Phase that turns the largest bin in the window real and positive"""
        index = self.peak_index(spec, window)
        if np.abs(spec.amplitude[index]) == 0:
            return 0.0
        return float(-np.angle(spec.amplitude[index]))

    def peak_amplitude(self, spec: Spectrum, window: Tuple[float, float]) -> float:
        """
        Largest magnitude in the window

        In real mode the value carries the sign of the real part at that bin.
        """
        index = self.peak_index(spec, window)
        value = spec.amplitude[index]
        magnitude = float(np.abs(value))
        if spec.mode == 'real':
            return float(np.copysign(magnitude, value.real))
        return magnitude

    # CSV output

    @staticmethod
    def _csv(header: Sequence[str], rows: Iterable[Sequence[float]]) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator='\n')
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
        return buffer.getvalue()

    def curve_csv(self, curve: DecoherenceCurve) -> str:
        return self._csv(('t_seconds', 'amplitude'), curve.points)

    def envelope_csv(self, times: Sequence[float], envelope: Sequence[float],
                     corners: Sequence[float]) -> str:
        return self._csv(('t_seconds', 'envelope', 'corner_coherence'), zip(times, envelope, corners))

    def spectrum_csv(self, spec: Spectrum, ppm_axis: Optional[np.ndarray] = None) -> str:
        """freq_hz,re,im with an optional ppm column"""
        if ppm_axis is None:
            return self._csv(('freq_hz', 're', 'im'),
                             zip(spec.freq_axis, spec.amplitude.real, spec.amplitude.imag))
        return self._csv(('freq_hz', 're', 'im', 'ppm'),
                         zip(spec.freq_axis, spec.amplitude.real, spec.amplitude.imag, ppm_axis))
