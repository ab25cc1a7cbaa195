# entity/spectral.py
from typing import Iterable, Tuple, List, Dict, Any, Optional

import numpy as np

SPECTRUM_MODES = ('magnitude', 'real')


def _next_power_of_two(n: int) -> int:
    return 1 << max(1, int(n - 1).bit_length())


class FidRecord:
    """
    Complex free-induction decay

    Attributes:
        dwell: Seconds per sample
        samples: Complex samples, zero-padded to a power of two
        detect_spins: 1-based indices of the detected spins
        line_broadening_hz: Exponential line broadening already applied
        acquired: Number of samples before zero padding
    """

    def __init__(self, dwell: float, samples: Iterable[complex], detect_spins: Iterable[int],
                 line_broadening_hz: float = 0.0):
        dwell = float(dwell)
        if not dwell > 0:
            raise ValueError(f"dwell must be positive, got {dwell}")
        if line_broadening_hz < 0:
            raise ValueError(f"line_broadening_hz must be >= 0, got {line_broadening_hz}")
        data = np.asarray(list(samples) if not isinstance(samples, np.ndarray) else samples,
                          dtype=complex).ravel()
        acquired = int(data.size)
        if data.size < 2:
            raise ValueError("A FID needs at least 2 samples")
        size = _next_power_of_two(data.size)
        if size != data.size:
            data = np.concatenate([data, np.zeros(size - data.size, dtype=complex)])

        self.acquired = acquired
        self.dwell = dwell
        self.samples = data
        self.detect_spins = tuple(sorted(int(k) for k in detect_spins))
        self.line_broadening_hz = float(line_broadening_hz)

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.samples.size) * self.dwell

    def __len__(self) -> int:
        return int(self.samples.size)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'dwell': self.dwell,
            'n_samples': len(self),
            'detect_spins': list(self.detect_spins),
            'line_broadening_hz': self.line_broadening_hz,
        }


class Spectrum:
    """
    Discrete Fourier spectrum of a FID

    Attributes:
        freq_axis: Bin frequencies in Hz, increasing
        amplitude: Complex amplitude per bin (phase correction applied in real mode)
        mode: 'magnitude' or 'real'
        phase: Zero-order phase applied to the amplitudes, radians
    """

    def __init__(self, freq_axis: np.ndarray, amplitude: np.ndarray, mode: str = 'magnitude',
                 phase: float = 0.0):
        if mode not in SPECTRUM_MODES:
            raise ValueError(f"Spectrum mode must be one of {SPECTRUM_MODES}, got {mode!r}")
        freq_axis = np.asarray(freq_axis, dtype=float)
        amplitude = np.asarray(amplitude, dtype=complex)
        if freq_axis.shape != amplitude.shape or freq_axis.ndim != 1:
            raise ValueError("freq_axis and amplitude must be 1-D arrays of equal length")
        if freq_axis.size > 1 and not np.all(np.diff(freq_axis) > 0):
            raise ValueError("freq_axis must be strictly increasing")
        self.freq_axis = freq_axis
        self.amplitude = amplitude
        self.mode = mode
        self.phase = float(phase)

    def __len__(self) -> int:
        return int(self.freq_axis.size)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'mode': self.mode,
            'phase': self.phase,
            'freq_hz': self.freq_axis.tolist(),
            're': self.amplitude.real.tolist(),
            'im': self.amplitude.imag.tolist(),
        }


class DecoherenceCurve:
    """(t, amplitude) points with strictly increasing, non-negative t"""

    def __init__(self, points: Iterable[Tuple[float, float]]):
        points = [(float(t), float(a)) for t, a in points]
        times = np.array([p[0] for p in points])
        if times.size and times[0] < 0:
            raise ValueError("Curve times must be >= 0")
        if times.size > 1 and not np.all(np.diff(times) > 0):
            raise ValueError("Curve times must be strictly increasing")
        self.points: List[Tuple[float, float]] = points

    @property
    def times(self) -> np.ndarray:
        return np.array([p[0] for p in self.points])

    @property
    def amplitudes(self) -> np.ndarray:
        return np.array([p[1] for p in self.points])

    def __len__(self) -> int:
        return len(self.points)

    def to_dict(self) -> Dict[str, Any]:
        return {
            't_seconds': [p[0] for p in self.points],
            'amplitude': [p[1] for p in self.points],
        }


class CosineFit:
    """
    Least-squares fit of A*cos(2*pi*t/T)

    Attributes:
        amplitude: A (arbitrary units)
        period: T in seconds
        rms_residual: Root-mean-square residual of the fit
        iterations: Function evaluations used by the refinement
    """

    def __init__(self, amplitude: float, period: float, rms_residual: float,
                 iterations: Optional[int] = None):
        if not period > 0:
            raise ValueError(f"Fitted period must be positive, got {period}")
        self.amplitude = float(amplitude)
        self.period = float(period)
        self.rms_residual = float(rms_residual)
        self.iterations = iterations

    def to_dict(self) -> Dict[str, Any]:
        return {
            'A': self.amplitude,
            'T_seconds': self.period,
            'T_ms': self.period * 1e3,
            'rms_residual': self.rms_residual,
            'iterations': self.iterations,
        }

    def __repr__(self) -> str:
        return f"CosineFit(A={self.amplitude:.6g}, T={self.period * 1e3:.6g} ms, rms={self.rms_residual:.3g})"
