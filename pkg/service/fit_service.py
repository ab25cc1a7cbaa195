# service/fit_service.py
from typing import Optional, Tuple

import numpy as np
from scipy.optimize import least_squares

from config.settings import SimulatorSettings
from entity.spectral import DecoherenceCurve, CosineFit
from service.errors import FitError

MIN_POINTS = 5


class FitService:
    """Fits A*cos(2*pi*t/T) to a decoherence curve: coarse period grid, then Levenberg-Marquardt"""

    def __init__(self, settings: Optional[SimulatorSettings] = None):
        settings = settings or SimulatorSettings()
        self.grid_points = settings.FIT_GRID_POINTS
        self.max_iter = settings.FIT_MAX_ITER
        self.step_tol = settings.FIT_STEP_TOL

    @staticmethod
    def _check(t: np.ndarray, a: np.ndarray):
        if t.size < MIN_POINTS:
            raise FitError(f"Need at least {MIN_POINTS} points to fit, got {t.size}")
        if not np.all(np.isfinite(a)):
            raise FitError("Curve amplitudes must be finite")
        peak = float(np.max(np.abs(a)))
        if peak < 1e-12 or np.ptp(a) <= 1e-9 * peak:
            raise FitError("Degenerate data: the curve is flat")

    def grid_search(self, t: np.ndarray, a: np.ndarray) -> Tuple[float, float]:
        """Best (A, T) over a period grid, A solved by linear least squares at each T"""
        span = float(t.max() - t.min())
        if span <= 0:
            raise FitError("Curve times must span a nonzero interval")
        periods = np.linspace(span / 10, 4 * span, self.grid_points)
        basis = np.cos(2 * np.pi * np.outer(1.0 / periods, t))
        norms = np.sum(basis * basis, axis=1)
        amplitudes = np.where(norms > 0, basis @ a / np.where(norms > 0, norms, 1.0), 0.0)
        sse = np.sum((basis * amplitudes[:, None] - a) ** 2, axis=1)
        best = int(np.argmin(sse))
        return float(amplitudes[best]), float(periods[best])

    def fit_cosine(self, curve: DecoherenceCurve) -> CosineFit:
        """
        Least-squares fit of A*cos(2*pi*t/T)

        Args:
            curve: At least 5 points spanning at least half a period

        Returns:
            CosineFit: Fitted amplitude, period (> 0) and RMS residual

        Raises:
            FitError: Degenerate data, too few points, or no convergence
        """
        t = curve.times
        a = curve.amplitudes
        self._check(t, a)
        A0, T0 = self.grid_search(t, a)

        def residuals(p):
            return p[0] * np.cos(2 * np.pi * t / p[1]) - a

        def jacobian(p):
            phase = 2 * np.pi * t / p[1]
            return np.column_stack((np.cos(phase), p[0] * np.sin(phase) * phase / p[1]))

        result = least_squares(residuals, x0=[A0, T0], jac=jacobian, method='lm',
                               x_scale='jac', xtol=self.step_tol, ftol=self.step_tol,
                               max_nfev=self.max_iter)
        if result.status <= 0:
            raise FitError(f"Cosine fit did not converge: {result.message}")

        amplitude, period = float(result.x[0]), abs(float(result.x[1]))
        if not np.isfinite(period) or period == 0:
            raise FitError("Cosine fit produced an invalid period")
        span = float(t.max() - t.min())
        if span < period / 2:
            raise FitError(f"Data span {span:g} s covers less than half the fitted period {period:g} s")
        rms = float(np.sqrt(np.mean(result.fun ** 2)))
        return CosineFit(amplitude, period, rms, int(result.nfev))
