# service/experiment_service.py
import json
import os
import sys as _sys
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, NamedTuple, Optional, Tuple, Any

import numpy as np
from tqdm import tqdm

from config.experiment import ExperimentConfig
from config.settings import SimulatorSettings
from entity.sim_state import SimState
from entity.spectral import Spectrum, DecoherenceCurve, CosineFit
from entity.spin_system import SpinSystem
from service.analysis_service import AnalysisService
from service.engine_service import EngineService
from service.errors import FitError, ConfigError
from service.fit_service import FitService
from service.hamiltonian_service import HamiltonianService
from service.operator_service import OperatorService
from service.sequence_service import SequenceService

REFERENCE_FIT_ASSET = 'reference_fit.json'


class ScanPoint(NamedTuple):
    t: float
    amplitude: float
    corner: float
    envelope: float


class ScanResult:
    """Decoherence scan: peak amplitudes, traced corner coherences, analytic envelope and fit"""

    def __init__(self, points: List[ScanPoint], window: Tuple[float, float], mode: str, phase: float,
                 fit: Optional[CosineFit], theory_period: Optional[float],
                 warnings: List[str], info: List[str]):
        self.points = points
        self.window = window
        self.mode = mode
        self.phase = phase
        self.fit = fit
        self.theory_period = theory_period
        self.warnings = warnings
        self.info = info

    @property
    def curve(self) -> DecoherenceCurve:
        return DecoherenceCurve((p.t, p.amplitude) for p in self.points)

    @property
    def max_envelope_error(self) -> float:
        """Largest |corner + envelope| over the scan"""
        return max((abs(p.corner + p.envelope) for p in self.points), default=0.0)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'window_hz': list(self.window),
            'mode': self.mode,
            'phase_rad': self.phase,
            't_seconds': [p.t for p in self.points],
            'amplitude': [p.amplitude for p in self.points],
            'corner_coherence': [p.corner for p in self.points],
            'envelope': [p.envelope for p in self.points],
            'max_envelope_error': self.max_envelope_error,
            'fit': self.fit.to_dict() if self.fit else None,
            'theory_period_s': self.theory_period,
            'warnings': self.warnings,
            'info': self.info,
        }


class StateReport:
    """Final state of a script run"""

    def __init__(self, state: SimState, normalized: np.ndarray, coefficients: Dict[str, float],
                 identified: Optional[str], events: int):
        self.state = state
        self.normalized = normalized
        self.coefficients = coefficients
        self.identified = identified
        self.events = events

    def to_dict(self) -> Dict[str, Any]:
        return {
            'events': self.events,
            'clock': self.state.clock,
            'decoupled': sorted(self.state.decoupled),
            'normalized_real': np.round(self.normalized.real, 12).tolist(),
            'normalized_imag': np.round(self.normalized.imag, 12).tolist(),
            'coefficients': self.coefficients,
            'identified': self.identified,
        }


def _significant(value: float, digits: int = 4) -> str:
    if abs(value) < 5e-13:
        return '0'
    return f"{value:.{digits}g}"


class ExperimentService:
    """Runs scripts, decoherence scans and spectra for an experiment config"""

    def __init__(self, settings: Optional[SimulatorSettings] = None):
        self.settings = settings or SimulatorSettings()
        self.ops = OperatorService(self.settings)
        self.hamiltonians = HamiltonianService(self.ops)
        self.sequences = SequenceService(self.hamiltonians)
        self.engine = EngineService(self.ops, self.hamiltonians, self.settings)
        self.analysis = AnalysisService(self.ops, self.hamiltonians)
        self.fitter = FitService(self.settings)

    # Named states

    def pseudo_pure_operator(self, n: int) -> np.ndarray:
        """Iz1 + Iz2 - 2 Iz1 Iz2"""
        return (self.ops.spin_operator('z', 1, n) + self.ops.spin_operator('z', 2, n)
                - self.ops.product_operator([('z', 1), ('z', 2)], n, 2.0))

    def bell_operator(self, n: int) -> np.ndarray:
        """Ix1 Ix2 - Iz1 Iz2 - Iy1 Iy2"""
        return (self.ops.product_operator([('x', 1), ('x', 2)], n)
                - self.ops.product_operator([('z', 1), ('z', 2)], n)
                - self.ops.product_operator([('y', 1), ('y', 2)], n))

    def identify(self, rho: np.ndarray, sys: SpinSystem) -> Optional[str]:
        if sys.n < 2 or not np.any(rho - np.trace(rho) / rho.shape[0] * np.eye(rho.shape[0])):
            return None
        candidates = {
            'pseudo-pure |down,down> (Iz1 + Iz2 - 2 Iz1Iz2)': self.pseudo_pure_operator(sys.n),
            'entangled Bell state (Ix1Ix2 - Iz1Iz2 - Iy1Iy2)': self.bell_operator(sys.n),
            'equilibrium': self.engine.equilibrium_rho(sys),
        }
        for name, operator in candidates.items():
            if self.ops.deviation_equal(rho, operator):
                return name
        return None

    # Scripts

    def load_script(self, script: Optional[str], config: ExperimentConfig) -> str:
        """Script text from a path, 'builtin:<name>', or the config's default script"""
        script = script or config.script
        if script is None:
            return ''
        if script.strip().startswith('builtin:'):
            return script
        try:
            with open(script, 'r', encoding='utf-8') as f:
                return f.read()
        except OSError as e:
            raise ConfigError(f"Cannot read script {script}: {e}")

    def run_script(self, config: ExperimentConfig, script_text: str) -> StateReport:
        """Run a script from the equilibrium state with the environment decoupled"""
        sys = config.spin_system
        seq = self.sequences.evaluate_durations(self.sequences.resolve(script_text, sys), sys)
        state, _ = self.engine.run_sequence(self.engine.initial_state(sys), seq)
        rho = state.rho
        deviation = rho - np.trace(rho) / rho.shape[0] * np.eye(rho.shape[0])
        raw = self.ops.decompose(deviation)
        raw.pop('E', None)
        magnitudes = [abs(c) for c in raw.values()]
        reference = min((m for m in magnitudes if m > 1e-6 * max(magnitudes)), default=1.0)
        coefficients = {label: c / reference for label, c in raw.items()}
        return StateReport(state, self.ops.normalize_deviation(rho), coefficients,
                           self.identify(rho, sys), len(seq))

    def format_state(self, report: StateReport) -> str:
        """Plain-text dump: normalized matrix to 4 significant digits, then coefficients"""
        lines = [f"# events: {report.events}, clock: {report.state.clock:.6g} s, "
                 f"decoupled: {sorted(report.state.decoupled)}"]
        lines.append('# normalized deviation matrix (re, im)')
        for row in report.normalized:
            lines.append('  '.join(f"{_significant(v.real)}{'+' if v.imag >= 0 else '-'}{_significant(abs(v.imag))}i"
                                   for v in row))
        lines.append('# product-operator coefficients')
        for label, c in sorted(report.coefficients.items(), key=lambda item: (len(item[0]), item[0])):
            lines.append(f"{label:>12s}  {_significant(c)}")
        if report.identified:
            lines.append(f"# identified: {report.identified}")
        return '\n'.join(lines) + '\n'

    # Decoherence pipeline

    def prepare_entangled(self, sys: SpinSystem) -> SimState:
        """prep then entangle from equilibrium, environment decoupled"""
        state = self.engine.initial_state(sys)
        for name in ('prep', 'entangle'):
            seq = self.sequences.evaluate_durations(self.sequences.compile_builtin(name, sys), sys)
            state, _ = self.engine.run_sequence(state, seq)
        return state

    def evolve(self, entangled: SimState, t: float) -> SimState:
        """Decoupling off, then the refocused evolution block"""
        state = entangled.with_decoupled(entangled.decoupled - entangled.sys.env_spins)
        return self.engine.refocused_evolve(state, t)

    def read_out(self, evolved: SimState) -> SimState:
        """Readout pulse with the environment decoupled again"""
        sys = evolved.sys
        seq = self.sequences.evaluate_durations(self.sequences.compile_builtin('readout', sys), sys)
        state, _ = self.engine.run_sequence(evolved.with_decoupled(evolved.decoupled | sys.env_spins), seq)
        return state

    def acquire(self, config: ExperimentConfig, readout_state: SimState, mode: str,
                phase: float = 0.0) -> Spectrum:
        acq = config.acquisition
        fid = self.analysis.simulate_fid(readout_state, acq.detect_spins, acq.dwell_s, acq.n_samples,
                                         decouple_env=True, lb_hz=acq.line_broadening_hz,
                                         halve_first_point=acq.halve_first_point)
        return self.analysis.spectrum(fid, mode, phase)

    @staticmethod
    def default_window(sys: SpinSystem) -> Tuple[float, float]:
        """Higher-frequency line of the spin-1 doublet"""
        nu1 = float(sys.offset_hz[0])
        j12 = abs(sys.coupling(1, 2))
        if j12 == 0:
            raise ConfigError("A default peak window needs a nonzero J[1,2]; pass one explicitly")
        return nu1 + j12 / 4, nu1 + 3 * j12 / 4

    def theory_period(self, sys: SpinSystem) -> Optional[float]:
        """2/(J13 + J23) for a single environment spin"""
        couplings = self.analysis.environment_couplings(sys)
        if len(couplings) != 1 or sum(couplings[0]) == 0:
            return None
        return 2.0 / abs(sum(couplings[0]))

    def reference_fit(self) -> Optional[Dict[str, Any]]:
        path = self.settings.asset_path(REFERENCE_FIT_ASSET)
        try:
            with open(path, 'r', encoding='utf-8') as f:
                return json.load(f)
        except (OSError, json.JSONDecodeError):
            return None

    def scan_phase(self, config: ExperimentConfig, entangled: SimState, window: Tuple[float, float]) -> float:
        """Zero-order phase that makes the t = 0 peak real and positive"""
        spec = self.acquire(config, self.read_out(self.evolve(entangled, 0.0)), 'magnitude')
        return self.analysis.zero_order_phase(spec, window)

    def scan_point(self, config: ExperimentConfig, entangled: SimState, t: float,
                   window: Tuple[float, float], mode: str, phase: float) -> ScanPoint:
        sys = config.spin_system
        evolved = self.evolve(entangled, t)
        corner = self.analysis.corner_coherence(self.analysis.reduced_system_state(evolved))
        envelope = self.analysis.analytic_envelope(t, self.analysis.environment_couplings(sys))
        spec = self.acquire(config, self.read_out(evolved), mode, phase)
        return ScanPoint(float(t), self.analysis.peak_amplitude(spec, window), corner, envelope)

    def scan(self, config: ExperimentConfig, jobs: Optional[int] = None, mode: Optional[str] = None,
             window: Optional[Tuple[float, float]] = None, progress: bool = True) -> ScanResult:
        """
        Peak amplitude of the spin-1 line versus refocused evolution time, then a cosine fit

        Args:
            config: Experiment with a scan block
            jobs: Worker threads (defaults to SPINSIM_JOBS)
            mode: 'real' (signed, required for fitting) or 'magnitude'
            window: Peak window in Hz (defaults to the scan block, then the higher spin-1 line)
            progress: Show a tqdm bar on stderr

        Returns:
            ScanResult: Points in t order; fit is None when the data are degenerate
        """
        if config.scan is None:
            raise ConfigError("This config has no scan block")
        sys = config.spin_system
        if sys.system_spins != frozenset({1, 2}):
            raise ConfigError(f"The decoherence scan needs system spins {{1, 2}}, got {sorted(sys.system_spins)}")
        mode = mode or config.acquisition.scan_mode
        window = window or config.scan.window_hz or self.default_window(sys)
        jobs = max(1, jobs or self.settings.JOBS)

        entangled = self.prepare_entangled(sys)
        phase = self.scan_phase(config, entangled, window) if mode == 'real' else 0.0
        times = config.scan.times

        def run(t):
            return self.scan_point(config, entangled, t, window, mode, phase)

        with ThreadPoolExecutor(max_workers=jobs) as executor:
            points = list(tqdm(executor.map(run, times), total=len(times), desc='scan',
                               unit='pt', file=_sys.stderr, disable=not progress))

        warnings: List[str] = []
        info: List[str] = []
        fit = None
        try:
            fit = self.fitter.fit_cosine(DecoherenceCurve((p.t, p.amplitude) for p in points))
        except FitError as e:
            warnings.append(f"cosine fit skipped: {e}")

        theory = self.theory_period(sys)
        if fit is not None and theory is not None:
            info.append(f"fitted T = {fit.period * 1e3:.4f} ms, theory 2/(J13+J23) = {theory * 1e3:.4f} ms "
                        f"({(fit.period - theory) / theory * 100:+.3f} %)")
        reference = self.reference_fit()
        if reference is not None and theory is not None:
            ref_t = float(reference['T_seconds'])
            info.append(f"reference experiment T = {ref_t * 1e3:.2f} ms (A = {reference['A']}) is "
                        f"{(theory - ref_t) / theory * 100:.1f} % below theory; not reproducible here "
                        f"({reference.get('cause', 'hardware effects are not simulated')})")
        return ScanResult(points, window, mode, phase, fit, theory, warnings, info)

    def spectrum_at(self, config: ExperimentConfig, t: float, mode: Optional[str] = None,
                    window: Optional[Tuple[float, float]] = None) -> Tuple[Spectrum, Optional[np.ndarray]]:
        """Spectrum after the readout pulse at refocused evolution time t, with its ppm axis"""
        if t < 0:
            raise ConfigError(f"t must be >= 0, got {t}")
        sys = config.spin_system
        if sys.system_spins != frozenset({1, 2}):
            raise ConfigError(f"The spectrum pipeline needs system spins {{1, 2}}, got {sorted(sys.system_spins)}")
        mode = mode or config.acquisition.mode
        entangled = self.prepare_entangled(sys)
        phase = 0.0
        if mode == 'real':
            phase = self.scan_phase(config, entangled, window or self.default_window(sys))
        spec = self.acquire(config, self.read_out(self.evolve(entangled, t)), mode, phase)
        return spec, config.ppm_axis(spec.freq_axis)

    # Output files

    def write_text(self, out_dir: str, name: str, text: str) -> str:
        os.makedirs(out_dir, exist_ok=True)
        path = os.path.join(out_dir, name)
        with open(path, 'w', encoding='utf-8', newline='') as f:
            f.write(text)
        return path

    def write_scan(self, result: ScanResult, out_dir: str) -> List[str]:
        """curve.csv, envelope.csv and fit.json"""
        times = [p.t for p in result.points]
        fit_report = {
            'fit': result.fit.to_dict() if result.fit else None,
            'theory_period_s': result.theory_period,
            'window_hz': list(result.window),
            'mode': result.mode,
            'max_envelope_error': result.max_envelope_error,
            'warnings': result.warnings,
            'info': result.info,
        }
        return [
            self.write_text(out_dir, 'curve.csv', self.analysis.curve_csv(result.curve)),
            self.write_text(out_dir, 'envelope.csv', self.analysis.envelope_csv(
                times, [p.envelope for p in result.points], [p.corner for p in result.points])),
            self.write_text(out_dir, 'fit.json', json.dumps(fit_report, indent=2) + '\n'),
        ]

    def write_spectrum(self, spec: Spectrum, ppm: Optional[np.ndarray], out_dir: str) -> str:
        return self.write_text(out_dir, 'spectrum.csv', self.analysis.spectrum_csv(spec, ppm))

    def write_state(self, text: str, out_dir: str) -> str:
        return self.write_text(out_dir, 'state.txt', text)
