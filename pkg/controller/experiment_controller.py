# controller/experiment_controller.py
from typing import Any, Callable, Dict, Optional, Tuple, Union

from config.experiment import ExperimentConfig, load_experiment_config, parse_window
from config.settings import SimulatorSettings
from entity.spectral import SPECTRUM_MODES
from service.errors import ConfigError, SimulationError, VerificationFailure
from service.experiment_service import ExperimentService
from service.verification_service import VerificationService, CheckResult

ConfigSource = Union[str, Dict[str, Any], None]
Response = Tuple[Dict[str, Any], int]

DEFAULT_CONFIG_ASSET = 'tce.json'
DEFAULT_OUT_DIR = 'out'


class ExperimentController:
    """Command handlers shared by the CLI and the HTTP API; they return (payload, exit_code)"""

    def __init__(self, settings: Optional[SimulatorSettings] = None):
        self.settings = settings or SimulatorSettings()
        self.experiments = ExperimentService(self.settings)
        self.verifier = VerificationService(self.experiments)

    def _config(self, source: ConfigSource) -> ExperimentConfig:
        if source is None:
            source = self.settings.asset_path(DEFAULT_CONFIG_ASSET)
        return load_experiment_config(source)

    @staticmethod
    def _failure(error: Exception) -> Response:
        if isinstance(error, SimulationError):
            payload = {'success': False, 'error': str(error), 'code': error.code}
            span = getattr(error, 'span', None)
            if span is not None:
                payload['span'] = span.to_dict()
            return payload, error.exit_code
        return {'success': False, 'error': str(error), 'code': 'INTERNAL_ERROR'}, 3

    @staticmethod
    def _out_dir(cfg: ExperimentConfig, out_dir: Optional[str], write_files: bool) -> Optional[str]:
        if not write_files:
            return None
        return out_dir or cfg.output_dir or DEFAULT_OUT_DIR

    @staticmethod
    def _mode(mode: Optional[str]) -> Optional[str]:
        if mode is not None and mode not in SPECTRUM_MODES:
            raise ConfigError(f"mode must be one of {SPECTRUM_MODES}, got {mode!r}")
        return mode

    @staticmethod
    def _window(window) -> Optional[Tuple[float, float]]:
        return parse_window(window, '--window') if window is not None else None

    def state(self, config: ConfigSource = None, script_path: Optional[str] = None,
              script_text: Optional[str] = None, out_dir: Optional[str] = None,
              write_files: bool = True) -> Response:
        """
        Run a script from the equilibrium state and dump the final deviation matrix

        Args:
            config: Config path or mapping (bundled TCE config when None)
            script_path: Script file or 'builtin:<name>'; falls back to the config's script
            script_text: Script source, used instead of script_path when given
            out_dir: Directory for state.txt (config output_dir, then ./out, when None)
            write_files: False keeps everything in the payload

        Returns:
            tuple: (payload, exit_code)
        """
        try:
            cfg = self._config(config)
            text = script_text if script_text is not None else self.experiments.load_script(script_path, cfg)
            report = self.experiments.run_script(cfg, text)
            dump = self.experiments.format_state(report)
            payload = {'success': True, 'data': report.to_dict(), 'text': dump}
            target = self._out_dir(cfg, out_dir, write_files)
            if target:
                payload['files'] = [self.experiments.write_state(dump, target)]
            return payload, 0
        except Exception as e:
            return self._failure(e)

    def scan(self, config: ConfigSource = None, out_dir: Optional[str] = None, jobs: Optional[int] = None,
             mode: Optional[str] = None, window=None, progress: bool = False,
             write_files: bool = True) -> Response:
        """Decoherence scan with cosine fit; writes curve.csv, envelope.csv and fit.json"""
        try:
            cfg = self._config(config)
            result = self.experiments.scan(cfg, jobs=jobs, mode=self._mode(mode),
                                           window=self._window(window), progress=progress)
            payload = {'success': True, 'data': result.to_dict()}
            target = self._out_dir(cfg, out_dir, write_files)
            if target:
                payload['files'] = self.experiments.write_scan(result, target)
            return payload, 0
        except Exception as e:
            return self._failure(e)

    def spectrum(self, config: ConfigSource = None, t: float = 0.0, out_dir: Optional[str] = None,
                 mode: Optional[str] = None, window=None, write_files: bool = True) -> Response:
        """Spectrum after the readout pulse at refocused evolution time t"""
        try:
            cfg = self._config(config)
            spec, ppm = self.experiments.spectrum_at(cfg, float(t), mode=self._mode(mode),
                                                     window=self._window(window))
            data = spec.to_dict()
            data['t_seconds'] = float(t)
            if ppm is not None:
                data['ppm'] = ppm.tolist()
            payload = {'success': True, 'data': data}
            target = self._out_dir(cfg, out_dir, write_files)
            if target:
                payload['files'] = [self.experiments.write_spectrum(spec, ppm, target)]
            return payload, 0
        except Exception as e:
            return self._failure(e)

    def verify(self, config: ConfigSource = None,
               progress: Optional[Callable[[CheckResult], None]] = None) -> Response:
        """Property suite; exit code 4 when any check fails"""
        try:
            cfg = self._config(config)
            report = self.verifier.run(cfg, progress)
            if not report.passed:
                failed = [check.name for check in report.checks if not check.passed]
                error = VerificationFailure(f"{len(failed)} check(s) failed: {', '.join(failed)}")
                payload, code = self._failure(error)
                payload['data'] = report.to_dict()
                return payload, code
            return {'success': True, 'data': report.to_dict()}, 0
        except Exception as e:
            return self._failure(e)
