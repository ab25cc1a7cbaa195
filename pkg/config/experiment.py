# config/experiment.py
import json
import os
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from config.settings import SimulatorSettings
from entity.spectral import SPECTRUM_MODES
from entity.spin_system import SpinSystem
from service.errors import ConfigError


class AcquisitionConfig:
    """FID acquisition and spectrum display parameters"""

    def __init__(self, dwell_s: float, n_samples: int, line_broadening_hz: float,
                 detect_spins: Tuple[int, ...], mode: str = 'magnitude', scan_mode: str = 'real',
                 halve_first_point: bool = True):
        self.dwell_s = dwell_s
        self.n_samples = n_samples
        self.line_broadening_hz = line_broadening_hz
        self.detect_spins = detect_spins
        self.mode = mode
        self.scan_mode = scan_mode
        self.halve_first_point = halve_first_point

    def to_dict(self) -> Dict[str, Any]:
        return {
            'dwell_s': self.dwell_s,
            'n_samples': self.n_samples,
            'line_broadening_hz': self.line_broadening_hz,
            'detect_spins': list(self.detect_spins),
            'mode': self.mode,
            'scan_mode': self.scan_mode,
            'halve_first_point': self.halve_first_point,
        }


class ScanConfig:
    """Refocused-evolution times of a decoherence scan"""

    def __init__(self, t_start: float, t_stop: float, n_points: int,
                 window_hz: Optional[Tuple[float, float]] = None):
        self.t_start = t_start
        self.t_stop = t_stop
        self.n_points = n_points
        self.window_hz = window_hz

    @property
    def times(self) -> np.ndarray:
        return np.linspace(self.t_start, self.t_stop, self.n_points)

    def to_dict(self) -> Dict[str, Any]:
        return {
            't_start': self.t_start,
            't_stop': self.t_stop,
            'n_points': self.n_points,
            'window_hz': list(self.window_hz) if self.window_hz else None,
        }


class ExperimentConfig:
    """
    Everything one experiment needs: spin system, acquisition, scan and paths

    Attributes:
        spin_system: The simulated molecule
        acquisition: FID/spectrum parameters
        scan: Scan block (None when the config has none)
        reference_mhz: Spectrometer frequency of the observed nucleus, for ppm axes
        carrier_ppm: Rotating-frame carrier position in ppm
        script: Default sequence script path or 'builtin:<name>'
        output_dir: Directory reports are written to
        seed: Seed of the randomized verify checks
    """

    def __init__(self, spin_system: SpinSystem, acquisition: AcquisitionConfig,
                 scan: Optional[ScanConfig] = None, reference_mhz: Optional[float] = None,
                 carrier_ppm: Optional[float] = None, script: Optional[str] = None,
                 output_dir: Optional[str] = None, seed: int = 2024, random_systems: int = 50,
                 name: Optional[str] = None):
        self.spin_system = spin_system
        self.acquisition = acquisition
        self.scan = scan
        self.reference_mhz = reference_mhz
        self.carrier_ppm = carrier_ppm
        self.script = script
        self.output_dir = output_dir
        self.seed = seed
        self.random_systems = random_systems
        self.name = name

    @property
    def has_ppm_axis(self) -> bool:
        return self.reference_mhz is not None and self.carrier_ppm is not None

    def ppm_axis(self, freq_hz: np.ndarray) -> Optional[np.ndarray]:
        """Chemical shift of each rotating-frame frequency, if a reference is configured"""
        if not self.has_ppm_axis:
            return None
        return self.carrier_ppm + np.asarray(freq_hz) / self.reference_mhz

    def to_dict(self) -> Dict[str, Any]:
        return {
            'name': self.name,
            'spin_system': self.spin_system.to_dict(),
            'acquisition': self.acquisition.to_dict(),
            'scan': self.scan.to_dict() if self.scan else None,
            'reference_mhz': self.reference_mhz,
            'carrier_ppm': self.carrier_ppm,
            'script': self.script,
            'output_dir': self.output_dir,
            'seed': self.seed,
        }


def _number(section: Dict[str, Any], key: str, where: str, default=None, integer: bool = False):
    value = section.get(key)
    if value is None:
        return default
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}.{key} must be a number, got {value!r}")
    if integer:
        if int(value) != value:
            raise ConfigError(f"{where}.{key} must be an integer, got {value!r}")
        return int(value)
    if not np.isfinite(value):
        raise ConfigError(f"{where}.{key} must be finite")
    return float(value)


def _spin_ref(sys: SpinSystem, value: Any) -> int:
    """1-based index of a spin given by label or integer index"""
    if isinstance(value, str):
        return sys.index_of(value)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValueError(f"spins are labels or integer indices, got {value!r}")
    return value


def _per_spin(value: Any, labels, where: str, default: float = 0.0) -> np.ndarray:
    """Per-spin values given as a list or a {label: value} mapping (missing labels get default)"""
    if isinstance(value, dict):
        unknown = sorted(set(value) - set(labels))
        if unknown:
            raise ConfigError(f"{where}: unknown spin labels {unknown}")
        result = [value.get(label, default) for label in labels]
    elif isinstance(value, list):
        if len(value) != len(labels):
            raise ConfigError(f"{where} must have {len(labels)} entries, got {len(value)}")
        result = [default if v is None else v for v in value]
    else:
        raise ConfigError(f"{where} must be a list or a mapping of label to value")
    try:
        return np.array(result, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"{where} must contain numbers")


def _load_spin_system(section: Dict[str, Any]) -> Tuple[SpinSystem, Optional[float], Optional[float]]:
    where = 'spin_system'
    if not isinstance(section, dict):
        raise ConfigError("spin_system section is required")
    labels = section.get('labels')
    if not isinstance(labels, list) or not labels:
        raise ConfigError(f"{where}.labels must be a nonempty list")

    reference_mhz = _number(section, 'reference_mhz', where)
    carrier_ppm = _number(section, 'carrier_ppm', where)
    if reference_mhz is not None and reference_mhz <= 0:
        raise ConfigError(f"{where}.reference_mhz must be positive")

    if 'offset_hz' in section and 'offset_ppm' in section:
        raise ConfigError(f"{where}: give offset_hz or offset_ppm, not both")
    if 'offset_ppm' in section:
        if reference_mhz is None or carrier_ppm is None:
            raise ConfigError(f"{where}.offset_ppm requires reference_mhz and carrier_ppm")
        ppm = _per_spin(section['offset_ppm'], labels, f"{where}.offset_ppm", default=np.nan)
        offsets = np.where(np.isnan(ppm), 0.0, (ppm - carrier_ppm) * reference_mhz)
    elif 'offset_hz' in section:
        offsets = _per_spin(section['offset_hz'], labels, f"{where}.offset_hz")
    else:
        offsets = None

    zqf = section.get('zero_quantum_filter', False)
    if not isinstance(zqf, bool):
        raise ConfigError(f"{where}.zero_quantum_filter must be true or false, got {zqf!r}")

    weights = section.get('gradient_weights')
    if weights is not None:
        weights = _per_spin(weights, labels, f"{where}.gradient_weights", default=1.0)

    try:
        sys = SpinSystem(
            labels=labels,
            offset_hz=offsets,
            j_hz=section.get('j_hz'),
            gradient_weights=weights,
            gamma_ratio=section.get('gamma_ratio', 1.0),
            system_spins=section.get('system_spins'),
            env_spins=section.get('env_spins'),
            zero_quantum_filter=zqf,
            name=section.get('name'),
        )
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{where}: {e}")
    return sys, reference_mhz, carrier_ppm


def _load_acquisition(section: Dict[str, Any], sys: SpinSystem) -> AcquisitionConfig:
    where = 'acquisition'
    if not isinstance(section, dict):
        raise ConfigError(f"{where} must be a mapping")
    defaults = SimulatorSettings.ACQUISITION_DEFAULTS
    dwell = _number(section, 'dwell_s', where, defaults['dwell_s'])
    n_samples = _number(section, 'n_samples', where, defaults['n_samples'], integer=True)
    lb = _number(section, 'line_broadening_hz', where, defaults['line_broadening_hz'])
    if dwell <= 0:
        raise ConfigError(f"{where}.dwell_s must be positive")
    if n_samples < 2:
        raise ConfigError(f"{where}.n_samples must be >= 2")
    if lb < 0:
        raise ConfigError(f"{where}.line_broadening_hz must be >= 0")

    detect = section.get('detect_spins', sorted(sys.system_spins))
    if not isinstance(detect, list) or not detect:
        raise ConfigError(f"{where}.detect_spins must be a nonempty list")
    try:
        detect = tuple(sorted(_spin_ref(sys, k) for k in detect))
    except ValueError as e:
        raise ConfigError(f"{where}.detect_spins: {e}")
    if not set(detect) <= sys.system_spins:
        raise ConfigError(f"{where}.detect_spins must be system spins {sorted(sys.system_spins)}")

    mode = section.get('mode', 'magnitude')
    scan_mode = section.get('scan_mode', 'real')
    for key, value in (('mode', mode), ('scan_mode', scan_mode)):
        if value not in SPECTRUM_MODES:
            raise ConfigError(f"{where}.{key} must be one of {SPECTRUM_MODES}, got {value!r}")
    halve = section.get('halve_first_point', defaults['halve_first_point'])
    if not isinstance(halve, bool):
        raise ConfigError(f"{where}.halve_first_point must be true or false")
    return AcquisitionConfig(dwell, n_samples, lb, detect, mode, scan_mode, halve)


def parse_window(value: Any, where: str = 'window') -> Optional[Tuple[float, float]]:
    """(lo, hi) in Hz from a two-element list or an 'LO:HI' string"""
    if value is None:
        return None
    if isinstance(value, str):
        parts = value.split(':')
        if len(parts) != 2:
            raise ConfigError(f"{where} must look like LO_HZ:HI_HZ, got {value!r}")
        value = parts
    try:
        lo, hi = (float(v) for v in value)
    except (TypeError, ValueError):
        raise ConfigError(f"{where} must be two numbers in Hz, got {value!r}")
    if not (np.isfinite(lo) and np.isfinite(hi)) or lo >= hi:
        raise ConfigError(f"{where} must satisfy LO < HI, got {lo}:{hi}")
    return lo, hi


def _load_scan(section: Optional[Dict[str, Any]]) -> Optional[ScanConfig]:
    if section is None:
        return None
    where = 'scan'
    if not isinstance(section, dict):
        raise ConfigError(f"{where} must be a mapping")
    t_start = _number(section, 't_start', where, 0.0)
    t_stop = _number(section, 't_stop', where)
    n_points = _number(section, 'n_points', where, integer=True)
    if t_stop is None or n_points is None:
        raise ConfigError(f"{where} needs t_stop and n_points")
    if t_start < 0:
        raise ConfigError(f"{where}.t_start must be >= 0")
    if t_stop <= t_start:
        raise ConfigError(f"{where}.t_stop must be greater than t_start")
    if n_points < 2:
        raise ConfigError(f"{where}.n_points must be >= 2")
    return ScanConfig(t_start, t_stop, n_points, parse_window(section.get('window_hz'), f"{where}.window_hz"))


def load_experiment_config(source: Union[str, Dict[str, Any]]) -> ExperimentConfig:
    """
    Load and validate an experiment description

    Args:
        source: Path to a JSON file, or an already-decoded mapping

    Returns:
        ExperimentConfig: Validated configuration; relative paths resolved against the file

    Raises:
        ConfigError: Unreadable file, malformed JSON or any invalid field
    """
    base_dir = os.getcwd()
    if isinstance(source, str):
        try:
            with open(source, 'r', encoding='utf-8') as f:
                data = json.load(f)
        except FileNotFoundError:
            raise ConfigError(f"Config file not found: {source}")
        except json.JSONDecodeError as e:
            raise ConfigError(f"Malformed config {source}: line {e.lineno}, column {e.colno}: {e.msg}")
        except OSError as e:
            raise ConfigError(f"Cannot read config {source}: {e}")
        base_dir = os.path.dirname(os.path.abspath(source))
    else:
        data = source
    if not isinstance(data, dict):
        raise ConfigError("Config must be a JSON object")

    sys, reference_mhz, carrier_ppm = _load_spin_system(data.get('spin_system'))
    acquisition = _load_acquisition(data.get('acquisition', {}), sys)
    scan = _load_scan(data.get('scan'))

    paths = data.get('paths', {})
    if not isinstance(paths, dict):
        raise ConfigError("paths must be a mapping")
    script = paths.get('script')
    output_dir = paths.get('output_dir')
    for key, value in (('script', script), ('output_dir', output_dir)):
        if value is not None and not isinstance(value, str):
            raise ConfigError(f"paths.{key} must be a string, got {value!r}")
    if script and not script.startswith('builtin:') and not os.path.isabs(script):
        script = os.path.join(base_dir, script)
    if output_dir and not os.path.isabs(output_dir):
        output_dir = os.path.join(base_dir, output_dir)

    verify = data.get('verify', {})
    if not isinstance(verify, dict):
        raise ConfigError("verify must be a mapping")
    seed = _number(verify, 'seed', 'verify', SimulatorSettings().VERIFY_SEED, integer=True)
    random_systems = _number(verify, 'random_systems', 'verify', 50, integer=True)
    if random_systems < 1:
        raise ConfigError("verify.random_systems must be >= 1")

    return ExperimentConfig(sys, acquisition, scan, reference_mhz, carrier_ppm, script,
                            output_dir, seed, random_systems, data.get('name'))
