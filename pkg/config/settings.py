# config/settings.py
import os
from typing import Dict, Any, Optional

_ASSETS_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), 'assets')


def _env_float(name: str, default: float) -> float:
    raw = os.getenv(name)
    if raw is None or not raw.strip():
        return default
    try:
        return float(raw)
    except ValueError:
        raise ValueError(f"Environment variable {name} must be a number, got {raw!r}")


def _env_int(name: str, default: int) -> int:
    raw = os.getenv(name)
    if raw is None or not raw.strip():
        return default
    try:
        return int(raw)
    except ValueError:
        raise ValueError(f"Environment variable {name} must be an integer, got {raw!r}")


class SimulatorSettings:
    """Process-level simulator settings (tolerances, limits, fit controls)"""

    def __init__(self):
        """Initialize settings and ensure environment variables are loaded"""
        # Try to load .env file if it exists
        try:
            from dotenv import load_dotenv
            load_dotenv()
        except ImportError:
            pass  # dotenv not installed, use system environment

    @property
    def MAX_SPINS(self) -> int:
        """Largest spin count any operator may be built for (memory guard)"""
        return _env_int('SPINSIM_MAX_SPINS', 12)

    @property
    def HERMITIAN_TOL(self) -> float:
        return _env_float('SPINSIM_HERMITIAN_TOL', 1e-12)

    @property
    def UNITARY_TOL(self) -> float:
        return _env_float('SPINSIM_UNITARY_TOL', 1e-10)

    @property
    def OPERATOR_TOL(self) -> float:
        """Max elementwise difference for operator equality"""
        return _env_float('SPINSIM_OPERATOR_TOL', 1e-10)

    @property
    def DEVIATION_TOL(self) -> float:
        """Tolerance of the normalized deviation-matrix equality predicate"""
        return _env_float('SPINSIM_DEVIATION_TOL', 1e-8)

    @property
    def ORDER_TOL(self) -> float:
        """Coherence orders below this magnitude count as order zero"""
        return _env_float('SPINSIM_ORDER_TOL', 1e-9)

    @property
    def SNAPSHOT_LIMIT(self) -> Optional[int]:
        """Intermediate states kept by run_sequence (None keeps all)"""
        limit = _env_int('SPINSIM_SNAPSHOT_LIMIT', 0)
        return limit if limit > 0 else None

    @property
    def FIT_GRID_POINTS(self) -> int:
        return _env_int('SPINSIM_FIT_GRID_POINTS', 200)

    @property
    def FIT_MAX_ITER(self) -> int:
        return _env_int('SPINSIM_FIT_MAX_ITER', 100)

    @property
    def FIT_STEP_TOL(self) -> float:
        return _env_float('SPINSIM_FIT_STEP_TOL', 1e-12)

    @property
    def JOBS(self) -> int:
        return max(1, _env_int('SPINSIM_JOBS', 1))

    @property
    def VERIFY_SEED(self) -> int:
        return _env_int('SPINSIM_VERIFY_SEED', 2024)

    @property
    def ASSETS_DIR(self) -> str:
        return os.getenv('SPINSIM_ASSETS_DIR', _ASSETS_DIR)

    # Acquisition defaults used when an experiment config leaves them out
    ACQUISITION_DEFAULTS = {
        'dwell_s': 1e-4,
        'n_samples': 4096,
        'line_broadening_hz': 1.0,
        'halve_first_point': True,
    }

    def asset_path(self, name: str) -> str:
        """Absolute path of a bundled asset"""
        return os.path.join(self.ASSETS_DIR, name)

    def to_dict(self) -> Dict[str, Any]:
        """Current settings as a plain dictionary"""
        return {
            'max_spins': self.MAX_SPINS,
            'hermitian_tol': self.HERMITIAN_TOL,
            'unitary_tol': self.UNITARY_TOL,
            'operator_tol': self.OPERATOR_TOL,
            'deviation_tol': self.DEVIATION_TOL,
            'order_tol': self.ORDER_TOL,
            'snapshot_limit': self.SNAPSHOT_LIMIT,
            'fit_grid_points': self.FIT_GRID_POINTS,
            'fit_max_iter': self.FIT_MAX_ITER,
            'fit_step_tol': self.FIT_STEP_TOL,
            'jobs': self.JOBS,
            'verify_seed': self.VERIFY_SEED,
            'assets_dir': self.ASSETS_DIR,
        }

# Example environment variables for .env file:
# SPINSIM_MAX_SPINS=12
# SPINSIM_DEVIATION_TOL=1e-8
# SPINSIM_FIT_GRID_POINTS=200
# SPINSIM_JOBS=4
# SPINSIM_VERIFY_SEED=2024
