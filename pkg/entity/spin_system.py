# entity/spin_system.py
import numbers
from typing import Iterable, Optional, Sequence, FrozenSet, Dict, Any

import numpy as np

# Relative gyromagnetic ratios used by the gradient crusher (only ratios matter)
NUCLEUS_GRADIENT_WEIGHTS = {
    'C': 1.0,
    'H': 3.977,
}


def default_gradient_weight(label: str) -> float:
    """Crusher weight inferred from the leading letter of a spin label"""
    key = label.strip()[:1].upper() if label else ''
    return NUCLEUS_GRADIENT_WEIGHTS.get(key, 1.0)


def _spin_index(value: Any) -> int:
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise ValueError(f"Spin indices must be integers, got {value!r}")
    return int(value)


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


class SpinSystem:
    """
    Physical spin system: offsets, scalar couplings and the system/environment split

    Attributes:
        n: Spin count
        labels: Per-spin text labels (e.g. "C1", "C2", "H")
        offset_hz: Rotating-frame resonance offsets in Hz
        j_hz: Symmetric n x n scalar-coupling matrix in Hz with zero diagonal
        gradient_weights: Per-spin crusher weights (relative gyromagnetic ratios)
        gamma_ratio: Effective gyromagnetic ratio of spin 1 over spin 2, in (0, 1]
        system_spins: 1-based indices of the system
        env_spins: 1-based indices of the environment
        zero_quantum_filter: Whether [grad]_z also removes order-zero coherences
        name: Optional display name
    """

    def __init__(
        self,
        labels: Sequence[str],
        offset_hz: Optional[Sequence[float]] = None,
        j_hz: Optional[Any] = None,
        gradient_weights: Optional[Sequence[float]] = None,
        gamma_ratio: float = 1.0,
        system_spins: Optional[Iterable[int]] = None,
        env_spins: Optional[Iterable[int]] = None,
        zero_quantum_filter: bool = False,
        name: Optional[str] = None
    ):
        labels = tuple(str(label) for label in labels)
        n = len(labels)
        if n < 1:
            raise ValueError("A spin system needs at least one spin")
        if len(set(labels)) != n:
            raise ValueError(f"Spin labels must be unique: {list(labels)}")

        offsets = np.zeros(n) if offset_hz is None else np.asarray(offset_hz, dtype=float).copy()
        if offsets.shape != (n,):
            raise ValueError(f"offset_hz must have {n} entries, got shape {offsets.shape}")

        couplings = np.zeros((n, n)) if j_hz is None else np.asarray(j_hz, dtype=float).copy()
        if couplings.shape != (n, n):
            raise ValueError(f"j_hz must be {n}x{n}, got shape {couplings.shape}")
        if np.any(np.diag(couplings) != 0):
            raise ValueError("j_hz must have a zero diagonal")
        if not np.array_equal(couplings, couplings.T):
            raise ValueError("j_hz must be symmetric")

        if gradient_weights is None:
            weights = np.array([default_gradient_weight(label) for label in labels])
        else:
            weights = np.asarray(gradient_weights, dtype=float).copy()
        if weights.shape != (n,):
            raise ValueError(f"gradient_weights must have {n} entries, got shape {weights.shape}")

        if not np.all(np.isfinite(offsets)) or not np.all(np.isfinite(couplings)) \
                or not np.all(np.isfinite(weights)):
            raise ValueError("Offsets, couplings and gradient weights must be finite")

        gamma_ratio = float(gamma_ratio)
        if not (0.0 < gamma_ratio <= 1.0):
            raise ValueError(f"gamma_ratio must lie in (0, 1], got {gamma_ratio}")

        all_spins = frozenset(range(1, n + 1))
        if system_spins is None:
            system = frozenset({1, 2}) if n >= 2 else all_spins
        else:
            system = frozenset(_spin_index(k) for k in system_spins)
        env = all_spins - system if env_spins is None else frozenset(_spin_index(k) for k in env_spins)
        if not system:
            raise ValueError("system_spins must not be empty")
        if system & env:
            raise ValueError(f"Spins {sorted(system & env)} are both system and environment")
        if (system | env) != all_spins:
            raise ValueError(f"system_spins and env_spins must cover spins 1..{n} exactly")

        self.n = n
        self.labels = labels
        self.offset_hz = _frozen(offsets)
        self.j_hz = _frozen(couplings)
        self.gradient_weights = _frozen(weights)
        self.gamma_ratio = gamma_ratio
        self.system_spins: FrozenSet[int] = system
        self.env_spins: FrozenSet[int] = env
        self.zero_quantum_filter = bool(zero_quantum_filter)
        self.name = name

    @property
    def all_spins(self) -> FrozenSet[int]:
        return frozenset(range(1, self.n + 1))

    def coupling(self, i: int, j: int) -> float:
        """J_ij in Hz for 1-based spin indices"""
        if not (1 <= i <= self.n and 1 <= j <= self.n):
            raise ValueError(f"Spin index out of range 1..{self.n}: ({i}, {j})")
        return float(self.j_hz[i - 1, j - 1])

    def index_of(self, label: str) -> int:
        """1-based index of a spin label"""
        try:
            return self.labels.index(label) + 1
        except ValueError:
            raise ValueError(f"Unknown spin label: {label}")

    def replace(self, **changes) -> 'SpinSystem':
        """Copy of this system with some fields changed"""
        fields = {
            'labels': self.labels,
            'offset_hz': self.offset_hz,
            'j_hz': self.j_hz,
            'gradient_weights': self.gradient_weights,
            'gamma_ratio': self.gamma_ratio,
            'system_spins': self.system_spins,
            'env_spins': self.env_spins,
            'zero_quantum_filter': self.zero_quantum_filter,
            'name': self.name,
        }
        fields.update(changes)
        return SpinSystem(**fields)

    def restrict(self, spins: Iterable[int]) -> 'SpinSystem':
        """Subsystem of the given spins, renumbered 1..m in order; all of them become system spins"""
        keep = sorted(set(_spin_index(k) for k in spins))
        if not keep or keep[0] < 1 or keep[-1] > self.n:
            raise ValueError(f"Cannot restrict to spins {keep} of a {self.n}-spin system")
        index = [k - 1 for k in keep]
        return SpinSystem(
            labels=[self.labels[i] for i in index],
            offset_hz=self.offset_hz[index],
            j_hz=self.j_hz[np.ix_(index, index)],
            gradient_weights=self.gradient_weights[index],
            gamma_ratio=self.gamma_ratio,
            system_spins=range(1, len(keep) + 1),
            env_spins=(),
            zero_quantum_filter=self.zero_quantum_filter,
            name=self.name,
        )

    def to_dict(self) -> Dict[str, Any]:
        """Convert spin system to dictionary"""
        return {
            'name': self.name,
            'labels': list(self.labels),
            'offset_hz': self.offset_hz.tolist(),
            'j_hz': self.j_hz.tolist(),
            'gradient_weights': self.gradient_weights.tolist(),
            'gamma_ratio': self.gamma_ratio,
            'system_spins': sorted(self.system_spins),
            'env_spins': sorted(self.env_spins),
            'zero_quantum_filter': self.zero_quantum_filter,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'SpinSystem':
        """Create spin system from dictionary"""
        return cls(
            labels=data['labels'],
            offset_hz=data.get('offset_hz'),
            j_hz=data.get('j_hz'),
            gradient_weights=data.get('gradient_weights'),
            gamma_ratio=data.get('gamma_ratio', 1.0),
            system_spins=data.get('system_spins'),
            env_spins=data.get('env_spins'),
            zero_quantum_filter=data.get('zero_quantum_filter', False),
            name=data.get('name'),
        )

    def __str__(self) -> str:
        return (f"SpinSystem(name={self.name!r}, labels={list(self.labels)}, "
                f"system={sorted(self.system_spins)}, env={sorted(self.env_spins)})")

    def __repr__(self) -> str:
        return self.__str__()
