# entity/sim_state.py
from typing import FrozenSet, Iterable, Dict, Any

import numpy as np

from entity.spin_system import SpinSystem


class SimState:
    """
    Deviation density matrix together with the system it lives in

    Attributes:
        rho: 2^n x 2^n Hermitian deviation density matrix
        sys: Spin system the state belongs to
        decoupled: 1-based indices of spins currently under decoupling
        clock: Elapsed free-evolution time in seconds
    """

    def __init__(self, rho: np.ndarray, sys: SpinSystem,
                 decoupled: Iterable[int] = (), clock: float = 0.0,
                 hermitian_tol: float = 1e-12):
        rho = np.array(rho, dtype=complex)
        dim = 2 ** sys.n
        if rho.shape != (dim, dim):
            raise ValueError(f"rho must be {dim}x{dim} for {sys.n} spins, got shape {rho.shape}")
        scale = max(1.0, float(np.max(np.abs(rho))))
        if np.max(np.abs(rho - rho.conj().T)) > hermitian_tol * scale:
            raise ValueError("rho must be Hermitian")
        decoupled = frozenset(int(k) for k in decoupled)
        if not decoupled <= sys.all_spins:
            raise ValueError(f"Decoupled spins {sorted(decoupled - sys.all_spins)} are not in the system")

        rho.setflags(write=False)
        self.rho = rho
        self.sys = sys
        self.decoupled: FrozenSet[int] = decoupled
        self.clock = float(clock)

    @property
    def n(self) -> int:
        return self.sys.n

    @property
    def active_spins(self) -> FrozenSet[int]:
        return self.sys.all_spins - self.decoupled

    def evolve(self, rho: np.ndarray, elapsed: float = 0.0) -> 'SimState':
        """New state with a transformed rho; decoupling carried over"""
        return SimState(rho, self.sys, self.decoupled, self.clock + elapsed)

    def with_decoupled(self, decoupled: Iterable[int]) -> 'SimState':
        return SimState(self.rho, self.sys, decoupled, self.clock)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'n': self.n,
            'rho_real': self.rho.real.tolist(),
            'rho_imag': self.rho.imag.tolist(),
            'decoupled': sorted(self.decoupled),
            'clock': self.clock,
        }

    def __repr__(self) -> str:
        return f"SimState(n={self.n}, decoupled={sorted(self.decoupled)}, clock={self.clock:.6g})"
