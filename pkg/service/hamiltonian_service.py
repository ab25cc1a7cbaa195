# service/hamiltonian_service.py
from typing import Iterable, Optional

import numpy as np

from entity.spin_system import SpinSystem
from service.errors import OperatorError
from service.operator_service import OperatorService

TWO_PI = 2.0 * np.pi


class HamiltonianService:
    """Builds the diagonal Zeeman + zz-coupling Hamiltonians of a spin system (rad/s)"""

    def __init__(self, operator_service: Optional[OperatorService] = None):
        self.ops = operator_service or OperatorService()

    def _diagonal(self, sys: SpinSystem, active: Iterable[int],
                  zeeman: bool = True, couplings: bool = True) -> np.ndarray:
        active = frozenset(active)
        m = self.ops.m_values(sys.n)
        energies = np.zeros(2 ** sys.n)
        if zeeman:
            for k in sorted(active):
                energies -= TWO_PI * sys.offset_hz[k - 1] * m[:, k - 1]
        if couplings:
            for i in sorted(active):
                for j in sorted(active):
                    if i < j and sys.j_hz[i - 1, j - 1] != 0:
                        energies += TWO_PI * sys.j_hz[i - 1, j - 1] * m[:, i - 1] * m[:, j - 1]
        return np.diag(energies).astype(complex)

    def full_hamiltonian(self, sys: SpinSystem) -> np.ndarray:
        """H = sum_k -2*pi*nu_k Iz_k + sum_{i<j} 2*pi*J_ij Iz_i Iz_j"""
        return self._diagonal(sys, sys.all_spins)

    def closed_hamiltonian(self, sys: SpinSystem, active: Iterable[int]) -> np.ndarray:
        """
        Hamiltonian with every term touching a non-active spin removed

        Args:
            sys: Spin system
            active: 1-based spins whose Zeeman and mutual coupling terms are kept

        Returns:
            np.ndarray: 2^n x 2^n diagonal operator (dimension unchanged)

        Raises:
            OperatorError: If active is empty or names spins outside the system
        """
        active = frozenset(active)
        if not active:
            raise OperatorError("closed_hamiltonian needs at least one active spin")
        if not active <= sys.all_spins:
            raise OperatorError(f"Active spins {sorted(active - sys.all_spins)} are not in the system")
        return self._diagonal(sys, active)

    def effective_hamiltonian(self, sys: SpinSystem) -> np.ndarray:
        """Couplings only, every Zeeman term dropped"""
        return self._diagonal(sys, sys.all_spins, zeeman=False)

    def zeeman_hamiltonian(self, sys: SpinSystem) -> np.ndarray:
        return self._diagonal(sys, sys.all_spins, couplings=False)

    def interaction_hamiltonian(self, sys: SpinSystem) -> np.ndarray:
        """sum over environment spins k of 2*pi*(J_1k Iz_1 Iz_k + J_2k Iz_2 Iz_k)"""
        if sys.system_spins != frozenset({1, 2}):
            raise OperatorError(f"interaction_hamiltonian needs system spins {{1, 2}}, got {sorted(sys.system_spins)}")
        m = self.ops.m_values(sys.n)
        energies = np.zeros(2 ** sys.n)
        for k in sorted(sys.env_spins):
            energies += TWO_PI * (sys.j_hz[0, k - 1] * m[:, 0] + sys.j_hz[1, k - 1] * m[:, 1]) * m[:, k - 1]
        return np.diag(energies).astype(complex)

    def system_coupling_hamiltonian(self, sys: SpinSystem) -> np.ndarray:
        """2*pi*J_12 Iz_1 Iz_2"""
        if sys.n < 2:
            raise OperatorError("A system coupling term needs at least 2 spins")
        return self._diagonal(sys, {1, 2}, zeeman=False)

    @staticmethod
    def preparation_angle(sys: SpinSystem) -> float:
        """alpha = arccos(gamma_ratio)"""
        ratio = sys.gamma_ratio
        if not 0.0 < ratio <= 1.0:
            raise OperatorError(f"gamma_ratio must lie in (0, 1], got {ratio}")
        return float(np.arccos(ratio))
