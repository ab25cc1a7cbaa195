from typing import Dict, List

import numpy as np


class CoherenceDecomposition:
    """
    Partition of the entries of a dim x dim operator by weighted coherence order

    Attributes:
        dim: Matrix dimension
        orders: Map from coherence order p to a boolean mask over the entries
    """

    def __init__(self, dim: int, orders: Dict[float, np.ndarray]):
        self.dim = dim
        self.orders = orders

    def mask(self, order: float) -> np.ndarray:
        """Mask of the entries at the given order (all False if absent)"""
        for key, value in self.orders.items():
            if abs(key - order) < 1e-9:
                return value
        return np.zeros((self.dim, self.dim), dtype=bool)

    @property
    def zero_order(self) -> np.ndarray:
        return self.mask(0.0)

    def order_of(self, row: int, col: int) -> float:
        """Order of entry (row, col), 0-based indices"""
        for key, value in self.orders.items():
            if value[row, col]:
                return key
        raise IndexError(f"Entry ({row}, {col}) outside a {self.dim}x{self.dim} decomposition")

    def present_orders(self, rho: np.ndarray, tol: float = 1e-12) -> List[float]:
        """Sorted orders at which rho has entries above tol"""
        return sorted(p for p, m in self.orders.items() if np.any(np.abs(rho[m]) > tol))

    def to_dict(self) -> dict:
        return {
            'dim': self.dim,
            'orders': {str(p): int(m.sum()) for p, m in sorted(self.orders.items())},
        }

    def __repr__(self) -> str:
        return f"CoherenceDecomposition(dim={self.dim}, orders={sorted(self.orders)})"
