# service/operator_service.py
from functools import lru_cache, reduce
from itertools import product
from typing import Iterable, List, Sequence, Tuple, Dict, Optional

import numpy as np

from config.settings import SimulatorSettings
from entity.coherence import CoherenceDecomposition
from service.errors import OperatorError

# Single-spin angular momentum matrices, |up> first
SPIN_HALF = {
    'x': np.array([[0, 0.5], [0.5, 0]], dtype=complex),
    'y': np.array([[0, -0.5j], [0.5j, 0]], dtype=complex),
    'z': np.array([[0.5, 0], [0, -0.5]], dtype=complex),
}
SPIN_HALF_IDENTITY = np.eye(2, dtype=complex)

PRODUCT_AXES = 'exyz'


@lru_cache(maxsize=1)
def _dual_basis() -> np.ndarray:
    """(4, 4) rows s_a^T / tr(s_a s_a) flattened, a over PRODUCT_AXES"""
    single = dict(SPIN_HALF, e=SPIN_HALF_IDENTITY)
    rows = [single[a].T.reshape(4) / np.real(np.trace(single[a] @ single[a])) for a in PRODUCT_AXES]
    dual = np.array(rows)
    dual.setflags(write=False)
    return dual


@lru_cache(maxsize=512)
def _embedded(axis: str, k: int, n: int) -> np.ndarray:
    factors = [SPIN_HALF_IDENTITY] * n
    factors[k - 1] = SPIN_HALF[axis]
    op = reduce(np.kron, factors)
    op.setflags(write=False)
    return op


@lru_cache(maxsize=64)
def _m_values(n: int) -> np.ndarray:
    """(2^n, n) array of m_k for every basis index; spin 1 is the most significant bit"""
    index = np.arange(2 ** n)[:, None]
    shifts = np.arange(n - 1, -1, -1)[None, :]
    m = 0.5 - ((index >> shifts) & 1)
    m.setflags(write=False)
    return m


class OperatorService:
    """Dense spin-operator constructors and matrix kernels"""

    def __init__(self, settings: Optional[SimulatorSettings] = None):
        settings = settings or SimulatorSettings()
        self.max_spins = settings.MAX_SPINS
        self.hermitian_tol = settings.HERMITIAN_TOL
        self.unitary_tol = settings.UNITARY_TOL
        self.operator_tol = settings.OPERATOR_TOL
        self.deviation_tol = settings.DEVIATION_TOL
        self.order_tol = settings.ORDER_TOL

    def _check_size(self, n: int):
        if n < 1:
            raise OperatorError(f"Spin count must be >= 1, got {n}")
        if n > self.max_spins:
            raise OperatorError(f"{n} spins exceeds the configured maximum of {self.max_spins}")

    @staticmethod
    def spin_count(op: np.ndarray) -> int:
        """n such that op is 2^n x 2^n"""
        dim = op.shape[0]
        if op.ndim != 2 or op.shape[1] != dim or dim < 2 or dim & (dim - 1):
            raise OperatorError(f"Operator must be square with a power-of-two dimension, got shape {op.shape}")
        return dim.bit_length() - 1

    def spin_operator(self, axis: str, k: int, n: int) -> np.ndarray:
        """
        I_axis of spin k embedded in an n-spin space

        Args:
            axis: 'x', 'y' or 'z'
            k: 1-based spin index
            n: Spin count

        Returns:
            np.ndarray: Read-only 2^n x 2^n complex matrix
        """
        self._check_size(n)
        if axis not in SPIN_HALF:
            raise OperatorError(f"Unknown axis {axis!r}, expected x, y or z")
        if not 1 <= k <= n:
            raise OperatorError(f"Spin index {k} out of range 1..{n}")
        return _embedded(axis, k, n)

    def product_operator(self, factors: Sequence[Tuple[str, int]], n: int,
                         scale: float = 1.0) -> np.ndarray:
        """scale times the product of single-spin operators; empty factors give scale*1"""
        self._check_size(n)
        spins = [k for _, k in factors]
        if len(set(spins)) != len(spins):
            raise OperatorError(f"Repeated spin index in product operator: {spins}")
        result = np.eye(2 ** n, dtype=complex)
        for axis, k in factors:
            result = result @ self.spin_operator(axis, k, n)
        return scale * result

    def m_values(self, n: int) -> np.ndarray:
        self._check_size(n)
        return _m_values(n)

    def order_matrix(self, n: int, weights: Sequence[float]) -> np.ndarray:
        """Weighted coherence order of every entry (row, col)"""
        weights = np.asarray(weights, dtype=float)
        if weights.shape != (n,):
            raise OperatorError(f"Expected {n} weights, got {weights.size}")
        total = self.m_values(n) @ weights
        return total[:, None] - total[None, :]

    def coherence_orders(self, rho: np.ndarray, weights: Sequence[float]) -> CoherenceDecomposition:
        """Partition the entries of rho by weighted coherence order"""
        rho = np.asarray(rho)
        n = self.spin_count(rho)
        if len(weights) != n:
            raise OperatorError(f"rho is {rho.shape[0]}x{rho.shape[0]} ({n} spins) but {len(weights)} weights were given")
        orders = self.order_matrix(n, weights)
        orders = np.where(np.abs(orders) < self.order_tol, 0.0, orders)
        # Round so p and -p land on mirrored keys
        keys = np.round(orders, 9) + 0.0
        masks = {float(p): keys == p for p in np.unique(keys)}
        return CoherenceDecomposition(rho.shape[0], masks)

    def matrix_exponential_unitary(self, H: np.ndarray, t: float) -> np.ndarray:
        """exp(-iHt) from the Hermitian eigendecomposition of H"""
        H = np.asarray(H, dtype=complex)
        self.spin_count(H)
        if not self.is_hermitian(H):
            raise OperatorError("matrix_exponential_unitary needs a Hermitian operator")
        diagonal = np.diag(H)
        if not np.any(H - np.diag(diagonal)):
            return np.diag(np.exp(-1j * diagonal.real * t))
        w, V = np.linalg.eigh(H)
        return (V * np.exp(-1j * w * t)) @ V.conj().T

    def is_hermitian(self, A: np.ndarray, tol: Optional[float] = None) -> bool:
        tol = self.hermitian_tol if tol is None else tol
        scale = max(1.0, float(np.max(np.abs(A))))
        return bool(np.max(np.abs(A - A.conj().T)) <= tol * scale)

    def is_unitary(self, U: np.ndarray, tol: Optional[float] = None) -> bool:
        tol = self.unitary_tol if tol is None else tol
        return bool(np.max(np.abs(U.conj().T @ U - np.eye(U.shape[0]))) <= tol)

    def operators_equal(self, a: np.ndarray, b: np.ndarray, tol: Optional[float] = None) -> bool:
        tol = self.operator_tol if tol is None else tol
        return a.shape == b.shape and bool(np.max(np.abs(a - b)) <= tol)

    @staticmethod
    def normalize_deviation(rho: np.ndarray) -> np.ndarray:
        """Remove the trace and divide by the largest entry magnitude"""
        rho = np.asarray(rho, dtype=complex)
        dim = rho.shape[0]
        d = rho - np.trace(rho) / dim * np.eye(dim)
        peak = np.max(np.abs(d))
        if peak == 0:
            return d
        return d / peak

    def deviation_equal(self, a: np.ndarray, b: np.ndarray, tol: Optional[float] = None) -> bool:
        """Equality up to an additive multiple of identity and a positive scale"""
        tol = self.deviation_tol if tol is None else tol
        if a.shape != b.shape:
            return False
        return bool(np.max(np.abs(self.normalize_deviation(a) - self.normalize_deviation(b))) <= tol)

    @staticmethod
    def product_label(axes: Iterable[str]) -> str:
        """'Ix1Iz3' style label for a tuple of per-spin axes ('e' = identity)"""
        label = ''.join(f"I{axis}{k}" for k, axis in enumerate(axes, start=1) if axis != 'e')
        return label or 'E'

    def decompose(self, rho: np.ndarray, tol: float = 1e-12) -> Dict[str, float]:
        """
        Expand a Hermitian operator in the product-operator basis

        Args:
            rho: Hermitian 2^n x 2^n operator
            tol: Coefficients with magnitude below tol * max magnitude are dropped

        Returns:
            Dict[str, float]: label -> real coefficient, e.g. {'Iz1': 1.0, 'Iz1Iz2': -2.0}
        """
        rho = np.asarray(rho, dtype=complex)
        n = self.spin_count(rho)
        self._check_size(n)
        # one 4x4 contraction per spin over the (row bit, column bit) pair
        order = [axis for k in range(n) for axis in (k, n + k)]
        tensor = rho.reshape([2] * (2 * n)).transpose(order).reshape([4] * n)
        dual = _dual_basis()
        for k in range(n):
            tensor = np.moveaxis(np.tensordot(dual, tensor, axes=([1], [k])), 0, k)
        coefficients = {
            self.product_label(axes): float(np.real(c))
            for axes, c in zip(product(PRODUCT_AXES, repeat=n), tensor.reshape(-1))
        }
        peak = max((abs(c) for c in coefficients.values()), default=0.0)
        return {label: c for label, c in coefficients.items() if peak and abs(c) > tol * peak}

    def compose(self, coefficients: Dict[str, float], n: int) -> np.ndarray:
        """Inverse of decompose"""
        result = np.zeros((2 ** n, 2 ** n), dtype=complex)
        for label, c in coefficients.items():
            result += self.product_operator(self.parse_label(label), n, c)
        return result

    @staticmethod
    def parse_label(label: str) -> List[Tuple[str, int]]:
        """'Ix1Iz3' -> [('x', 1), ('z', 3)]; 'E' -> []"""
        if label == 'E':
            return []
        factors = []
        for part in label.split('I')[1:]:
            if len(part) < 2 or part[0] not in SPIN_HALF or not part[1:].isdigit():
                raise OperatorError(f"Malformed product-operator label: {label!r}")
            factors.append((part[0], int(part[1:])))
        return factors
