#!/usr/bin/env python3
"""
Tests for the spin-operator kernels: embedding, coherence orders, exponentials
and product-operator expansion.

Usage:
    python test_operator_service.py
    pytest test_operator_service.py
"""

import numpy as np
import pytest
from scipy.linalg import expm

from config.settings import SimulatorSettings
from service.errors import OperatorError
from service.operator_service import OperatorService

ops = OperatorService(SimulatorSettings())


def random_hermitian(rng, dim):
    A = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return A + A.conj().T


def test_spin1_is_most_significant():
    """Iz of spin 1 splits the first and second half of the basis"""
    assert np.allclose(np.diag(ops.spin_operator('z', 1, 2)).real, [0.5, 0.5, -0.5, -0.5])
    assert np.allclose(np.diag(ops.spin_operator('z', 2, 2)).real, [0.5, -0.5, 0.5, -0.5])


def test_commutation_relations():
    """[Ix, Iy] = i Iz on every spin of a 3-spin space"""
    for k in (1, 2, 3):
        ix, iy, iz = (ops.spin_operator(a, k, 3) for a in 'xyz')
        assert ops.operators_equal(ix @ iy - iy @ ix, 1j * iz)
    # different spins commute
    a = ops.spin_operator('x', 1, 3)
    b = ops.spin_operator('y', 3, 3)
    assert ops.operators_equal(a @ b, b @ a)


def test_operators_are_read_only():
    op = ops.spin_operator('x', 2, 2)
    with pytest.raises(ValueError):
        op[0, 0] = 1.0


def test_invalid_operator_arguments():
    with pytest.raises(OperatorError):
        ops.spin_operator('q', 1, 2)
    with pytest.raises(OperatorError):
        ops.spin_operator('z', 3, 2)
    with pytest.raises(OperatorError):
        ops.spin_operator('z', 1, ops.max_spins + 1)
    with pytest.raises(OperatorError):
        ops.product_operator([('x', 1), ('y', 1)], 2)


def test_product_operator_scale_and_identity():
    izz = ops.product_operator([('z', 1), ('z', 2)], 2, 2.0)
    assert np.allclose(np.diag(izz).real, [0.5, -0.5, -0.5, 0.5])
    assert np.allclose(ops.product_operator([], 2, 3.0), 3.0 * np.eye(4))


def test_coherence_orders_single_quantum():
    """Ix1 lives at orders +1 and -1 only; equal weights keep Ix1Ix2 partly at zero order"""
    rho = ops.spin_operator('x', 1, 2)
    decomposition = ops.coherence_orders(rho, [1.0, 1.0])
    assert decomposition.present_orders(rho) == [-1.0, 1.0]
    assert decomposition.order_of(0, 2) == 1.0
    assert decomposition.order_of(2, 0) == -1.0

    flip_flop = ops.product_operator([('x', 1), ('x', 2)], 2)
    assert decomposition.present_orders(flip_flop) == [-2.0, 0.0, 2.0]


def test_coherence_orders_weighted():
    """Unequal weights move the flip-flop term off zero order"""
    flip_flop = ops.product_operator([('x', 1), ('x', 2)], 2)
    decomposition = ops.coherence_orders(flip_flop, [1.0, 3.977])
    assert 0.0 not in decomposition.present_orders(flip_flop)
    assert np.all(np.diag(decomposition.zero_order))


def test_coherence_orders_weight_count():
    with pytest.raises(OperatorError):
        ops.coherence_orders(np.eye(4), [1.0])


def test_matrix_exponential_diagonal_and_dense():
    H = np.diag([1.0, -2.0, 3.0, 0.5]).astype(complex)
    assert np.allclose(ops.matrix_exponential_unitary(H, 0.3), expm(-1j * H * 0.3))

    rng = np.random.default_rng(7)
    A = rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8))
    H = A + A.conj().T
    U = ops.matrix_exponential_unitary(H, 0.7)
    assert ops.operators_equal(U, expm(-1j * H * 0.7))
    assert ops.is_unitary(U)


def test_matrix_exponential_rejects_non_hermitian():
    with pytest.raises(OperatorError):
        ops.matrix_exponential_unitary(np.array([[0, 1], [0, 0]], dtype=complex), 1.0)
    with pytest.raises(OperatorError):
        ops.matrix_exponential_unitary(np.eye(3), 1.0)


def test_hermitian_check_is_scaled():
    big = 6e4 * ops.spin_operator('z', 1, 2)
    nudged = big + 1e-9 * ops.spin_operator('y', 1, 2) * 1j
    assert ops.is_hermitian(big)
    assert ops.is_hermitian(nudged)
    assert not ops.is_hermitian(np.array([[0, 1], [0, 0]], dtype=complex))


def test_deviation_equal():
    iz1 = ops.spin_operator('z', 1, 2)
    assert ops.deviation_equal(iz1 + 3 * np.eye(4), 2 * iz1)
    assert not ops.deviation_equal(iz1, -iz1)
    assert not ops.deviation_equal(iz1, ops.spin_operator('z', 2, 2))


def test_decompose_and_compose():
    rho = ops.compose({'Iz1': 1.0, 'Iz1Iz2': -2.0, 'Ix2': 0.5}, 2)
    coefficients = ops.decompose(rho)
    assert set(coefficients) == {'Iz1', 'Iz1Iz2', 'Ix2'}
    assert coefficients['Iz1Iz2'] == pytest.approx(-2.0)
    assert coefficients['Ix2'] == pytest.approx(0.5)
    assert ops.operators_equal(ops.compose(coefficients, 2), rho)


def test_decompose_identity_label():
    assert ops.decompose(np.eye(2, dtype=complex)) == pytest.approx({'E': 1.0})


def test_parse_label():
    assert ops.parse_label('Ix1Iz3') == [('x', 1), ('z', 3)]
    assert ops.parse_label('E') == []
    with pytest.raises(OperatorError):
        ops.parse_label('Iq1')


def test_operators_are_traceless():
    rng = np.random.default_rng(3)
    for n in (1, 2, 3, 4):
        for k in range(1, n + 1):
            for axis in 'xyz':
                assert abs(np.trace(ops.spin_operator(axis, k, n))) < 1e-12
        for _ in range(20):
            spins = rng.choice(np.arange(1, n + 1), size=int(rng.integers(1, n + 1)), replace=False)
            factors = [('xyz'[int(rng.integers(0, 3))], int(k)) for k in spins]
            assert abs(np.trace(ops.product_operator(factors, n, float(rng.normal())))) < 1e-12


def test_distinct_spins_commute_on_random_pairs():
    rng = np.random.default_rng(5)
    for _ in range(50):
        n = int(rng.integers(2, 5))
        k, j = (int(v) for v in rng.choice(np.arange(1, n + 1), size=2, replace=False))
        a = ops.spin_operator('xyz'[int(rng.integers(0, 3))], k, n)
        b = ops.spin_operator('xyz'[int(rng.integers(0, 3))], j, n)
        assert ops.operators_equal(a @ b, b @ a)


def test_matrix_exponential_composes_over_time():
    """exp(-iH(s+t)) = exp(-iHs) exp(-iHt) for dense and diagonal H"""
    rng = np.random.default_rng(17)
    for _ in range(25):
        dim = 2 ** int(rng.integers(1, 4))
        H = random_hermitian(rng, dim)
        if rng.random() < 0.3:
            H = np.diag(np.diag(H).real).astype(complex)
        s, t = rng.uniform(0.0, 2.0, size=2)
        combined = ops.matrix_exponential_unitary(H, s + t)
        split = ops.matrix_exponential_unitary(H, s) @ ops.matrix_exponential_unitary(H, t)
        assert ops.operators_equal(combined, split, 1e-10)


def test_coherence_masks_partition_and_mirror():
    rng = np.random.default_rng(23)
    cases = [[1.0, 1.0, 3.977], [1.0, 1.0], [1.0, 2.0, 3.0, 4.0]]
    cases += [list(rng.uniform(0.5, 4.0, size=int(rng.integers(1, 5)))) for _ in range(10)]
    for weights in cases:
        dim = 2 ** len(weights)
        decomposition = ops.coherence_orders(np.zeros((dim, dim)), weights)
        count = sum(mask.astype(int) for mask in decomposition.orders.values())
        assert np.all(count == 1)
        assert sum(int(mask.sum()) for mask in decomposition.orders.values()) == dim * dim
        for order, mask in decomposition.orders.items():
            assert np.array_equal(mask.T, decomposition.mask(-order))


def test_decompose_matches_direct_traces():
    rng = np.random.default_rng(29)
    for n in (1, 2, 3, 4):
        rho = random_hermitian(rng, 2 ** n)
        coefficients = ops.decompose(rho, tol=0.0)
        assert ops.operators_equal(ops.compose(coefficients, n), rho)
        for label in ('Ix1', 'Iy1Iz2', 'Iz1Iz2Ix3', 'Iy1Iy2Iy3Iz4'):
            factors = ops.parse_label(label)
            if max(k for _, k in factors) > n:
                continue
            basis = ops.product_operator(factors, n)
            expected = np.real(np.trace(basis @ rho)) / np.real(np.trace(basis @ basis))
            assert coefficients[label] == pytest.approx(expected, abs=1e-12)


def main():
    """Run every test in this file and print a summary"""
    tests = [value for name, value in sorted(globals().items()) if name.startswith('test_')]
    failed = 0
    for test in tests:
        try:
            test()
            print(f"✓ {test.__name__}")
        except Exception as e:
            failed += 1
            print(f"✗ {test.__name__}: {e}")
    print("=" * 50)
    print(f"{len(tests) - failed}/{len(tests)} operator tests passed")
    return failed == 0


if __name__ == "__main__":
    raise SystemExit(0 if main() else 1)
