#!/usr/bin/env python3
"""
Tests for the Zeeman + zz-coupling Hamiltonians of the three-spin TCE system.

Usage:
    python test_hamiltonian_service.py
    pytest test_hamiltonian_service.py
"""

import numpy as np
import pytest

from entity.spin_system import SpinSystem
from service.errors import OperatorError
from service.hamiltonian_service import HamiltonianService

J_TCE = [[0.0, 103.1, 9.23],
         [103.1, 0.0, 201.3],
         [9.23, 201.3, 0.0]]
OFFSETS = [450.0816, -450.0816, 0.0]

hamiltonians = HamiltonianService()
ops = hamiltonians.ops


def tce_system(**changes) -> SpinSystem:
    fields = dict(labels=['C1', 'C2', 'H'], offset_hz=OFFSETS, j_hz=J_TCE, zero_quantum_filter=True)
    fields.update(changes)
    return SpinSystem(**fields)


def close(a, b) -> bool:
    """Equality scaled to the largest entry (energies run to ~1e4 rad/s)"""
    scale = max(1.0, float(np.max(np.abs(a))), float(np.max(np.abs(b))))
    return bool(np.max(np.abs(a - b)) <= 1e-12 * scale)


def test_full_hamiltonian_all_up_energy():
    sys = tce_system()
    H = hamiltonians.full_hamiltonian(sys)
    expected = (-2 * np.pi * sum(OFFSETS) / 2
                + 2 * np.pi * (103.1 + 9.23 + 201.3) / 4)
    assert H[0, 0].real == pytest.approx(expected)
    assert not np.any(H - np.diag(np.diag(H)))
    assert ops.is_hermitian(H)


def test_full_splits_into_zeeman_and_couplings():
    sys = tce_system()
    full = hamiltonians.full_hamiltonian(sys)
    assert close(full, hamiltonians.effective_hamiltonian(sys) + hamiltonians.zeeman_hamiltonian(sys))
    assert close(full, hamiltonians.zeeman_hamiltonian(sys)
                 + hamiltonians.system_coupling_hamiltonian(sys)
                 + hamiltonians.interaction_hamiltonian(sys))


def test_effective_hamiltonian_has_no_offsets():
    sys = tce_system()
    H = hamiltonians.effective_hamiltonian(sys)
    # a global flip of every spin leaves the coupling energies unchanged
    energies = np.diag(H).real
    assert np.allclose(energies, energies[::-1])


def test_closed_hamiltonian_drops_environment_terms():
    sys = tce_system()
    H = hamiltonians.closed_hamiltonian(sys, {1, 2})
    energies = np.diag(H).real
    # spin 3 is the least significant bit; its state no longer matters
    assert np.allclose(energies[0::2], energies[1::2])
    expected_up_up = -2 * np.pi * (OFFSETS[0] + OFFSETS[1]) / 2 + 2 * np.pi * 103.1 / 4
    assert energies[0] == pytest.approx(expected_up_up)


def test_closed_hamiltonian_rejects_bad_active_sets():
    sys = tce_system()
    with pytest.raises(OperatorError):
        hamiltonians.closed_hamiltonian(sys, set())
    with pytest.raises(OperatorError):
        hamiltonians.closed_hamiltonian(sys, {1, 4})


def test_interaction_hamiltonian_needs_pair_system():
    sys = tce_system(system_spins=[1], env_spins=[2, 3])
    with pytest.raises(OperatorError):
        hamiltonians.interaction_hamiltonian(sys)


def test_interaction_hamiltonian_values():
    sys = tce_system()
    H = hamiltonians.interaction_hamiltonian(sys)
    iz = [ops.spin_operator('z', k, 3) for k in (1, 2, 3)]
    expected = 2 * np.pi * (9.23 * iz[0] @ iz[2] + 201.3 * iz[1] @ iz[2])
    assert close(H, expected)


def test_spin_system_dict_and_restrict():
    sys = tce_system(gamma_ratio=0.8)
    copy = SpinSystem.from_dict(sys.to_dict())
    assert copy.to_dict() == sys.to_dict()
    assert copy.index_of('H') == 3
    with pytest.raises(ValueError):
        copy.index_of('N')

    pair = sys.restrict([1, 2])
    assert pair.labels == ('C1', 'C2')
    assert pair.coupling(1, 2) == 103.1
    assert pair.env_spins == frozenset()
    assert sys.replace(zero_quantum_filter=False).zero_quantum_filter is False
    with pytest.raises(ValueError):
        sys.restrict([0, 1])


def test_spin_system_validation():
    with pytest.raises(ValueError):
        tce_system(j_hz=np.triu(J_TCE))
    with pytest.raises(ValueError):
        tce_system(system_spins=[1, 2], env_spins=[2, 3])
    with pytest.raises(ValueError):
        tce_system(gamma_ratio=0.0)
    with pytest.raises(ValueError):
        SpinSystem(['C1', 'C1'])
    with pytest.raises(ValueError):
        tce_system(system_spins=[1.7, 2], env_spins=[3])
    with pytest.raises(ValueError):
        tce_system().restrict([1, 2.0])


def test_preparation_angle():
    assert hamiltonians.preparation_angle(tce_system()) == pytest.approx(0.0)
    assert hamiltonians.preparation_angle(tce_system(gamma_ratio=0.5)) == pytest.approx(np.pi / 3)


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
    print(f"{len(tests) - failed}/{len(tests)} hamiltonian tests passed")
    return failed == 0


if __name__ == "__main__":
    raise SystemExit(0 if main() else 1)
