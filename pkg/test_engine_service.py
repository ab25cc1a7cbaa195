#!/usr/bin/env python3
"""
Tests for the density-matrix engine: pulses, free evolution, gradient crushers,
the refocused evolution block and full builtin sequences on TCE.

Usage:
    python test_engine_service.py
    pytest test_engine_service.py
"""

import numpy as np
import pytest
from scipy.linalg import expm

from entity.pulse_event import DecoupleOff, DecoupleOn, Gradient
from entity.sim_state import SimState
from entity.spin_system import SpinSystem
from service.engine_service import EngineService
from service.errors import EngineError
from service.sequence_service import SequenceService

J_TCE = [[0.0, 103.1, 9.23],
         [103.1, 0.0, 201.3],
         [9.23, 201.3, 0.0]]

engine = EngineService()
ops = engine.ops
hamiltonians = engine.hamiltonians
sequences = SequenceService(hamiltonians)


def tce_system(**changes) -> SpinSystem:
    fields = dict(labels=['C1', 'C2', 'H'], offset_hz=[450.0816, -450.0816, 0.0], j_hz=J_TCE,
                  gradient_weights=[1.0, 1.0, 3.977], zero_quantum_filter=True)
    fields.update(changes)
    return SpinSystem(**fields)


def product(*factors, n=3, scale=1.0):
    return ops.product_operator(list(factors), n, scale)


def pseudo_pure(n=3):
    return product(('z', 1), n=n) + product(('z', 2), n=n) - product(('z', 1), ('z', 2), n=n, scale=2.0)


def bell(n=3):
    return (product(('x', 1), ('x', 2), n=n) - product(('z', 1), ('z', 2), n=n)
            - product(('y', 1), ('y', 2), n=n))


def run_builtin(name, state):
    seq = sequences.evaluate_durations(sequences.compile_builtin(name, state.sys), state.sys)
    return engine.run_sequence(state, seq)


def test_rf_propagator_matches_expm():
    generator = product(('x', 1)) + product(('x', 3))
    U = engine.rf_propagator(np.pi / 3, 'x', {1, 3}, 3)
    assert ops.operators_equal(U, expm(1j * np.pi / 3 * generator))
    U_neg = engine.rf_propagator(np.pi / 3, '-y', {2}, 3)
    assert ops.operators_equal(U_neg, expm(-1j * np.pi / 3 * product(('y', 2))))
    assert ops.is_unitary(U) and ops.is_unitary(U_neg)


def test_zero_angle_is_identity():
    assert np.allclose(engine.rf_propagator(0.0, 'y', {1, 2}, 3), np.eye(8))


def test_pulse_rotates_iz_to_iy():
    """exp(+i pi/2 Ix) carries Iz to +Iy"""
    sys = SpinSystem(['C1'])
    state = SimState(ops.spin_operator('z', 1, 1), sys)
    rotated = engine.apply_pulse(state, np.pi / 2, 'x', {1})
    assert np.allclose(rotated.rho, ops.spin_operator('y', 1, 1))


def test_rf_propagator_rejects_bad_arguments():
    with pytest.raises(EngineError):
        engine.rf_propagator(np.pi, 'z', {1}, 2)
    with pytest.raises(EngineError):
        engine.rf_propagator(np.pi, 'x', {3}, 2)
    with pytest.raises(EngineError):
        engine.rf_propagator(np.pi, 'x', set(), 2)


def test_free_evolve_skips_decoupled_spins():
    sys = tce_system()
    rho = product(('x', 1), ('x', 3))
    state = SimState(rho, sys, decoupled={3})
    t = 0.0012
    evolved = engine.free_evolve(state, t)
    H = hamiltonians.closed_hamiltonian(sys, {1, 2})
    U = expm(-1j * H * t)
    assert np.allclose(evolved.rho, U @ rho @ U.conj().T, atol=1e-12)
    assert evolved.clock == pytest.approx(t)
    assert evolved.decoupled == frozenset({3})


def test_free_evolve_negative_time():
    with pytest.raises(EngineError):
        engine.free_evolve(engine.initial_state(tce_system()), -1e-3)


def test_gradient_keeps_zero_quantum_with_equal_weights():
    sys = SpinSystem(['C1', 'C2'], j_hz=[[0, 103.1], [103.1, 0]])
    state = SimState(product(('x', 1), ('x', 2), n=2) + product(('z', 1), n=2), sys)
    crushed = engine.gradient_crush(state)
    expected = (product(('x', 1), ('x', 2), n=2) + product(('y', 1), ('y', 2), n=2)) / 2 \
        + product(('z', 1), n=2)
    assert np.allclose(crushed.rho, expected)


def test_gradient_with_zero_quantum_filter_keeps_diagonal():
    sys = tce_system()
    rho = bell() + product(('z', 3))
    crushed = engine.gradient_crush(SimState(rho, sys))
    assert np.allclose(crushed.rho, np.diag(np.diag(rho)))


def test_echo_block_removes_offsets():
    """delay t/2, pi_x on all, delay t/2 equals R exp(-i H_couplings t)"""
    sys = tce_system()
    t = 0.0035
    U = engine.refocus_propagator(sys, t)
    R = engine.rf_propagator(np.pi, 'x', sys.all_spins, sys.n)
    expected = R @ ops.matrix_exponential_unitary(hamiltonians.effective_hamiltonian(sys), t)
    assert np.allclose(U, expected, atol=1e-12)


def test_refocused_evolve_requires_decoupling_off():
    sys = tce_system()
    with pytest.raises(EngineError):
        engine.refocused_evolve(engine.initial_state(sys), 0.001)
    with pytest.raises(EngineError):
        engine.refocused_evolve(engine.initial_state(sys, decouple_env=False), -0.001)


def test_equilibrium_state():
    sys = tce_system(gamma_ratio=0.5)
    state = engine.initial_state(sys)
    assert np.allclose(state.rho, 0.5 * product(('z', 1)) + product(('z', 2)))
    assert state.decoupled == frozenset({3})


def test_prep_gives_pseudo_pure_state():
    state, snapshots = run_builtin('prep', engine.initial_state(tce_system()))
    assert ops.deviation_equal(state.rho, pseudo_pure())
    assert len(snapshots) == 8
    assert state.clock == pytest.approx(2 / (4 * 103.1))


def test_prep_without_filter_keeps_flip_flop_term():
    state, _ = run_builtin('prep', engine.initial_state(tce_system(zero_quantum_filter=False)))
    target = pseudo_pure() + product(('x', 1), ('x', 2)) + product(('y', 1), ('y', 2))
    assert ops.deviation_equal(state.rho, target)


def test_prep_holds_for_unequal_gamma():
    state, _ = run_builtin('prep', engine.initial_state(tce_system(gamma_ratio=0.6)))
    assert ops.deviation_equal(state.rho, pseudo_pure())


def test_entangle_gives_bell_state():
    sys = tce_system()
    state, _ = run_builtin('entangle', SimState(pseudo_pure(), sys, decoupled={3}))
    assert ops.deviation_equal(state.rho, bell())


def test_run_sequence_needs_evaluated_durations():
    sys = tce_system()
    with pytest.raises(EngineError):
        engine.run_sequence(engine.initial_state(sys), sequences.compile_builtin('prep', sys))


def test_run_sequence_reports_failing_event():
    sys = tce_system()
    seq = sequences.evaluate_durations(sequences.parse("grad z\nrefocus 0.001", sys), sys)
    with pytest.raises(EngineError) as info:
        engine.run_sequence(engine.initial_state(sys), seq)
    assert "Event 2 at line 2" in str(info.value)


def test_multi_env_evolve_keeps_diagonal():
    sys = tce_system()
    start = SimState(2 * bell(), sys)
    evolved = engine.multi_env_evolve(start, 0.004)
    assert np.allclose(np.diag(evolved.rho), np.diag(start.rho))
    with pytest.raises(EngineError):
        engine.multi_env_evolve(start, -0.004)


def test_state_validation():
    sys = tce_system()
    with pytest.raises(ValueError):
        SimState(np.zeros((4, 4)), sys)
    with pytest.raises(ValueError):
        SimState(np.triu(np.ones((8, 8))), sys)
    with pytest.raises(ValueError):
        SimState(np.eye(8), sys, decoupled={4})


PROPERTY_SCRIPT = (
    "pulse x pi/3 on 1,2\n"
    "delay 0.0021\n"
    "decouple on 3\n"
    "pulse -y 1.1 on all\n"
    "delay 1/(4*J[1,2])\n"
    "decouple off 3\n"
    "grad z\n"
    "refocus 0.004\n"
    "readout y pi/2 on 1\n"
)


def random_tce_like(rng) -> SpinSystem:
    upper = np.triu(rng.uniform(5.0, 250.0, size=(3, 3)), 1)
    return SpinSystem(['C1', 'C2', 'H'], offset_hz=rng.uniform(-600.0, 600.0, size=3),
                      j_hz=upper + upper.T, gradient_weights=[1.0, 1.0, 3.977],
                      zero_quantum_filter=bool(rng.random() < 0.5))


def random_state(rng, sys) -> SimState:
    dim = 2 ** sys.n
    A = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return SimState(A + A.conj().T, sys)


def test_every_event_keeps_hermiticity_trace_and_spectrum():
    """Seeded systems: each event keeps rho Hermitian and its trace; unitary events keep eigenvalues"""
    rng = np.random.default_rng(31)
    for _ in range(10):
        sys = random_tce_like(rng)
        state = random_state(rng, sys)
        seq = sequences.evaluate_durations(sequences.parse(PROPERTY_SCRIPT, sys), sys)
        _, snapshots = engine.run_sequence(state, seq)
        assert len(snapshots) == len(seq.events)
        before = state
        for snapshot in snapshots:
            rho = snapshot.state.rho
            assert ops.is_hermitian(rho, 1e-12)
            assert abs(np.trace(rho) - np.trace(before.rho)) < 1e-12 * max(1.0, np.max(np.abs(rho)))
            if not isinstance(snapshot.event, (Gradient, DecoupleOn, DecoupleOff)):
                assert np.max(np.abs(np.linalg.eigvalsh(rho) - np.linalg.eigvalsh(before.rho))) < 1e-10
            before = snapshot.state


def test_gradient_crush_is_idempotent():
    rng = np.random.default_rng(37)
    for _ in range(10):
        sys = random_tce_like(rng).replace(gradient_weights=rng.uniform(0.5, 4.0, size=3))
        once = engine.gradient_crush(random_state(rng, sys))
        twice = engine.gradient_crush(once)
        assert np.array_equal(once.rho, twice.rho)


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
    print(f"{len(tests) - failed}/{len(tests)} engine tests passed")
    return failed == 0


if __name__ == "__main__":
    raise SystemExit(0 if main() else 1)
