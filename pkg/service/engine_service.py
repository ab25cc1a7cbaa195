# service/engine_service.py
from collections import deque
from functools import reduce
from typing import Deque, Iterable, NamedTuple, Optional, Tuple

import numpy as np

from config.settings import SimulatorSettings
from entity.pulse_event import (
    Rf, Delay, Gradient, DecoupleOn, DecoupleOff, RefocusedEvolve, PulseEvent, Sequence,
)
from entity.sim_state import SimState
from entity.spin_system import SpinSystem
from service.errors import EngineError, SimulationError
from service.hamiltonian_service import HamiltonianService
from service.operator_service import OperatorService, SPIN_HALF, SPIN_HALF_IDENTITY
from service.sequence_parser import evaluate_expr


class Snapshot(NamedTuple):
    index: int
    event: PulseEvent
    state: SimState


class EngineService:
    """Applies pulses, delays, crushers and decoupling to deviation density matrices"""

    def __init__(self, operator_service: Optional[OperatorService] = None,
                 hamiltonian_service: Optional[HamiltonianService] = None,
                 settings: Optional[SimulatorSettings] = None):
        settings = settings or SimulatorSettings()
        self.ops = operator_service or OperatorService(settings)
        self.hamiltonians = hamiltonian_service or HamiltonianService(self.ops)
        self.snapshot_limit = settings.SNAPSHOT_LIMIT

    def equilibrium_rho(self, sys: SpinSystem) -> np.ndarray:
        """gamma_ratio * Iz_1 + sum of Iz_k over the other system spins"""
        rho = np.zeros((2 ** sys.n, 2 ** sys.n), dtype=complex)
        for k in sorted(sys.system_spins):
            weight = sys.gamma_ratio if k == 1 else 1.0
            rho += weight * self.ops.spin_operator('z', k, sys.n)
        return rho

    def initial_state(self, sys: SpinSystem, decouple_env: bool = True) -> SimState:
        """Equilibrium deviation state, environment decoupled by default"""
        decoupled = sys.env_spins if decouple_env else frozenset()
        return SimState(self.equilibrium_rho(sys), sys, decoupled)

    def rf_propagator(self, angle: float, phase_axis: str, targets: Iterable[int], n: int) -> np.ndarray:
        """
        U = exp(+i * angle * sum_k I_axis^k) over the target spins

        A '-x' or '-y' phase negates the generator.
        """
        self.ops._check_size(n)
        sign = -1.0 if phase_axis.startswith('-') else 1.0
        axis = phase_axis.lstrip('-')
        if axis not in ('x', 'y'):
            raise EngineError(f"Unknown pulse axis {phase_axis!r}")
        targets = frozenset(targets)
        if not targets or not targets <= frozenset(range(1, n + 1)):
            raise EngineError(f"Pulse targets {sorted(targets)} invalid for {n} spins")
        # exp(i*a*s*I) = cos(a/2) + 2i*s*sin(a/2)*I for spin 1/2
        rotation = (np.cos(angle / 2) * SPIN_HALF_IDENTITY
                    + 2j * sign * np.sin(angle / 2) * SPIN_HALF[axis])
        factors = [rotation if k in targets else SPIN_HALF_IDENTITY for k in range(1, n + 1)]
        return reduce(np.kron, factors)

    @staticmethod
    def _conjugate(U: np.ndarray, rho: np.ndarray) -> np.ndarray:
        result = U @ rho @ U.conj().T
        return (result + result.conj().T) / 2

    def apply_unitary(self, state: SimState, U: np.ndarray, elapsed: float = 0.0) -> SimState:
        return state.evolve(self._conjugate(U, state.rho), elapsed)

    def apply_pulse(self, state: SimState, angle: float, phase_axis: str, targets: Iterable[int]) -> SimState:
        return self.apply_unitary(state, self.rf_propagator(angle, phase_axis, targets, state.n))

    def free_evolve(self, state: SimState, duration: float) -> SimState:
        """rho -> U rho U^dagger, U = exp(-iHt) with H closed over the non-decoupled spins"""
        if duration < 0:
            raise EngineError(f"Free evolution time must be >= 0, got {duration}")
        active = state.active_spins
        if not active or duration == 0:
            return state.evolve(state.rho, duration)
        H = self.hamiltonians.closed_hamiltonian(state.sys, active)
        U = self.ops.matrix_exponential_unitary(H, duration)
        return self.apply_unitary(state, U, duration)

    def crusher_mask(self, sys: SpinSystem) -> np.ndarray:
        """Entries kept by [grad]_z"""
        dim = 2 ** sys.n
        if sys.zero_quantum_filter:
            return np.eye(dim, dtype=bool)
        decomposition = self.ops.coherence_orders(np.zeros((dim, dim)), sys.gradient_weights)
        return decomposition.zero_order

    def gradient_crush(self, state: SimState) -> SimState:
        """Zero every entry of nonzero weighted coherence order"""
        return state.evolve(np.where(self.crusher_mask(state.sys), state.rho, 0))

    def refocus_propagator(self, sys: SpinSystem, t: float) -> np.ndarray:
        """exp(-iHt/2) * R * exp(-iHt/2), R a hard pi_x on every spin"""
        H = self.hamiltonians.full_hamiltonian(sys)
        half = self.ops.matrix_exponential_unitary(H, t / 2)
        R = self.rf_propagator(np.pi, 'x', sys.all_spins, sys.n)
        return half @ R @ half

    def refocused_evolve(self, state: SimState, t: float) -> SimState:
        """
        Echo block: delay t/2, pi_x on all spins, delay t/2, with no spin decoupled

        Raises:
            EngineError: If t < 0 or any spin is still decoupled
        """
        if t < 0:
            raise EngineError(f"Refocused evolution time must be >= 0, got {t}")
        if state.decoupled:
            raise EngineError(f"Refocused evolution needs decoupling off; spins {sorted(state.decoupled)} are decoupled")
        return self.apply_unitary(state, self.refocus_propagator(state.sys, t), t)

    def multi_env_evolve(self, state: SimState, t: float) -> SimState:
        """rho under exp(-i(H_i + H_12)t), H_i the system-environment zz couplings"""
        if t < 0:
            raise EngineError(f"Evolution time must be >= 0, got {t}")
        sys = state.sys
        H = self.hamiltonians.interaction_hamiltonian(sys) + self.hamiltonians.system_coupling_hamiltonian(sys)
        return self.apply_unitary(state, self.ops.matrix_exponential_unitary(H, t), t)

    def apply_event(self, state: SimState, event: PulseEvent) -> SimState:
        if isinstance(event, Rf):
            return self.apply_pulse(state, evaluate_expr(event.angle), event.axis, event.targets)
        if isinstance(event, Delay):
            return self.free_evolve(state, evaluate_expr(event.duration))
        if isinstance(event, Gradient):
            return self.gradient_crush(state)
        if isinstance(event, DecoupleOn):
            return state.with_decoupled(state.decoupled | frozenset(event.targets))
        if isinstance(event, DecoupleOff):
            return state.with_decoupled(state.decoupled - frozenset(event.targets))
        if isinstance(event, RefocusedEvolve):
            return self.refocused_evolve(state, evaluate_expr(event.duration))
        raise EngineError(f"Unknown event {event!r}")

    def run_sequence(self, state: SimState, seq: Sequence) -> Tuple[SimState, Deque[Snapshot]]:
        """
        Apply events left to right

        Args:
            state: Starting state
            seq: Sequence with evaluated durations

        Returns:
            tuple: (final state, snapshots after each event, oldest dropped past the snapshot limit)
        """
        if not seq.evaluated:
            raise EngineError("Sequence durations must be evaluated before running")
        log: Deque[Snapshot] = deque(maxlen=self.snapshot_limit)
        for index, event in enumerate(seq.events):
            try:
                state = self.apply_event(state, event)
            except SimulationError as e:
                span = seq.span_of(index)
                where = f" at {span}" if span is not None else ''
                raise EngineError(f"Event {index + 1}{where}: {e}") from e
            log.append(Snapshot(index, event, state))
        return state, log
