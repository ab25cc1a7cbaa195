# service/verification_service.py
from functools import reduce
from typing import Callable, Dict, List, Optional, Any

import numpy as np
from scipy.linalg import expm

from config.experiment import ExperimentConfig
from entity.pulse_event import Rf, Delay, Gradient, DecoupleOn, DecoupleOff, RefocusedEvolve
from entity.sim_state import SimState
from entity.spin_system import SpinSystem
from service.errors import SimulationError
from service.experiment_service import ExperimentService
from service.sequence_parser import evaluate_expr

ECHO_TOL = 1e-10
ENVELOPE_TOL = 1e-9
ORACLE_TOL = 1e-12
FID_TOL = 1e-9

_PAULI = {
    'x': np.array([[0, 1], [1, 0]], dtype=complex),
    'y': np.array([[0, -1j], [1j, 0]], dtype=complex),
    'z': np.array([[1, 0], [0, -1]], dtype=complex),
}


class CheckResult:
    def __init__(self, name: str, passed: bool, detail: str, max_error: Optional[float] = None):
        self.name = name
        self.passed = passed
        self.detail = detail
        self.max_error = max_error

    def to_dict(self) -> Dict[str, Any]:
        return {'name': self.name, 'passed': self.passed, 'detail': self.detail, 'max_error': self.max_error}


class VerificationReport:
    def __init__(self, checks: List[CheckResult]):
        self.checks = checks

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def to_dict(self) -> Dict[str, Any]:
        return {'passed': self.passed, 'checks': [check.to_dict() for check in self.checks]}


class ReferenceOracle:
    """Matrix-multiplication reference built from Pauli matrices and scipy's expm only"""

    def __init__(self, sys: SpinSystem):
        self.sys = sys
        self.n = sys.n

    def op(self, axis: str, k: int) -> np.ndarray:
        factors = [np.eye(2, dtype=complex)] * self.n
        factors[k - 1] = _PAULI[axis] / 2
        return reduce(np.kron, factors)

    def hamiltonian(self, active) -> np.ndarray:
        sys = self.sys
        H = np.zeros((2 ** self.n, 2 ** self.n), dtype=complex)
        for k in active:
            H -= 2 * np.pi * sys.offset_hz[k - 1] * self.op('z', k)
        for i in active:
            for j in active:
                if i < j:
                    H += 2 * np.pi * sys.j_hz[i - 1, j - 1] * self.op('z', i) @ self.op('z', j)
        return H

    def pulse(self, angle: float, axis: str, targets) -> np.ndarray:
        sign = -1.0 if axis.startswith('-') else 1.0
        generator = sum(self.op(axis.lstrip('-'), k) for k in targets)
        return expm(1j * sign * angle * generator)

    def crush(self, rho: np.ndarray) -> np.ndarray:
        if self.sys.zero_quantum_filter:
            return np.diag(np.diag(rho))
        dim = 2 ** self.n
        total = np.zeros(dim)
        for index in range(dim):
            for k in range(1, self.n + 1):
                bit = (index >> (self.n - k)) & 1
                total[index] += self.sys.gradient_weights[k - 1] * (0.5 - bit)
        keep = np.abs(total[:, None] - total[None, :]) < 1e-9
        return np.where(keep, rho, 0)

    def run(self, rho: np.ndarray, events, decoupled) -> np.ndarray:
        decoupled = set(decoupled)
        for event in events:
            if isinstance(event, Rf):
                U = self.pulse(evaluate_expr(event.angle), event.axis, event.targets)
                rho = U @ rho @ U.conj().T
            elif isinstance(event, Delay):
                active = [k for k in range(1, self.n + 1) if k not in decoupled]
                U = expm(-1j * self.hamiltonian(active) * evaluate_expr(event.duration))
                rho = U @ rho @ U.conj().T
            elif isinstance(event, Gradient):
                rho = self.crush(rho)
            elif isinstance(event, DecoupleOn):
                decoupled |= set(event.targets)
            elif isinstance(event, DecoupleOff):
                decoupled -= set(event.targets)
            elif isinstance(event, RefocusedEvolve):
                t = evaluate_expr(event.duration)
                half = expm(-1j * self.hamiltonian(range(1, self.n + 1)) * t / 2)
                R = self.pulse(np.pi, 'x', range(1, self.n + 1))
                U = half @ R @ half
                rho = U @ rho @ U.conj().T
        return rho


class VerificationService:
    """Property checks of the whole simulator against closed forms and the reference oracle"""

    def __init__(self, experiments: Optional[ExperimentService] = None):
        self.experiments = experiments or ExperimentService()
        self.ops = self.experiments.ops
        self.engine = self.experiments.engine
        self.analysis = self.experiments.analysis
        self.sequences = self.experiments.sequences
        self.hamiltonians = self.experiments.hamiltonians

    def run(self, config: ExperimentConfig, progress: Optional[Callable[[CheckResult], None]] = None) -> VerificationReport:
        """
        Run every check; a check that raises counts as failed

        Args:
            config: Experiment whose spin system drives the configuration-specific checks
            progress: Called with each result as it completes
        """
        checks = [
            ('echo identity', lambda: self.check_echo_identity(config.seed, config.random_systems)),
            ('trace identity', lambda: self.check_trace_identity(config.spin_system)),
            ('joint-state correlations', lambda: self.check_joint_state(config.spin_system)),
            ('multi-environment envelope', lambda: self.check_multi_environment(config.seed)),
            ('prep oracle', lambda: self.check_prep(config.spin_system)),
            ('entangle oracle', lambda: self.check_entangle(config.spin_system)),
            ('readout state', lambda: self.check_readout_state(config.spin_system)),
            ('decoupling equals partial trace', lambda: self.check_decoupling(config)),
        ]
        results = []
        for name, check in checks:
            try:
                result = check()
            except (SimulationError, ValueError, np.linalg.LinAlgError) as e:
                result = CheckResult(name, False, f"raised {type(e).__name__}: {e}")
            results.append(result)
            if progress:
                progress(result)
        return VerificationReport(results)

    @staticmethod
    def _random_system(rng: np.random.Generator, n: int) -> SpinSystem:
        j = np.triu(rng.uniform(-500, 500, (n, n)), 1)
        return SpinSystem(
            labels=[f"S{k}" for k in range(1, n + 1)],
            offset_hz=rng.uniform(-10000, 10000, n),
            j_hz=j + j.T,
        )

    def check_echo_identity(self, seed: int, draws: int = 50) -> CheckResult:
        """U_refocus equals e^{i phi} R exp(-i H_ef t) for random systems"""
        rng = np.random.default_rng(seed)
        worst = 0.0
        for _ in range(draws):
            sys = self._random_system(rng, int(rng.integers(1, 5)))
            t = float(rng.uniform(0, 0.02))
            U = self.engine.refocus_propagator(sys, t)
            R = self.engine.rf_propagator(np.pi, 'x', sys.all_spins, sys.n)
            expected = R @ self.ops.matrix_exponential_unitary(self.hamiltonians.effective_hamiltonian(sys), t)
            index = np.unravel_index(np.argmax(np.abs(expected)), expected.shape)
            phase = U[index] / expected[index]
            phase /= abs(phase)
            worst = max(worst, float(np.max(np.abs(U - phase * expected))))
        return CheckResult('echo identity', worst < ECHO_TOL,
                           f"{draws} random systems, max deviation {worst:.2e}", worst)

    def _require_pair(self, sys: SpinSystem, need_env: bool = True):
        if sys.system_spins != frozenset({1, 2}):
            raise SimulationError(f"needs system spins {{1, 2}}, got {sorted(sys.system_spins)}")
        if need_env and not sys.env_spins:
            raise SimulationError("needs at least one environment spin")

    def _bell_state(self, sys: SpinSystem) -> SimState:
        return SimState(2 * self.experiments.bell_operator(sys.n), sys)

    def check_trace_identity(self, sys: SpinSystem, samples: int = 21) -> CheckResult:
        """Traced corner coherence after the echo block equals -envelope(t)"""
        self._require_pair(sys)
        couplings = self.analysis.environment_couplings(sys)
        worst = 0.0
        for t in np.linspace(0, 0.02, samples):
            evolved = self.engine.refocused_evolve(self._bell_state(sys), t)
            corner = self.analysis.corner_coherence(self.analysis.reduced_system_state(evolved))
            worst = max(worst, abs(corner + self.analysis.analytic_envelope(t, couplings)))
        return CheckResult('trace identity', worst < ENVELOPE_TOL,
                           f"{samples} times in [0, 20 ms], max |corner + envelope| {worst:.2e}", worst)

    def check_joint_state(self, sys: SpinSystem, samples: int = 9) -> CheckResult:
        """Before tracing, (Ix1Iy2 + Iy1Ix2)Iz3 carries 2|sin(phi13 + phi23)| relative to Iz1Iz2"""
        self._require_pair(sys)
        if len(sys.env_spins) != 1:
            return CheckResult('joint-state correlations', True, 'skipped: needs exactly one environment spin')
        k = min(sys.env_spins)
        labels = (f"Ix1Iy2Iz{k}", f"Iy1Ix2Iz{k}")
        total = sys.j_hz[0, k - 1] + sys.j_hz[1, k - 1]
        worst = 0.0
        for t in np.linspace(0.0005, 0.0195, samples):
            evolved = self.engine.refocused_evolve(self._bell_state(sys), t)
            coefficients = self.ops.decompose(evolved.rho, tol=0.0)
            zz = abs(coefficients.get('Iz1Iz2', 0.0))
            expected = 2 * abs(np.sin(np.pi * total * t))
            for label in labels:
                worst = max(worst, abs(abs(coefficients.get(label, 0.0)) / zz - expected))
        return CheckResult('joint-state correlations', worst < ENVELOPE_TOL,
                           f"{samples} times, max ratio error {worst:.2e}", worst)

    def check_multi_environment(self, seed: int, max_env: int = 4, times: int = 20) -> CheckResult:
        """Brute-force traced corner equals -prod_k cos(pi (J1k + J2k) t) for N = 1..max_env"""
        rng = np.random.default_rng(seed + 1)
        worst = 0.0
        for n_env in range(1, max_env + 1):
            n = n_env + 2
            j = np.zeros((n, n))
            j[0, 1] = rng.uniform(-500, 500)
            j[0, 2:] = rng.uniform(-500, 500, n_env)
            j[1, 2:] = rng.uniform(-500, 500, n_env)
            j = j + j.T
            sys = SpinSystem([f"S{k}" for k in range(1, n + 1)], j_hz=j)
            couplings = self.analysis.environment_couplings(sys)
            start = self._bell_state(sys)
            for t in rng.uniform(0, 0.02, times):
                evolved = self.engine.multi_env_evolve(start, float(t))
                corner = self.analysis.corner_coherence(self.analysis.reduced_system_state(evolved))
                worst = max(worst, abs(corner + self.analysis.analytic_envelope(float(t), couplings)))
        return CheckResult('multi-environment envelope', worst < ENVELOPE_TOL,
                           f"N = 1..{max_env}, {times} times each, max error {worst:.2e}", worst)

    def _compiled(self, name: str, sys: SpinSystem):
        return self.sequences.evaluate_durations(self.sequences.compile_builtin(name, sys), sys)

    def _compare(self, name: str, engine_rho: np.ndarray, oracle_rho: np.ndarray,
                 target: np.ndarray, target_name: str) -> CheckResult:
        scale = max(1.0, float(np.max(np.abs(oracle_rho))))
        mismatch = float(np.max(np.abs(engine_rho - oracle_rho))) / scale
        matches = self.ops.deviation_equal(engine_rho, target)
        passed = mismatch < ORACLE_TOL and matches
        return CheckResult(name, passed,
                           f"engine vs oracle {mismatch:.2e}; "
                           f"{'equals' if matches else 'differs from'} {target_name}", mismatch)

    def check_prep(self, sys: SpinSystem) -> CheckResult:
        """Builtin prep from equilibrium against the oracle and the pseudo-pure target"""
        self._require_pair(sys, need_env=False)
        seq = self._compiled('prep', sys)
        start = self.engine.initial_state(sys)
        engine_rho = self.engine.run_sequence(start, seq)[0].rho
        oracle_rho = ReferenceOracle(sys).run(np.array(start.rho), seq.events, start.decoupled)
        target = self.experiments.pseudo_pure_operator(sys.n)
        target_name = 'Iz1 + Iz2 - 2 Iz1Iz2'
        w1, w2 = sys.gradient_weights[0], sys.gradient_weights[1]
        if not sys.zero_quantum_filter and abs(w1 - w2) < 1e-9:
            # Equal weights leave the 1-2 flip-flop term at order zero
            target = target + self.ops.product_operator([('x', 1), ('x', 2)], sys.n) \
                + self.ops.product_operator([('y', 1), ('y', 2)], sys.n)
            target_name += ' + Ix1Ix2 + Iy1Iy2'
        return self._compare('prep oracle', engine_rho, oracle_rho, target, target_name)

    def check_entangle(self, sys: SpinSystem) -> CheckResult:
        """Builtin entangle on the pseudo-pure state against the oracle and the Bell target"""
        self._require_pair(sys, need_env=False)
        seq = self._compiled('entangle', sys)
        start = SimState(self.experiments.pseudo_pure_operator(sys.n), sys, sys.env_spins)
        engine_rho = self.engine.run_sequence(start, seq)[0].rho
        oracle_rho = ReferenceOracle(sys).run(np.array(start.rho), seq.events, start.decoupled)
        result = self._compare('entangle oracle', engine_rho, oracle_rho,
                               self.experiments.bell_operator(sys.n), 'Ix1Ix2 - Iz1Iz2 - Iy1Iy2')
        if result.passed and sys.env_spins:
            form = self.analysis.population_form(self.analysis.reduced_system_state(
                SimState(engine_rho, sys)))
            expected = np.zeros((4, 4))
            expected[0, 0] = expected[3, 3] = 1.0
            expected[0, 3] = expected[3, 0] = -1.0
            error = float(np.max(np.abs(form - expected)))
            result.passed = error < 1e-8
            result.detail += f"; population form error {error:.2e}"
        return result

    def check_readout_state(self, sys: SpinSystem, samples: int = 7) -> CheckResult:
        """After the readout pulse: entries (1,2) = i s, (1,3) = -i c s, (1,4) = c s"""
        self._require_pair(sys)
        couplings = self.analysis.environment_couplings(sys)
        worst = 0.0
        for t in np.linspace(0, 0.02, samples):
            evolved = self.engine.refocused_evolve(self._bell_state(sys), t)
            rho = self.analysis.reduced_system_state(self.experiments.read_out(evolved))
            c = self.analysis.analytic_envelope(t, couplings)
            s = (rho[0, 1] / 1j).real
            if abs(s) == 0:
                raise SimulationError("readout state has no (1,2) coherence")
            errors = (abs(rho[0, 1] - 1j * s), abs(rho[0, 2] + 1j * c * s), abs(rho[0, 3] - c * s))
            worst = max(worst, max(errors) / abs(s))
        return CheckResult('readout state', worst < ENVELOPE_TOL,
                           f"{samples} times, max relative error {worst:.2e}", worst)

    def check_decoupling(self, config: ExperimentConfig, t: float = 0.0035) -> CheckResult:
        """FID with the environment decoupled equals the FID of the partial-traced system state"""
        sys = config.spin_system
        self._require_pair(sys)
        acq = config.acquisition
        n_samples = min(acq.n_samples, 1024)
        readout = self.experiments.read_out(self.engine.refocused_evolve(self._bell_state(sys), t))
        full = self.analysis.simulate_fid(readout, acq.detect_spins, acq.dwell_s, n_samples,
                                          decouple_env=True, lb_hz=acq.line_broadening_hz)
        pair = sys.restrict(sorted(sys.system_spins))
        reduced_state = SimState(self.analysis.reduced_system_state(readout), pair)
        reduced = self.analysis.simulate_fid(reduced_state, acq.detect_spins, acq.dwell_s, n_samples,
                                             decouple_env=True, lb_hz=acq.line_broadening_hz)
        scale = max(1.0, float(np.max(np.abs(full.samples))))
        error = float(np.max(np.abs(full.samples - reduced.samples))) / scale
        return CheckResult('decoupling equals partial trace', error < FID_TOL,
                           f"t = {t * 1e3:g} ms, {n_samples} samples, max relative error {error:.2e}", error)
