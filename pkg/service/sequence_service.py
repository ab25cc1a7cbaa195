# service/sequence_service.py
import math
from typing import List, Optional

from entity.pulse_event import (
    Num, Pi, Coupling, BinOp, Neg, Expr,
    Rf, Readout, Delay, Gradient, DecoupleOn, DecoupleOff, RefocusedEvolve,
    PulseEvent, Sequence,
)
from entity.spin_system import SpinSystem
from service.errors import SequenceError
from service.hamiltonian_service import HamiltonianService
from service.sequence_parser import SequenceParser, evaluate_expr

# Phase of the last pulse of the entangling block. With pulses exp(+i*a*I) and
# free evolution exp(-iHt), closing about +y lands on the zero-quantum Bell state.
ENTANGLE_CLOSING_AXIS = '-y'

BUILTIN_PREFIX = 'builtin:'

_PRECEDENCE = {'+': 1, '-': 1, '*': 2, '/': 2}
_UNARY_PRECEDENCE = 3
_ATOM_PRECEDENCE = 4


def _precedence(expr: Expr) -> int:
    if isinstance(expr, BinOp):
        return _PRECEDENCE[expr.op]
    if isinstance(expr, Neg):
        return _UNARY_PRECEDENCE
    return _ATOM_PRECEDENCE


def format_number(value: float) -> str:
    if value.is_integer() and abs(value) < 1e15:
        return str(int(value))
    return repr(value)


def format_expr(expr: Expr) -> str:
    """Render an expression with the fewest parentheses that reparse to the same tree"""
    if isinstance(expr, Num):
        return format_number(expr.value)
    if isinstance(expr, Pi):
        return 'pi'
    if isinstance(expr, Coupling):
        return f"J[{expr.i},{expr.j}]"
    if isinstance(expr, Neg):
        inner = format_expr(expr.operand)
        if _precedence(expr.operand) < _UNARY_PRECEDENCE:
            inner = f"({inner})"
        return f"-{inner}"
    prec = _PRECEDENCE[expr.op]
    left = format_expr(expr.left)
    right = format_expr(expr.right)
    if _precedence(expr.left) < prec:
        left = f"({left})"
    if _precedence(expr.right) <= prec:
        right = f"({right})"
    if expr.op in '+-':
        return f"{left} {expr.op} {right}"
    return f"{left}{expr.op}{right}"


def _spinlist(targets) -> str:
    return ','.join(str(k) for k in targets)


def format_event(event: PulseEvent) -> str:
    if isinstance(event, Rf):
        keyword = 'readout' if isinstance(event, Readout) else 'pulse'
        return f"{keyword} {event.axis} {format_expr(event.angle)} on {_spinlist(event.targets)}"
    if isinstance(event, Delay):
        return f"delay {format_expr(event.duration)}"
    if isinstance(event, RefocusedEvolve):
        return f"refocus {format_expr(event.duration)}"
    if isinstance(event, Gradient):
        return f"grad {event.axis}"
    if isinstance(event, DecoupleOn):
        return f"decouple on {_spinlist(event.targets)}"
    if isinstance(event, DecoupleOff):
        return f"decouple off {_spinlist(event.targets)}"
    raise TypeError(f"Unknown event {event!r}")


class SequenceService:
    """Parses, compiles and evaluates pulse-sequence scripts"""

    BUILTINS = ('prep', 'entangle', 'readout')

    def __init__(self, hamiltonian_service: Optional[HamiltonianService] = None):
        self.hamiltonians = hamiltonian_service or HamiltonianService()

    def parse(self, script: str, sys: SpinSystem) -> Sequence:
        """
        Parse a script against a spin system

        Blank or comment-only scripts give an empty sequence.

        Raises:
            SequenceError: With the span of the offending token or event
        """
        if script is None:
            raise SequenceError("No script given")
        return SequenceParser(script, sys).parse()

    def pretty_print(self, seq: Sequence) -> str:
        """One event per line, in time order"""
        return ''.join(format_event(event) + '\n' for event in seq.events)

    def _builtin_events(self, name: str, sys: SpinSystem) -> List[PulseEvent]:
        if sys.n < 2:
            raise SequenceError(f"Builtin {name!r} needs spins 1 and 2")
        if name in ('prep', 'entangle') and sys.coupling(1, 2) == 0:
            raise SequenceError(f"Builtin {name!r} needs a nonzero J[1,2]")

        quarter_j = BinOp('/', Num(1.0), BinOp('*', Num(4.0), Coupling(1, 2)))
        half_pi = BinOp('/', Pi(), Num(2.0))
        both = (1, 2)

        if name == 'prep':
            alpha = self.hamiltonians.preparation_angle(sys)
            return [
                Rf(Num(alpha), 'x', (2,)),
                Gradient('z'),
                Rf(BinOp('/', Pi(), Num(4.0)), 'x', both),
                Delay(quarter_j),
                Rf(Pi(), 'y', both),
                Delay(quarter_j),
                Rf(BinOp('/', BinOp('*', Neg(Num(5.0)), Pi()), Num(6.0)), 'y', both),
                Gradient('z'),
            ]
        if name == 'entangle':
            return [
                Rf(half_pi, 'x', both),
                Delay(quarter_j),
                Rf(Pi(), 'x', both),
                Delay(quarter_j),
                Rf(half_pi, ENTANGLE_CLOSING_AXIS, (2,)),
            ]
        if name == 'readout':
            return [Readout(half_pi, 'x', (2,))]
        raise SequenceError(f"Unknown builtin {name!r}; expected one of {', '.join(self.BUILTINS)}")

    def compile_builtin(self, name: str, sys: SpinSystem) -> Sequence:
        """
        Builtin sequence for a spin system, rendered to text and parsed back

        Args:
            name: 'prep', 'entangle' or 'readout'
            sys: Spin system with spins 1 and 2 as the system

        Returns:
            Sequence: Parsed sequence whose source is the rendered script
        """
        script = self.pretty_print(Sequence(tuple(self._builtin_events(name, sys))))
        return self.parse(script, sys)

    def resolve(self, script: str, sys: SpinSystem) -> Sequence:
        """Parse script text, or compile it when it reads 'builtin:<name>'"""
        stripped = (script or '').strip()
        if stripped.startswith(BUILTIN_PREFIX):
            return self.compile_builtin(stripped[len(BUILTIN_PREFIX):].strip(), sys)
        return self.parse(script, sys)

    def evaluate_durations(self, seq: Sequence, sys: SpinSystem) -> Sequence:
        """
        Replace every delay and refocus duration by its value in seconds

        Raises:
            SequenceError: Missing or zero coupling, or a duration that is not positive
        """
        events = []
        for index, event in enumerate(seq.events):
            if isinstance(event, (Delay, RefocusedEvolve)):
                span = seq.span_of(index)
                try:
                    value = evaluate_expr(event.duration, sys.coupling)
                except (ZeroDivisionError, OverflowError, ValueError) as e:
                    raise SequenceError(f"Cannot evaluate duration: {e}", span)
                if not math.isfinite(value):
                    raise SequenceError("Duration is not finite", span)
                if isinstance(event, Delay) and value <= 0:
                    raise SequenceError(f"Delay must be positive, got {value:g} s", span)
                if value < 0:
                    raise SequenceError(f"Refocus time must be >= 0, got {value:g} s", span)
                event = type(event)(Num(value))
            events.append(event)
        return Sequence(tuple(events), seq.source, seq.spans, evaluated=True)

    @staticmethod
    def duration_of(event) -> float:
        if not isinstance(event.duration, Num):
            raise SequenceError("Sequence durations have not been evaluated")
        return event.duration.value

