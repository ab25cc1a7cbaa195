# entity/pulse_event.py
from dataclasses import dataclass, field
from typing import Tuple, Union, Optional, Dict, Any

from service.errors import Span

AXES = ('x', 'y', '-x', '-y')


# Expression nodes (angles and durations)

@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Pi:
    pass


@dataclass(frozen=True)
class Coupling:
    """J[i,j] in Hz, resolved against the active spin system at evaluation time"""
    i: int
    j: int


@dataclass(frozen=True)
class BinOp:
    op: str
    left: 'Expr'
    right: 'Expr'


@dataclass(frozen=True)
class Neg:
    operand: 'Expr'


Expr = Union[Num, Pi, Coupling, BinOp, Neg]


# Events

@dataclass(frozen=True)
class Rf:
    """Ideal hard pulse exp(+i*angle*sum I_axis) on the target spins"""
    angle: Expr
    axis: str
    targets: Tuple[int, ...]

    def to_dict(self) -> Dict[str, Any]:
        return {'type': 'pulse', 'axis': self.axis, 'targets': list(self.targets)}


@dataclass(frozen=True)
class Readout(Rf):
    """Rf pulse that also marks the start of acquisition"""

    def to_dict(self) -> Dict[str, Any]:
        return {'type': 'readout', 'axis': self.axis, 'targets': list(self.targets)}


@dataclass(frozen=True)
class Delay:
    duration: Expr

    def to_dict(self) -> Dict[str, Any]:
        return {'type': 'delay'}


@dataclass(frozen=True)
class Gradient:
    axis: str = 'z'

    def to_dict(self) -> Dict[str, Any]:
        return {'type': 'grad', 'axis': self.axis}


@dataclass(frozen=True)
class DecoupleOn:
    targets: Tuple[int, ...]

    def to_dict(self) -> Dict[str, Any]:
        return {'type': 'decouple_on', 'targets': list(self.targets)}


@dataclass(frozen=True)
class DecoupleOff:
    targets: Tuple[int, ...]

    def to_dict(self) -> Dict[str, Any]:
        return {'type': 'decouple_off', 'targets': list(self.targets)}


@dataclass(frozen=True)
class RefocusedEvolve:
    """delay t/2, hard pi_x on every spin, delay t/2"""
    duration: Expr

    def to_dict(self) -> Dict[str, Any]:
        return {'type': 'refocus'}


PulseEvent = Union[Rf, Readout, Delay, Gradient, DecoupleOn, DecoupleOff, RefocusedEvolve]


@dataclass(frozen=True)
class Sequence:
    """
    Parsed experiment script

    Attributes:
        events: Events in time order
        source: Script text the events were parsed from
        spans: Source span of each event (same length as events)
        evaluated: True once every delay/refocus duration is a literal in seconds
    """
    events: Tuple[PulseEvent, ...]
    source: str = field(default='', compare=False)
    spans: Tuple[Optional[Span], ...] = field(default=(), compare=False)
    evaluated: bool = field(default=False, compare=False)

    def __len__(self) -> int:
        return len(self.events)

    def span_of(self, index: int) -> Optional[Span]:
        if 0 <= index < len(self.spans):
            return self.spans[index]
        return None

    def to_dict(self) -> Dict[str, Any]:
        return {
            'events': [event.to_dict() for event in self.events],
            'evaluated': self.evaluated,
        }
