# service/sequence_parser.py
import math
import re
from typing import List, NamedTuple, Optional, Tuple, Callable

from entity.pulse_event import (
    Num, Pi, Coupling, BinOp, Neg, Expr,
    Rf, Readout, Delay, Gradient, DecoupleOn, DecoupleOff, RefocusedEvolve,
    PulseEvent, Sequence,
)
from entity.spin_system import SpinSystem
from service.errors import SequenceError, Span

MAX_NESTING = 64
MAX_OPERATORS = 256

EVENT_KEYWORDS = ('pulse', 'readout', 'delay', 'grad', 'decouple', 'refocus')

_TOKEN_RE = re.compile(r"""
    (?P<NEWLINE>\n)
  | (?P<SKIP>[ \t\r\f]+|\#[^\n]*)
  | (?P<NUMBER>(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<IDENT>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<SYMBOL>[-+*/()\[\],;])
""", re.VERBOSE)


class Token(NamedTuple):
    kind: str
    text: str
    line: int
    column: int

    @property
    def span(self) -> Span:
        return Span(self.line, self.column, len(self.text))

    def describe(self) -> str:
        if self.kind == 'NEWLINE':
            return 'end of line'
        if self.kind == 'EOF':
            return 'end of script'
        return repr(self.text)


def tokenize(script: str) -> List[Token]:
    """Split a script into tokens; raises SequenceError on the first bad character"""
    tokens = []
    line, line_start, pos = 1, 0, 0
    while pos < len(script):
        match = _TOKEN_RE.match(script, pos)
        column = pos - line_start + 1
        if match is None:
            raise SequenceError(f"Unexpected character {script[pos]!r}", Span(line, column))
        kind = match.lastgroup
        text = match.group()
        if kind == 'NEWLINE':
            tokens.append(Token(kind, text, line, column))
            line += 1
            line_start = match.end()
        elif kind != 'SKIP':
            tokens.append(Token(kind, text, line, column))
        pos = match.end()
    tokens.append(Token('EOF', '', line, pos - line_start + 1))
    return tokens


def evaluate_expr(expr: Expr, coupling: Optional[Callable[[int, int], float]] = None) -> float:
    """
    Numeric value of an expression

    Args:
        expr: Expression tree
        coupling: J lookup in Hz for 1-based spin pairs; required when expr references J

    Raises:
        ZeroDivisionError, OverflowError, ValueError: Left for the caller to attach a span
    """
    if isinstance(expr, Num):
        return expr.value
    if isinstance(expr, Pi):
        return math.pi
    if isinstance(expr, Coupling):
        if coupling is None:
            raise ValueError(f"J[{expr.i},{expr.j}] cannot be evaluated without a spin system")
        return coupling(expr.i, expr.j)
    if isinstance(expr, Neg):
        return -evaluate_expr(expr.operand, coupling)
    if isinstance(expr, BinOp):
        left = evaluate_expr(expr.left, coupling)
        right = evaluate_expr(expr.right, coupling)
        if expr.op == '+':
            return left + right
        if expr.op == '-':
            return left - right
        if expr.op == '*':
            return left * right
        if expr.op == '/':
            if right == 0:
                raise ZeroDivisionError("division by zero")
            return left / right
    raise ValueError(f"Unknown expression node {expr!r}")


def references_coupling(expr: Expr) -> bool:
    if isinstance(expr, Coupling):
        return True
    if isinstance(expr, Neg):
        return references_coupling(expr.operand)
    if isinstance(expr, BinOp):
        return references_coupling(expr.left) or references_coupling(expr.right)
    return False


class SequenceParser:
    """Recursive-descent parser for the pulse-sequence language"""

    def __init__(self, script: str, sys: SpinSystem):
        self.script = script
        self.sys = sys
        self.tokens = tokenize(script)
        self.pos = 0
        self.depth = 0
        self.operators = 0
        self.open_decouples: List[Tuple[int, ...]] = []

    # Token helpers

    @property
    def current(self) -> Token:
        return self.tokens[self.pos]

    def _advance(self) -> Token:
        token = self.tokens[self.pos]
        if token.kind != 'EOF':
            self.pos += 1
        return token

    def _at(self, text: str) -> bool:
        token = self.current
        return token.kind in ('SYMBOL', 'IDENT') and token.text == text

    def _expect(self, text: str, what: Optional[str] = None) -> Token:
        if not self._at(text):
            raise SequenceError(f"Expected {what or repr(text)}, got {self.current.describe()}",
                                self.current.span)
        return self._advance()

    def _span_from(self, first: Token) -> Span:
        last = self.tokens[self.pos - 1] if self.pos > 0 else first
        if last.line != first.line:
            return first.span
        return Span(first.line, first.column, last.column + len(last.text) - first.column)

    # Grammar

    def parse(self) -> Sequence:
        events: List[PulseEvent] = []
        spans: List[Span] = []
        while self.current.kind != 'EOF':
            if self.current.kind == 'NEWLINE':
                self._advance()
                continue
            while True:
                first = self.current
                events.append(self._event())
                spans.append(self._span_from(first))
                if self._at(';'):
                    self._advance()
                    continue
                break
            if self.current.kind not in ('NEWLINE', 'EOF'):
                raise SequenceError(f"Expected ';' or end of line, got {self.current.describe()}",
                                    self.current.span)
        return Sequence(tuple(events), self.script, tuple(spans))

    def _event(self) -> PulseEvent:
        token = self.current
        if token.kind != 'IDENT' or token.text not in EVENT_KEYWORDS:
            raise SequenceError(
                f"Expected an event ({', '.join(EVENT_KEYWORDS)}), got {token.describe()}", token.span)
        self._advance()
        keyword = token.text

        if keyword in ('pulse', 'readout'):
            axis = self._axis()
            angle = self._angle()
            self._expect('on')
            targets = self._spinlist()
            return Rf(angle, axis, targets) if keyword == 'pulse' else Readout(angle, axis, targets)

        if keyword == 'delay':
            duration, first = self._duration()
            self._check_duration(duration, first, allow_zero=False)
            return Delay(duration)

        if keyword == 'refocus':
            duration, first = self._duration()
            self._check_duration(duration, first, allow_zero=True)
            return RefocusedEvolve(duration)

        if keyword == 'grad':
            self._expect('z', "gradient axis 'z'")
            return Gradient('z')

        # decouple
        if self._at('on'):
            self._advance()
            targets = self._spinlist()
            return self._decouple_on(targets, token)
        if self._at('off'):
            self._advance()
            targets = self._spinlist()
            return self._decouple_off(targets, token)
        raise SequenceError(f"Expected 'on' or 'off' after decouple, got {self.current.describe()}",
                            self.current.span)

    def _axis(self) -> str:
        first = self.current
        negative = False
        if self._at('-'):
            self._advance()
            negative = True
        token = self.current
        if token.kind != 'IDENT' or token.text not in ('x', 'y'):
            raise SequenceError(f"Expected axis x, y, -x or -y, got {token.describe()}",
                                token.span if not negative else first.span)
        self._advance()
        return ('-' if negative else '') + token.text

    def _angle(self) -> Expr:
        first = self.current
        self.operators = 0
        expr = self._expr()
        span = self._span_from(first)
        if references_coupling(expr):
            raise SequenceError("Couplings are not allowed in pulse angles", span)
        try:
            value = evaluate_expr(expr)
        except (ZeroDivisionError, OverflowError, ValueError) as e:
            raise SequenceError(f"Invalid pulse angle: {e}", span)
        if not math.isfinite(value):
            raise SequenceError("Pulse angle is not finite", span)
        return expr

    def _duration(self) -> Tuple[Expr, Token]:
        first = self.current
        self.operators = 0
        return self._expr(), first

    def _check_duration(self, expr: Expr, first: Token, allow_zero: bool):
        span = self._span_from(first)
        try:
            value = evaluate_expr(expr, self.sys.coupling)
        except (ZeroDivisionError, OverflowError, ValueError) as e:
            raise SequenceError(f"Invalid duration: {e}", span)
        if not math.isfinite(value):
            raise SequenceError("Duration is not finite", span)
        if value < 0 or (value == 0 and not allow_zero):
            raise SequenceError(f"Duration must be {'>= 0' if allow_zero else 'positive'}, got {value:g} s", span)

    def _decouple_on(self, targets: Tuple[int, ...], keyword: Token) -> DecoupleOn:
        already = sorted(set(targets) & {k for group in self.open_decouples for k in group})
        if already:
            raise SequenceError(f"Spins {already} are already decoupled", self._span_from(keyword))
        self.open_decouples.append(targets)
        return DecoupleOn(targets)

    def _decouple_off(self, targets: Tuple[int, ...], keyword: Token) -> DecoupleOff:
        if self.open_decouples:
            innermost = self.open_decouples[-1]
            if targets != innermost:
                raise SequenceError(
                    f"decouple off {list(targets)} does not match the innermost decouple on {list(innermost)}",
                    self._span_from(keyword))
            self.open_decouples.pop()
        return DecoupleOff(targets)

    def _spinlist(self) -> Tuple[int, ...]:
        if self._at('all'):
            self._advance()
            return tuple(range(1, self.sys.n + 1))
        spins = [self._spin()]
        while self._at(','):
            self._advance()
            spins.append(self._spin())
        indices = [k for k, _ in spins]
        if len(set(indices)) != len(indices):
            duplicate = next(token for k, token in spins if indices.count(k) > 1)
            raise SequenceError("Spin listed twice", duplicate.span)
        return tuple(sorted(indices))

    def _spin(self) -> Tuple[int, Token]:
        token = self.current
        if token.kind == 'NUMBER' and token.text.isdigit():
            index = int(token.text)
            if not 1 <= index <= self.sys.n:
                raise SequenceError(f"Spin {index} out of range 1..{self.sys.n}", token.span)
            self._advance()
            return index, token
        if token.kind == 'IDENT':
            if token.text not in self.sys.labels:
                raise SequenceError(f"Unknown spin label {token.text!r}", token.span)
            self._advance()
            return self.sys.index_of(token.text), token
        raise SequenceError(f"Expected a spin index or label, got {token.describe()}", token.span)

    # Expressions: expr := term (('+'|'-') term)* ; term := unary (('*'|'/') unary)*

    def _count_operator(self):
        self.operators += 1
        if self.operators > MAX_OPERATORS:
            raise SequenceError(f"Expression has more than {MAX_OPERATORS} operators", self.current.span)

    def _enter(self):
        self.depth += 1
        if self.depth > MAX_NESTING:
            raise SequenceError(f"Expression nested deeper than {MAX_NESTING} levels", self.current.span)

    def _expr(self) -> Expr:
        self._enter()
        try:
            left = self._term()
            while self._at('+') or self._at('-'):
                op = self._advance().text
                self._count_operator()
                left = BinOp(op, left, self._term())
            return left
        finally:
            self.depth -= 1

    def _term(self) -> Expr:
        left = self._unary()
        while self._at('*') or self._at('/'):
            op = self._advance().text
            self._count_operator()
            left = BinOp(op, left, self._unary())
        return left

    def _unary(self) -> Expr:
        if self._at('-'):
            self._advance()
            self._count_operator()
            self._enter()
            try:
                return Neg(self._unary())
            finally:
                self.depth -= 1
        return self._primary()

    def _primary(self) -> Expr:
        token = self.current
        if token.kind == 'NUMBER':
            self._advance()
            value = float(token.text)
            if not math.isfinite(value):
                raise SequenceError(f"Number {token.text} out of range", token.span)
            return Num(value)
        if self._at('pi'):
            self._advance()
            return Pi()
        if self._at('J'):
            self._advance()
            self._expect('[')
            i = self._coupling_index()
            self._expect(',')
            j = self._coupling_index()
            self._expect(']')
            if i == j:
                raise SequenceError(f"J[{i},{j}] couples a spin to itself", self._span_from(token))
            return Coupling(i, j)
        if self._at('('):
            self._advance()
            inner = self._expr()
            self._expect(')')
            return inner
        raise SequenceError(f"Expected a number, pi, J[i,j] or '(', got {token.describe()}", token.span)

    def _coupling_index(self) -> int:
        token = self.current
        if token.kind != 'NUMBER' or not token.text.isdigit():
            raise SequenceError(f"Expected a spin index, got {token.describe()}", token.span)
        index = int(token.text)
        if not 1 <= index <= self.sys.n:
            raise SequenceError(f"Spin {index} out of range 1..{self.sys.n}", token.span)
        self._advance()
        return index
