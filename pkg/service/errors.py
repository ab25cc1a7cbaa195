from typing import Optional


class SimulationError(Exception):
    """Base class for every error the simulator reports"""
    code = 'SIMULATION_ERROR'
    exit_code = 3


class ConfigError(SimulationError, ValueError):
    """Invalid experiment configuration or settings"""
    code = 'CONFIG_ERROR'
    exit_code = 1


class Span:
    """Source location of a token or event inside a sequence script (1-based)"""

    def __init__(self, line: int, column: int, length: int = 1):
        self.line = line
        self.column = column
        self.length = max(1, length)

    def to_dict(self) -> dict:
        return {'line': self.line, 'column': self.column, 'length': self.length}

    def __eq__(self, other) -> bool:
        return (isinstance(other, Span) and self.line == other.line
                and self.column == other.column and self.length == other.length)

    def __hash__(self) -> int:
        return hash((self.line, self.column, self.length))

    def __str__(self) -> str:
        return f"line {self.line}, column {self.column}"

    def __repr__(self) -> str:
        return f"Span(line={self.line}, column={self.column}, length={self.length})"


class SequenceError(SimulationError, ValueError):
    """Lexical, syntax or semantic error in a pulse-sequence script"""
    code = 'SEQUENCE_ERROR'
    exit_code = 2

    def __init__(self, message: str, span: Optional[Span] = None):
        self.message = message
        self.span = span
        super().__init__(f"{span}: {message}" if span is not None else message)


class OperatorError(SimulationError, ValueError):
    """Invalid operator construction (index range, dimension, Hermiticity)"""
    code = 'OPERATOR_ERROR'


class EngineError(SimulationError):
    """An event could not be applied to a simulation state"""
    code = 'ENGINE_ERROR'


class AnalysisError(SimulationError, ValueError):
    """Invalid input to trace, FID, spectrum or peak extraction"""
    code = 'ANALYSIS_ERROR'


class FitError(SimulationError):
    """Cosine fit rejected the data or failed to converge"""
    code = 'FIT_ERROR'


class VerificationFailure(SimulationError):
    """At least one property check of the verify suite failed"""
    code = 'VERIFY_FAILED'
    exit_code = 4
