"""
Custom exceptions for stegmesh.
"""

class StegMeshError(Exception):
    """Base exception for stegmesh."""
    pass

class ConfigError(StegMeshError):
    """Raised when an engine or cluster configuration is inconsistent."""
    pass

# ── scenario ──

class ScenarioError(StegMeshError):
    """Raised when a scenario cannot be loaded."""
    pass

class ParseError(ScenarioError):
    """Raised when a scenario file is not well-formed YAML."""

    def __init__(self, message: str, line: int = 0, column: int = 0):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column

class ValidationError(ScenarioError):
    """Raised when a scenario violates the schema; names the offending field."""

    def __init__(self, field_path: str, reason: str):
        super().__init__(f"{field_path}: {reason}")
        self.field_path = field_path
        self.reason = reason

# ── metric ──

class MetricOverflowError(StegMeshError, OverflowError):
    """Raised when a link cost reaches INFINITY_COST."""
    pass

# ── codec ──

class CodecError(StegMeshError):
    """Raised when covering a payload fails."""
    pass

class CarrierTooSmall(CodecError):
    pass

class UnknownMethod(CodecError):
    pass

class CarrierKindMismatch(CodecError):
    pass

# ── crypto ──

class CryptoError(StegMeshError):
    pass

class IntegrityFailure(CryptoError):
    """Wrong key, truncation or tampering."""
    pass

class AlreadyMember(CryptoError):
    pass

class NotAMember(CryptoError):
    pass

# ── engine / routing ──

class EngineError(StegMeshError):
    pass

class EmptyProfile(EngineError):
    pass

class TimerNotDue(EngineError):
    pass

class RoutingError(StegMeshError):
    pass

class EmptyPathList(RoutingError):
    pass

# ── simulation ──

class SimulationError(StegMeshError):
    pass

class EmptyQueue(SimulationError):
    pass

class UnknownTarget(SimulationError):
    pass
