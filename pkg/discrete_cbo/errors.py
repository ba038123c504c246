"""
Error types for discrete-cbo.

Every failure raised by the library derives from CBOError so callers (the CLI in
particular) can turn it into a machine-readable record with suggestions.
"""

from difflib import get_close_matches
from typing import Any, Dict, List, Optional, Sequence


class CBOError(Exception):
    """Base class for all library errors."""

    error_type = "cbo"

    def __init__(self, message: str, suggestions: Optional[List[str]] = None):
        super().__init__(message)
        self.message = message
        self.suggestions = list(suggestions or [])

    def context(self) -> Dict[str, Any]:
        """Extra structured fields for the error record."""
        return {}

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {
            "error_type": self.error_type,
            "message": self.message,
        }
        data.update(self.context())
        if self.suggestions:
            data["suggestions"] = list(self.suggestions)
        return data

    def format(self) -> str:
        return format_error_context(self.error_type, self.message, suggestions=self.suggestions)


class ParameterError(CBOError, ValueError):
    """Invalid numeric parameter for a scheme, law or estimator."""

    error_type = "parameter"


class ObjectiveEvaluationError(CBOError):
    """The objective returned a non-finite value at some particle."""

    error_type = "objective_evaluation"

    def __init__(self, message: str, particle_index: int, value: float):
        super().__init__(message)
        self.particle_index = particle_index
        self.value = value

    def context(self) -> Dict[str, Any]:
        return {"particle_index": self.particle_index, "value": repr(self.value)}


class DegenerateWeightsError(CBOError):
    """Gibbs weights summed to zero after stabilization."""

    error_type = "degenerate_weights"


class DynamicsError(CBOError):
    """A step of the run loop failed."""

    error_type = "dynamics"

    def __init__(self, message: str, step: int):
        super().__init__(message)
        self.step = step

    def context(self) -> Dict[str, Any]:
        return {"step": self.step}


class UsageError(CBOError):
    """An operation was called without the data it needs."""

    error_type = "usage"


class MetadataError(CBOError):
    """Objective metadata contradicts the objective itself."""

    error_type = "metadata"

    def __init__(self, message: str, point: Optional[Sequence[float]] = None):
        super().__init__(message)
        self.point = None if point is None else [float(v) for v in point]

    def context(self) -> Dict[str, Any]:
        return {"point": self.point} if self.point is not None else {}


class PreconditionError(CBOError):
    """A certificate or bound was asked for outside its hypotheses."""

    error_type = "precondition"


class ConfigError(CBOError):
    """Configuration text or flags could not be turned into a valid config."""

    error_type = "config"

    def __init__(
        self,
        message: str,
        field: Optional[str] = None,
        line_number: Optional[int] = None,
        file_path: Optional[str] = None,
        suggestions: Optional[List[str]] = None,
    ):
        super().__init__(message, suggestions)
        self.field = field
        self.line_number = line_number
        self.file_path = file_path

    def context(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {}
        if self.field is not None:
            data["field"] = self.field
        if self.line_number is not None:
            data["line"] = self.line_number
        if self.file_path is not None:
            data["file"] = self.file_path
        return data

    def format(self) -> str:
        return format_error_context(
            self.error_type,
            self.message,
            file_path=self.file_path,
            line_number=self.line_number,
            suggestions=self.suggestions,
        )


def suggest_names(name: str, choices: Sequence[str], limit: int = 3) -> List[str]:
    """Return "did you mean" hints for a misspelled identifier."""
    matches = get_close_matches(name, list(choices), n=limit, cutoff=0.6)
    return [f"Did you mean '{m}'?" for m in matches]


def format_error_context(
    error_type: str,
    message: str,
    file_path: Optional[str] = None,
    line_number: Optional[int] = None,
    suggestions: Optional[List[str]] = None
) -> str:
    """
    Format an error with full context.

    Args:
        error_type: Category of error
        message: Main error message
        file_path: Related file path
        line_number: Line number if applicable
        suggestions: List of suggestions

    Returns:
        Formatted error string
    """
    parts = [f"Error ({error_type}): {message}"]

    if file_path:
        location = f"  File: {file_path}"
        if line_number:
            location += f", Line {line_number}"
        parts.append(location)

    if suggestions:
        parts.append("\nSuggestions:")
        for s in suggestions:
            parts.append(f"  - {s}")

    return '\n'.join(parts)
