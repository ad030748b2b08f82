from dataclasses import dataclass
from typing import Optional


@dataclass(frozen=True)
class SpecIssue:
    """A single diagnostic about a spec field."""

    path: str
    message: str
    line: Optional[int] = None

    def __str__(self) -> str:
        where = f"line {self.line}, " if self.line is not None else ""
        return f"{where}{self.path or '<document>'}: {self.message}"


class SpecError(ValueError):
    """Raised when a spec violates its invariants."""

    def __init__(self, issues: list[SpecIssue]):
        self.issues = issues
        super().__init__("; ".join(str(issue) for issue in issues))


class SpecParseError(SpecError):
    """Raised when a spec document cannot be parsed."""
    pass
