from __future__ import annotations

from typing import List, Optional, Sequence


class WkforgeError(Exception):
    """Base class for every error raised by wkforge."""


class InvalidInput(WkforgeError, ValueError):
    pass


class ProviderUnavailable(WkforgeError):
    pass


class MalformedResponse(WkforgeError):
    pass


class UnknownNode(WkforgeError, KeyError):
    def __init__(self, node_id: str, context: Optional[str] = None) -> None:
        self.node_id = node_id
        self.context = context
        super().__init__(node_id)

    def __str__(self) -> str:
        prefix = f"{self.context}: " if self.context else ""
        return f"{prefix}unknown task id {self.node_id!r}"


class ParseError(WkforgeError):
    def __init__(self, message: str, location: Optional[str] = None, field: Optional[str] = None) -> None:
        self.location = location
        self.field = field
        super().__init__(message)

    def __str__(self) -> str:
        message = super().__str__()
        where = ".".join(part for part in (self.location, self.field) if part)
        return f"{where}: {message}" if where else message


class UnsupportedModality(WkforgeError):
    pass


class DisconnectedTerminals(WkforgeError):
    def __init__(self, components: Sequence[Sequence[str]]) -> None:
        self.components: List[List[str]] = [sorted(group) for group in components]
        super().__init__(
            "terminals span disconnected WKG components: "
            + "; ".join(", ".join(group) for group in self.components)
        )


class InvalidAnalyzerOutput(WkforgeError):
    pass


class CannotConnect(WkforgeError):
    def __init__(self, components: Sequence[Sequence[str]], alpha: float) -> None:
        self.components: List[List[str]] = [sorted(group) for group in components]
        self.alpha = alpha
        listing = " | ".join(", ".join(group) for group in self.components)
        super().__init__(
            f"workflow graph still has {len(self.components)} components below alpha {alpha:.3f}: {listing}"
        )


class NoPath(WkforgeError):
    pass


class InvalidPath(WkforgeError):
    pass


class EmptyRouting(WkforgeError):
    pass


class StageError(WkforgeError):
    def __init__(self, stage: str, error: BaseException) -> None:
        self.stage = stage
        self.error = error
        super().__init__(f"stage {stage}: {type(error).__name__}: {error}")
