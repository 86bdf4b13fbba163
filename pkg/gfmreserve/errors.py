# spdx-license-identifier: apache-2.0
# copyright 2024 mark counterman

"""Exception types raised by gfmreserve modules."""

from typing import Any, Optional, Sequence


class GfmReserveError(Exception):
    """Base class for all gfmreserve errors."""


class ConfigurationError(GfmReserveError):
    """Invalid parameters, graphs or scenario documents."""

    def __init__(self, message: str, pointer: Optional[str] = None):
        self.pointer = pointer
        if pointer:
            message = f"{pointer}: {message}"
        super().__init__(message)


class GraphError(ConfigurationError):
    """Communication or electrical graph is not connected."""

    def __init__(self, message: str, components: Sequence[Sequence[Any]] = ()):
        self.components = [list(c) for c in components]
        if self.components:
            message = f"{message} (components: {self.components})"
        super().__init__(message)


class SolverError(GfmReserveError):
    """Network solve or operating-point search failed."""


class UnsupportedCaseError(GfmReserveError):
    """Analysis requested outside the homogeneous, gamma-uniform case."""


class DecodeError(GfmReserveError):
    """Malformed wire record."""

    def __init__(self, message: str, field_index: int, record: bytes = b""):
        self.field_index = field_index
        self.record = record
        super().__init__(f"field {field_index}: {message}")


class IntegrationError(GfmReserveError):
    """Closed-loop integration produced a non-finite state."""

    def __init__(self, message: str, t: float, last_valid: Any = None):
        self.t = t
        self.last_valid = last_valid
        super().__init__(f"t={t:.6f}s: {message}")


class TransportError(GfmReserveError):
    """Datagram endpoint could not be bound or reached."""
