"""
Exception hierarchy for the pilot synthesis toolkit.

Every error raised on purpose by the package derives from PilotSynthesisError so
callers (the CLI in particular) can separate our failures from programming bugs.
"""

from __future__ import annotations

from typing import Optional


class PilotSynthesisError(Exception):
    """Base class for all toolkit errors."""


class DegenerateNullspace(PilotSynthesisError):
    """The tail block of the IDFT submatrix leaves too few null directions."""

    def __init__(self, found: int, required: int, gap: tuple[float, float]):
        self.found = found
        self.required = required
        self.gap = gap
        super().__init__(
            f"nullspace has {found} usable directions, "
            f"{required} required (singular-value gap: {gap[0]:.3e} / {gap[1]:.3e})"
        )


class InvalidPlacement(PilotSynthesisError):
    """Carrier placement has duplicates, wrong length or out-of-range indices."""


class DimensionMismatch(PilotSynthesisError, ValueError):
    """An input vector does not have the length the operator expects."""

    def __init__(self, what: str, expected, got):
        self.expected = expected
        self.got = got
        super().__init__(f"{what}: expected shape {expected}, got {got}")


class LagOutsideWindow(PilotSynthesisError):
    """A cost was requested at a lag outside the component's suppression set."""


class ZeroInput(PilotSynthesisError):
    """A zero vector was passed where a nonzero pilot is required."""


class NoSidePeaks(PilotSynthesisError):
    """A profile has an empty suppression set, so no side peak exists."""


class InvalidChannel(PilotSynthesisError):
    """A tapped-delay-line channel violates its invariants."""


class CacheFormatError(PilotSynthesisError):
    """A subspace cache file is truncated, foreign or of another version."""


class PilotFileError(PilotSynthesisError):
    """A pilot file is corrupt, of another version, or inconsistent."""


class ConfigError(PilotSynthesisError):
    """A configuration file or override is invalid.

    Carries the offending key and, when known, the 1-based line number in the
    source file, so the CLI can print a line-precise diagnostic.
    """

    def __init__(self, message: str, key: Optional[str] = None, line: Optional[int] = None):
        self.key = key
        self.line = line
        location = ""
        if line is not None:
            location = f"line {line}: "
        super().__init__(f"{location}{message}")
