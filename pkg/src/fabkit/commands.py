"""Typed machine instructions and their geometric realization."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

NOZZLE_TEMP_RANGE = (0.0, 300.0)
BED_TEMP_RANGE = (0.0, 120.0)


class CommandError(ValueError):
    """Raised for a command that violates its own invariants."""


def _require_finite(value: float, what: str) -> float:
    if not math.isfinite(value):
        raise CommandError(f"{what} must be finite, got {value!r}")
    return float(value)


def _require_positive(value: Optional[float], what: str) -> Optional[float]:
    if value is None:
        return None
    if not (math.isfinite(value) and value > 0):
        raise CommandError(f"{what} must be > 0, got {value!r}")
    return float(value)


@dataclass(frozen=True)
class Position:
    """Absolute machine coordinates in mm; ``e`` is the cumulative extruder axis."""

    x: float
    y: float
    z: float
    e: float = 0.0

    def __post_init__(self) -> None:
        for axis in ("x", "y", "z", "e"):
            _require_finite(getattr(self, axis), axis)

    def xyz(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.z)

    def distance_to(self, other: "Position") -> float:
        return math.dist(self.xyz(), other.xyz())

    def moved(self, x: float = None, y: float = None, z: float = None, e: float = None) -> "Position":
        return Position(
            self.x if x is None else x,
            self.y if y is None else y,
            self.z if z is None else z,
            self.e if e is None else e,
        )


@dataclass(frozen=True)
class MoveExtrude:
    """Move to ``target`` while feeding filament.

    ``e_amount`` is the explicit filament feed for this move (mm of filament,
    negative = retract); when None the feed is computed from the move length
    and the machine profile. ``speed`` of None means the profile default.
    """

    target: Position
    speed: Optional[float] = None
    e_amount: Optional[float] = None

    def __post_init__(self) -> None:
        _require_positive(self.speed, "speed")
        if self.e_amount is not None:
            _require_finite(self.e_amount, "e_amount")


@dataclass(frozen=True)
class MoveRetract:
    """Retract filament, then travel to ``target`` without depositing."""

    target: Position
    speed: Optional[float] = None

    def __post_init__(self) -> None:
        _require_positive(self.speed, "speed")


@dataclass(frozen=True)
class Travel:
    """Plain transit move; no filament handling."""

    target: Position
    speed: Optional[float] = None

    def __post_init__(self) -> None:
        _require_positive(self.speed, "speed")


@dataclass(frozen=True)
class SetNozzleTemp:
    celsius: float
    wait: bool = False

    def __post_init__(self) -> None:
        lo, hi = NOZZLE_TEMP_RANGE
        if not (lo <= self.celsius <= hi):
            raise CommandError(f"nozzle temperature must be in [{lo}, {hi}] C, got {self.celsius}")


@dataclass(frozen=True)
class SetBedTemp:
    celsius: float
    wait: bool = False

    def __post_init__(self) -> None:
        lo, hi = BED_TEMP_RANGE
        if not (lo <= self.celsius <= hi):
            raise CommandError(f"bed temperature must be in [{lo}, {hi}] C, got {self.celsius}")


@dataclass(frozen=True)
class AutoHome:
    pass


@dataclass(frozen=True)
class SetMaxAcceleration:
    """Per-axis acceleration limits (mm/s^2); ``ae`` may be omitted."""

    ax: float
    ay: float
    az: float
    ae: Optional[float] = None

    def __post_init__(self) -> None:
        for name in ("ax", "ay", "az"):
            _require_positive(getattr(self, name), name)
        _require_positive(self.ae, "ae")


@dataclass(frozen=True)
class SetStartingAcceleration:
    """Acceleration applied to printing moves (mm/s^2)."""

    a: float

    def __post_init__(self) -> None:
        _require_positive(self.a, "a")


@dataclass(frozen=True)
class SetJerk:
    """Per-axis instantaneous velocity change limits (mm/s)."""

    jx: float
    jy: float
    jz: float
    je: float

    def __post_init__(self) -> None:
        for name in ("jx", "jy", "jz", "je"):
            _require_positive(getattr(self, name), name)


@dataclass(frozen=True)
class Raw:
    """One G-code line passed through verbatim."""

    line: str

    def __post_init__(self) -> None:
        if "\n" in self.line or "\r" in self.line:
            raise CommandError("raw line must not contain line terminators")


Command = Union[
    MoveExtrude,
    MoveRetract,
    Travel,
    SetNozzleTemp,
    SetBedTemp,
    AutoHome,
    SetMaxAcceleration,
    SetStartingAcceleration,
    SetJerk,
    Raw,
]

MOTION_COMMANDS = (MoveExtrude, MoveRetract, Travel)


@dataclass(frozen=True)
class Segment:
    """Geometric realization of one motion step.

    ``delta_e`` signs define the kind: > 0 extrude, 0 travel, < 0 retract.
    Retract and prime steps are stationary (start == end).
    """

    start: Position
    end: Position
    feedrate: float
    delta_e: float
    kind: str  # "extrude" | "travel" | "retract"
    command_index: int = -1

    @property
    def length(self) -> float:
        return self.start.distance_to(self.end)

    def __post_init__(self) -> None:
        if self.kind == "extrude" and not self.delta_e > 0:
            raise CommandError("extrude segment needs delta_e > 0")
        if self.kind == "travel" and self.delta_e != 0:
            raise CommandError("travel segment needs delta_e == 0")
        if self.kind == "retract" and not self.delta_e < 0:
            raise CommandError("retract segment needs delta_e < 0")


def segment_kind(delta_e: float) -> str:
    if delta_e > 0:
        return "extrude"
    if delta_e < 0:
        return "retract"
    return "travel"
