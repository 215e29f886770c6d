"""Toolpath authoring: moves and settings with physically meaningful defaults.

A :class:`Toolpath` accumulates typed commands. Geometry (``Segment`` lists)
is always re-derivable from the command list alone, so a program can be
exported, parsed back, and re-rendered without loss.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional

from .commands import (
    AutoHome,
    Command,
    MoveExtrude,
    MoveRetract,
    Position,
    Raw,
    Segment,
    SetBedTemp,
    SetJerk,
    SetMaxAcceleration,
    SetNozzleTemp,
    SetStartingAcceleration,
    Travel,
    segment_kind,
)
from .profiles import MachineProfile

HOME = Position(0.0, 0.0, 0.0, 0.0)


class EnvelopeError(ValueError):
    """Raised in strict bounds mode when a target leaves the work envelope."""


def default_extrusion(profile: MachineProfile, move_length: float) -> float:
    """Filament feed for a single-width bead along a move of ``move_length``.

    The bead is modelled as a circular cross-section of nozzle diameter, so
    conserving volume against the filament cross-section gives
    ``delta_e = L * (nozzle_radius / filament_radius)**2``.
    """
    if move_length < 0 or not math.isfinite(move_length):
        raise ValueError(f"move length must be >= 0, got {move_length!r}")
    ratio = profile.nozzle_radius / profile.filament_radius
    return move_length * ratio * ratio


# Expansion of commands into primitive per-wire-line steps. Both segment
# derivation and G-code serialization walk this, which keeps preview geometry,
# simulator traces, and bytes on the wire consistent by construction.


@dataclass(frozen=True)
class MotionStep:
    """One physical motion: a move, or a stationary retract/prime."""

    command_index: int
    start: Position
    target: Position  # includes updated cumulative e
    feedrate: float  # mm/s
    delta_e: float
    role: str  # "move" | "travel" | "retract" | "prime"


@dataclass(frozen=True)
class SettingStep:
    """A non-motion command (settings, temperatures, home, raw passthrough)."""

    command_index: int
    command: Command


@dataclass
class Cursor:
    position: Position = HOME
    retracted: bool = False


def expand(
    profile: MachineProfile,
    commands: Iterable[Command],
    start: Position = HOME,
    *,
    retracted: bool = False,
) -> Iterator[MotionStep | SettingStep]:
    """Expand commands into primitive steps, resolving defaults.

    Retraction pairing happens here: a MoveRetract emits a retract step once
    (consecutive retracts collapse), and the next MoveExtrude is preceded by
    a prime step restoring the same filament length.
    """
    cur = Cursor(position=start, retracted=retracted)
    for index, cmd in enumerate(commands):
        if isinstance(cmd, MoveExtrude):
            if cur.retracted and profile.retract_length > 0:
                primed = cur.position.moved(e=cur.position.e + profile.retract_length)
                yield MotionStep(index, cur.position, primed, profile.retract_speed,
                                 profile.retract_length, "prime")
                cur.position = primed
            cur.retracted = False
            length = cur.position.distance_to(cmd.target)
            delta_e = cmd.e_amount if cmd.e_amount is not None else default_extrusion(profile, length)
            feed = cmd.speed if cmd.speed is not None else profile.default_print_speed
            end = cmd.target.moved(e=cur.position.e + delta_e)
            yield MotionStep(index, cur.position, end, feed, delta_e, "move")
            cur.position = end
        elif isinstance(cmd, MoveRetract):
            if not cur.retracted and profile.retract_length > 0:
                pulled = cur.position.moved(e=cur.position.e - profile.retract_length)
                yield MotionStep(index, cur.position, pulled, profile.retract_speed,
                                 -profile.retract_length, "retract")
                cur.position = pulled
                cur.retracted = True
            feed = cmd.speed if cmd.speed is not None else profile.default_travel_speed
            end = cmd.target.moved(e=cur.position.e)
            yield MotionStep(index, cur.position, end, feed, 0.0, "travel")
            cur.position = end
        elif isinstance(cmd, Travel):
            feed = cmd.speed if cmd.speed is not None else profile.default_travel_speed
            end = cmd.target.moved(e=cur.position.e)
            yield MotionStep(index, cur.position, end, feed, 0.0, "travel")
            cur.position = end
        elif isinstance(cmd, AutoHome):
            cur.position = Position(0.0, 0.0, 0.0, cur.position.e)
            yield SettingStep(index, cmd)
        else:
            yield SettingStep(index, cmd)


@dataclass
class Derivation:
    segments: list[Segment]
    diagnostics: list[str]
    final_position: Position


def derive_segments(
    profile: MachineProfile,
    commands: Iterable[Command],
    start: Position = HOME,
    *,
    drop_degenerate: bool = False,
) -> Derivation:
    """Realize commands as segments. Pure: same inputs, same output.

    With ``drop_degenerate`` (used by recipe generators), zero-length steps
    that also move no filament are dropped with a diagnostic instead of
    producing no-op segments.
    """
    segments: list[Segment] = []
    diagnostics: list[str] = []
    position = start
    for step in expand(profile, commands, start):
        if isinstance(step, SettingStep):
            if isinstance(step.command, AutoHome):
                position = Position(0.0, 0.0, 0.0, position.e)
            continue
        position = step.target
        zero_length = step.start.xyz() == step.target.xyz()
        if drop_degenerate and zero_length and step.delta_e == 0.0:
            diagnostics.append(
                f"command {step.command_index}: dropped zero-length, zero-E segment"
            )
            continue
        segments.append(
            Segment(
                start=step.start,
                end=step.target,
                feedrate=step.feedrate,
                delta_e=step.delta_e,
                kind=segment_kind(step.delta_e),
                command_index=step.command_index,
            )
        )
    return Derivation(segments, diagnostics, position)


@dataclass(frozen=True)
class BoundsViolation:
    command_index: int
    axis: str
    value: float
    limit: float

    def __str__(self) -> str:
        return (
            f"command {self.command_index}: {self.axis}={self.value:g} outside "
            f"[0, {self.limit:g}]"
        )


def _endpoint_violations(profile: MachineProfile, point: Position, command_index: int) -> list[BoundsViolation]:
    out = []
    for axis, limit in (("x", profile.max_x), ("y", profile.max_y), ("z", profile.max_z)):
        value = getattr(point, axis)
        if not (0.0 <= value <= limit):
            out.append(BoundsViolation(command_index, axis, value, limit))
    return out


def segment_violations(profile: MachineProfile, segments: list[Segment]) -> list[BoundsViolation]:
    """Distinct out-of-envelope segment endpoints (closed interval per axis)."""
    violations: list[BoundsViolation] = []
    seen: set[tuple[int, str, float]] = set()
    for seg in segments:
        for point in (seg.start, seg.end):
            for v in _endpoint_violations(profile, point, seg.command_index):
                key = (v.command_index, v.axis, v.value)
                if key not in seen:
                    seen.add(key)
                    violations.append(v)
    return violations


@dataclass
class ToolpathStats:
    total_extrude_length: float = 0.0
    total_travel_length: float = 0.0
    total_e: float = 0.0
    bounding_box: Optional[tuple[Position, Position]] = None
    segment_count: int = 0

    @classmethod
    def from_segments(cls, segments: list[Segment]) -> "ToolpathStats":
        stats = cls(segment_count=len(segments))
        lo = [math.inf] * 3
        hi = [-math.inf] * 3
        for seg in segments:
            if seg.kind == "extrude":
                stats.total_extrude_length += seg.length
            elif seg.kind == "travel":
                stats.total_travel_length += seg.length
            stats.total_e += seg.delta_e
            for point in (seg.start, seg.end):
                for i, v in enumerate(point.xyz()):
                    lo[i] = min(lo[i], v)
                    hi[i] = max(hi[i], v)
        if segments:
            stats.bounding_box = (Position(*lo), Position(*hi))
        return stats


class Toolpath:
    """An ordered command program plus derived geometry and an authoring cursor.

    Authoring is chainable (each op returns the toolpath). ``bounds_mode`` is
    "strict" (ops raise :class:`EnvelopeError` on out-of-envelope targets;
    the default for programs) or "permissive" (violations are recorded as
    warnings; meant for live jogging near the bed).
    """

    def __init__(
        self,
        profile: MachineProfile,
        *,
        bounds_mode: str = "strict",
        start: Position = HOME,
        drop_degenerate: bool = False,
    ):
        if bounds_mode not in ("strict", "permissive"):
            raise ValueError(f"bounds_mode must be 'strict' or 'permissive', got {bounds_mode!r}")
        profile.validate()
        self.profile = profile
        self.bounds_mode = bounds_mode
        self.start = start
        self.drop_degenerate = drop_degenerate
        self.commands: list[Command] = []
        self.warnings: list[BoundsViolation] = []
        self._cursor = Cursor(position=start)
        self._derived: Optional[Derivation] = None

    # -- authoring ---------------------------------------------------------

    def _check_target(self, target: Position) -> None:
        violations = _endpoint_violations(self.profile, target, len(self.commands))
        if not violations:
            return
        if self.bounds_mode == "strict":
            raise EnvelopeError("; ".join(str(v) for v in violations))
        self.warnings.extend(violations)

    def _append(self, cmd: Command) -> "Toolpath":
        self.commands.append(cmd)
        self._derived = None
        # Keep the cursor in sync by replaying just this command's expansion.
        for step in expand(self.profile, [cmd], self._cursor.position,
                           retracted=self._cursor.retracted):
            if isinstance(step, MotionStep):
                self._cursor.position = step.target
                if step.role == "retract":
                    self._cursor.retracted = True
                elif step.role in ("prime", "move"):
                    self._cursor.retracted = False
            elif isinstance(step.command, AutoHome):
                self._cursor.position = Position(0.0, 0.0, 0.0, self._cursor.position.e)
        return self

    def move_extrude(
        self,
        x: float,
        y: float,
        z: float,
        speed: Optional[float] = None,
        e_amount: Optional[float] = None,
    ) -> "Toolpath":
        target = Position(x, y, z)
        self._check_target(target)
        return self._append(MoveExtrude(target, speed, e_amount))

    def move_retract(self, x: float, y: float, z: float, speed: Optional[float] = None) -> "Toolpath":
        target = Position(x, y, z)
        self._check_target(target)
        return self._append(MoveRetract(target, speed))

    def move(self, x: float, y: float, z: float, speed: Optional[float] = None) -> "Toolpath":
        target = Position(x, y, z)
        self._check_target(target)
        return self._append(Travel(target, speed))

    def set_max_acceleration(self, ax: float, ay: float, az: float, ae: Optional[float] = None) -> "Toolpath":
        return self._append(SetMaxAcceleration(ax, ay, az, ae))

    def set_starting_acceleration(self, a: float) -> "Toolpath":
        return self._append(SetStartingAcceleration(a))

    def set_jerk(self, jx: float, jy: float, jz: float, je: float) -> "Toolpath":
        return self._append(SetJerk(jx, jy, jz, je))

    def set_nozzle_temp(self, celsius: float, wait: bool = False) -> "Toolpath":
        return self._append(SetNozzleTemp(celsius, wait))

    def set_bed_temp(self, celsius: float, wait: bool = False) -> "Toolpath":
        return self._append(SetBedTemp(celsius, wait))

    def auto_home(self) -> "Toolpath":
        return self._append(AutoHome())

    def raw(self, line: str) -> "Toolpath":
        return self._append(Raw(line))

    # -- derived views -----------------------------------------------------

    def _derivation(self) -> Derivation:
        if self._derived is None:
            self._derived = derive_segments(
                self.profile, self.commands, self.start, drop_degenerate=self.drop_degenerate
            )
        return self._derived

    @property
    def segments(self) -> list[Segment]:
        return self._derivation().segments

    @property
    def diagnostics(self) -> list[str]:
        return self._derivation().diagnostics

    @property
    def current_position(self) -> Position:
        return self._cursor.position

    @property
    def stats(self) -> ToolpathStats:
        return ToolpathStats.from_segments(self.segments)

    def bounds_check(self, mode: Optional[str] = None) -> list[BoundsViolation]:
        """All segment endpoints outside the closed envelope, per axis."""
        del mode  # the report is the same either way; mode governs authoring
        return segment_violations(self.profile, self.segments)

    def __len__(self) -> int:
        return len(self.commands)


def new_toolpath(
    profile: MachineProfile,
    *,
    bounds_mode: str = "strict",
    start: Position = HOME,
    drop_degenerate: bool = False,
) -> Toolpath:
    """Create an empty toolpath for ``profile`` with the cursor at ``start``."""
    return Toolpath(profile, bounds_mode=bounds_mode, start=start, drop_degenerate=drop_degenerate)
