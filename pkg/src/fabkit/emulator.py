"""A Marlin-protocol printer emulator with a simulated clock.

Acts as the wire peer for the streaming engine and as the batch oracle for
end-to-end checks: it acknowledges like the firmware would (ok on planner
buffer accept, deferred when the buffer is full), times motion with a
per-segment trapezoidal profile, heats exponentially, and records every
executed segment in a deposition trace.

The clock is simulated; test runs take milliseconds of wall time.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from typing import Optional

from .commands import (
    AutoHome,
    Position,
    Raw,
    SetBedTemp,
    SetJerk,
    SetMaxAcceleration,
    SetNozzleTemp,
    SetStartingAcceleration,
    segment_kind,
)
from .gcode import (
    FramingError,
    LineParser,
    _split_words,
    strip_comments,
    unframe_line,
)

_FMT_TEMP = "T:{h:.1f} /{ht:.1f} B:{b:.1f} /{bt:.1f}"


def segment_duration(length: float, v_target: float, accel: float, v_junction: float) -> float:
    """Trapezoidal move time with equal entry/exit speed ``v_junction``.

    If the move is long enough to reach ``v_target`` the profile is
    accel / cruise / decel; otherwise it is triangular with peak
    ``sqrt(accel * length + v_junction**2)``.
    """
    if not (accel > 0 and v_target > 0):
        raise ValueError(f"accel and v_target must be > 0, got a={accel}, v={v_target}")
    if length < 0:
        raise ValueError(f"length must be >= 0, got {length}")
    if length == 0:
        return 0.0
    v_j = min(v_junction, v_target)
    accel_dist = (v_target * v_target - v_j * v_j) / accel
    if length >= accel_dist:
        return 2 * (v_target - v_j) / accel + (length - accel_dist) / v_target
    v_peak = math.sqrt(accel * length + v_j * v_j)
    return 2 * (v_peak - v_j) / accel


@dataclass(frozen=True)
class AckDelay:
    """Delivery delay for responses: none, fixed, or seeded-random per line."""

    kind: str = "none"  # "none" | "fixed" | "randomized"
    fixed_ms: float = 0.0
    range_ms: tuple[float, float] = (0.0, 2.0)
    seed: int = 0

    def sampler(self):
        if self.kind == "none":
            return lambda: 0.0
        if self.kind == "fixed":
            return lambda: self.fixed_ms / 1000.0
        if self.kind == "randomized":
            rng = random.Random(self.seed)
            lo, hi = self.range_ms
            return lambda: rng.uniform(lo, hi) / 1000.0
        raise ValueError(f"unknown ack delay kind {self.kind!r}")


@dataclass
class EmulatorConfig:
    buffer_depth: int = 16
    max_accel: tuple[float, float, float, float] = (500.0, 500.0, 100.0, 5000.0)
    jerk: tuple[float, float, float, float] = (8.0, 8.0, 0.4, 5.0)
    envelope: tuple[float, float, float] = (220.0, 220.0, 250.0)
    tau_hotend_s: float = 8.0
    tau_bed_s: float = 30.0
    ambient_c: float = 25.0
    print_accel: float = 500.0  # starting value; M204 P overrides
    default_feed_mm_s: float = 25.0  # used when a move arrives before any F word
    envelope_mode: str = "clamp"  # "clamp" | "fault"
    ack_delay: AckDelay = field(default_factory=AckDelay)
    # fault injection for host tests: respond "Error:<msg>" to the Nth line
    error_at_line: Optional[int] = None
    error_message: str = "checksum"
    # request a resend for the Nth *framed* line received (drops it once)
    resend_at_framed_line: Optional[int] = None

    def __post_init__(self) -> None:
        if self.buffer_depth < 1:
            raise ValueError("buffer_depth must be >= 1")
        if self.tau_hotend_s <= 0 or self.tau_bed_s <= 0:
            raise ValueError("heating time constants must be > 0")
        if self.envelope_mode not in ("clamp", "fault"):
            raise ValueError(f"envelope_mode must be 'clamp' or 'fault', got {self.envelope_mode!r}")


@dataclass(frozen=True)
class TraceRecord:
    """One executed motion: timestamps, endpoints, and the kinematic inputs."""

    t_start: float
    t_end: float
    start: Position
    end: Position
    feedrate: float
    delta_e: float
    kind: str
    accel: float
    v_junction: float

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start

    def to_json(self) -> str:
        return json.dumps(
            {
                "t0": self.t_start,
                "t1": self.t_end,
                "x0": self.start.x, "y0": self.start.y, "z0": self.start.z, "e0": self.start.e,
                "x1": self.end.x, "y1": self.end.y, "z1": self.end.z, "e1": self.end.e,
                "feed": self.feedrate,
                "de": self.delta_e,
                "kind": self.kind,
                "accel": self.accel,
                "vj": self.v_junction,
            }
        )


def dump_trace(records: list[TraceRecord]) -> str:
    return "".join(rec.to_json() + "\n" for rec in records)


def load_trace(text: str) -> list[TraceRecord]:
    records = []
    for line in text.splitlines():
        if not line.strip():
            continue
        d = json.loads(line)
        records.append(
            TraceRecord(
                d["t0"], d["t1"],
                Position(d["x0"], d["y0"], d["z0"], d["e0"]),
                Position(d["x1"], d["y1"], d["z1"], d["e1"]),
                d["feed"], d["de"], d["kind"], d["accel"], d["vj"],
            )
        )
    return records


@dataclass
class _Planned:
    t_start: float
    t_end: float
    start: Position
    end: Position
    feedrate: float
    delta_e: float
    accel: float
    v_junction: float


class _Heater:
    """First-order exponential toward max(target, ambient)."""

    def __init__(self, ambient: float, tau: float):
        self.ambient = ambient
        self.tau = tau
        self.target = 0.0
        self._temp = ambient
        self._since = 0.0

    def temp_at(self, t: float) -> float:
        goal = max(self.target, self.ambient)
        return goal + (self._temp - goal) * math.exp(-(t - self._since) / self.tau)

    def set_target(self, target: float, t: float) -> None:
        self._temp = self.temp_at(t)
        self._since = t
        self.target = target


class VirtualPrinter:
    """The firmware side of the serial conversation, desk-scale faithful."""

    # verbs acknowledged without further semantics
    _PLAIN_OK = {("M", 106), ("M", 107), ("M", 110), ("M", 117), ("M", 0)}

    def __init__(self, config: EmulatorConfig = None):
        self.config = config or EmulatorConfig()
        self.clock = 0.0
        self.parser = LineParser()
        self.hotend = _Heater(self.config.ambient_c, self.config.tau_hotend_s)
        self.bed = _Heater(self.config.ambient_c, self.config.tau_bed_s)
        self.planner: list[_Planned] = []
        self.exec_tail = 0.0  # sim time when the last queued move finishes
        self.trace: list[TraceRecord] = []
        self.max_accel = list(self.config.max_accel)
        self.jerk = list(self.config.jerk)
        self.print_accel = self.config.print_accel
        self.line_count = 0
        self.framed_count = 0
        self.last_line_number: Optional[int] = None
        self.response_log: list[tuple[float, str]] = []

    # -- clock / planner ----------------------------------------------------

    @property
    def position(self) -> Position:
        return self.parser.position

    def _retire_done(self) -> None:
        while self.planner and self.planner[0].t_end <= self.clock:
            self._retire_one()

    def _retire_one(self) -> None:
        move = self.planner.pop(0)
        self.trace.append(
            TraceRecord(
                move.t_start, move.t_end, move.start, move.end,
                move.feedrate, move.delta_e, segment_kind(move.delta_e),
                move.accel, move.v_junction,
            )
        )

    def _advance_to(self, t: float, responses: list[str]) -> None:
        """Move the simulated clock forward, emitting busy lines for long waits."""
        waited = t - self.clock
        busy_every = 2.0
        n_busy = int(waited // busy_every)
        for _ in range(n_busy):
            responses.append("echo:busy: processing")
        self.clock = max(self.clock, t)
        self._retire_done()

    def drain(self) -> None:
        """Run the planner dry (end of program)."""
        if self.planner:
            self.clock = max(self.clock, self.planner[-1].t_end)
            self._retire_done()

    def _kinematics(self, start: Position, end: Position, delta_e: float) -> tuple[float, float, float]:
        """(length, effective accel, junction speed) for one move."""
        dx = end.x - start.x
        dy = end.y - start.y
        dz = end.z - start.z
        length = math.sqrt(dx * dx + dy * dy + dz * dz)
        if length > 0:
            unit = (dx / length, dy / length, dz / length)
            accel = self.print_accel
            j_eff = math.inf
            for i, u in enumerate(unit):
                if abs(u) > 1e-12:
                    accel = min(accel, self.max_accel[i] / abs(u))
                    j_eff = min(j_eff, self.jerk[i] / abs(u))
        else:
            # pure extruder move (retract/prime): E-axis kinematics
            length = abs(delta_e)
            accel = self.max_accel[3]
            j_eff = self.jerk[3]
        v_junction = j_eff / 2.0
        return length, accel, v_junction

    def _enqueue_move(self, start: Position, end: Position, feed: float, delta_e: float,
                      responses: list[str]) -> None:
        length, accel, v_junction = self._kinematics(start, end, delta_e)
        if length == 0:
            return  # nothing to execute
        v_junction = min(v_junction, feed)
        self._retire_done()
        if len(self.planner) >= self.config.buffer_depth:
            # buffer full: the ok for this line is deferred until a slot frees
            self._advance_to(self.planner[0].t_end, responses)
        t_start = max(self.clock, self.exec_tail)
        duration = segment_duration(length, feed, accel, v_junction)
        move = _Planned(t_start, t_start + duration, start, end, feed, delta_e, accel, v_junction)
        self.planner.append(move)
        self.exec_tail = move.t_end

    # -- reports ------------------------------------------------------------

    def _temp_line(self, prefix: str = "") -> str:
        body = _FMT_TEMP.format(
            h=self.hotend.temp_at(self.clock), ht=self.hotend.target,
            b=self.bed.temp_at(self.clock), bt=self.bed.target,
        )
        return f"{prefix}{body}"

    def _position_line(self) -> str:
        p = self.position
        return (
            f"X:{p.x:.2f} Y:{p.y:.2f} Z:{p.z:.2f} E:{p.e:.2f} "
            f"Count X:{int(p.x * 80)} Y:{int(p.y * 80)} Z:{int(p.z * 400)}"
        )

    def boot_banner(self) -> list[str]:
        return ["start", "echo:Virtual Marlin 1.0 (fabkit)"]

    # -- main entry ----------------------------------------------------------

    def feed_line(self, raw_line: str) -> list[str]:
        responses = self._feed_line(raw_line)
        for line in responses:
            self.response_log.append((self.clock, line))
        return responses

    def _feed_line(self, raw_line: str) -> list[str]:
        self.line_count += 1
        cfg = self.config
        if cfg.error_at_line is not None and self.line_count == cfg.error_at_line:
            return [f"Error:{cfg.error_message}"]

        line = raw_line.rstrip("\r\n")
        if line.lstrip().startswith("N"):
            self.framed_count += 1
            expected = (self.last_line_number or 0) + 1
            if cfg.resend_at_framed_line is not None and self.framed_count == cfg.resend_at_framed_line:
                cfg.resend_at_framed_line = None  # only once
                return [f"Resend: {expected}", "ok"]
            try:
                line, number = unframe_line(line)
                self.last_line_number = number
            except FramingError:
                return [f"Error:checksum mismatch, Last Line: {self.last_line_number or 0}",
                        f"Resend: {expected}", "ok"]

        body = strip_comments(line)
        if not body:
            return ["ok"]
        words = _split_words(body)
        if not words:
            return [f"Error:malformed line: {body}"]
        letter, value = words[0]
        try:
            code = int(float(value)) if value else None
        except ValueError:
            return [f"Error:malformed code word: {body}"]

        handler = {
            ("M", 105): self._handle_m105,
            ("M", 114): self._handle_m114,
            ("G", 4): self._handle_dwell,
        }.get((letter, code))
        if handler is not None:
            return handler(words[1:])
        if (letter, code) in self._PLAIN_OK:
            if (letter, code) == ("M", 110):
                self.last_line_number = 0
            return ["ok"]
        return self._handle_parsed(body)

    # -- per-verb handlers ----------------------------------------------------

    def _handle_m105(self, words) -> list[str]:
        return [self._temp_line(prefix="ok ")]

    def _handle_m114(self, words) -> list[str]:
        return [self._position_line(), "ok"]

    def _handle_dwell(self, words) -> list[str]:
        seconds = 0.0
        for letter, value in words:
            if letter == "P" and value:
                seconds = float(value) / 1000.0
            elif letter == "S" and value:
                seconds = float(value)
        responses: list[str] = []
        self.drain()
        self._advance_to(self.clock + seconds, responses)
        responses.append("ok")
        return responses

    def _handle_parsed(self, body: str) -> list[str]:
        parsed = self.parser.parse_line(body)
        cmd = parsed.command
        if cmd is None:
            return [f"Error:{parsed.diagnostic or 'unparseable line'}"]
        responses: list[str] = []

        if parsed.segment is not None:
            seg = parsed.segment
            end = seg.end
            clamped, fault = self._apply_envelope(end)
            if fault:
                self.parser.sync_position(seg.start)
                return [f"Error:move out of range: {body}"]
            if clamped != end:
                self.parser.sync_position(clamped)
                end = clamped
            feed = seg.feedrate if seg.feedrate > 0 else self.config.default_feed_mm_s
            self._enqueue_move(seg.start, end, feed, seg.delta_e, responses)
            responses.append("ok")
            return responses

        if isinstance(cmd, AutoHome):
            self.drain()
            self.parser.sync_position(Position(0.0, 0.0, 0.0, self.position.e))
            return ["ok"]
        if isinstance(cmd, SetNozzleTemp):
            return self._set_temp(self.hotend, cmd.celsius, cmd.wait)
        if isinstance(cmd, SetBedTemp):
            return self._set_temp(self.bed, cmd.celsius, cmd.wait)
        if isinstance(cmd, SetMaxAcceleration):
            self.max_accel[0] = cmd.ax
            self.max_accel[1] = cmd.ay
            self.max_accel[2] = cmd.az
            if cmd.ae is not None:
                self.max_accel[3] = cmd.ae
            return ["ok"]
        if isinstance(cmd, SetStartingAcceleration):
            self.print_accel = cmd.a
            return ["ok"]
        if isinstance(cmd, SetJerk):
            self.jerk = [cmd.jx, cmd.jy, cmd.jz, cmd.je]
            return ["ok"]
        if isinstance(cmd, Raw):
            if parsed.diagnostic:
                return [f'echo:Unknown command: "{cmd.line}"', "ok"]
            return ["ok"]  # G90/G91/G92/M82/M83: parser already applied them
        # typed but with no emulator semantics (MoveExtrude etc. always carry segments)
        return ["ok"]

    def _apply_envelope(self, end: Position) -> tuple[Position, bool]:
        ex, ey, ez = self.config.envelope
        inside = 0.0 <= end.x <= ex and 0.0 <= end.y <= ey and 0.0 <= end.z <= ez
        if inside:
            return end, False
        if self.config.envelope_mode == "fault":
            return end, True
        return Position(
            min(max(end.x, 0.0), ex),
            min(max(end.y, 0.0), ey),
            min(max(end.z, 0.0), ez),
            end.e,
        ), False

    def _set_temp(self, heater: _Heater, target: float, wait: bool) -> list[str]:
        heater.set_target(target, self.clock)
        if not wait:
            return ["ok"]
        responses: list[str] = []
        # wait-for-heat only (like the firmware's S parameter); report once a second
        while heater.temp_at(self.clock) < heater.target - 1.0:
            self.clock += 1.0
            self._retire_done()
            responses.append(self._temp_line())
            if len(responses) > 10000:  # unreachable target guard
                responses.append("Error:heating timed out")
                return responses
        responses.append("ok")
        return responses


@dataclass
class RunResult:
    trace: list[TraceRecord]
    total_duration: float
    final_position: Position
    responses: list[str]
    errors: list[str]


def run_program(emulator: VirtualPrinter, gcode_text: str) -> RunResult:
    """Feed a whole program under the simulated clock and drain the planner."""
    responses: list[str] = []
    errors: list[str] = []
    for line in gcode_text.splitlines():
        for response in emulator.feed_line(line):
            responses.append(response)
            if response.startswith("Error:"):
                errors.append(response)
    emulator.drain()
    return RunResult(
        trace=list(emulator.trace),
        total_duration=emulator.clock,
        final_position=emulator.position,
        responses=responses,
        errors=errors,
    )
