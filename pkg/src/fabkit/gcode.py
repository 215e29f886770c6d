"""Marlin-dialect G-code: serialization, parsing, framing, firmware responses.

Serialization is deterministic and locale-independent: coordinates print with
3 decimals, the extruder axis with 5, feedrates as integer mm/min (speed in
mm/s times 60, floor 1). The feedrate word is omitted when unchanged (F is
modal). Everything outside the typed dialect round-trips as a verbatim line.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional

from .commands import (
    AutoHome,
    Command,
    CommandError,
    MoveExtrude,
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
from .toolpath import HOME, MotionStep, Toolpath, expand


class FramingError(ValueError):
    """Raised for an unframeable line or a checksum mismatch."""


# -- numeric formatting ------------------------------------------------------


def _no_negative_zero(text: str) -> str:
    if text.startswith("-") and float(text) == 0.0:
        return text[1:]
    return text


def fmt_coord(value: float) -> str:
    return _no_negative_zero(f"{value:.3f}")


def fmt_e(value: float) -> str:
    return _no_negative_zero(f"{value:.5f}")


def fmt_scalar(value: float) -> str:
    """Two decimals, trailing zeros trimmed: 210 -> '210', 0.4 -> '0.4'."""
    text = _no_negative_zero(f"{value:.2f}").rstrip("0").rstrip(".")
    return text or "0"


def feed_mm_min(speed_mm_s: float) -> int:
    return max(1, round(speed_mm_s * 60))


# -- checksummed framing -----------------------------------------------------


@dataclass(frozen=True)
class GcodeLine:
    """One line of G-code, optionally carrying framing metadata."""

    text: str
    line_number: Optional[int] = None
    checksum: Optional[int] = None


def checksum(payload: str) -> int:
    value = 0
    for byte in payload.encode("ascii"):
        value ^= byte
    return value


def frame_line(text: str, line_number: int) -> str:
    """Wrap a line as ``N<n> <text>*<checksum>`` (XOR over ``N<n> <text>``)."""
    if not text:
        raise FramingError("cannot frame an empty line")
    if "*" in text or "\n" in text or "\r" in text:
        raise FramingError(f"line not frameable: {text!r}")
    if line_number < 0:
        raise FramingError(f"line number must be >= 0, got {line_number}")
    payload = f"N{line_number} {text}"
    return f"{payload}*{checksum(payload)}"


_FRAMED = re.compile(r"^N(\d+)\s+(.*)\*(\d+)$")


def unframe_line(framed: str) -> tuple[str, int]:
    """Recover (text, line_number); raises :class:`FramingError` on corruption."""
    match = _FRAMED.match(framed)
    if not match:
        raise FramingError(f"not a framed line: {framed!r}")
    number = int(match.group(1))
    text = match.group(2)
    expected = int(match.group(3))
    actual = checksum(f"N{number} {text}")
    if actual != expected:
        raise FramingError(f"checksum mismatch on line {number}: got {expected}, computed {actual}")
    return text, number


# -- serialization -----------------------------------------------------------


@dataclass
class ModalState:
    """Everything the serializer/parser must remember between lines."""

    positioning_mode: str = "absolute"  # G90 / G91
    extruder_mode: str = "absolute"  # M82 / M83
    last_feedrate: Optional[int] = None  # mm/min, as last emitted/seen in an F word
    position: Position = HOME  # includes cumulative absolute e
    retracted: bool = False


def _motion_line(step: MotionStep, modal: ModalState) -> str:
    stationary = step.start.xyz() == step.target.xyz()
    words = ["G1" if step.delta_e != 0 else "G0"]
    if not stationary:
        words.append(f"X{fmt_coord(step.target.x)}")
        words.append(f"Y{fmt_coord(step.target.y)}")
        words.append(f"Z{fmt_coord(step.target.z)}")
    if step.delta_e != 0:
        words.append(f"E{fmt_e(step.target.e)}")
    f_word = feed_mm_min(step.feedrate)
    if f_word != modal.last_feedrate:
        words.append(f"F{f_word}")
        modal.last_feedrate = f_word
    return " ".join(words)


def _setting_line(cmd: Command) -> str:
    if isinstance(cmd, AutoHome):
        return "G28"
    if isinstance(cmd, SetNozzleTemp):
        return f"{'M109' if cmd.wait else 'M104'} S{fmt_scalar(cmd.celsius)}"
    if isinstance(cmd, SetBedTemp):
        return f"{'M190' if cmd.wait else 'M140'} S{fmt_scalar(cmd.celsius)}"
    if isinstance(cmd, SetMaxAcceleration):
        words = [
            "M201",
            f"X{fmt_scalar(cmd.ax)}",
            f"Y{fmt_scalar(cmd.ay)}",
            f"Z{fmt_scalar(cmd.az)}",
        ]
        if cmd.ae is not None:
            words.append(f"E{fmt_scalar(cmd.ae)}")
        return " ".join(words)
    if isinstance(cmd, SetStartingAcceleration):
        return f"M204 P{fmt_scalar(cmd.a)}"
    if isinstance(cmd, SetJerk):
        return (
            f"M205 X{fmt_scalar(cmd.jx)} Y{fmt_scalar(cmd.jy)} "
            f"Z{fmt_scalar(cmd.jz)} E{fmt_scalar(cmd.je)}"
        )
    if isinstance(cmd, Raw):
        return cmd.line
    raise CommandError(f"cannot serialize {cmd!r}")


def serialize_command(cmd: Command, modal: ModalState, profile: MachineProfile) -> list[str]:
    """Serialize one command, updating ``modal`` in place.

    A single command may expand to several lines (retract + travel for a
    MoveRetract; an automatic prime before a MoveExtrude that follows one).
    """
    lines: list[str] = []
    for step in expand(profile, [cmd], modal.position, retracted=modal.retracted):
        if isinstance(step, MotionStep):
            if step.start.xyz() == step.target.xyz() and step.delta_e == 0:
                continue  # nothing would happen on the machine; emit no line
            lines.append(_motion_line(step, modal))
            modal.position = step.target
            if step.role == "retract":
                modal.retracted = True
            elif step.role in ("prime", "move"):
                modal.retracted = False
        else:
            lines.append(_setting_line(step.command))
            if isinstance(step.command, AutoHome):
                modal.position = Position(0.0, 0.0, 0.0, modal.position.e)
    return lines


def program_lines(
    toolpath: Toolpath = None,
    *,
    profile: MachineProfile = None,
    commands: list[Command] = None,
    start: Position = HOME,
) -> list[str]:
    """Serialize a whole program to wire lines.

    The emitted program stands alone: when the toolpath's cursor starts away
    from the origin a travel establishes it, and extruding programs are
    prefixed with an extruder-axis reset (G92 E0) unless they already carry
    one, so re-streaming never replays stale absolute E values.
    """
    if toolpath is not None:
        profile, commands, start = toolpath.profile, toolpath.commands, toolpath.start
    modal = ModalState()
    lines: list[str] = []
    if start.xyz() != (0.0, 0.0, 0.0):
        lines.extend(serialize_command(Travel(start.moved(e=0.0)), modal, profile))
    modal.position = modal.position.moved(e=start.e)
    for cmd in commands:
        lines.extend(serialize_command(cmd, modal, profile))
    carries_e = any(
        line.startswith(("G0 ", "G1 ", "G0", "G1")) and " E" in line for line in lines
    )
    already_reset = bool(commands) and isinstance(commands[0], Raw) \
        and commands[0].line.replace(" ", "").upper().startswith("G92E")
    if carries_e and not already_reset:
        lines.insert(0, "G92 E0")
    return lines


def serialize_program(
    toolpath: Toolpath = None,
    *,
    profile: MachineProfile = None,
    commands: list[Command] = None,
    start: Position = HOME,
) -> str:
    """Serialize a whole program to G-code text (LF line endings)."""
    lines = program_lines(toolpath, profile=profile, commands=commands, start=start)
    return "".join(line + "\n" for line in lines)


# -- parsing -----------------------------------------------------------------


@dataclass
class ParsedLine:
    command: Optional[Command] = None
    segment: Optional[Segment] = None
    diagnostic: Optional[str] = None
    line_number: Optional[int] = None  # from N-framing, when present


@dataclass
class ParsedProgram:
    commands: list[Command] = field(default_factory=list)
    segments: list[Segment] = field(default_factory=list)
    diagnostics: list[str] = field(default_factory=list)
    final_position: Position = HOME


_PAREN_COMMENT = re.compile(r"\([^)]*\)")
_WORD = re.compile(r"([A-Za-z])([-+]?[0-9]*\.?[0-9]*)")


def strip_comments(line: str) -> str:
    line = line.split(";", 1)[0]
    line = _PAREN_COMMENT.sub("", line)
    if "(" in line:  # unterminated parenthetical comment runs to end of line
        line = line.split("(", 1)[0]
    return line.strip()


def _split_words(body: str) -> Optional[list[tuple[str, str]]]:
    """Split 'G1 X10 Y-2.5' into [('G','1'),('X','10'),...]; None if malformed."""
    compact = "".join(body.split())
    words = [(m.group(1).upper(), m.group(2)) for m in _WORD.finditer(compact)]
    if "".join(letter + value for letter, value in words).upper() != compact.upper():
        return None
    return words


class LineParser:
    """Stateful single-line parser tracking modal state and the cursor.

    Recognizes the serializer's output dialect plus G90/G91, M82/M83, and G92;
    comments are stripped; checksummed frames are validated. Unknown lines
    become verbatim passthrough commands with a diagnostic.
    """

    def __init__(self, start: Position = HOME):
        self.modal = ModalState(position=start)

    @property
    def position(self) -> Position:
        return self.modal.position

    def sync_position(self, position: Position) -> None:
        self.modal.position = position

    def parse_line(self, raw_line: str) -> ParsedLine:
        out = ParsedLine()
        line = raw_line.rstrip("\r\n")
        if _FRAMED.match(line):
            try:
                line, out.line_number = unframe_line(line)
            except FramingError as exc:
                out.diagnostic = str(exc)
                return out
        body = strip_comments(line)
        if not body:
            return out
        words = _split_words(body)
        if not words:
            out.diagnostic = f"malformed line: {line!r}"
            return out
        letter, value = words[0]
        try:
            code = int(float(value)) if value else None
        except ValueError:
            out.diagnostic = f"malformed code word: {line!r}"
            return out
        try:
            handler = _DISPATCH.get((letter, code))
            if handler is None:
                out.command = Raw(body)
                out.diagnostic = f"unrecognized line kept verbatim: {body!r}"
            else:
                handler(self, words[1:], body, out)
        except (CommandError, ValueError) as exc:
            out.command = None
            out.segment = None
            out.diagnostic = f"bad field in {body!r}: {exc}"
        return out

    # -- handlers ------------------------------------------------------------

    def _fields(self, words: list[tuple[str, str]]) -> dict[str, float]:
        fields: dict[str, float] = {}
        for letter, value in words:
            if not value:
                raise ValueError(f"{letter} word has no value")
            fields[letter] = float(value)
        return fields

    def _motion(self, words, body, out, rapid: bool) -> None:
        fields = self._fields(words)
        modal = self.modal
        cur = modal.position
        if "F" in fields:
            if fields["F"] <= 0:
                raise ValueError("feedrate must be > 0")
            modal.last_feedrate = round(fields["F"])
        if modal.positioning_mode == "absolute":
            x = fields.get("X", cur.x)
            y = fields.get("Y", cur.y)
            z = fields.get("Z", cur.z)
        else:
            x = cur.x + fields.get("X", 0.0)
            y = cur.y + fields.get("Y", 0.0)
            z = cur.z + fields.get("Z", 0.0)
        if "E" in fields:
            if modal.extruder_mode == "absolute":
                delta_e = fields["E"] - cur.e
            else:
                delta_e = fields["E"]
        else:
            delta_e = 0.0
        speed = modal.last_feedrate / 60.0 if modal.last_feedrate else None
        target = Position(x, y, z)
        if "E" in fields:
            out.command = MoveExtrude(target, speed, e_amount=delta_e)
        else:
            out.command = Travel(target, speed)
        end = target.moved(e=cur.e + delta_e)
        out.segment = Segment(
            start=cur,
            end=end,
            feedrate=speed if speed is not None else 0.0,
            delta_e=delta_e,
            kind=segment_kind(delta_e),
        )
        modal.position = end
        del rapid  # G0 and G1 move identically; kind comes from the E word

    def _home(self, words, body, out) -> None:
        if words:  # per-axis homing is outside the dialect; keep it verbatim
            out.command = Raw(body)
            out.diagnostic = f"unrecognized line kept verbatim: {body!r}"
            return
        out.command = AutoHome()
        self.modal.position = Position(0.0, 0.0, 0.0, self.modal.position.e)

    def _positioning(self, words, body, out, mode: str) -> None:
        self.modal.positioning_mode = mode
        out.command = Raw(body)

    def _extruder_mode(self, words, body, out, mode: str) -> None:
        self.modal.extruder_mode = mode
        out.command = Raw(body)

    def _set_position(self, words, body, out) -> None:
        fields = self._fields(words)
        cur = self.modal.position
        self.modal.position = Position(
            fields.get("X", cur.x),
            fields.get("Y", cur.y),
            fields.get("Z", cur.z),
            fields.get("E", cur.e),
        )
        out.command = Raw(body)

    def _nozzle_temp(self, words, body, out, wait: bool) -> None:
        fields = self._fields(words)
        if "S" not in fields:
            raise ValueError("missing S value")
        out.command = SetNozzleTemp(fields["S"], wait)

    def _bed_temp(self, words, body, out, wait: bool) -> None:
        fields = self._fields(words)
        if "S" not in fields:
            raise ValueError("missing S value")
        out.command = SetBedTemp(fields["S"], wait)

    def _max_accel(self, words, body, out) -> None:
        fields = self._fields(words)
        if not {"X", "Y", "Z"} <= set(fields):
            raise ValueError("needs X, Y and Z values")
        out.command = SetMaxAcceleration(fields["X"], fields["Y"], fields["Z"], fields.get("E"))

    def _print_accel(self, words, body, out) -> None:
        fields = self._fields(words)
        if "P" not in fields:
            raise ValueError("needs a P value")
        out.command = SetStartingAcceleration(fields["P"])

    def _jerk(self, words, body, out) -> None:
        fields = self._fields(words)
        if not {"X", "Y", "Z", "E"} <= set(fields):
            raise ValueError("needs X, Y, Z and E values")
        out.command = SetJerk(fields["X"], fields["Y"], fields["Z"], fields["E"])


_DISPATCH = {
    ("G", 0): lambda p, w, b, o: p._motion(w, b, o, rapid=True),
    ("G", 1): lambda p, w, b, o: p._motion(w, b, o, rapid=False),
    ("G", 28): LineParser._home,
    ("G", 90): lambda p, w, b, o: p._positioning(w, b, o, "absolute"),
    ("G", 91): lambda p, w, b, o: p._positioning(w, b, o, "relative"),
    ("G", 92): LineParser._set_position,
    ("M", 82): lambda p, w, b, o: p._extruder_mode(w, b, o, "absolute"),
    ("M", 83): lambda p, w, b, o: p._extruder_mode(w, b, o, "relative"),
    ("M", 104): lambda p, w, b, o: p._nozzle_temp(w, b, o, wait=False),
    ("M", 109): lambda p, w, b, o: p._nozzle_temp(w, b, o, wait=True),
    ("M", 140): lambda p, w, b, o: p._bed_temp(w, b, o, wait=False),
    ("M", 190): lambda p, w, b, o: p._bed_temp(w, b, o, wait=True),
    ("M", 201): LineParser._max_accel,
    ("M", 204): LineParser._print_accel,
    ("M", 205): LineParser._jerk,
}


def parse_program(text: str, start: Position = HOME) -> ParsedProgram:
    """Parse a G-code program into commands, segments, and diagnostics.

    Never raises: malformed lines produce a line-scoped diagnostic and parsing
    continues on the next line.
    """
    parser = LineParser(start)
    out = ParsedProgram(final_position=start)
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        parsed = parser.parse_line(raw_line)
        if parsed.diagnostic:
            out.diagnostics.append(f"line {lineno}: {parsed.diagnostic}")
        if parsed.command is not None:
            out.commands.append(parsed.command)
        if parsed.segment is not None:
            out.segments.append(parsed.segment)
    out.final_position = parser.position
    return out


# -- firmware responses ------------------------------------------------------


@dataclass(frozen=True)
class Ok:
    pass


@dataclass(frozen=True)
class Busy:
    pass


@dataclass(frozen=True)
class ErrorReport:
    message: str


@dataclass(frozen=True)
class Resend:
    line_number: int


@dataclass(frozen=True)
class PositionReport:
    x: float
    y: float
    z: float
    e: float


@dataclass(frozen=True)
class TempReport:
    hotend_actual: float
    hotend_target: float
    bed_actual: float
    bed_target: float


@dataclass(frozen=True)
class Unknown:
    raw: str


ResponseEvent = object  # union of the dataclasses above; kept loose on purpose

_NUM = r"([-+]?[0-9]*\.?[0-9]+)"
_TEMP_RE = re.compile(rf"T:\s*{_NUM}\s*/\s*{_NUM}.*?B:\s*{_NUM}\s*/\s*{_NUM}")
_POS_RE = re.compile(rf"X:\s*{_NUM}\s+Y:\s*{_NUM}\s+Z:\s*{_NUM}\s+E:\s*{_NUM}")
_RESEND_RE = re.compile(r"^(?:Resend:|rs)\s*(\d+)", re.IGNORECASE)


def parse_response(line: str):
    """Classify one firmware response line. Total: every input maps to one event."""
    text = line.strip()
    temp = _TEMP_RE.search(text)
    if text.lower().startswith("ok"):
        if temp:
            return TempReport(*(float(g) for g in temp.groups()))
        return Ok()
    if text.lower().startswith("echo:busy"):
        return Busy()
    if text.startswith("Error:"):
        return ErrorReport(text[len("Error:"):].strip())
    resend = _RESEND_RE.match(text)
    if resend:
        return Resend(int(resend.group(1)))
    position = _POS_RE.search(text)
    if position:
        return PositionReport(*(float(g) for g in position.groups()))
    if temp:
        return TempReport(*(float(g) for g in temp.groups()))
    return Unknown(line)
