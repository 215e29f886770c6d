"""Line-oriented command-list format: one command per line, lossless.

Grammar (fields in any order after the verb; ``#`` starts a comment):

    extrude X<mm> Y<mm> Z<mm> [F<mm/s>] [E<mm>]
    retract X<mm> Y<mm> Z<mm> [F<mm/s>]
    travel  X<mm> Y<mm> Z<mm> [F<mm/s>]
    nozzle <celsius> [wait]
    bed <celsius> [wait]
    home
    maxaccel X<mm/s2> Y<mm/s2> Z<mm/s2> [E<mm/s2>]
    accel <mm/s2>
    jerk X<mm/s> Y<mm/s> Z<mm/s> E<mm/s>
    raw <one G-code line, verbatim>

Numbers are written with Python's shortest round-trip float representation,
so export -> import -> export is byte-stable and value-exact.
"""

from __future__ import annotations

from typing import Iterable

from .commands import (
    AutoHome,
    Command,
    CommandError,
    MoveExtrude,
    MoveRetract,
    Position,
    Raw,
    SetBedTemp,
    SetJerk,
    SetMaxAcceleration,
    SetNozzleTemp,
    SetStartingAcceleration,
    Travel,
)


class ProgramFormatError(ValueError):
    pass


def _num(value: float) -> str:
    as_int = int(value)
    return str(as_int) if as_int == value else repr(float(value))


def format_command(cmd: Command) -> str:
    if isinstance(cmd, MoveExtrude):
        parts = ["extrude", f"X{_num(cmd.target.x)}", f"Y{_num(cmd.target.y)}", f"Z{_num(cmd.target.z)}"]
        if cmd.speed is not None:
            parts.append(f"F{_num(cmd.speed)}")
        if cmd.e_amount is not None:
            parts.append(f"E{_num(cmd.e_amount)}")
        return " ".join(parts)
    if isinstance(cmd, MoveRetract):
        parts = ["retract", f"X{_num(cmd.target.x)}", f"Y{_num(cmd.target.y)}", f"Z{_num(cmd.target.z)}"]
        if cmd.speed is not None:
            parts.append(f"F{_num(cmd.speed)}")
        return " ".join(parts)
    if isinstance(cmd, Travel):
        parts = ["travel", f"X{_num(cmd.target.x)}", f"Y{_num(cmd.target.y)}", f"Z{_num(cmd.target.z)}"]
        if cmd.speed is not None:
            parts.append(f"F{_num(cmd.speed)}")
        return " ".join(parts)
    if isinstance(cmd, SetNozzleTemp):
        return f"nozzle {_num(cmd.celsius)}" + (" wait" if cmd.wait else "")
    if isinstance(cmd, SetBedTemp):
        return f"bed {_num(cmd.celsius)}" + (" wait" if cmd.wait else "")
    if isinstance(cmd, AutoHome):
        return "home"
    if isinstance(cmd, SetMaxAcceleration):
        parts = ["maxaccel", f"X{_num(cmd.ax)}", f"Y{_num(cmd.ay)}", f"Z{_num(cmd.az)}"]
        if cmd.ae is not None:
            parts.append(f"E{_num(cmd.ae)}")
        return " ".join(parts)
    if isinstance(cmd, SetStartingAcceleration):
        return f"accel {_num(cmd.a)}"
    if isinstance(cmd, SetJerk):
        return f"jerk X{_num(cmd.jx)} Y{_num(cmd.jy)} Z{_num(cmd.jz)} E{_num(cmd.je)}"
    if isinstance(cmd, Raw):
        return f"raw {cmd.line}"
    raise ProgramFormatError(f"cannot format {cmd!r}")


def dump_commands(commands: Iterable[Command]) -> str:
    return "".join(format_command(cmd) + "\n" for cmd in commands)


def _fields(tokens: list[str], allowed: str, where: str) -> dict[str, float]:
    out: dict[str, float] = {}
    for token in tokens:
        letter = token[:1].upper()
        if letter not in allowed:
            raise ProgramFormatError(f"{where}: unexpected field {token!r}")
        if letter in out:
            raise ProgramFormatError(f"{where}: duplicate field {token!r}")
        try:
            out[letter] = float(token[1:])
        except ValueError as exc:
            raise ProgramFormatError(f"{where}: bad number in {token!r}") from exc
    return out


def _target(fields: dict[str, float], where: str) -> Position:
    missing = {"X", "Y", "Z"} - set(fields)
    if missing:
        raise ProgramFormatError(f"{where}: missing {', '.join(sorted(missing))}")
    return Position(fields["X"], fields["Y"], fields["Z"])


def parse_command(line: str, where: str = "<line>") -> Command:
    tokens = line.split()
    verb = tokens[0].lower()
    rest = tokens[1:]
    try:
        if verb == "extrude":
            fields = _fields(rest, "XYZFE", where)
            return MoveExtrude(_target(fields, where), fields.get("F"), fields.get("E"))
        if verb == "retract":
            fields = _fields(rest, "XYZF", where)
            return MoveRetract(_target(fields, where), fields.get("F"))
        if verb == "travel":
            fields = _fields(rest, "XYZF", where)
            return Travel(_target(fields, where), fields.get("F"))
        if verb in ("nozzle", "bed"):
            wait = False
            if rest and rest[-1].lower() == "wait":
                wait = True
                rest = rest[:-1]
            if len(rest) != 1:
                raise ProgramFormatError(f"{where}: {verb} takes one temperature")
            try:
                celsius = float(rest[0])
            except ValueError as exc:
                raise ProgramFormatError(f"{where}: bad temperature {rest[0]!r}") from exc
            return SetNozzleTemp(celsius, wait) if verb == "nozzle" else SetBedTemp(celsius, wait)
        if verb == "home":
            if rest:
                raise ProgramFormatError(f"{where}: home takes no fields")
            return AutoHome()
        if verb == "maxaccel":
            fields = _fields(rest, "XYZE", where)
            if {"X", "Y", "Z"} - set(fields):
                raise ProgramFormatError(f"{where}: maxaccel needs X, Y and Z")
            return SetMaxAcceleration(fields["X"], fields["Y"], fields["Z"], fields.get("E"))
        if verb == "accel":
            if len(rest) != 1:
                raise ProgramFormatError(f"{where}: accel takes one value")
            return SetStartingAcceleration(float(rest[0]))
        if verb == "jerk":
            fields = _fields(rest, "XYZE", where)
            if {"X", "Y", "Z", "E"} - set(fields):
                raise ProgramFormatError(f"{where}: jerk needs X, Y, Z and E")
            return SetJerk(fields["X"], fields["Y"], fields["Z"], fields["E"])
        if verb == "raw":
            return Raw(line.split(None, 1)[1] if len(tokens) > 1 else "")
    except CommandError as exc:
        raise ProgramFormatError(f"{where}: {exc}") from exc
    raise ProgramFormatError(f"{where}: unknown verb {verb!r}")


def load_commands(text: str, source: str = "<string>") -> list[Command]:
    commands: list[Command] = []
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line if raw_line.lstrip().lower().startswith("raw ") \
            else raw_line.split("#", 1)[0]
        line = line.strip()
        if not line:
            continue
        commands.append(parse_command(line, where=f"{source}:{lineno}"))
    return commands
