"""Flow-controlled streaming to a printer over a byte transport.

The wire contract: one outstanding command at a time. Each line is written
only after the previous line's acknowledgment arrived. Commands injected
while streaming (pokes from a UI, temperature polls, jogs) are dispatched at
the next command boundary, strictly before remaining program lines.
"""

from __future__ import annotations

import json
import os
import queue
import select
import socket
import threading
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

from .commands import Command, Position, Raw
from .gcode import (
    Busy,
    ErrorReport,
    ModalState,
    Ok,
    PositionReport,
    Resend,
    TempReport,
    fmt_coord,
    frame_line,
    parse_response,
    program_lines,
    serialize_command,
)
from .profiles import MachineProfile
from .toolpath import Toolpath


class LinkError(RuntimeError):
    """Connection or streaming failure."""


def is_ack(line: str) -> bool:
    return line.strip().lower().startswith("ok")


# -- transports ---------------------------------------------------------------


class Transport:
    """Bidirectional line-oriented byte stream."""

    def open(self) -> None:
        raise NotImplementedError

    def close(self) -> None:
        raise NotImplementedError

    @property
    def is_open(self) -> bool:
        raise NotImplementedError

    def write_line(self, line: str) -> None:
        raise NotImplementedError

    def read_line(self, timeout: float) -> Optional[str]:
        """Next complete line without terminator, or None on timeout."""
        raise NotImplementedError


class LoopbackTransport(Transport):
    """In-process link to a :class:`~fabkit.emulator.VirtualPrinter`.

    Responses are queued when a line is written; the emulator's ack-delay
    model inserts a real (wall-clock) pause before each response batch so
    host-side timing paths see realistic interleaving.
    """

    def __init__(self, emulator):
        self.emulator = emulator
        self._rx: "queue.Queue[str]" = queue.Queue()
        self._open = False
        self._delay = emulator.config.ack_delay.sampler()
        self._lock = threading.Lock()

    def open(self) -> None:
        if self._open:
            raise LinkError("transport already open")
        self._open = True
        for line in self.emulator.boot_banner():
            self._rx.put(line)

    def close(self) -> None:
        self._open = False

    @property
    def is_open(self) -> bool:
        return self._open

    def write_line(self, line: str) -> None:
        if not self._open:
            raise LinkError("transport closed")
        with self._lock:
            responses = self.emulator.feed_line(line)
        delay = self._delay()
        if delay > 0:
            time.sleep(delay)
        for response in responses:
            self._rx.put(response)

    def read_line(self, timeout: float) -> Optional[str]:
        try:
            return self._rx.get(timeout=max(timeout, 0.0) if timeout else 0.000001)
        except queue.Empty:
            return None


class SocketTransport(Transport):
    """TCP client speaking the same newline-delimited protocol."""

    def __init__(self, host: str, port: int):
        self.host = host
        self.port = port
        self._sock: Optional[socket.socket] = None
        self._buffer = b""

    def open(self) -> None:
        if self._sock is not None:
            raise LinkError("transport already open")
        try:
            self._sock = socket.create_connection((self.host, self.port), timeout=5.0)
            self._sock.setblocking(False)
        except OSError as exc:
            self._sock = None
            raise LinkError(f"connect failed: {exc}") from exc

    def close(self) -> None:
        if self._sock is not None:
            try:
                self._sock.close()
            finally:
                self._sock = None

    @property
    def is_open(self) -> bool:
        return self._sock is not None

    def write_line(self, line: str) -> None:
        if self._sock is None:
            raise LinkError("transport closed")
        self._sock.sendall((line + "\n").encode("ascii", "replace"))

    def read_line(self, timeout: float) -> Optional[str]:
        if self._sock is None:
            raise LinkError("transport closed")
        deadline = time.monotonic() + timeout
        while b"\n" not in self._buffer:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                return None
            ready, _, _ = select.select([self._sock], [], [], remaining)
            if not ready:
                return None
            chunk = self._sock.recv(4096)
            if not chunk:
                return None
            self._buffer += chunk
        line, _, self._buffer = self._buffer.partition(b"\n")
        return line.decode("ascii", "replace").rstrip("\r")


_BAUD_CONSTANTS = {
    9600: "B9600", 19200: "B19200", 38400: "B38400",
    57600: "B57600", 115200: "B115200", 230400: "B230400",
}


class SerialTransport(Transport):
    """POSIX serial device in raw mode (stdlib termios; no extra packages)."""

    def __init__(self, device: str, baud: int = 115200):
        self.device = device
        self.baud = baud
        self._fd: Optional[int] = None
        self._buffer = b""

    def open(self) -> None:
        import termios

        if self._fd is not None:
            raise LinkError("transport already open")
        if self.baud not in _BAUD_CONSTANTS:
            raise LinkError(f"unsupported baud rate {self.baud}")
        try:
            fd = os.open(self.device, os.O_RDWR | os.O_NOCTTY | os.O_NONBLOCK)
        except OSError as exc:
            raise LinkError(f"connect failed: cannot open {self.device}: {exc}") from exc
        try:
            attrs = termios.tcgetattr(fd)
            speed = getattr(termios, _BAUD_CONSTANTS[self.baud])
            attrs[0] = termios.IGNBRK  # iflag
            attrs[1] = 0  # oflag
            attrs[2] = termios.CREAD | termios.CLOCAL | termios.CS8  # cflag
            attrs[3] = 0  # lflag: raw
            attrs[4] = speed
            attrs[5] = speed
            termios.tcsetattr(fd, termios.TCSANOW, attrs)
            termios.tcflush(fd, termios.TCIOFLUSH)
        except termios.error as exc:
            os.close(fd)
            raise LinkError(f"connect failed: {self.device} is not a serial device: {exc}") from exc
        self._fd = fd

    def close(self) -> None:
        if self._fd is not None:
            try:
                os.close(self._fd)
            finally:
                self._fd = None

    @property
    def is_open(self) -> bool:
        return self._fd is not None

    def write_line(self, line: str) -> None:
        if self._fd is None:
            raise LinkError("transport closed")
        data = (line + "\n").encode("ascii", "replace")
        while data:
            _, ready, _ = select.select([], [self._fd], [], 1.0)
            if not ready:
                raise LinkError("serial write stalled")
            data = data[os.write(self._fd, data):]

    def read_line(self, timeout: float) -> Optional[str]:
        if self._fd is None:
            raise LinkError("transport closed")
        deadline = time.monotonic() + timeout
        while b"\n" not in self._buffer:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                return None
            ready, _, _ = select.select([self._fd], [], [], remaining)
            if not ready:
                return None
            try:
                chunk = os.read(self._fd, 4096)
            except BlockingIOError:
                continue
            if not chunk:
                return None
            self._buffer += chunk
        line, _, self._buffer = self._buffer.partition(b"\n")
        return line.decode("ascii", "replace").rstrip("\r")


# -- session ------------------------------------------------------------------


@dataclass
class LinkConfig:
    command_timeout_s: float = 10.0  # inactivity deadline per line
    handshake_timeout_s: float = 5.0
    banner_quiet_s: float = 0.3
    poll_interval_s: float = 1.0
    auto_poll: bool = True
    use_checksum: bool = False
    safety_tail: bool = True
    safety_lift_mm: float = 5.0
    pause_markers: bool = True  # a program line "M0" pauses host-side
    jog_speed_mm_s: float = 10.0


@dataclass
class Progress:
    sent: int = 0
    acked: int = 0
    errored: int = 0
    timedout: int = 0
    total: int = 0


@dataclass
class TempPair:
    actual: float
    target: float


@dataclass
class PrinterState:
    """Immutable-by-convention snapshot of what the machine last told us."""

    position: Optional[Position] = None
    hotend: Optional[TempPair] = None
    bed: Optional[TempPair] = None
    link_state: str = "disconnected"
    progress: Progress = field(default_factory=Progress)
    last_error: Optional[str] = None


@dataclass
class LogRecord:
    t: float
    direction: str  # "tx" | "rx"
    line: str
    source: str = ""  # tx provenance: "handshake" | "program" | "inject" | "tail"

    def to_json(self) -> str:
        record = {"t": self.t, "dir": self.direction, "line": self.line}
        if self.source:
            record["source"] = self.source
        return json.dumps(record)


@dataclass
class CompletionReport:
    sent: int
    acked: int
    total: int
    elapsed_s: float
    completed: bool
    error: Optional[str] = None


class InjectTicket:
    """Resolves when all lines of one injected command group are acknowledged."""

    def __init__(self, lines: list[str], label: str = ""):
        self.lines = lines
        self.label = label
        self.sent_at_progress: Optional[int] = None  # program lines sent when enqueued
        self.wire_indices: list[int] = []  # tx log indices of this group's lines
        self.error: Optional[str] = None
        self._done = threading.Event()

    def resolve(self, error: Optional[str] = None) -> None:
        self.error = error
        self._done.set()

    def wait(self, timeout: Optional[float] = None) -> bool:
        return self._done.wait(timeout)

    @property
    def done(self) -> bool:
        return self._done.is_set()


_PAUSE_POINT = object()


class Session:
    """Owns one transport: connect, stream, inject, jog, poll, pause/stop.

    Exactly one thread writes to the transport (whoever holds ``_wire_lock``);
    injections from other threads enqueue and are dispatched at command
    boundaries. State transitions:

        disconnected -> idle            connect
        idle -> streaming               stream_program
        streaming <-> paused            pause / resume (or an M0 pause point)
        streaming|paused -> idle        completion or stop
        streaming|paused -> error       timeout, Error response
        error -> idle                   reset
        any -> disconnected             close / device loss
    """

    def __init__(self, transport: Transport, profile: MachineProfile = None,
                 config: LinkConfig = None):
        self.transport = transport
        self.profile = profile
        self.config = config or LinkConfig()
        self.state = "disconnected"
        self.progress = Progress()
        self.log: list[LogRecord] = []
        self.last_error: Optional[str] = None
        self._position: Optional[Position] = None
        self._hotend: Optional[TempPair] = None
        self._bed: Optional[TempPair] = None
        self._injections: "list[InjectTicket]" = []
        self._queue_lock = threading.Lock()
        self._wire_lock = threading.RLock()
        self._pause_requested = threading.Event()
        self._stop_requested = threading.Event()
        self._resume_requested = threading.Event()
        self._line_number = 0
        self._last_framed: Optional[str] = None
        self._last_poll = 0.0
        self._log_sink = None
        self.on_boundary: Optional[Callable[[int], None]] = None
        self.listeners: list[Callable[[str, object], None]] = []

    # -- logging / events -----------------------------------------------------

    def open_log_file(self, path: str) -> None:
        self._log_sink = open(path, "a", encoding="utf-8")

    def _record(self, direction: str, line: str, source: str = "") -> None:
        rec = LogRecord(time.monotonic(), direction, line, source)
        self.log.append(rec)
        if self._log_sink is not None:
            self._log_sink.write(rec.to_json() + "\n")
            self._log_sink.flush()
        self._emit("wire", rec)

    def _emit(self, kind: str, payload) -> None:
        for listener in list(self.listeners):
            try:
                listener(kind, payload)
            except Exception:
                pass  # observers never break the stream

    def wire_lines(self, direction: str = "tx") -> list[str]:
        return [rec.line for rec in self.log if rec.direction == direction]

    # -- connection ------------------------------------------------------------

    def connect(self) -> "Session":
        """Open the transport, drain the boot banner, verify liveness."""
        if self.state != "disconnected":
            raise LinkError("already connected")
        cfg = self.config
        deadline = time.monotonic() + cfg.handshake_timeout_s
        try:
            self.transport.open()
        except LinkError as exc:
            self.last_error = str(exc)
            raise
        while time.monotonic() < deadline:
            line = self.transport.read_line(timeout=cfg.banner_quiet_s)
            if line is None:
                break  # quiescent
            self._record("rx", line)
        self._write("M110 N0", "handshake")
        while True:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                self.transport.close()
                self.last_error = "handshake timeout: printer never acknowledged"
                raise LinkError(self.last_error)
            line = self.transport.read_line(timeout=remaining)
            if line is None:
                continue
            self._record("rx", line)
            if is_ack(line):
                break
        self.state = "idle"
        self._emit("state", self.snapshot())
        return self

    def close(self) -> None:
        self.transport.close()
        self.state = "disconnected"
        if self._log_sink is not None:
            self._log_sink.close()
            self._log_sink = None

    def reset(self) -> None:
        """Clear an error state back to idle (transport stays open)."""
        if self.state == "error":
            self.state = "idle"
            self._emit("state", self.snapshot())

    # -- low-level send ----------------------------------------------------------

    def _write(self, line: str, source: str = "") -> None:
        self._record("tx", line, source)
        self.transport.write_line(line)

    def _send_awaited(self, line: str, count: bool = False, source: str = "") -> None:
        """Write one line and block until its terminal event (ok or error).

        ``count`` marks program lines, which advance the sent/acked progress
        counters (injections and safety-tail lines do not, so
        acked <= sent <= total always holds for program progress).
        """
        cfg = self.config
        framed = None
        if cfg.use_checksum:
            self._line_number += 1
            framed = frame_line(line, self._line_number)
            self._last_framed = framed
        self._write(framed if framed is not None else line, source or ("program" if count else ""))
        if count:
            self.progress.sent += 1
        deadline = time.monotonic() + cfg.command_timeout_s
        while True:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                self.progress.timedout += 1
                self.state = "error"
                self.last_error = f"timeout waiting for ok: {line!r}"
                raise LinkError(self.last_error)
            rx = self.transport.read_line(timeout=min(remaining, 0.5))
            if rx is None:
                continue
            self._record("rx", rx)
            event = parse_response(rx)
            self._fold(event)
            if isinstance(event, (Busy, TempReport, PositionReport)):
                # activity: extend the inactivity deadline
                deadline = time.monotonic() + cfg.command_timeout_s
                if is_ack(rx):
                    if count:
                        self.progress.acked += 1
                    return
                continue
            if isinstance(event, Ok):
                if count:
                    self.progress.acked += 1
                return
            if isinstance(event, ErrorReport):
                self.progress.errored += 1
                self.state = "error"
                self.last_error = event.message
                raise LinkError(f"printer error: {event.message}")
            if isinstance(event, Resend):
                if cfg.use_checksum and self._last_framed is not None:
                    self._write(self._last_framed, "resend")
                    deadline = time.monotonic() + cfg.command_timeout_s
                    continue
                self.progress.errored += 1
                self.state = "error"
                self.last_error = f"printer requested resend of line {event.line_number} but checksumming is off"
                raise LinkError(self.last_error)
            # Unknown lines are logged and ignored

    def _fold(self, event) -> None:
        if isinstance(event, PositionReport):
            self._position = Position(event.x, event.y, event.z, event.e)
            self._emit("state", self.snapshot())
        elif isinstance(event, TempReport):
            self._hotend = TempPair(event.hotend_actual, event.hotend_target)
            self._bed = TempPair(event.bed_actual, event.bed_target)
            self._emit("state", self.snapshot())

    # -- program streaming ----------------------------------------------------

    def _program_lines(self, toolpath: Toolpath) -> list:
        lines = program_lines(toolpath)
        if not self.config.pause_markers:
            return list(lines)
        return [
            _PAUSE_POINT if line.strip().upper() == "M0" else line
            for line in lines
        ]

    def stream_program(self, toolpath: Toolpath) -> CompletionReport:
        """Stream a whole program; blocks until completion, stop, or error."""
        if self.state != "idle":
            raise LinkError(f"cannot stream while {self.state}")
        # the session is busy from this moment: a stop() arriving while the
        # plan is still being serialized must not be lost
        self.state = "streaming"
        self._stop_requested.clear()
        self._pause_requested.clear()
        try:
            plan = self._program_lines(toolpath)
        except Exception:
            self.state = "idle"
            raise
        total = sum(1 for item in plan if item is not _PAUSE_POINT)
        self.progress = Progress(total=total)
        self._emit("state", self.snapshot())
        started = time.monotonic()
        error: Optional[str] = None
        index = 0
        try:
            while True:
                if self._stop_requested.is_set():
                    with self._queue_lock:  # stop clears both queues
                        for ticket in self._injections:
                            ticket.resolve(error="stopped")
                        self._injections.clear()
                    self._send_safety_tail()
                    break
                self._dispatch_injections()
                if self._pause_requested.is_set():
                    if self.state == "streaming":
                        self.state = "paused"
                        self._emit("state", self.snapshot())
                    time.sleep(0.01)
                    continue
                if self.state == "paused":
                    self.state = "streaming"
                    self._emit("state", self.snapshot())
                if index >= len(plan):
                    break
                item = plan[index]
                index += 1
                if item is _PAUSE_POINT:
                    self._pause_requested.set()
                    continue
                with self._wire_lock:
                    self._send_awaited(item, count=True)
                self._maybe_poll()
                if self.on_boundary is not None:
                    self.on_boundary(self.progress.sent)
        except LinkError as exc:
            error = str(exc)
        elapsed = time.monotonic() - started
        if self.state != "error":
            self.state = "idle"
        self._pause_requested.clear()
        self._emit("state", self.snapshot())
        return CompletionReport(
            sent=self.progress.sent,
            acked=self.progress.acked,
            total=self.progress.total,
            elapsed_s=elapsed,
            completed=error is None and self.progress.acked >= total,
            error=error,
        )

    def _send_safety_tail(self) -> None:
        if not self.config.safety_tail:
            return
        lift = self.config.safety_lift_mm
        tail = ["M104 S0", "M140 S0", "G91", f"G0 Z{fmt_coord(lift)} F600", "G90"]
        for line in tail:
            with self._wire_lock:
                self._send_awaited(line, source="tail")

    # -- injection --------------------------------------------------------------

    def _dispatch_injections(self) -> None:
        while True:
            with self._queue_lock:
                if not self._injections:
                    return
                ticket = self._injections.pop(0)
            self._run_ticket(ticket)

    def _run_ticket(self, ticket: InjectTicket) -> None:
        try:
            # hold the wire for the whole group: multi-line injections (jog
            # triples) are atomic even against a concurrently starting pump
            with self._wire_lock:
                for line in ticket.lines:
                    ticket.wire_indices.append(
                        sum(1 for r in self.log if r.direction == "tx")
                    )
                    self._send_awaited(line, source="inject")
            ticket.resolve()
        except LinkError as exc:
            ticket.resolve(error=str(exc))
            raise

    def inject_lines(self, lines: list[str], label: str = "") -> InjectTicket:
        """Queue raw lines for dispatch at the next command boundary."""
        if self.state in ("disconnected",):
            raise LinkError("not connected")
        ticket = InjectTicket(lines, label)
        ticket.sent_at_progress = self.progress.sent
        if self.state in ("streaming", "paused"):
            with self._queue_lock:
                self._injections.append(ticket)
        else:
            self._run_ticket(ticket)  # idle: send immediately
        return ticket

    def inject(self, command: Command) -> InjectTicket:
        """Inject a typed command; dispatched before remaining program lines."""
        if self.profile is None and not isinstance(command, Raw):
            raise LinkError("session has no machine profile; inject Raw lines instead")
        from .commands import MoveExtrude

        if isinstance(command, MoveExtrude) and command.e_amount is None:
            raise LinkError("injected extruding moves need an explicit e_amount")
        modal = ModalState(position=self._position or Position(0, 0, 0, 0))
        lines = serialize_command(command, modal, self.profile) if not isinstance(command, Raw) \
            else [command.line]
        return self.inject_lines(lines, label=type(command).__name__)

    def jog(self, dx: float = 0.0, dy: float = 0.0, dz: float = 0.0,
            speed: Optional[float] = None) -> InjectTicket:
        """Relative nudge as an atomic G91/G0/G90 triple (permissive bounds)."""
        feed = max(1, round((speed or self.config.jog_speed_mm_s) * 60))
        axes = ""
        if dx:
            axes += f" X{fmt_coord(dx)}"
        if dy:
            axes += f" Y{fmt_coord(dy)}"
        if dz:
            axes += f" Z{fmt_coord(dz)}"
        lines = ["G91", f"G0{axes} F{feed}", "G90"]
        return self.inject_lines(lines, label="jog")

    # -- state polling ------------------------------------------------------------

    def _maybe_poll(self) -> None:
        if not self.config.auto_poll:
            return
        now = time.monotonic()
        if now - self._last_poll >= self.config.poll_interval_s:
            self._last_poll = now
            self.inject_lines(["M114", "M105"], label="poll")

    def poll_state(self, refresh: bool = None) -> PrinterState:
        """Latest machine snapshot; when idle (or forced), polls first."""
        if refresh is None:
            refresh = self.state == "idle"
        if refresh and self.state in ("idle", "streaming", "paused"):
            ticket = self.inject_lines(["M114", "M105"], label="poll")
            ticket.wait(timeout=self.config.command_timeout_s * 2)
        return self.snapshot()

    def snapshot(self) -> PrinterState:
        return PrinterState(
            position=self._position,
            hotend=replace(self._hotend) if self._hotend else None,
            bed=replace(self._bed) if self._bed else None,
            link_state=self.state,
            progress=replace(self.progress),
            last_error=self.last_error,
        )

    # -- flow control -------------------------------------------------------------

    def pause(self) -> str:
        if self.state == "streaming":
            self._pause_requested.set()
        return self.state

    def resume(self) -> str:
        if self.state == "paused" or self._pause_requested.is_set():
            self._pause_requested.clear()
        return self.state

    def stop(self) -> str:
        if self.state in ("streaming", "paused"):
            self._stop_requested.set()
            self._pause_requested.clear()
        return self.state


def connect(transport: Transport, profile: MachineProfile = None,
            config: LinkConfig = None) -> Session:
    """Open a transport and return an idle session."""
    return Session(transport, profile, config).connect()
