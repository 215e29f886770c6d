"""Local control service: line-delimited JSON messages over a loopback socket.

One UI client at a time holds the writer role; later clients are read-only
observers. Every client message receives exactly one terminal reply (its
specific response, a generic ack, or a fault). State updates broadcast at the
poll cadence; wire events broadcast for every tx/rx line and are never
dropped, while a slow client may miss state updates.

Message schema (each line one JSON object, ``type`` selects the variant):

client -> service
    load_program   {gcode: str} | {recipe: str, params: {name: value}}
    start_stream   {}
    pause | resume | stop      {}
    inject         {command: str}            raw G-code line
    jog            {dx, dy, dz: mm, speed?: mm/s}
    probe_capture  {label: str}
    set_bounds_mode {mode: "strict"|"permissive"}

service -> client
    program_loaded {segments: [...], stats: {...}}
    state_update   {state: {...}}
    wire_event     {direction: "tx"|"rx", line: str, t: float}
    probe_stored   {label: str, position: {x,y,z,e}}
    ack            {for: str}
    fault          {message: str, for?: str}
"""

from __future__ import annotations

import json
import queue
import socket
import threading
from dataclasses import asdict, dataclass, field
from typing import Optional

from .commands import Position, Segment
from .gcode import parse_program
from .link import PrinterState, Session
from .profiles import MachineProfile
from .recipes import (
    DotBridgeParams,
    HandleParams,
    LissajousParams,
    ProbedOverlay,
    RecipeError,
    VelocityPaintParams,
    WaveParams,
    bed_level_tour,
    gen_dot_bridge,
    gen_lissajous,
    gen_overlay_handle,
    gen_velocity_cube,
    gen_wave,
)
from .toolpath import Toolpath, ToolpathStats, segment_violations


class SchemaError(ValueError):
    pass


_CLIENT_SCHEMAS: dict[str, dict] = {
    "load_program": {"gcode": (str, False), "recipe": (str, False), "params": (dict, False)},
    "start_stream": {},
    "pause": {},
    "resume": {},
    "stop": {},
    "inject": {"command": (str, True)},
    "jog": {"dx": ((int, float), True), "dy": ((int, float), True),
            "dz": ((int, float), True), "speed": ((int, float), False)},
    "probe_capture": {"label": (str, True)},
    "set_bounds_mode": {"mode": (str, True)},
}

_SERVICE_TYPES = {"program_loaded", "state_update", "wire_event", "probe_stored", "ack", "fault"}


def validate_client_message(msg: dict) -> None:
    if not isinstance(msg, dict):
        raise SchemaError("message must be an object")
    mtype = msg.get("type")
    if mtype not in _CLIENT_SCHEMAS:
        raise SchemaError(f"unknown client message type {mtype!r}")
    schema = _CLIENT_SCHEMAS[mtype]
    for key, value in msg.items():
        if key == "type":
            continue
        if key not in schema:
            raise SchemaError(f"{mtype}: unexpected field {key!r}")
        expected, _ = schema[key]
        if not isinstance(value, expected):
            raise SchemaError(f"{mtype}: field {key!r} has wrong type")
    for key, (_, required) in schema.items():
        if required and key not in msg:
            raise SchemaError(f"{mtype}: missing field {key!r}")
    if mtype == "load_program" and not (("gcode" in msg) ^ ("recipe" in msg)):
        raise SchemaError("load_program: provide exactly one of gcode/recipe")
    if mtype == "set_bounds_mode" and msg.get("mode") not in ("strict", "permissive"):
        raise SchemaError("set_bounds_mode: mode must be strict|permissive")


def encode_message(msg: dict) -> str:
    return json.dumps(msg, separators=(",", ":"), sort_keys=True)


def decode_message(line: str) -> dict:
    try:
        msg = json.loads(line)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"not valid JSON: {exc}") from exc
    if not isinstance(msg, dict) or "type" not in msg:
        raise SchemaError("message must be an object with a 'type'")
    return msg


def _position_dict(p: Optional[Position]) -> Optional[dict]:
    return None if p is None else {"x": p.x, "y": p.y, "z": p.z, "e": p.e}


def _segment_dict(seg: Segment) -> dict:
    return {
        "start": _position_dict(seg.start),
        "end": _position_dict(seg.end),
        "feedrate": seg.feedrate,
        "delta_e": seg.delta_e,
        "kind": seg.kind,
    }


def state_dict(state: PrinterState) -> dict:
    return {
        "position": _position_dict(state.position),
        "hotend": None if state.hotend is None else asdict(state.hotend),
        "bed": None if state.bed is None else asdict(state.bed),
        "link_state": state.link_state,
        "progress": asdict(state.progress),
        "last_error": state.last_error,
    }


# recipe name -> (params dataclass or None, generator)
RECIPE_REGISTRY = {
    "lissajous": (LissajousParams, gen_lissajous),
    "velocity-cube": (VelocityPaintParams, gen_velocity_cube),
    "dot-bridge": (DotBridgeParams, gen_dot_bridge),
    "wave": (WaveParams, gen_wave),
}


def build_recipe(name: str, params: dict, profile: MachineProfile,
                 probes: dict[str, Position] = None) -> Toolpath:
    """Instantiate a recipe from loosely-typed parameters (CLI/UI input)."""
    params = dict(params or {})
    if name == "bed-level":
        return bed_level_tour(profile, **{k: float(v) for k, v in params.items()})
    if name == "handle":
        probes = probes or {}
        p1 = params.pop("p1", None) or probes.get("p1")
        p2 = params.pop("p2", None) or probes.get("p2")
        if p1 is None or p2 is None:
            raise RecipeError("handle needs probes p1 and p2 (capture or pass them)")
        if not isinstance(p1, Position):
            p1 = Position(*(float(v) for v in str(p1).split(",")))
        if not isinstance(p2, Position):
            p2 = Position(*(float(v) for v in str(p2).split(",")))
        handle = HandleParams(
            width=float(params.pop("width", HandleParams.width)),
            layer_count=int(params.pop("layer_count", HandleParams.layer_count)),
            layer_height=float(params.pop("layer_height", HandleParams.layer_height)),
        )
        probe = ProbedOverlay(p1, p2, clearance=float(params.pop("clearance", 5.0)), handle=handle)
        if params:
            raise RecipeError(f"unknown handle params: {', '.join(params)}")
        return gen_overlay_handle(profile, probe)
    if name not in RECIPE_REGISTRY:
        known = ", ".join(sorted([*RECIPE_REGISTRY, "bed-level", "handle"]))
        raise RecipeError(f"unknown recipe {name!r} (known: {known})")
    params_cls, generator = RECIPE_REGISTRY[name]
    defaults = params_cls()
    kwargs = {}
    for key, value in params.items():
        if not hasattr(defaults, key):
            raise RecipeError(f"recipe {name!r} has no parameter {key!r}")
        current = getattr(defaults, key)
        if key == "origin":
            kwargs[key] = Position(*(float(v) for v in str(value).split(",")))
        elif isinstance(current, int) and not isinstance(current, bool):
            kwargs[key] = int(value)
        else:
            kwargs[key] = float(value)
    return generator(profile, params_cls(**kwargs))


@dataclass
class _Client:
    conn: socket.socket
    address: tuple
    writer: bool
    outbox: "queue.Queue[Optional[str]]" = field(default_factory=lambda: queue.Queue())
    pending_states: int = 0
    lock: threading.Lock = field(default_factory=threading.Lock)

    MAX_PENDING_STATES = 32

    def send(self, msg: dict) -> None:
        line = encode_message(msg)
        if msg.get("type") == "state_update":
            with self.lock:
                if self.pending_states >= self.MAX_PENDING_STATES:
                    return  # slow client: drop state updates, never wire events
                self.pending_states += 1
        self.outbox.put(line)


class ControlService:
    """Bridges one printer session to UI clients over a loopback TCP socket."""

    def __init__(self, session: Session, profile: MachineProfile,
                 host: str = "127.0.0.1", port: int = 0,
                 state_cadence_s: float = 1.0):
        self.session = session
        self.profile = profile
        self.host = host
        self.port = port
        self.state_cadence_s = state_cadence_s
        self.probes: dict[str, Position] = {}
        self.toolpath: Optional[Toolpath] = None
        self.bounds_mode = "strict"
        self._clients: list[_Client] = []
        self._clients_lock = threading.Lock()
        self._server: Optional[socket.socket] = None
        self._threads: list[threading.Thread] = []
        self._shutdown = threading.Event()
        self._stream_thread: Optional[threading.Thread] = None
        session.listeners.append(self._on_session_event)

    # -- lifecycle -------------------------------------------------------------

    def start(self) -> tuple[str, int]:
        self._server = socket.create_server((self.host, self.port))
        self.port = self._server.getsockname()[1]
        self._spawn(self._accept_loop, "accept")
        self._spawn(self._ticker, "ticker")
        return self.host, self.port

    def shutdown(self) -> None:
        self._shutdown.set()
        if self._server is not None:
            try:
                self._server.close()
            except OSError:
                pass
        with self._clients_lock:
            clients = list(self._clients)
        for client in clients:
            client.outbox.put(None)
            try:
                client.conn.close()
            except OSError:
                pass

    def _spawn(self, fn, name: str, *args) -> None:
        t = threading.Thread(target=fn, args=args, name=f"service-{name}", daemon=True)
        t.start()
        self._threads.append(t)

    # -- client handling ---------------------------------------------------------

    def _accept_loop(self) -> None:
        while not self._shutdown.is_set():
            try:
                conn, address = self._server.accept()
            except OSError:
                return
            with self._clients_lock:
                writer = not any(c.writer for c in self._clients)
                client = _Client(conn, address, writer)
                self._clients.append(client)
            self._spawn(self._client_writer, f"tx-{address}", client)
            self._spawn(self._client_reader, f"rx-{address}", client)
            client.send({"type": "state_update", "state": state_dict(self.session.snapshot())})

    def _drop_client(self, client: _Client) -> None:
        with self._clients_lock:
            if client in self._clients:
                self._clients.remove(client)
            if client.writer:  # hand the writer role to the oldest survivor
                for other in self._clients:
                    other.writer = True
                    break
        client.outbox.put(None)
        try:
            client.conn.close()
        except OSError:
            pass

    def _client_writer(self, client: _Client) -> None:
        while True:
            line = client.outbox.get()
            if line is None:
                return
            if '"state_update"' in line:
                with client.lock:
                    client.pending_states = max(0, client.pending_states - 1)
            try:
                client.conn.sendall(line.encode("utf-8") + b"\n")
            except OSError:
                self._drop_client(client)
                return

    def _client_reader(self, client: _Client) -> None:
        buffer = b""
        while not self._shutdown.is_set():
            try:
                chunk = client.conn.recv(4096)
            except OSError:
                break
            if not chunk:
                break
            buffer += chunk
            while b"\n" in buffer:
                raw, _, buffer = buffer.partition(b"\n")
                self._handle_line(client, raw.decode("utf-8", "replace"))
        self._drop_client(client)

    # -- message handling -----------------------------------------------------------

    def _handle_line(self, client: _Client, line: str) -> None:
        if not line.strip():
            return
        try:
            msg = decode_message(line)
            validate_client_message(msg)
        except SchemaError as exc:
            client.send({"type": "fault", "message": str(exc)})
            return
        mtype = msg["type"]
        if not client.writer:
            client.send({"type": "fault", "for": mtype,
                         "message": "read-only client: another UI holds control"})
            return
        try:
            self._dispatch(client, mtype, msg)
        except Exception as exc:  # any failure becomes a fault reply
            client.send({"type": "fault", "for": mtype, "message": str(exc)})

    def _dispatch(self, client: _Client, mtype: str, msg: dict) -> None:
        session = self.session
        if mtype == "load_program":
            self.toolpath, segments = self._load(msg)
            stats = ToolpathStats.from_segments(segments)
            client.send({
                "type": "program_loaded",
                "segments": [_segment_dict(s) for s in segments],
                "stats": {
                    "segment_count": stats.segment_count,
                    "total_extrude_length": stats.total_extrude_length,
                    "total_travel_length": stats.total_travel_length,
                    "total_e": stats.total_e,
                    "command_count": len(self.toolpath.commands),
                },
            })
        elif mtype == "start_stream":
            if self.toolpath is None:
                raise RuntimeError("no program loaded")
            if self._stream_thread is not None and self._stream_thread.is_alive():
                raise RuntimeError("already streaming")
            toolpath = self.toolpath
            self._stream_thread = threading.Thread(
                target=self._run_stream, args=(toolpath,), name="service-stream", daemon=True
            )
            self._stream_thread.start()
            client.send({"type": "ack", "for": mtype})
        elif mtype == "pause":
            session.pause()
            client.send({"type": "ack", "for": mtype})
        elif mtype == "resume":
            session.resume()
            client.send({"type": "ack", "for": mtype})
        elif mtype == "stop":
            session.stop()
            client.send({"type": "ack", "for": mtype})
        elif mtype == "inject":
            session.inject_lines([msg["command"]], label="console")
            client.send({"type": "ack", "for": mtype})
        elif mtype == "jog":
            session.jog(msg["dx"], msg["dy"], msg["dz"], msg.get("speed"))
            client.send({"type": "ack", "for": mtype})
        elif mtype == "probe_capture":
            state = session.poll_state(refresh=True)
            if state.position is None:
                raise RuntimeError("no position report received yet")
            self.probes[msg["label"]] = state.position
            client.send({
                "type": "probe_stored",
                "label": msg["label"],
                "position": _position_dict(state.position),
            })
        elif mtype == "set_bounds_mode":
            self.bounds_mode = msg["mode"]
            client.send({"type": "ack", "for": mtype})

    def _load(self, msg: dict) -> tuple[Toolpath, list[Segment]]:
        if "gcode" in msg:
            parsed = parse_program(msg["gcode"])
            if self.bounds_mode == "strict":
                violations = segment_violations(self.profile, parsed.segments)
                if violations:
                    raise RuntimeError(f"program leaves the envelope: {violations[0]}")
            tp = Toolpath(self.profile, bounds_mode="permissive")
            tp.commands = parsed.commands
            return tp, parsed.segments
        tp = build_recipe(msg["recipe"], msg.get("params"), self.profile, self.probes)
        return tp, tp.segments

    def _run_stream(self, toolpath: Toolpath) -> None:
        try:
            self.session.stream_program(toolpath)
        except Exception as exc:
            self._broadcast({"type": "fault", "message": f"stream failed: {exc}"})

    # -- broadcasting ------------------------------------------------------------

    def _broadcast(self, msg: dict) -> None:
        with self._clients_lock:
            clients = list(self._clients)
        for client in clients:
            client.send(msg)

    def _on_session_event(self, kind: str, payload) -> None:
        if kind == "wire":
            self._broadcast({
                "type": "wire_event",
                "direction": payload.direction,
                "line": payload.line,
                "t": payload.t,
            })
        elif kind == "state":
            self._broadcast({"type": "state_update", "state": state_dict(payload)})

    def _ticker(self) -> None:
        while not self._shutdown.wait(self.state_cadence_s):
            state = self.session.state
            if state == "idle":
                try:
                    self.session.poll_state(refresh=True)
                except Exception:
                    self._broadcast({"type": "fault", "message": "device lost"})
            self._broadcast({"type": "state_update", "state": state_dict(self.session.snapshot())})
