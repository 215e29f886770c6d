"""Command-line entry points: render, stream, simulate, recipe, serve, console.

Exit codes: 0 success, 1 usage, 2 connect failure, 3 stream fault,
4 invalid program. A config file (``--config``, ``$FAB_CONFIG``, or
``~/.config/fab.conf``) may set ``device``, ``baud``, ``profile`` and
``bounds_mode``; the env vars FAB_DEVICE, FAB_BAUD, FAB_PROFILE and
FAB_BOUNDS_MODE override it, and flags override everything.
"""

from __future__ import annotations

import argparse
import os
import signal
import socket
import sys
import threading
from pathlib import Path

from . import programfmt
from .emulator import EmulatorConfig, VirtualPrinter, run_program
from .gcode import parse_program, serialize_program
from .link import (
    LinkConfig,
    LinkError,
    LoopbackTransport,
    SerialTransport,
    Session,
    SocketTransport,
)
from .profiles import MachineProfile, ProfileError, load_profile
from .recipes import RecipeError
from .render import render_svg
from .service import RECIPE_REGISTRY, ControlService, build_recipe
from .toolpath import Toolpath, segment_violations

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CONNECT = 2
EXIT_STREAM = 3
EXIT_PROGRAM = 4

_CONFIG_KEYS = ("device", "baud", "profile", "bounds_mode")


def _load_config(path: str = None) -> dict:
    candidates = [path, os.environ.get("FAB_CONFIG"),
                  os.path.expanduser("~/.config/fab.conf")]
    values: dict[str, str] = {}
    for candidate in candidates:
        if candidate and Path(candidate).exists():
            for lineno, raw in enumerate(Path(candidate).read_text().splitlines(), 1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ProfileError(f"{candidate}:{lineno}: expected key = value")
                key, _, value = line.partition("=")
                values[key.strip().lower()] = value.strip()
            break
    for key in _CONFIG_KEYS:
        env = os.environ.get(f"FAB_{key.upper()}")
        if env is not None:
            values[key] = env
    return values


def _resolve(args, config: dict, key: str, default):
    flag = getattr(args, key, None)
    if flag is not None:
        return flag
    return config.get(key, default)


def _open_transport(device: str, baud: int, profile: MachineProfile):
    if device == "virtual":
        emulator = VirtualPrinter(EmulatorConfig(
            envelope=(profile.max_x, profile.max_y, profile.max_z)))
        return LoopbackTransport(emulator), emulator
    if device.startswith("socket:"):
        _, host, port = device.split(":", 2)
        return SocketTransport(host, int(port)), None
    return SerialTransport(device, baud), None


def _load_program_file(path: str, profile: MachineProfile):
    """Returns (toolpath, segments, gcode_text); accepts G-code or command lists."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise SystemExit(_fail(f"cannot read program: {exc}", EXIT_PROGRAM))
    first = next((ln.split() for ln in text.splitlines()
                  if ln.strip() and not ln.strip().startswith(("#", ";"))), [])
    is_commands = bool(first) and first[0].lower() in (
        "extrude", "retract", "travel", "nozzle", "bed", "home",
        "maxaccel", "accel", "jerk", "raw",
    )
    if is_commands:
        try:
            commands = programfmt.load_commands(text, source=path)
        except programfmt.ProgramFormatError as exc:
            raise SystemExit(_fail(str(exc), EXIT_PROGRAM))
        tp = Toolpath(profile, bounds_mode="permissive")
        tp.commands = commands
        return tp, tp.segments, serialize_program(tp)
    parsed = parse_program(text)
    tp = Toolpath(profile, bounds_mode="permissive")
    tp.commands = parsed.commands
    return tp, parsed.segments, text


def _fail(message: str, code: int) -> int:
    print(f"fab: {message}", file=sys.stderr)
    return code


# -- subcommands ---------------------------------------------------------------


def cmd_render(args, config) -> int:
    profile = load_profile(_resolve(args, config, "profile", "ender3"))
    tp, segments, gcode_text = _load_program_file(args.program, profile)
    emulator = VirtualPrinter(EmulatorConfig(
        envelope=(profile.max_x, profile.max_y, profile.max_z)))
    result = run_program(emulator, gcode_text)
    violations = segment_violations(profile, segments)
    svg = render_svg(profile, segments, duration_s=result.total_duration,
                     violations=violations, title=args.program)
    Path(args.output).write_text(svg)
    print(f"wrote {args.output}: {len(segments)} segments, "
          f"{len(violations)} bounds warnings, {result.total_duration:.2f} s simulated")
    return EXIT_OK


def cmd_simulate(args, config) -> int:
    profile = load_profile(_resolve(args, config, "profile", "ender3"))
    _, segments, gcode_text = _load_program_file(args.program, profile)
    emulator = VirtualPrinter(EmulatorConfig(
        envelope=(profile.max_x, profile.max_y, profile.max_z),
        envelope_mode=args.envelope_mode))
    result = run_program(emulator, gcode_text)
    violations = segment_violations(profile, segments)
    p = result.final_position
    print(f"duration: {result.total_duration:.3f} s")
    print(f"final position: X{p.x:.3f} Y{p.y:.3f} Z{p.z:.3f} E{p.e:.5f}")
    print(f"trace: {len(result.trace)} segments, net filament {sum(r.delta_e for r in result.trace):.5f} mm")
    print(f"bounds violations: {len(violations)}")
    for violation in violations[:10]:
        print(f"  {violation}")
    if result.errors:
        print(f"emulator errors: {len(result.errors)}")
        for error in result.errors[:10]:
            print(f"  {error}")
        return EXIT_PROGRAM
    if args.trace_out:
        from .emulator import dump_trace
        Path(args.trace_out).write_text(dump_trace(result.trace))
        print(f"wrote trace to {args.trace_out}")
    return EXIT_OK


def _connect_session(args, config, profile) -> tuple[Session, object]:
    device = _resolve(args, config, "device", "virtual")
    baud = int(_resolve(args, config, "baud", 115200))
    bounds_mode = _resolve(args, config, "bounds_mode", "strict")
    transport, emulator = _open_transport(device, baud, profile)
    link_config = LinkConfig(use_checksum=getattr(args, "checksum", False))
    session = Session(transport, profile, link_config)
    session.bounds_mode = bounds_mode
    if getattr(args, "log", None):
        session.open_log_file(args.log)
    session.connect()
    return session, emulator


def cmd_stream(args, config) -> int:
    profile = load_profile(_resolve(args, config, "profile", "ender3"))
    tp, segments, _ = _load_program_file(args.program, profile)
    bounds_mode = _resolve(args, config, "bounds_mode", "strict")
    if bounds_mode == "strict":
        violations = segment_violations(profile, segments)
        if violations:
            return _fail(f"program leaves the envelope: {violations[0]}", EXIT_PROGRAM)
    try:
        session, _ = _connect_session(args, config, profile)
    except LinkError as exc:
        return _fail(f"connect failed: {exc}", EXIT_CONNECT)

    report_box = {}
    done = threading.Event()

    def run():
        try:
            report_box["report"] = session.stream_program(tp)
        finally:
            done.set()

    # NB: poll a completion Event rather than Thread.join(timeout): a
    # KeyboardInterrupt landing inside join() can mark the thread dead while
    # it still runs (CPython 3.10, gh-89639), which would drop the stop tail
    worker = threading.Thread(target=run, daemon=True)
    worker.start()
    try:
        while not done.is_set():
            done.wait(timeout=0.5)
            p = session.progress
            print(f"\r{p.acked}/{p.total} acked", end="", flush=True)
            if session.state == "paused":
                answer = input("\npaused (operator stop point) - press enter to resume, 'q' to stop: ")
                if answer.strip().lower() == "q":
                    session.stop()
                else:
                    session.resume()
    except KeyboardInterrupt:
        print("\ninterrupted: stopping (heaters off, lifting nozzle)")
        session.stop()
        done.wait(timeout=30)
        session.close()
        return EXIT_STREAM
    print()
    session.close()
    report = report_box.get("report")
    if report is None or report.error:
        return _fail(f"stream fault: {report.error if report else 'no report'}", EXIT_STREAM)
    print(f"done: acked {report.acked}/{report.total} in {report.elapsed_s:.2f} s")
    return EXIT_OK if report.completed else EXIT_STREAM


def cmd_recipe(args, config) -> int:
    profile = load_profile(_resolve(args, config, "profile", "ender3"))
    params = {}
    for pair in args.param or []:
        if "=" not in pair:
            return _fail(f"--param expects key=value, got {pair!r}", EXIT_USAGE)
        key, _, value = pair.partition("=")
        params[key.strip()] = value.strip()
    try:
        tp = build_recipe(args.name, params, profile)
    except (RecipeError, ValueError) as exc:
        return _fail(str(exc), EXIT_USAGE)
    text = programfmt.dump_commands(tp.commands) if args.format == "commands" \
        else serialize_program(tp)
    if args.output:
        Path(args.output).write_text(text)
        print(f"wrote {args.output}: {len(tp.commands)} commands")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_console(args, config) -> int:
    profile = load_profile(_resolve(args, config, "profile", "ender3"))
    try:
        session, _ = _connect_session(args, config, profile)
    except LinkError as exc:
        return _fail(f"connect failed: {exc}", EXIT_CONNECT)
    print("connected; type G-code (or 'quit')")

    def on_event(kind, payload):
        if kind == "wire" and payload.direction == "rx":
            print(f"  < {payload.line}")

    session.listeners.append(on_event)
    try:
        while True:
            try:
                line = input("> ").strip()
            except EOFError:
                break
            if not line:
                continue
            if line.lower() in ("quit", "exit"):
                break
            try:
                session.inject_lines([line]).wait(timeout=30)
            except LinkError as exc:
                print(f"  ! {exc}")
                session.reset()
    except KeyboardInterrupt:
        pass
    session.close()
    return EXIT_OK


def cmd_serve(args, config) -> int:
    profile = load_profile(_resolve(args, config, "profile", "ender3"))
    try:
        session, _ = _connect_session(args, config, profile)
    except LinkError as exc:
        return _fail(f"connect failed: {exc}", EXIT_CONNECT)
    host, _, port = args.listen.partition(":")
    service = ControlService(session, profile, host or "127.0.0.1", int(port or 0))
    host, port = service.start()
    print(f"control service listening on {host}:{port} (ctrl-c to quit)", flush=True)
    try:
        signal.pause()
    except (KeyboardInterrupt, AttributeError):
        pass
    finally:
        service.shutdown()
        session.close()
    return EXIT_OK


def cmd_emulate(args, config) -> int:
    profile = load_profile(_resolve(args, config, "profile", "ender3"))
    host, _, port = args.listen.partition(":")
    server = socket.create_server((host or "127.0.0.1", int(port or 0)))
    addr = server.getsockname()
    print(f"virtual printer listening on {addr[0]}:{addr[1]} (ctrl-c to quit)", flush=True)
    try:
        while True:
            conn, _ = server.accept()
            emulator = VirtualPrinter(EmulatorConfig(
                envelope=(profile.max_x, profile.max_y, profile.max_z)))
            for line in emulator.boot_banner():
                conn.sendall(line.encode() + b"\n")
            buffer = b""
            try:
                while True:
                    chunk = conn.recv(4096)
                    if not chunk:
                        break
                    buffer += chunk
                    while b"\n" in buffer:
                        raw, _, buffer = buffer.partition(b"\n")
                        for response in emulator.feed_line(raw.decode("utf-8", "replace")):
                            conn.sendall(response.encode() + b"\n")
            except OSError:
                pass
            finally:
                conn.close()
    except KeyboardInterrupt:
        pass
    finally:
        server.close()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fab",
        description="Programmatic toolpaths, Marlin streaming, and a virtual printer.",
    )
    parser.add_argument("--config", help="config file (key = value)")
    parser.add_argument("--profile", help="machine profile name or file (default ender3)")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("render", help="render a program to an SVG preview")
    p.add_argument("program", help="G-code or command-list file")
    p.add_argument("-o", "--output", default="preview.svg")
    p.set_defaults(fn=cmd_render)

    p = sub.add_parser("simulate", help="run a program on the virtual printer")
    p.add_argument("program")
    p.add_argument("--envelope-mode", choices=("clamp", "fault"), default="clamp")
    p.add_argument("--trace-out", help="write the deposition trace (JSON lines)")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("stream", help="stream a program to a printer")
    p.add_argument("program")
    p.add_argument("--device", help="serial device, 'virtual', or socket:HOST:PORT")
    p.add_argument("--baud", type=int)
    p.add_argument("--bounds-mode", dest="bounds_mode", choices=("strict", "permissive"))
    p.add_argument("--checksum", action="store_true", help="frame lines with N numbers + checksums")
    p.add_argument("--log", help="write the session wire log (JSON lines)")
    p.set_defaults(fn=cmd_stream)

    p = sub.add_parser("recipe", help="generate a parametric toolpath")
    p.add_argument("name", help=f"one of: {', '.join(sorted([*RECIPE_REGISTRY, 'bed-level', 'handle']))}")
    p.add_argument("--param", action="append", metavar="KEY=VALUE",
                   help="recipe parameter (mm, mm/s, mm/s^2; repeatable)")
    p.add_argument("--format", choices=("gcode", "commands"), default="gcode")
    p.add_argument("-o", "--output")
    p.set_defaults(fn=cmd_recipe)

    p = sub.add_parser("serve", help="run the local control service for the UI")
    p.add_argument("--listen", default="127.0.0.1:7878")
    p.add_argument("--device")
    p.add_argument("--baud", type=int)
    p.add_argument("--log")
    p.set_defaults(fn=cmd_serve)

    p = sub.add_parser("console", help="interactive G-code console")
    p.add_argument("--device")
    p.add_argument("--baud", type=int)
    p.add_argument("--log")
    p.set_defaults(fn=cmd_console)

    p = sub.add_parser("emulate", help="expose the virtual printer on a local socket")
    p.add_argument("--listen", default="127.0.0.1:0")
    p.set_defaults(fn=cmd_emulate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else 0
    try:
        config = _load_config(args.config)
        return args.fn(args, config)
    except ProfileError as exc:
        return _fail(str(exc), EXIT_USAGE)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
