import threading

import pytest

from fabkit.cli import EXIT_CONNECT, EXIT_OK, EXIT_PROGRAM, EXIT_USAGE, main
from fabkit.gcode import serialize_program
from fabkit.profiles import ENDER3
from fabkit.recipes import gen_lissajous


@pytest.fixture
def liss_gcode(tmp_path):
    path = tmp_path / "liss.gcode"
    path.write_text(serialize_program(gen_lissajous(ENDER3)))
    return str(path)


class TestRecipe:
    def test_recipe_to_stdout(self, capsys):
        assert main(["recipe", "wave"]) == EXIT_OK
        out = capsys.readouterr().out
        lines = out.splitlines()
        assert lines[0] == "G92 E0"  # standalone extruding programs reset E
        assert lines[1].startswith("G0 X60.000 Y110.000")  # travel to the path start
        assert lines[2] == "M204 P500"
        assert lines[3] == "M201 X500 Y500 Z500"

    def test_recipe_with_params(self, tmp_path):
        out = tmp_path / "w.gcode"
        assert main(["recipe", "wave", "--param", "amplitude=5",
                     "--param", "accel_x=100", "-o", str(out)]) == EXIT_OK
        assert "M201 X100" in out.read_text()

    def test_recipe_commands_format(self, capsys):
        assert main(["recipe", "bed-level", "--format", "commands"]) == EXIT_OK
        out = capsys.readouterr().out
        assert out.splitlines()[0] == "home"
        assert "raw M0" in out

    def test_unknown_recipe_is_usage_error(self, capsys):
        assert main(["recipe", "mobius"]) == EXIT_USAGE

    def test_bad_param_is_usage_error(self):
        assert main(["recipe", "wave", "--param", "bogus=1"]) == EXIT_USAGE
        assert main(["recipe", "wave", "--param", "notakv"]) == EXIT_USAGE

    def test_handle_with_explicit_probes(self, capsys):
        assert main(["recipe", "handle", "--param", "p1=100,100,40",
                     "--param", "p2=140,100,37"]) == EXIT_OK
        out = capsys.readouterr().out
        assert "G0 X140.000 Y100.000 Z42.000" in out  # hover entry above p2


class TestSimulate(object):
    def test_simulate_reports(self, liss_gcode, capsys):
        assert main(["simulate", liss_gcode]) == EXIT_OK
        out = capsys.readouterr().out
        assert "duration:" in out and "final position:" in out
        assert "bounds violations: 0" in out

    def test_fault_mode_flags_out_of_envelope(self, tmp_path, capsys):
        bad = tmp_path / "bad.gcode"
        bad.write_text("G0 X400 Y10 Z5 F600\n")
        assert main(["simulate", str(bad), "--envelope-mode", "clamp"]) == EXIT_OK
        assert main(["simulate", str(bad), "--envelope-mode", "fault"]) == EXIT_PROGRAM

    def test_trace_export(self, liss_gcode, tmp_path):
        trace = tmp_path / "trace.jsonl"
        assert main(["simulate", liss_gcode, "--trace-out", str(trace)]) == EXIT_OK
        from fabkit.emulator import load_trace
        records = load_trace(trace.read_text())
        assert len(records) == 201  # approach travel + 200 extrudes

    def test_travel_only_program_deposits_nothing(self, tmp_path, capsys):
        path = tmp_path / "tour.txt"
        assert main(["recipe", "bed-level", "--format", "commands",
                     "-o", str(path)]) == EXIT_OK
        assert main(["simulate", str(path)]) == EXIT_OK
        out = capsys.readouterr().out
        assert "net filament 0.00000 mm" in out

    def test_unreadable_program(self):
        assert main(["simulate", "/nonexistent/x.gcode"]) == EXIT_PROGRAM


class TestRender:
    def test_render_svg(self, liss_gcode, tmp_path):
        out = tmp_path / "p.svg"
        assert main(["render", liss_gcode, "-o", str(out)]) == EXIT_OK
        svg = out.read_text()
        assert svg.count('class="seg extrude top"') == 200

    def test_render_empty_program(self, tmp_path):
        empty = tmp_path / "empty.gcode"
        empty.write_text("")
        out = tmp_path / "e.svg"
        assert main(["render", str(empty), "-o", str(out)]) == EXIT_OK
        assert "segments: 0" in out.read_text()

    def test_render_highlights_violations(self, tmp_path):
        bad = tmp_path / "bad.gcode"
        bad.write_text("G0 X400 Y10 Z5 F600\n")
        out = tmp_path / "b.svg"
        assert main(["render", str(bad), "-o", str(out)]) == EXIT_OK
        svg = out.read_text()
        assert "bounds warnings: 1" in svg
        assert 'class="violation"' in svg


class TestStream:
    def test_stream_virtual_ok(self, liss_gcode, capsys):
        assert main(["stream", liss_gcode, "--device", "virtual"]) == EXIT_OK
        out = capsys.readouterr().out
        assert "done: acked 202/202" in out

    def test_unreachable_device(self, liss_gcode):
        assert main(["stream", liss_gcode,
                     "--device", "/dev/does-not-exist"]) == EXIT_CONNECT

    def test_strict_bounds_refuses_bad_program(self, tmp_path):
        bad = tmp_path / "bad.gcode"
        bad.write_text("G0 X400 Y10 Z5 F600\n")
        assert main(["stream", str(bad), "--device", "virtual"]) == EXIT_PROGRAM

    def test_permissive_bounds_streams_anyway(self, tmp_path):
        bad = tmp_path / "bad.gcode"
        bad.write_text("G0 X400 Y10 Z5 F600\n")
        assert main(["stream", str(bad), "--device", "virtual",
                     "--bounds-mode", "permissive"]) == EXIT_OK

    def test_checksum_flag(self, liss_gcode):
        assert main(["stream", liss_gcode, "--device", "virtual", "--checksum"]) == EXIT_OK


class TestConfig:
    def test_config_file_provides_device(self, tmp_path, liss_gcode, monkeypatch):
        conf = tmp_path / "fab.conf"
        conf.write_text("device = virtual\nbounds_mode = strict\n")
        monkeypatch.delenv("FAB_DEVICE", raising=False)
        assert main(["--config", str(conf), "stream", liss_gcode]) == EXIT_OK

    def test_env_overrides_config(self, tmp_path, liss_gcode, monkeypatch):
        conf = tmp_path / "fab.conf"
        conf.write_text("device = /dev/not-a-port\n")
        monkeypatch.setenv("FAB_DEVICE", "virtual")
        assert main(["--config", str(conf), "stream", liss_gcode]) == EXIT_OK

    def test_flag_overrides_env(self, liss_gcode, monkeypatch):
        monkeypatch.setenv("FAB_DEVICE", "/dev/not-a-port")
        assert main(["stream", liss_gcode, "--device", "virtual"]) == EXIT_OK

    def test_custom_profile_file(self, tmp_path, capsys):
        profile = tmp_path / "small.conf"
        profile.write_text(
            "name = small\nmax_x = 100\nmax_y = 100\nmax_z = 100\n"
            "nozzle_radius = 0.2\nfilament_radius = 0.875\n")
        assert main(["--profile", str(profile), "recipe", "bed-level"]) == EXIT_OK
        out = capsys.readouterr().out
        assert "G0 X50.000 Y50.000" in out  # tour center follows the envelope

    def test_usage_error_exit_code(self):
        assert main(["no-such-verb"]) == EXIT_USAGE
        assert main([]) == EXIT_USAGE


class TestConsole:
    def test_console_round_trip_via_stdin(self, tmp_path):
        import subprocess
        import sys

        result = subprocess.run(
            [sys.executable, "-m", "fabkit.cli", "console", "--device", "virtual"],
            input="M105\nquit\n",
            capture_output=True,
            text=True,
            timeout=60,
        )
        assert result.returncode == 0, result.stderr
        assert "connected" in result.stdout
        assert "ok T:" in result.stdout  # temperature reply echoed to the console


class TestInterrupt:
    def test_sigint_mid_stream_runs_stop_policy(self, tmp_path):
        import json
        import signal
        import subprocess
        import sys
        import time

        program = tmp_path / "long.gcode"
        lines = [f"G0 X{(i % 200) + 1}.0 Y{(i * 3) % 200}.0 Z1.0 F6000" for i in range(30000)]
        program.write_text("\n".join(lines) + "\n")
        log_path = tmp_path / "wire.jsonl"
        proc = subprocess.Popen(
            [sys.executable, "-m", "fabkit.cli", "stream", str(program),
             "--device", "virtual", "--log", str(log_path)],
            stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True,
        )
        try:
            deadline = time.monotonic() + 60
            while time.monotonic() < deadline:
                if log_path.exists() and log_path.read_text().count("\n") > 50:
                    break  # definitely mid-stream now
                if proc.poll() is not None:
                    raise AssertionError(f"stream finished early: {proc.stdout.read()}")
                time.sleep(0.05)
            proc.send_signal(signal.SIGINT)
            proc.wait(timeout=60)
        finally:
            if proc.poll() is None:
                proc.kill()
        assert proc.returncode == 3  # stream fault exit code
        logged = [json.loads(line) for line in log_path.read_text().splitlines()]
        tx = [r["line"] for r in logged if r["dir"] == "tx"]
        assert "M104 S0" in tx and "M140 S0" in tx  # heaters off
        lift_at = next(i for i, line in enumerate(tx) if line == "M104 S0")
        assert tx[lift_at:lift_at + 5] == ["M104 S0", "M140 S0", "G91", "G0 Z5.000 F600", "G90"]
        assert len(tx) < 30000  # the queue really was abandoned


class TestEmulateServer:
    def test_socket_transport_against_emulate_server(self):
        import socket as socketlib

        from fabkit.emulator import EmulatorConfig, VirtualPrinter
        from fabkit.link import LinkConfig, Session, SocketTransport

        server = socketlib.create_server(("127.0.0.1", 0))
        port = server.getsockname()[1]

        def serve_one():
            conn, _ = server.accept()
            emulator = VirtualPrinter(EmulatorConfig())
            for line in emulator.boot_banner():
                conn.sendall(line.encode() + b"\n")
            buffer = b""
            while True:
                chunk = conn.recv(4096)
                if not chunk:
                    break
                buffer += chunk
                while b"\n" in buffer:
                    raw, _, buffer = buffer.partition(b"\n")
                    for response in emulator.feed_line(raw.decode()):
                        conn.sendall(response.encode() + b"\n")
            conn.close()

        thread = threading.Thread(target=serve_one, daemon=True)
        thread.start()
        session = Session(SocketTransport("127.0.0.1", port), ENDER3,
                          LinkConfig(banner_quiet_s=0.05, command_timeout_s=5,
                                     auto_poll=False))
        session.connect()
        assert session.state == "idle"
        ticket = session.inject_lines(["M105"])
        assert ticket.done
        assert session.snapshot().hotend is not None
        session.close()
        server.close()
