import math
import random

import pytest

from conftest import make_emulator
from oracles import integrate_motion_time

from fabkit.emulator import (
    AckDelay,
    EmulatorConfig,
    VirtualPrinter,
    dump_trace,
    load_trace,
    run_program,
    segment_duration,
)
from fabkit.gcode import serialize_program
from fabkit.recipes import gen_lissajous


class TestSegmentDuration:
    def test_reference_trapezoid(self):
        assert segment_duration(100, 50, 500, 0) == pytest.approx(2.100, abs=1e-6)

    def test_reference_triangular(self):
        assert segment_duration(4, 50, 500, 0) == pytest.approx(0.178885, abs=1e-6)

    def test_zero_length(self):
        assert segment_duration(0, 50, 500, 0) == 0.0

    def test_invalid_arguments(self):
        with pytest.raises(ValueError):
            segment_duration(10, 0, 500, 0)
        with pytest.raises(ValueError):
            segment_duration(10, 50, 0, 0)
        with pytest.raises(ValueError):
            segment_duration(-1, 50, 500, 0)

    def test_matches_independent_integration(self):
        rng = random.Random(21)
        for _ in range(40):
            length = rng.uniform(0.02, 120)
            v = rng.uniform(2, 80)
            a = rng.uniform(50, 3000)
            vj = rng.uniform(0, 8)
            closed = segment_duration(length, v, a, vj)
            simulated = integrate_motion_time(length, v, a, vj)
            assert closed == pytest.approx(simulated, rel=1e-5, abs=1e-9)

    def test_junction_speed_shortens_moves(self):
        slow = segment_duration(10, 40, 500, 0)
        fast = segment_duration(10, 40, 500, 5)
        assert fast < slow

    def test_monotone_in_acceleration(self):
        durations = [segment_duration(3, 40, a, 2) for a in (100, 500, 2000)]
        assert durations[0] > durations[1] > durations[2]


class TestFeedLine:
    def test_home(self, emulator):
        assert emulator.feed_line("G28") == ["ok"]
        assert emulator.position.xyz() == (0, 0, 0)

    def test_simple_move_records_trace(self, emulator):
        assert emulator.feed_line("G1 X10 F1500") == ["ok"]
        emulator.drain()
        assert len(emulator.trace) == 1
        record = emulator.trace[0]
        assert record.end.x == 10
        assert record.feedrate == 25.0
        # kinematic oracle agrees with the recorded span
        expected = integrate_motion_time(10, 25.0, record.accel, record.v_junction)
        assert record.duration == pytest.approx(expected, rel=1e-5)

    def test_buffer_full_defers_ok(self):
        emulator = make_emulator(buffer_depth=16)
        emulator.feed_line("G0 X0 Y0 F6000")
        # 17 alternating moves: the 17th must wait for the first slot to free
        for i in range(16):
            x = 10.0 + (i % 2)
            assert emulator.feed_line(f"G1 X{x} Y{10 + i}") == ["ok"]
            assert emulator.clock == 0.0  # accepted instantly into the buffer
        first_end = emulator.planner[0].t_end
        emulator.feed_line("G1 X50 Y50")
        assert emulator.clock == pytest.approx(first_end)
        assert len(emulator.trace) >= 1  # first segment retired to make room

    def test_unknown_command_echoes_and_acks(self, emulator):
        assert emulator.feed_line("M503") == ['echo:Unknown command: "M503"', "ok"]

    def test_malformed_line_is_error_but_survivable(self, emulator):
        responses = emulator.feed_line("G1 Xfoo")
        assert responses[0].startswith("Error:")
        assert emulator.feed_line("G28") == ["ok"]

    def test_m105_bit_exact_report(self, emulator):
        line = emulator.feed_line("M105")[0]
        assert line == "ok T:25.0 /0.0 B:25.0 /0.0"
        from fabkit.gcode import TempReport, parse_response
        assert parse_response(line) == TempReport(25, 0, 25, 0)

    def test_m114_bit_exact_report(self, emulator):
        emulator.feed_line("G1 X1 Y2 Z3 F600")
        emulator.feed_line("G92 E4")
        report, ok = emulator.feed_line("M114")
        assert report == "X:1.00 Y:2.00 Z:3.00 E:4.00 Count X:80 Y:160 Z:1200"
        assert ok == "ok"
        from fabkit.gcode import PositionReport, parse_response
        assert parse_response(report) == PositionReport(1, 2, 3, 4)

    def test_heating_wait_emits_reports_until_target(self, emulator):
        responses = emulator.feed_line("M109 S210")
        assert responses[-1] == "ok"
        reports = [r for r in responses if r.startswith("T:")]
        assert len(reports) >= 5  # one per simulated second
        assert emulator.hotend.temp_at(emulator.clock) >= 209.0
        # first-order rise: time to within 1 C of 210 from 25 C ambient
        expected = 8.0 * math.log((210 - 25) / 1.0)
        assert emulator.clock == pytest.approx(expected, abs=2.0)

    def test_heating_wait_cooling_returns_immediately(self, emulator):
        emulator.feed_line("M104 S0")
        assert emulator.feed_line("M109 S0") == ["ok"]

    def test_set_temp_without_wait(self, emulator):
        assert emulator.feed_line("M104 S100") == ["ok"]
        assert emulator.hotend.target == 100
        assert emulator.feed_line("M140 S60") == ["ok"]
        assert emulator.bed.target == 60

    def test_limits_update(self, emulator):
        emulator.feed_line("M201 X100 Y100 Z50 E2000")
        emulator.feed_line("M204 P300")
        emulator.feed_line("M205 X4 Y4 Z0.2 E2")
        assert emulator.max_accel == [100, 100, 50, 2000]
        assert emulator.print_accel == 300
        assert emulator.jerk == [4, 4, 0.2, 2]

    def test_dwell_advances_clock(self, emulator):
        emulator.feed_line("G4 P1500")
        assert emulator.clock == pytest.approx(1.5)
        emulator.feed_line("G4 S2")
        assert emulator.clock == pytest.approx(3.5)

    def test_blank_line_acked(self, emulator):
        assert emulator.feed_line("") == ["ok"]


class TestEnvelope:
    def test_clamp_mode_limits_position(self):
        emulator = make_emulator(envelope=(220, 220, 250), envelope_mode="clamp")
        assert emulator.feed_line("G0 X500 Y-10 Z5 F600") == ["ok"]
        assert emulator.position.xyz() == (220, 0, 5)

    def test_fault_mode_errors_and_holds_position(self):
        emulator = make_emulator(envelope=(220, 220, 250), envelope_mode="fault")
        emulator.feed_line("G0 X10 Y10 Z5 F600")
        responses = emulator.feed_line("G1 X500")
        assert responses[0].startswith("Error:")
        assert emulator.position.xyz() == (10, 10, 5)
        assert emulator.feed_line("G1 X20") == ["ok"]


class TestRunProgram:
    def test_empty_program(self):
        result = run_program(make_emulator(), "")
        assert result.trace == [] and result.total_duration == 0.0

    def test_final_state_matches_last_commanded(self, ender3):
        tp = gen_lissajous(ender3)
        text = serialize_program(tp)
        result = run_program(make_emulator(), text)
        last = tp.segments[-1].end
        assert result.final_position.xyz() == pytest.approx(last.xyz(), abs=1e-9)
        assert result.final_position.e == pytest.approx(
            sum(s.delta_e for s in tp.segments), abs=5e-5)

    def test_total_duration_is_sum_of_trace_spans(self, ender3):
        text = serialize_program(gen_lissajous(ender3))
        result = run_program(make_emulator(), text)
        assert result.total_duration == pytest.approx(
            sum(r.duration for r in result.trace), rel=1e-9)

    def test_trace_monotone_and_non_overlapping(self, ender3):
        text = serialize_program(gen_lissajous(ender3))
        result = run_program(make_emulator(), text)
        previous_end = 0.0
        for record in result.trace:
            assert record.t_end >= record.t_start
            assert record.t_start >= previous_end - 1e-12
            previous_end = record.t_end

    def test_determinism_byte_identical(self, ender3):
        text = serialize_program(gen_lissajous(ender3))
        runs = []
        for _ in range(2):
            emulator = make_emulator(ack_delay=AckDelay(kind="randomized", seed=7))
            result = run_program(emulator, text)
            runs.append(("\n".join(result.responses), dump_trace(result.trace)))
        assert runs[0] == runs[1]

    def test_buffer_conservation(self, ender3):
        config = EmulatorConfig(buffer_depth=4)
        emulator = VirtualPrinter(config)
        motion_lines = 0
        for line in serialize_program(gen_lissajous(ender3)).splitlines():
            if line.startswith(("G0", "G1")):
                motion_lines += 1
            responses = emulator.feed_line(line)
            assert responses.count("ok") == 1
            assert len(emulator.planner) <= config.buffer_depth
        emulator.drain()
        assert len(emulator.trace) == motion_lines

    def test_trace_export_roundtrip(self, ender3):
        result = run_program(make_emulator(), serialize_program(gen_lissajous(ender3)))
        text = dump_trace(result.trace)
        assert load_trace(text) == result.trace


class TestFaultInjection:
    def test_error_at_line(self):
        emulator = make_emulator(error_at_line=2, error_message="checksum")
        assert emulator.feed_line("G28") == ["ok"]
        assert emulator.feed_line("G28") == ["Error:checksum"]
        assert emulator.feed_line("G28") == ["ok"]

    def test_resend_for_framed_line(self):
        from fabkit.gcode import frame_line
        emulator = make_emulator(resend_at_framed_line=2)
        assert emulator.feed_line(frame_line("G28", 1)) == ["ok"]
        responses = emulator.feed_line(frame_line("M105", 2))
        assert responses[0] == "Resend: 2"
        retry = emulator.feed_line(frame_line("M105", 2))
        assert retry[-1].startswith("ok")

    def test_corrupt_frame_requests_resend(self):
        from fabkit.gcode import frame_line
        emulator = make_emulator()
        emulator.feed_line(frame_line("G28", 1))
        good = frame_line("G1 X10 F600", 2)
        corrupted = good.replace("X10", "X11")  # payload changed, checksum stale
        responses = emulator.feed_line(corrupted)
        assert any(r.startswith("Error:checksum") for r in responses)
        assert any(r.startswith("Resend:") for r in responses)
