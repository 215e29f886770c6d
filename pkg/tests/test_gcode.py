import random
import string

import pytest

from oracles import xor_checksum

from fabkit.commands import (
    AutoHome,
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
from fabkit.gcode import (
    Busy,
    ErrorReport,
    FramingError,
    ModalState,
    Ok,
    PositionReport,
    Resend,
    TempReport,
    Unknown,
    frame_line,
    parse_program,
    parse_response,
    serialize_command,
    serialize_program,
    unframe_line,
)

class TestSerialize:
    def test_reference_extruding_move(self, ender3):
        modal = ModalState(position=Position(0, 0, 0.2))
        lines = serialize_command(MoveExtrude(Position(10, 0, 0.2), 25), modal, ender3)
        assert lines == ["G1 X10.000 Y0.000 Z0.200 E0.52245 F1500"]

    def test_painted_speed_feedrate_conversion(self, ender3):
        modal = ModalState()
        lines = serialize_command(MoveExtrude(Position(10, 0, 0.2), 30), modal, ender3)
        assert lines[0].endswith("F1800")

    def test_auto_home(self, ender3):
        assert serialize_command(AutoHome(), ModalState(), ender3) == ["G28"]

    def test_settings_mapping(self, ender3):
        cases = [
            (SetNozzleTemp(210), "M104 S210"),
            (SetNozzleTemp(210, wait=True), "M109 S210"),
            (SetBedTemp(60), "M140 S60"),
            (SetBedTemp(60, wait=True), "M190 S60"),
            (SetMaxAcceleration(500, 500, 100, 5000), "M201 X500 Y500 Z100 E5000"),
            (SetMaxAcceleration(500, 500, 100), "M201 X500 Y500 Z100"),
            (SetStartingAcceleration(800), "M204 P800"),
            (SetJerk(8, 8, 0.4, 5), "M205 X8 Y8 Z0.4 E5"),
            (Raw("M106 S255"), "M106 S255"),
        ]
        for cmd, expected in cases:
            assert serialize_command(cmd, ModalState(), ender3) == [expected]

    def test_feedrate_elided_when_unchanged(self, ender3):
        modal = ModalState()
        first = serialize_command(Travel(Position(10, 0, 1), 50), modal, ender3)
        second = serialize_command(Travel(Position(20, 0, 1), 50), modal, ender3)
        third = serialize_command(Travel(Position(30, 0, 1), 60), modal, ender3)
        assert first[0].endswith("F3000")
        assert "F" not in second[0]
        assert third[0].endswith("F3600")

    def test_travel_is_rapid_without_e(self, ender3):
        lines = serialize_command(Travel(Position(5, 5, 5)), ModalState(), ender3)
        assert lines[0].startswith("G0 ") and " E" not in lines[0]

    def test_retract_expands_to_pure_e_then_travel(self, ender3):
        modal = ModalState(position=Position(10, 0, 0.2, e=1.0))
        lines = serialize_command(MoveRetract(Position(50, 0, 0.2)), modal, ender3)
        assert lines[0] == "G1 E-1.00000 F1500"  # stationary: no XYZ words
        assert lines[1] == "G0 X50.000 Y0.000 Z0.200 F3000"

    def test_determinism(self, ender3):
        cmd = MoveExtrude(Position(12.3456789, 0.0004, 99.9999), 33.333)
        a = serialize_command(cmd, ModalState(), ender3)
        b = serialize_command(cmd, ModalState(), ender3)
        assert a == b

    def test_no_negative_zero_coordinates(self, ender3):
        lines = serialize_command(Travel(Position(-0.0, 0, 0.0001)), ModalState(), ender3)
        assert "-0.000" not in lines[0]


class TestFraming:
    def test_reference_frame(self):
        assert frame_line("G28", 1) == "N1 G28*18"

    def test_checksum_matches_byte_oracle(self):
        rng = random.Random(5)
        for _ in range(100):
            n = rng.randrange(0, 100000)
            text = "".join(rng.choice("GXYZEF0123456789. ") for _ in range(rng.randrange(1, 30))).strip()
            if not text:
                continue
            framed = frame_line(text, n)
            payload, _, cs = framed.rpartition("*")
            assert int(cs) == xor_checksum(payload)

    def test_empty_line_rejected(self):
        with pytest.raises(FramingError):
            frame_line("", 1)

    def test_frame_is_deterministic(self):
        assert frame_line("M105", 42) == frame_line("M105", 42)

    def test_unframe_roundtrip(self):
        rng = random.Random(9)
        for _ in range(100):
            n = rng.randrange(0, 5000)
            text = "G1 X%.3f F1500" % rng.uniform(0, 200)
            assert unframe_line(frame_line(text, n)) == (text, n)

    def test_single_byte_corruption_detected(self):
        framed = frame_line("G1 X10.000 F1500", 7)
        payload, star, cs = framed.rpartition("*")
        for i in range(len(payload)):
            for replacement in ("0", "Z", " "):
                if payload[i] == replacement:
                    continue
                corrupted = payload[:i] + replacement + payload[i:][1:] + star + cs
                with pytest.raises(FramingError):
                    unframe_line(corrupted)


class TestParse:
    def test_comment_stripping(self):
        parsed = parse_program("G1 X10 E0.5 F1200 ; lay a line\n(prep) G28\n; pure comment\n")
        assert isinstance(parsed.commands[0], MoveExtrude)
        assert isinstance(parsed.commands[1], AutoHome)
        assert len(parsed.commands) == 2

    def test_malformed_line_is_contained(self):
        parsed = parse_program("G1 Xfoo\nG1 X10 F600\n")
        assert len(parsed.diagnostics) == 1
        assert "line 1" in parsed.diagnostics[0]
        assert len(parsed.commands) == 1
        assert parsed.commands[0].target.x == 10

    def test_unknown_line_becomes_raw_with_diagnostic(self):
        parsed = parse_program("M503\n")
        assert parsed.commands == [Raw("M503")]
        assert len(parsed.diagnostics) == 1

    def test_modal_feedrate_applies_to_later_moves(self):
        parsed = parse_program("G1 X10 F1200\nG1 X20\n")
        assert parsed.commands[0].speed == 20.0
        assert parsed.commands[1].speed == 20.0

    def test_relative_mode_roundtrip_of_jog_triple(self):
        parsed = parse_program("G0 X10 Y10 Z10 F600\nG91\nG0 Z-0.1\nG90\nG0 X10\n")
        zs = [seg.end.z for seg in parsed.segments]
        assert zs == pytest.approx([10, 9.9, 9.9])
        assert parsed.commands[1] == Raw("G91")

    def test_position_set_rebases_extruder(self):
        parsed = parse_program("G1 X10 E5 F600\nG92 E0\nG1 X20 E1\n")
        assert parsed.segments[0].delta_e == 5
        assert parsed.segments[1].delta_e == 1  # measured from the reset value
        assert parsed.final_position.e == 1

    def test_relative_extruder_mode(self):
        parsed = parse_program("M83\nG1 X5 E1 F600\nG1 X10 E1\n")
        assert [s.delta_e for s in parsed.segments] == [1, 1]

    def test_temperatures(self):
        parsed = parse_program("M104 S210\nM109 S210\nM140 S60\nM190 S60\n")
        assert parsed.commands == [
            SetNozzleTemp(210, False), SetNozzleTemp(210, True),
            SetBedTemp(60, False), SetBedTemp(60, True),
        ]

    def test_out_of_range_temp_is_diagnosed_and_skipped(self):
        parsed = parse_program("M104 S9999\n")
        assert parsed.commands == []
        assert len(parsed.diagnostics) == 1

    def test_per_axis_home_stays_verbatim(self):
        parsed = parse_program("G28 X0\n")
        assert parsed.commands == [Raw("G28 X0")]


def random_program(rng: random.Random):
    """A random program over the full typed command set.

    Coordinates are quantized to the serializer's 3-decimal grid and explicit
    feeds to 0.5 mm/s so distinct authored values stay distinct on the wire.
    """
    commands = []
    position = Position(0, 0, 0)
    for _ in range(rng.randrange(3, 40)):
        roll = rng.random()
        target = Position(
            round(rng.uniform(0, 220), 3),
            round(rng.uniform(0, 220), 3),
            round(rng.uniform(0, 120), 3),
        )
        speed = rng.choice([None, round(rng.uniform(1, 120) * 2) / 2])
        if roll < 0.35:
            e_amount = rng.choice([None, round(rng.uniform(0.01, 8), 2)])
            commands.append(MoveExtrude(target, speed, e_amount))
            position = target
        elif roll < 0.5:
            commands.append(MoveRetract(target, speed))
            position = target
        elif roll < 0.65:
            commands.append(Travel(target, speed))
            position = target
        elif roll < 0.72:
            commands.append(AutoHome())
            position = Position(0, 0, 0)
        elif roll < 0.79:
            commands.append(SetNozzleTemp(rng.randrange(0, 300), rng.random() < 0.5))
        elif roll < 0.84:
            commands.append(SetBedTemp(rng.randrange(0, 120), rng.random() < 0.5))
        elif roll < 0.89:
            commands.append(SetMaxAcceleration(
                rng.randrange(50, 3000), rng.randrange(50, 3000), rng.randrange(10, 500),
                rng.choice([None, rng.randrange(100, 10000)])))
        elif roll < 0.93:
            commands.append(SetStartingAcceleration(rng.randrange(50, 3000)))
        elif roll < 0.97:
            commands.append(SetJerk(*(round(rng.uniform(0.1, 20), 1) for _ in range(4))))
        else:
            commands.append(Raw(rng.choice(["M106 S255", "M107", "M117 hello", "G4 P100"])))
    return commands


class TestRoundTrip:
    def test_serialize_parse_serialize_is_byte_identical(self, ender3):
        rng = random.Random(1234)
        for case in range(300):
            commands = random_program(rng)
            first = serialize_program(profile=ender3, commands=commands)
            parsed = parse_program(first)
            second = serialize_program(profile=ender3, commands=parsed.commands)
            assert second == first, f"case {case} diverged"

    def test_documented_example_program(self, ender3):
        commands = [
            SetNozzleTemp(210, wait=True),
            AutoHome(),
            MoveExtrude(Position(10, 0, 0.2), 25),
            MoveRetract(Position(50, 0, 0.2)),
            MoveExtrude(Position(60, 0, 0.2)),
        ]
        text = serialize_program(profile=ender3, commands=commands)
        parsed = parse_program(text)
        assert not parsed.diagnostics
        assert serialize_program(profile=ender3, commands=parsed.commands) == text

    def test_parsed_segments_match_authored_segments(self, ender3):
        from fabkit.toolpath import derive_segments
        rng = random.Random(77)
        for _ in range(40):
            commands = random_program(rng)
            text = serialize_program(profile=ender3, commands=commands)
            parsed = parse_program(text)
            authored = derive_segments(ender3, commands).segments
            motion = [s for s in parsed.segments]
            authored = [s for s in authored if not (s.length == 0 and s.delta_e == 0)]
            assert len(motion) == len(authored)
            for got, want in zip(motion, authored):
                assert got.kind == want.kind
                assert got.end.x == pytest.approx(want.end.x, abs=5e-4)
                assert got.end.y == pytest.approx(want.end.y, abs=5e-4)
                assert got.end.z == pytest.approx(want.end.z, abs=5e-4)
                assert got.delta_e == pytest.approx(want.delta_e, abs=5e-5)


class TestParseResponse:
    def test_reference_events(self):
        assert parse_response("ok") == Ok()
        assert parse_response("ok N7 P15 B3") == Ok()
        assert parse_response("echo:busy: processing") == Busy()
        assert parse_response("Error:checksum mismatch") == ErrorReport("checksum mismatch")
        assert parse_response("Resend: 5") == Resend(5)
        assert parse_response("rs 5") == Resend(5)
        assert parse_response("X:1.00 Y:2.00 Z:3.00 E:4.00 Count X:80 Y:160 Z:1200") == \
            PositionReport(1, 2, 3, 4)
        assert parse_response("ok T:210.0 /210.0 B:60.0 /60.0") == TempReport(210, 210, 60, 60)
        assert parse_response("T:104.3 /210.0 B:40.1 /60.0") == TempReport(104.3, 210, 40.1, 60)
        assert parse_response("start") == Unknown("start")

    def test_totality_over_fuzz_corpus(self):
        rng = random.Random(99)
        alphabet = string.printable
        for _ in range(2000):
            line = "".join(rng.choice(alphabet) for _ in range(rng.randrange(0, 60)))
            event = parse_response(line)
            assert event is not None

    def test_totality_over_structured_mutations(self):
        seeds = [
            "ok", "ok ", "OK T:", "Error:", "Resend:", "rs", "rs x",
            "X:1 Y:2 Z:3", "T:10 /0", "T:10 /0 B:", "echo:busy",
            "\x00\xff", "N123 *", "ok T:nan /210 B:60 /60",
        ]
        for line in seeds:
            parse_response(line)  # must classify, never raise
