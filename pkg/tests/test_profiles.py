import pytest

from fabkit.profiles import ENDER3, MachineProfile, ProfileError, dump_profile, load_profile, parse_profile


def test_builtin_ender3_values(ender3):
    assert ender3.max_x == 220 and ender3.max_y == 220 and ender3.max_z == 250
    assert ender3.nozzle_radius == 0.2
    assert ender3.filament_radius == 0.875
    assert ender3.default_print_speed == 25
    assert ender3.default_travel_speed == 50
    assert ender3.retract_length == 2 and ender3.retract_speed == 25


def test_filament_must_exceed_nozzle():
    with pytest.raises(ProfileError):
        MachineProfile("bad", 220, 220, 250, nozzle_radius=0.2, filament_radius=0.1)


def test_negative_envelope_rejected():
    with pytest.raises(ProfileError):
        MachineProfile("bad", -1, 220, 250, nozzle_radius=0.2, filament_radius=0.875)


def test_zero_speed_rejected():
    with pytest.raises(ProfileError):
        MachineProfile("bad", 220, 220, 250, 0.2, 0.875, default_print_speed=0)


def test_negative_retract_length_rejected():
    with pytest.raises(ProfileError):
        MachineProfile("bad", 220, 220, 250, 0.2, 0.875, retract_length=-1)


def test_parse_profile_file_format():
    text = """
    # a half-size machine
    name = mini
    max_x = 110
    max_y = 110
    max_z = 120
    nozzle_radius = 0.2
    filament_radius = 0.875
    default_print_speed = 30
    """
    profile = parse_profile(text)
    assert profile.name == "mini"
    assert profile.max_x == 110
    assert profile.default_print_speed == 30
    assert profile.default_travel_speed == 50  # default preserved


@pytest.mark.parametrize("bad,fragment", [
    ("name = x\nmax_x = t", "bad value"),
    ("name = x\nwat = 3", "unknown key"),
    ("name = x\nmax_x = 1\nmax_x = 2", "duplicate"),
    ("max_x = 220", "missing required"),
    ("name x", "expected"),
])
def test_parse_profile_errors(bad, fragment):
    with pytest.raises(ProfileError, match=fragment):
        parse_profile(bad)


def test_dump_load_roundtrip(tmp_path):
    path = tmp_path / "ender3.conf"
    path.write_text(dump_profile(ENDER3))
    assert load_profile(str(path)) == ENDER3


def test_load_profile_by_name_and_missing():
    assert load_profile("ender3") is ENDER3
    with pytest.raises(ProfileError, match="no built-in profile"):
        load_profile("nope-such-machine")
