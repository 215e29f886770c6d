"""Machine profiles: identity, work envelope, and motion defaults."""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path


class ProfileError(ValueError):
    """Raised for an invalid machine profile or profile file."""


@dataclass(frozen=True)
class MachineProfile:
    """Static description of one machine.

    Lengths are mm, speeds mm/s. ``filament_radius`` must exceed
    ``nozzle_radius``: material is conserved between the filament feed and
    the deposited bead, so the feed is always shorter than the move.
    """

    name: str
    max_x: float
    max_y: float
    max_z: float
    nozzle_radius: float
    filament_radius: float
    default_print_speed: float = 25.0
    default_travel_speed: float = 50.0
    retract_length: float = 2.0
    retract_speed: float = 25.0

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        if not self.name:
            raise ProfileError("profile needs a name")
        for field in ("max_x", "max_y", "max_z", "nozzle_radius"):
            if not getattr(self, field) > 0:
                raise ProfileError(f"{field} must be > 0, got {getattr(self, field)}")
        if not self.filament_radius > self.nozzle_radius:
            raise ProfileError(
                f"filament_radius ({self.filament_radius}) must exceed "
                f"nozzle_radius ({self.nozzle_radius})"
            )
        for field in ("default_print_speed", "default_travel_speed", "retract_speed"):
            if not getattr(self, field) > 0:
                raise ProfileError(f"{field} must be > 0, got {getattr(self, field)}")
        if self.retract_length < 0:
            raise ProfileError(f"retract_length must be >= 0, got {self.retract_length}")

    def with_overrides(self, **kwargs) -> "MachineProfile":
        return replace(self, **kwargs)


# Stock Creality Ender-3: 220x220x250 envelope, 0.4 mm nozzle, 1.75 mm filament.
ENDER3 = MachineProfile(
    name="ender3",
    max_x=220.0,
    max_y=220.0,
    max_z=250.0,
    nozzle_radius=0.2,
    filament_radius=0.875,
)

BUILTIN_PROFILES = {"ender3": ENDER3}

# Keys accepted in profile files, mapped to dataclass fields.
_FILE_KEYS = {
    "name": str,
    "max_x": float,
    "max_y": float,
    "max_z": float,
    "nozzle_radius": float,
    "filament_radius": float,
    "default_print_speed": float,
    "default_travel_speed": float,
    "retract_length": float,
    "retract_speed": float,
}


def parse_profile(text: str, *, source: str = "<string>") -> MachineProfile:
    """Parse the key-value profile format.

    One ``key = value`` pair per line; ``#`` starts a comment; keys as in
    :data:`_FILE_KEYS` (lengths mm, speeds mm/s). Unknown keys are errors so
    typos do not silently fall back to defaults.
    """
    values: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ProfileError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip().lower()
        value = value.strip()
        if key not in _FILE_KEYS:
            raise ProfileError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ProfileError(f"{source}:{lineno}: duplicate key {key!r}")
        conv = _FILE_KEYS[key]
        try:
            values[key] = conv(value)
        except ValueError as exc:
            raise ProfileError(f"{source}:{lineno}: bad value for {key}: {value!r}") from exc
    missing = {"name", "max_x", "max_y", "max_z", "nozzle_radius", "filament_radius"} - set(values)
    if missing:
        raise ProfileError(f"{source}: missing required keys: {', '.join(sorted(missing))}")
    return MachineProfile(**values)  # type: ignore[arg-type]


def load_profile(name_or_path: str) -> MachineProfile:
    """Resolve a built-in profile name or load a profile file."""
    if name_or_path in BUILTIN_PROFILES:
        return BUILTIN_PROFILES[name_or_path]
    path = Path(name_or_path)
    if not path.exists():
        raise ProfileError(
            f"no built-in profile or file named {name_or_path!r} "
            f"(built-ins: {', '.join(sorted(BUILTIN_PROFILES))})"
        )
    return parse_profile(path.read_text(), source=str(path))


def dump_profile(profile: MachineProfile) -> str:
    """Serialize a profile to the key-value file format."""
    lines = [f"name = {profile.name}"]
    for key in list(_FILE_KEYS)[1:]:
        lines.append(f"{key} = {getattr(profile, key):g}")
    return "\n".join(lines) + "\n"
