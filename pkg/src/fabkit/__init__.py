"""fabkit: programmatic toolpaths, Marlin streaming, and a virtual printer."""

from .commands import (
    AutoHome,
    Command,
    CommandError,
    MoveExtrude,
    MoveRetract,
    Position,
    Raw,
    Segment,
    SetBedTemp,
    SetJerk,
    SetMaxAcceleration,
    SetNozzleTemp,
    SetStartingAcceleration,
    Travel,
)
from .profiles import ENDER3, MachineProfile, ProfileError, load_profile
from .toolpath import (
    EnvelopeError,
    Toolpath,
    default_extrusion,
    derive_segments,
    new_toolpath,
)

__version__ = "0.1.0"

__all__ = [
    "AutoHome",
    "Command",
    "CommandError",
    "ENDER3",
    "EnvelopeError",
    "MachineProfile",
    "MoveExtrude",
    "MoveRetract",
    "Position",
    "ProfileError",
    "Raw",
    "Segment",
    "SetBedTemp",
    "SetJerk",
    "SetMaxAcceleration",
    "SetNozzleTemp",
    "SetStartingAcceleration",
    "Toolpath",
    "Travel",
    "default_extrusion",
    "derive_segments",
    "load_profile",
    "new_toolpath",
    "__version__",
]
