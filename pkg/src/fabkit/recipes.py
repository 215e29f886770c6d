"""Parametric toolpath generators: curves, texture painting, bridges, probing.

Every generator is a pure function of (profile, params): identical inputs
produce identical command lists. Degenerate zero-length steps are dropped at
derivation with a diagnostic. All shipped defaults pass a strict bounds check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from .commands import Position
from .profiles import MachineProfile
from .toolpath import Toolpath, default_extrusion, new_toolpath


class RecipeError(ValueError):
    """Raised for parameter combinations a generator cannot honor."""


def _inclusive_samples(span: float, step: float) -> int:
    """Sample count for [0, span] at ``step`` with an inclusive endpoint."""
    if step <= 0:
        raise RecipeError(f"step must be > 0, got {step}")
    return int(math.floor(span / step + 1e-9)) + 1


@dataclass(frozen=True)
class LissajousParams:
    """Closed figure x = A sin(a t + delta), y = B sin(b t), one layer high."""

    amp_x: float = 100.0
    amp_y: float = 100.0
    lobes_x: int = 5
    lobes_y: int = 4
    delta: float = math.pi / 2
    step: float = 2 * math.pi / 200
    z: float = 0.2

    def validate(self) -> None:
        if self.amp_x < 0 or self.amp_y < 0:
            raise RecipeError("amplitudes must be >= 0")
        if self.step <= 0:
            raise RecipeError("step must be > 0")
        if self.z <= 0:
            raise RecipeError("first layer height must be > 0")


def lissajous_point(profile: MachineProfile, params: LissajousParams, t: float) -> tuple[float, float]:
    """Curve sample at parameter ``t``, centered on the bed."""
    return (
        profile.max_x / 2 + params.amp_x * math.sin(params.lobes_x * t + params.delta),
        profile.max_y / 2 + params.amp_y * math.sin(params.lobes_y * t),
    )


def gen_lissajous(profile: MachineProfile, params: LissajousParams = None) -> Toolpath:
    """One extruding move per curve sample; the path begins at the first sample."""
    params = params or LissajousParams()
    params.validate()
    x0, y0 = lissajous_point(profile, params, 0.0)
    tp = new_toolpath(profile, start=Position(x0, y0, params.z), drop_degenerate=True)
    count = _inclusive_samples(2 * math.pi, params.step)
    for i in range(count):
        x, y = lissajous_point(profile, params, i * params.step)
        tp.move_extrude(x, y, params.z)
    return tp


@dataclass(frozen=True)
class VelocityPaintParams:
    """Checkered surface finish on one cube face by alternating print speeds."""

    speed_a: float = 30.0
    speed_b: float = 20.0
    cube_len: float = 20.0
    checker_len: float = 5.0
    layer_height: float = 0.2
    origin: Optional[Position] = None  # default: centered on the bed

    def validate(self) -> None:
        if self.layer_height <= 0:
            raise RecipeError("layer_height must be > 0")
        if not (0 < self.checker_len <= self.cube_len):
            raise RecipeError("need 0 < checker_len <= cube_len")
        if self.speed_a <= 0 or self.speed_b <= 0:
            raise RecipeError("speeds must be > 0")


def painted_speeds(params: VelocityPaintParams, z: float) -> list[float]:
    """Sub-segment speeds for the painted face at height ``z``.

    The checker phase comes from the layer band, floor(z / checker_len) mod 2,
    and alternates along the face, producing the checkerboard.
    """
    n_checks = int(math.ceil(params.cube_len / params.checker_len - 1e-9))
    band = int(math.floor(z / params.checker_len)) % 2
    return [
        params.speed_a if (band + k) % 2 == 1 else params.speed_b
        for k in range(n_checks)
    ]


def gen_velocity_cube(profile: MachineProfile, params: VelocityPaintParams = None) -> Toolpath:
    """Square perimeter per layer; the +x face at the origin edge is painted."""
    params = params or VelocityPaintParams()
    params.validate()
    side = params.cube_len
    origin = params.origin or Position(
        profile.max_x / 2 - side / 2, profile.max_y / 2 - side / 2, 0.0
    )
    x0, y0 = origin.x, origin.y
    tp = new_toolpath(profile, start=Position(x0, y0, origin.z), drop_degenerate=True)
    n_layers = _inclusive_samples(side - params.layer_height, params.layer_height)
    for layer in range(n_layers):
        z = (layer + 1) * params.layer_height
        # seam riser up to the new layer, then the painted face along +x
        tp.move_extrude(x0, y0, z)
        x = x0
        for k, speed in enumerate(painted_speeds(params, z), start=1):
            x = x0 + min(k * params.checker_len, side)
            tp.move_extrude(x, y0, z, speed)
        # remaining three faces at the default speed
        tp.move_extrude(x0 + side, y0 + side, z)
        tp.move_extrude(x0, y0 + side, z)
        tp.move_extrude(x0, y0, z)
    return tp


@dataclass(frozen=True)
class DotBridgeParams:
    """Two over-extruded anchor dots joined by a fast free-hanging bridge."""

    x_start: float = 80.0
    x_end: float = 140.0
    y: float = 110.0
    z: float = 0.2
    dot_height: float = 2.0
    slow_speed: float = 2.0
    fast_speed: float = 25.0
    e_amount: float = 1.0

    def validate(self) -> None:
        if not self.x_end > self.x_start:
            raise RecipeError("x_end must exceed x_start")
        if self.dot_height <= 0:
            raise RecipeError("dot_height must be > 0")
        if not self.fast_speed > self.slow_speed > 0:
            raise RecipeError("need fast_speed > slow_speed > 0")
        if self.e_amount <= 0:
            raise RecipeError("e_amount must be > 0")


def gen_dot_bridge(profile: MachineProfile, params: DotBridgeParams = None) -> Toolpath:
    """Dot, retract/travel, dot, then the bridge back at the fast speed."""
    params = params or DotBridgeParams()
    params.validate()
    tp = new_toolpath(profile, drop_degenerate=True)
    tp.move(params.x_start, params.y, params.z)
    tp.move_extrude(params.x_start, params.y, params.z + params.dot_height,
                    params.slow_speed, params.e_amount)
    tp.move_retract(params.x_end, params.y, params.z)
    tp.move_extrude(params.x_end, params.y, params.z + params.dot_height,
                    params.slow_speed, params.e_amount)
    tp.move_extrude(params.x_start, params.y, params.z + params.dot_height,
                    params.fast_speed)
    return tp


@dataclass(frozen=True)
class WaveParams:
    """Nonplanar cosine wave in the XZ plane with tuned acceleration limits."""

    amplitude: float = 10.0
    x_start: float = 60.0
    x_end: float = 160.0
    x_step: float = 2.0
    y: float = 110.0
    accel_x: float = 500.0
    accel_y: float = 500.0
    accel_z: float = 500.0

    def validate(self) -> None:
        if self.x_step <= 0:
            raise RecipeError("x_step must be > 0")
        if self.amplitude < 0:
            raise RecipeError("amplitude must be >= 0")
        if not self.x_end > self.x_start:
            raise RecipeError("x_end must exceed x_start")
        for a in (self.accel_x, self.accel_y, self.accel_z):
            if a <= 0:
                raise RecipeError("accelerations must be > 0")


def wave_height(params: WaveParams, x: float) -> float:
    theta = (x - params.x_start) / (params.x_end - params.x_start) * (2 * math.pi)
    return params.amplitude * math.cos(theta + math.pi) + params.amplitude


def gen_wave(profile: MachineProfile, params: WaveParams = None) -> Toolpath:
    """Acceleration preamble, then one extruding move per wave sample."""
    params = params or WaveParams()
    params.validate()
    start = Position(params.x_start, params.y, wave_height(params, params.x_start))
    tp = new_toolpath(profile, start=start, drop_degenerate=True)
    tp.set_starting_acceleration(max(params.accel_x, params.accel_y, params.accel_z))
    tp.set_max_acceleration(params.accel_x, params.accel_y, params.accel_z)
    count = _inclusive_samples(params.x_end - params.x_start, params.x_step)
    for i in range(count):
        x = params.x_start + i * params.x_step
        tp.move_extrude(x, params.y, wave_height(params, x))
    return tp


@dataclass(frozen=True)
class HandleParams:
    width: float = 3.0
    layer_count: int = 10
    layer_height: float = 0.2
    arc_samples: int = 33


@dataclass(frozen=True)
class ProbedOverlay:
    """Two operator-captured points on a physical object plus clearances."""

    p1: Position
    p2: Position
    clearance: float = 5.0
    handle: HandleParams = field(default_factory=HandleParams)

    def validate(self, profile: MachineProfile) -> None:
        if self.p1.xyz() == self.p2.xyz():
            raise RecipeError("probed points must differ")
        for label, p in (("p1", self.p1), ("p2", self.p2)):
            for axis, limit in (("x", profile.max_x), ("y", profile.max_y), ("z", profile.max_z)):
                v = getattr(p, axis)
                if not (0 <= v <= limit):
                    raise RecipeError(f"{label}.{axis}={v:g} outside the work envelope")
        if self.clearance < 0:
            raise RecipeError("clearance must be >= 0")
        if self.handle.width <= 0 or self.handle.layer_count < 1:
            raise RecipeError("handle needs width > 0 and at least one layer")

    @property
    def chord_length(self) -> float:
        return self.p1.distance_to(self.p2)


def handle_arc(probe: ProbedOverlay) -> list[tuple[float, float, float]]:
    """Base centerline: straight chord between the probes, arched upward.

    Ends are exactly the probed points; every sample's z stays at or above
    the lower probe so the path never dips into the object.
    """
    p1, p2 = probe.p1, probe.p2
    arch = 0.25 * probe.chord_length
    n = max(probe.handle.arc_samples, 2)
    points = []
    for i in range(n):
        s = i / (n - 1)
        lift = arch * math.sin(math.pi * s)
        points.append((
            p1.x + s * (p2.x - p1.x),
            p1.y + s * (p2.y - p1.y),
            p1.z + s * (p2.z - p1.z) + lift,
        ))
    return points


def gen_overlay_handle(profile: MachineProfile, probe: ProbedOverlay) -> Toolpath:
    """Arched handle between the probed points, layered serpentine.

    Nothing is hard-coded to machine coordinates: re-probing and regenerating
    yields a fresh, consistent program. The requested width is realized by
    over-extruding a single fat bead (explicit feed per move). The authoring
    cursor starts at the post-probe hover point, so no generated segment ever
    drops below the probed surface.
    """
    probe.validate(profile)
    base = handle_arc(probe)
    hover = Position(probe.p2.x, probe.p2.y, probe.p2.z + probe.clearance)
    tp = new_toolpath(profile, start=hover, drop_degenerate=True)
    width_multiplier = probe.handle.width / (2 * profile.nozzle_radius)
    lh = probe.handle.layer_height
    for layer in range(probe.handle.layer_count):
        points = [(x, y, z + layer * lh) for x, y, z in base]
        if layer % 2 == 1:
            points = points[::-1]
        tp.move(*points[0])
        prev = points[0]
        for point in points[1:]:
            feed_len = math.dist(prev, point)
            tp.move_extrude(*point, e_amount=default_extrusion(profile, feed_len) * width_multiplier)
            prev = point
    return tp


def bed_level_tour(profile: MachineProfile, inset: float = 30.0, z: float = 0.2) -> Toolpath:
    """Home, then visit the four leveling corners and the center.

    Each stop is followed by a pause marker the streaming engine holds at
    until the operator resumes; the tour itself never extrudes.
    """
    if not 0 < inset < min(profile.max_x, profile.max_y) / 2:
        raise RecipeError(
            f"inset must be in (0, {min(profile.max_x, profile.max_y) / 2:g}), got {inset:g}"
        )
    stops = [
        (inset, inset),
        (profile.max_x - inset, inset),
        (profile.max_x - inset, profile.max_y - inset),
        (inset, profile.max_y - inset),
        (profile.max_x / 2, profile.max_y / 2),
    ]
    tp = new_toolpath(profile)
    tp.auto_home()
    for x, y in stops:
        tp.move(x, y, z)
        tp.raw("M0")  # host-side pause point: wait for operator acknowledgment
    return tp
