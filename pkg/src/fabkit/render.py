"""SVG previews: top (XY) and side (XZ) orthographic projections.

Extruding segments are colored on a two-anchor feedrate gradient, travels are
dashed gray, stationary retracts/primes draw as markers. A stats block lists
counts, lengths, net filament, simulated duration, and bounds warnings.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .commands import Segment
from .profiles import MachineProfile

_SLOW_COLOR = (59, 111, 212)
_FAST_COLOR = (212, 59, 59)


def _lerp_color(t: float) -> str:
    r = round(_SLOW_COLOR[0] + (_FAST_COLOR[0] - _SLOW_COLOR[0]) * t)
    g = round(_SLOW_COLOR[1] + (_FAST_COLOR[1] - _SLOW_COLOR[1]) * t)
    b = round(_SLOW_COLOR[2] + (_FAST_COLOR[2] - _SLOW_COLOR[2]) * t)
    return f"#{r:02x}{g:02x}{b:02x}"


@dataclass
class RenderStats:
    segments: int
    extrudes: int
    travels: int
    retracts: int
    extrude_length: float
    travel_length: float
    total_e: float
    duration_s: Optional[float]
    violations: int


def collect_stats(segments: list[Segment], duration_s: Optional[float], violations: int) -> RenderStats:
    return RenderStats(
        segments=len(segments),
        extrudes=sum(1 for s in segments if s.kind == "extrude"),
        travels=sum(1 for s in segments if s.kind == "travel"),
        retracts=sum(1 for s in segments if s.kind == "retract"),
        extrude_length=sum(s.length for s in segments if s.kind == "extrude"),
        travel_length=sum(s.length for s in segments if s.kind == "travel"),
        total_e=sum(s.delta_e for s in segments),
        duration_s=duration_s,
        violations=violations,
    )


class _Panel:
    """One orthographic projection mapped into pixel space."""

    def __init__(self, x_px: float, label: str, width_mm: float, height_mm: float, size_px: float,
                 tag: str = "top"):
        self.x_px = x_px
        self.label = label
        self.tag = tag
        self.width_mm = max(width_mm, 1e-9)
        self.height_mm = max(height_mm, 1e-9)
        self.scale = size_px / max(self.width_mm, self.height_mm)
        self.size_px = size_px

    def to_px(self, u_mm: float, v_mm: float) -> tuple[float, float]:
        # v axis points up in machine space, down in SVG
        return (
            self.x_px + u_mm * self.scale,
            20 + self.size_px - v_mm * self.scale,
        )

    def frame(self) -> str:
        x0, y0 = self.to_px(0, self.height_mm)
        w = self.width_mm * self.scale
        h = self.height_mm * self.scale
        return (
            f'<rect x="{x0:.1f}" y="{y0:.1f}" width="{w:.1f}" height="{h:.1f}" '
            f'fill="none" stroke="#444" stroke-width="1"/>'
            f'<text x="{x0:.1f}" y="{y0 - 6:.1f}" class="label">{self.label}</text>'
        )


def render_svg(
    profile: MachineProfile,
    segments: list[Segment],
    *,
    duration_s: Optional[float] = None,
    violations: Optional[list] = None,
    title: str = "toolpath preview",
) -> str:
    """Render segments against the work envelope; returns the SVG document."""
    violations = violations or []
    stats = collect_stats(segments, duration_s, len(violations))
    panel_px = 360.0
    gap = 40.0
    top = _Panel(20.0, "top view (XY)", profile.max_x, profile.max_y, panel_px, tag="top")
    side = _Panel(20.0 + panel_px * (profile.max_x / max(profile.max_x, profile.max_y)) + gap,
                  "side view (XZ)", profile.max_x, profile.max_z, panel_px, tag="side")
    feeds = [s.feedrate for s in segments if s.kind == "extrude"]
    f_lo = min(feeds) if feeds else 0.0
    f_hi = max(feeds) if feeds else 1.0
    span = (f_hi - f_lo) or 1.0

    body: list[str] = [top.frame(), side.frame()]
    bad_points: set[tuple[float, float, float]] = set()
    for v in violations:
        bad_points.add((v.command_index, v.axis, v.value))

    def violated(seg: Segment) -> bool:
        return any(v.command_index == seg.command_index for v in violations)

    for seg in segments:
        for panel, (u0, v0, u1, v1) in (
            (top, (seg.start.x, seg.start.y, seg.end.x, seg.end.y)),
            (side, (seg.start.x, seg.start.z, seg.end.x, seg.end.z)),
        ):
            x0, y0 = panel.to_px(u0, v0)
            x1, y1 = panel.to_px(u1, v1)
            if seg.kind == "extrude" and seg.length > 0:
                t = (seg.feedrate - f_lo) / span
                body.append(
                    f'<line class="seg extrude {panel.tag}" x1="{x0:.2f}" y1="{y0:.2f}" '
                    f'x2="{x1:.2f}" y2="{y1:.2f}" stroke="{_lerp_color(t)}" stroke-width="1.4"/>'
                )
            elif seg.kind == "travel":
                body.append(
                    f'<line class="seg travel {panel.tag}" x1="{x0:.2f}" y1="{y0:.2f}" '
                    f'x2="{x1:.2f}" y2="{y1:.2f}" stroke="#999" stroke-width="0.8" '
                    f'stroke-dasharray="4 3"/>'
                )
            else:  # stationary retract (or in-place extrusion dot)
                body.append(
                    f'<circle class="seg {seg.kind} {panel.tag}" cx="{x0:.2f}" cy="{y0:.2f}" r="2.2" '
                    f'fill="{"#7a3bd4" if seg.kind == "retract" else _lerp_color(0.5)}"/>'
                )
            if violated(seg):
                body.append(
                    f'<circle class="violation" cx="{x1:.2f}" cy="{y1:.2f}" r="5" '
                    f'fill="none" stroke="#e00" stroke-width="1.5"/>'
                )

    lines = [
        f"segments: {stats.segments} (extrude {stats.extrudes}, travel {stats.travels}, "
        f"retract {stats.retracts})",
        f"extrude length: {stats.extrude_length:.2f} mm   travel length: {stats.travel_length:.2f} mm",
        f"net filament: {stats.total_e:.3f} mm",
    ]
    if stats.duration_s is not None:
        lines.append(f"simulated duration: {stats.duration_s:.2f} s")
    lines.append(f"bounds warnings: {stats.violations}")
    if feeds:
        lines.append(f"feedrate range: {f_lo:.1f} .. {f_hi:.1f} mm/s (blue = slow, red = fast)")
    stats_y = 20 + panel_px + 40
    for i, text in enumerate(lines):
        body.append(f'<text class="stats" x="20" y="{stats_y + 16 * i:.0f}">{text}</text>')

    width = side.x_px + profile.max_x * side.scale + 20
    height = stats_y + 16 * len(lines) + 20
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" height="{height:.0f}" '
        f'viewBox="0 0 {width:.0f} {height:.0f}">'
        f"<style>text{{font:11px monospace;fill:#222}}.label{{font-weight:bold}}</style>"
        f"<title>{title}</title>"
        f'<rect width="100%" height="100%" fill="white"/>'
        + "".join(body)
        + "</svg>"
    )
