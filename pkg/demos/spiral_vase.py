#!/usr/bin/env python3
"""Spiral vase demo: a continuously rising single-wall cylinder with a wavy rim.

The classic one-path print: the nozzle climbs a little with every step around
the perimeter, so the whole vase is one uninterrupted extrusion. Tweak the
knobs below and re-run; pipe the output to a file or straight into the CLI:

    python demos/spiral_vase.py > vase.gcode
    fab simulate vase.gcode
    fab stream vase.gcode --device virtual
"""

import math
import sys

from fabkit import ENDER3, new_toolpath
from fabkit.commands import Position
from fabkit.gcode import serialize_program

RADIUS = 30.0          # mm, vase radius
HEIGHT = 60.0          # mm, total rise
LAYER_HEIGHT = 0.25    # mm per full turn
STEPS_PER_TURN = 96
RIPPLE = 1.5           # mm of radial wobble near the rim
RIPPLE_LOBES = 7


def vase_point(i: int) -> tuple[float, float, float]:
    theta = 2 * math.pi * i / STEPS_PER_TURN
    z = LAYER_HEIGHT * i / STEPS_PER_TURN + 0.2
    rise = min(z / HEIGHT, 1.0)
    wobble = RIPPLE * rise**3 * math.sin(RIPPLE_LOBES * theta)
    r = RADIUS + wobble
    cx, cy = ENDER3.max_x / 2, ENDER3.max_y / 2
    return cx + r * math.cos(theta), cy + r * math.sin(theta), z


def build():
    turns = int(HEIGHT / LAYER_HEIGHT)
    x0, y0, z0 = vase_point(0)
    tp = new_toolpath(ENDER3, start=Position(x0, y0, z0), drop_degenerate=True)
    for i in range(turns * STEPS_PER_TURN + 1):
        x, y, z = vase_point(i)
        tp.move_extrude(x, y, z)
    return tp


if __name__ == "__main__":
    sys.stdout.write(serialize_program(build()))
