"""The demo script ships as an example; it is only checked for bounds and determinism."""

import subprocess
import sys
from pathlib import Path

from fabkit.gcode import parse_program
from fabkit.profiles import ENDER3
from fabkit.toolpath import segment_violations

DEMO = Path(__file__).resolve().parent.parent / "demos" / "spiral_vase.py"


def run_demo() -> str:
    result = subprocess.run([sys.executable, str(DEMO)], capture_output=True, text=True)
    assert result.returncode == 0, result.stderr
    return result.stdout


def test_demo_is_deterministic_and_in_bounds():
    first = run_demo()
    second = run_demo()
    assert first == second
    parsed = parse_program(first)
    assert not parsed.diagnostics
    assert segment_violations(ENDER3, parsed.segments) == []
