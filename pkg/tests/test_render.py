from fabkit.recipes import gen_lissajous
from fabkit.render import render_svg
from fabkit.toolpath import new_toolpath, segment_violations


def test_lissajous_draws_200_edges_per_view(ender3):
    tp = gen_lissajous(ender3)
    svg = render_svg(ender3, tp.segments)
    assert svg.count('class="seg extrude top"') == 200
    assert svg.count('class="seg extrude side"') == 200
    assert svg.startswith("<svg") and svg.endswith("</svg>")


def test_empty_program_yields_valid_canvas(ender3):
    svg = render_svg(ender3, [])
    assert "<svg" in svg and "</svg>" in svg
    assert "segments: 0" in svg
    assert 'class="seg' not in svg
    assert "net filament: 0.000 mm" in svg


def test_violation_highlight_and_warning_count(ender3):
    tp = new_toolpath(ender3, bounds_mode="permissive").move(230, 10, 5)
    violations = segment_violations(ender3, tp.segments)
    svg = render_svg(ender3, tp.segments, violations=violations)
    assert svg.count('class="violation"') >= 1
    assert "bounds warnings: 1" in svg


def test_feedrate_legend_and_duration(ender3):
    tp = gen_lissajous(ender3)
    svg = render_svg(ender3, tp.segments, duration_s=12.34)
    assert "simulated duration: 12.34 s" in svg
    assert "feedrate range" in svg


def test_travel_drawn_dashed_and_retract_marked(ender3):
    tp = new_toolpath(ender3)
    tp.move_extrude(10, 10, 0.2).move_retract(50, 10, 0.2)
    svg = render_svg(ender3, tp.segments)
    assert "stroke-dasharray" in svg
    assert svg.count('class="seg retract top"') == 1
