import xml.etree.ElementTree as ET

import numpy as np
import pytest

from surveil.mdp import DimensionMismatch, StateSet, StateSpace
from surveil.render import CELL, MARGIN, intensity_fraction, render_svg, shaded_intensity
from helpers import solved

NS = "{http://www.w3.org/2000/svg}"


def parse(svg):
    return ET.fromstring(svg)


def test_example1_heatmap_counts():
    s = solved("ex1")
    svg = render_svg(s.spec.states, s.forbidden, pmf=s.fs)
    root = parse(svg)
    red = [e for e in root.iter(NS + "rect") if e.get("class") == "forbidden"]
    blue = [e for e in root.iter(NS + "polygon") if e.get("class") == "state"]
    assert len(red) == 5
    assert len(blue) == 40
    assert sum(1 for e in root.iter(NS + "polygon")) == 20 * 4


def test_heatmap_intensity_tracks_mass():
    s = solved("ex2")
    vals = shaded_intensity(render_svg(s.spec.states, s.forbidden, pmf=s.fs))
    peak = s.fs.max()
    for st, v in vals.items():
        assert v == pytest.approx(s.fs[st] / peak, rel=1e-12)


def test_example3_intensity_concentrates_in_region():
    s = solved("ex3")
    svg = render_svg(s.spec.states, s.forbidden, pmf=s.fs)
    assert intensity_fraction(svg, s.region.ids) >= 0.75


def test_set_mode_is_uniform():
    s = solved("ex2")
    svg = render_svg(s.spec.states, s.forbidden, states=s.program.oracle_set)
    vals = shaded_intensity(svg)
    assert len(vals) == 34 and set(vals.values()) == {1.0}


def test_empty_support_draws_only_red():
    s = solved("ex1")
    root = parse(render_svg(s.spec.states, s.forbidden, states=StateSet.empty(100)))
    assert not [e for e in root.iter(NS + "polygon") if e.get("class") == "state"]
    assert len([e for e in root.iter(NS + "rect") if e.get("class") == "forbidden"]) == 5


def test_triangle_geometry_follows_heading():
    space = StateSpace(3, 3)
    f = np.zeros(space.size)
    f[space.index(2, 2, "R")] = 1.0
    root = parse(render_svg(space, StateSet.empty(space.size), pmf=f))
    (tri,) = [e for e in root.iter(NS + "polygon") if e.get("class") == "state"]
    pts = [tuple(map(float, p.split(","))) for p in tri.get("points").split()]
    x0, y0 = MARGIN + CELL, MARGIN + CELL
    assert pts[0] == (x0 + CELL / 2, y0 + CELL / 2)  # apex at the centre
    assert {pts[1], pts[2]} == {(x0 + CELL, y0), (x0 + CELL, y0 + CELL)}  # base on the right edge


def test_output_is_deterministic():
    s = solved("ex2")
    a = render_svg(s.spec.states, s.forbidden, pmf=s.fs, title="x")
    b = render_svg(s.spec.states, s.forbidden, pmf=s.fs.copy(), title="x")
    assert a == b


def test_dimension_mismatch():
    s = solved("ex1")
    with pytest.raises(DimensionMismatch):
        render_svg(s.spec.states, s.forbidden, pmf=np.zeros(99))
    with pytest.raises(DimensionMismatch):
        render_svg(StateSpace(6, 5), s.forbidden)
    with pytest.raises(DimensionMismatch):
        render_svg(s.spec.states, s.forbidden, states=StateSet.empty(4))
