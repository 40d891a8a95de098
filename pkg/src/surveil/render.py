"""Deterministic SVG heatmaps of state sets and state pmfs.

Each cell holds four triangles, one per heading.  A triangle has its apex
at the cell center and its base on the cell edge the heading points to.
Forbidden cells are filled red.  Supported states are blue, either
uniformly (set mode) or with opacity ``f(s) / max f`` (pmf mode).
"""

from __future__ import annotations

import xml.etree.ElementTree as ET
from typing import Iterable

import numpy as np

from .mdp import DimensionMismatch, StateSet, StateSpace

CELL = 40
MARGIN = 4
BLUE = "#1f4fbf"
RED = "#d62728"
GRID = "#888888"


def _num(v: float) -> str:
    return f"{v:.2f}".rstrip("0").rstrip(".")


def _triangle(x: int, y: int, h: int) -> str:
    x0, y0 = MARGIN + (x - 1) * CELL, MARGIN + (y - 1) * CELL
    x1, y1 = x0 + CELL, y0 + CELL
    c = (x0 + CELL / 2, y0 + CELL / 2)
    base = {
        0: ((x1, y0), (x1, y1)),  # R
        1: ((x0, y0), (x1, y0)),  # U
        2: ((x0, y1), (x0, y0)),  # L
        3: ((x1, y1), (x0, y1)),  # D
    }[h]
    pts = (c,) + base
    return " ".join(f"{_num(a)},{_num(b)}" for a, b in pts)


def render_svg(
    space: StateSpace,
    forbidden: StateSet,
    *,
    pmf=None,
    states: StateSet | None = None,
    title: str | None = None,
) -> str:
    """SVG text for a lattice.

    Give ``pmf`` (a state pmf of length ``|S|``) for a heatmap or ``states``
    for a uniformly shaded set; with neither, only the forbidden cells are
    drawn.  Element order is fixed, so equal inputs give equal bytes.
    """
    n = space.size
    if forbidden.universe != n:
        raise DimensionMismatch("state", forbidden.universe, n)
    if pmf is not None and states is not None:
        raise ValueError("give either pmf or states, not both")
    mass = np.zeros(n)
    if pmf is not None:
        mass = np.asarray(pmf, dtype=float)
        if mass.shape != (n,):
            raise DimensionMismatch("state", mass.shape[0] if mass.ndim else 0, n)
        shaded = mass > 0.0
    elif states is not None:
        if states.universe != n:
            raise DimensionMismatch("state", states.universe, n)
        shaded = states.mask
    else:
        shaded = np.zeros(n, dtype=bool)
    peak = float(mass.max()) if pmf is not None and shaded.any() else 1.0

    w = 2 * MARGIN + space.nx * CELL
    h = 2 * MARGIN + space.ny * CELL
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">',
    ]
    if title:
        esc = title.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
        out.append(f"<title>{esc}</title>")
    out.append(f'<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>')
    for y in range(1, space.ny + 1):
        for x in range(1, space.nx + 1):
            ids = space.cell_states(x, y)
            if all(forbidden.mask[s] for s in ids):
                out.append(
                    f'<rect class="forbidden" x="{MARGIN + (x - 1) * CELL}" y="{MARGIN + (y - 1) * CELL}" '
                    f'width="{CELL}" height="{CELL}" fill="{RED}"/>'
                )
                continue
            for hd, s in enumerate(ids):
                pts = _triangle(x, y, hd)
                if forbidden.mask[s]:
                    out.append(f'<polygon class="forbidden" data-state="{s}" points="{pts}" fill="{RED}"/>')
                elif shaded[s]:
                    if pmf is not None:
                        op = mass[s] / peak
                        out.append(
                            f'<polygon class="state" data-state="{s}" data-mass="{float(mass[s])!r}" '
                            f'points="{pts}" fill="{BLUE}" fill-opacity="{op:.4f}" stroke="{GRID}" stroke-width="0.5"/>'
                        )
                    else:
                        out.append(
                            f'<polygon class="state" data-state="{s}" points="{pts}" fill="{BLUE}" '
                            f'stroke="{GRID}" stroke-width="0.5"/>'
                        )
                else:
                    out.append(f'<polygon points="{pts}" fill="none" stroke="{GRID}" stroke-width="0.5"/>')
    for x in range(space.nx + 1):
        px = MARGIN + x * CELL
        out.append(f'<line x1="{px}" y1="{MARGIN}" x2="{px}" y2="{h - MARGIN}" stroke="black"/>')
    for y in range(space.ny + 1):
        py = MARGIN + y * CELL
        out.append(f'<line x1="{MARGIN}" y1="{py}" x2="{w - MARGIN}" y2="{py}" stroke="black"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def shaded_intensity(svg: str) -> dict[int, float]:
    """Per-state blue intensity read back from an SVG made by :func:`render_svg`.

    Heatmap triangles carry their exact mass in ``data-mass``; the intensity
    is that mass over the largest one (``fill-opacity`` is its rounded
    display value).  Set-mode triangles have intensity 1.
    """
    root = ET.fromstring(svg)
    raw: dict[int, float] = {}
    for el in root.iter("{http://www.w3.org/2000/svg}polygon"):
        if el.get("class") == "state":
            raw[int(el.get("data-state"))] = float(el.get("data-mass", "1"))
    peak = max(raw.values(), default=1.0)
    return {s: v / peak for s, v in raw.items()}


def intensity_fraction(svg: str, states: Iterable[int]) -> float:
    """Share of total blue intensity falling on ``states``."""
    vals = shaded_intensity(svg)
    total = sum(vals.values())
    if total <= 0.0:
        return 0.0
    wanted = set(int(s) for s in states)
    return sum(v for s, v in vals.items() if s in wanted) / total
