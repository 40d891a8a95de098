"""Spatially invariant lattice kernels built from local rule templates.

A template describes the robot's motion for heading ``U`` only.  Every rule
is keyed by the *wall context* of the cell, i.e. which of the four sides
(relative to the heading: front, right, back, left) touch the lattice
boundary, and by the action.  Outcomes are given in the heading frame:
``move = (right, forward)`` steps and a resulting heading expressed as if the
robot had been facing ``U``.  Expansion rotates each rule into the actual
heading and cell.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from .mdp import (
    ORIENTATIONS,
    ActionSpace,
    StateSet,
    StateSpace,
    TransitionKernel,
    validate,
)

SIDES = ("front", "right", "back", "left")
# heading index offsets (R=0, U=1, L=2, D=3 turn counter-clockwise)
_SIDE_OFFSET = {"front": 0, "right": -1, "back": 2, "left": 1}
_REL_HEADING = {"U": 0, "R": -1, "L": 1, "D": 2}
# grid deltas with y growing downward
_DELTA = {0: (1, 0), 1: (0, -1), 2: (-1, 0), 3: (0, 1)}

# contexts that occur on a lattice at least 3 cells wide in both directions
CONTEXTS = (
    frozenset(),
    frozenset({"front"}),
    frozenset({"right"}),
    frozenset({"back"}),
    frozenset({"left"}),
    frozenset({"front", "right"}),
    frozenset({"right", "back"}),
    frozenset({"back", "left"}),
    frozenset({"left", "front"}),
)


class WorldError(ValueError):
    """Invalid world description; ``field`` locates the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class MissingRule(KeyError):
    def __init__(self, context: frozenset, heading: str, action: str):
        walls = "+".join(sorted(context)) or "interior"
        super().__init__(f"no rule for context={walls}, heading={heading}, action={action}")
        self.context = context
        self.heading = heading
        self.action = action


@dataclass(frozen=True)
class Outcome:
    right: int
    forward: int
    heading: str
    p: float


def context_name(context: frozenset) -> str:
    return "+".join(s for s in SIDES if s in context) or "interior"


def parse_context(name: str) -> frozenset:
    if name == "interior":
        return frozenset()
    parts = frozenset(name.split("+"))
    unknown = parts - set(SIDES)
    if unknown:
        raise ValueError(f"unknown wall side(s) {sorted(unknown)} in context {name!r}")
    return parts


@dataclass(frozen=True)
class LocalRuleTemplate:
    name: str
    actions: tuple[str, ...]
    rules: Mapping[tuple[frozenset, str], tuple[Outcome, ...]]

    def rule(self, context: frozenset, action: str, heading: str = "U") -> tuple[Outcome, ...]:
        try:
            return self.rules[(context, action)]
        except KeyError:
            raise MissingRule(context, heading, action) from None

    def check(self) -> list[str]:
        """Problems with rule normalization or moves that cross a wall."""
        problems = []
        for (ctx, action), outcomes in self.rules.items():
            where = f"{context_name(ctx)}/{action}"
            total = sum(o.p for o in outcomes)
            if abs(total - 1.0) > 1e-12:
                problems.append(f"{where}: probabilities sum to {total!r}")
            for o in outcomes:
                if o.p < 0:
                    problems.append(f"{where}: negative probability {o.p}")
                if o.heading not in _REL_HEADING:
                    problems.append(f"{where}: unknown heading {o.heading!r}")
                if abs(o.right) > 1 or abs(o.forward) > 1:
                    problems.append(f"{where}: move {(o.right, o.forward)} longer than one cell")
                if (o.forward > 0 and "front" in ctx) or (o.forward < 0 and "back" in ctx) \
                        or (o.right > 0 and "right" in ctx) or (o.right < 0 and "left" in ctx):
                    problems.append(f"{where}: move {(o.right, o.forward)} leaves the lattice")
        return problems

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "actions": list(self.actions),
            "rules": [
                {
                    "context": context_name(ctx),
                    "action": action,
                    "outcomes": [
                        {"move": [o.right, o.forward], "heading": o.heading, "p": o.p}
                        for o in outcomes
                    ],
                }
                for (ctx, action), outcomes in self.rules.items()
            ],
        }

    @classmethod
    def from_json(cls, doc: Mapping, where: str = "template") -> "LocalRuleTemplate":
        try:
            actions = tuple(doc["actions"])
            rules = {}
            for i, r in enumerate(doc["rules"]):
                key = (parse_context(r["context"]), r["action"])
                if r["action"] not in actions:
                    raise WorldError(f"{where}.rules[{i}].action", f"unknown action {r['action']!r}")
                if key in rules:
                    raise WorldError(f"{where}.rules[{i}]", "duplicate rule")
                rules[key] = tuple(
                    Outcome(int(o["move"][0]), int(o["move"][1]), str(o["heading"]), float(o["p"]))
                    for o in r["outcomes"]
                )
        except WorldError:
            raise
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise WorldError(where, f"malformed template ({exc!r})") from None
        tpl = cls(str(doc.get("name", "custom")), actions, rules)
        problems = tpl.check()
        if problems:
            raise WorldError(where, "; ".join(problems))
        return tpl


def _o(right, forward, heading, p):
    return (Outcome(right, forward, heading, p),)


def _ex1_rules() -> dict:
    straight = _o(0, 1, "U", 1.0)
    to_right = _o(1, 0, "R", 1.0)
    rules = {}
    for ctx in CONTEXTS:
        # forward
        if "front" not in ctx:
            fwd = straight
        elif "right" in ctx:
            fwd = (Outcome(-1, 0, "L", 0.3), Outcome(0, 0, "R", 0.7))
        elif "left" in ctx:
            # mirror image of the wall-on-the-right corner
            fwd = (Outcome(1, 0, "R", 0.3), Outcome(0, 0, "L", 0.7))
        else:
            fwd = (Outcome(1, 0, "R", 0.5), Outcome(-1, 0, "L", 0.5))
        # turn right
        if "right" not in ctx:
            tr = to_right
        elif "front" in ctx:
            tr = (Outcome(0, 0, "R", 0.7), Outcome(0, -1, "D", 0.3))
        elif "back" in ctx:
            tr = (Outcome(0, 0, "R", 0.7), Outcome(0, 1, "U", 0.3))
        else:
            tr = (Outcome(0, 1, "U", 0.6), Outcome(0, -1, "D", 0.4))
        rules[(ctx, "forward")] = fwd
        rules[(ctx, "turn_right")] = tr
    return rules


def template_ex1() -> LocalRuleTemplate:
    """Deterministic interior motion with slip only along the boundary."""
    return LocalRuleTemplate("ex1", ("forward", "turn_right"), _ex1_rules())


def template_ex3() -> LocalRuleTemplate:
    """Like :func:`template_ex1` but with noisy motion away from the boundary.

    Interior forward lands on the forward cell facing U/L/R with
    probabilities .6/.2/.2; interior turn-right lands on the right cell
    (.7) or the forward-right diagonal (.3), facing R either way.  Any cell
    touching a wall keeps the boundary rules of ``ex1``.
    """
    rules = _ex1_rules()
    interior = frozenset()
    rules[(interior, "forward")] = (
        Outcome(0, 1, "U", 0.6),
        Outcome(0, 1, "L", 0.2),
        Outcome(0, 1, "R", 0.2),
    )
    rules[(interior, "turn_right")] = (Outcome(1, 0, "R", 0.7), Outcome(1, 1, "R", 0.3))
    return LocalRuleTemplate("ex3", ("forward", "turn_right"), rules)


BUILTIN_TEMPLATES = {"ex1": template_ex1, "ex3": template_ex3}


@dataclass(frozen=True)
class WorldSpec:
    nx: int
    ny: int
    template: LocalRuleTemplate
    forbidden_cells: tuple[tuple[int, int], ...] = ()
    region_cells: tuple[tuple[int, int], ...] | None = None
    alpha: float | None = None
    name: str = "world"
    template_ref: str | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "forbidden_cells", tuple(tuple(map(int, c)) for c in self.forbidden_cells))
        if self.region_cells is not None:
            object.__setattr__(self, "region_cells", tuple(tuple(map(int, c)) for c in self.region_cells))
        if self.nx < 3 or self.ny < 3:
            raise WorldError("nx/ny", f"lattice must be at least 3x3, got {self.nx}x{self.ny}")
        for label, cells in (("forbidden", self.forbidden_cells), ("region.cells", self.region_cells or ())):
            for i, (x, y) in enumerate(cells):
                if not (1 <= x <= self.nx and 1 <= y <= self.ny):
                    raise WorldError(f"{label}[{i}]", f"cell ({x}, {y}) outside {self.nx}x{self.ny} lattice")
        if self.alpha is not None and not 0.0 < self.alpha < 1.0:
            raise WorldError("region.alpha", f"alpha must lie in (0, 1), got {self.alpha}")

    @property
    def states(self) -> StateSpace:
        return StateSpace(self.nx, self.ny)

    @property
    def actions(self) -> ActionSpace:
        return ActionSpace(self.template.actions)

    def with_forbidden(self, cells: Iterable[tuple[int, int]]) -> "WorldSpec":
        return WorldSpec(self.nx, self.ny, self.template, tuple(cells), self.region_cells,
                         self.alpha, self.name, self.template_ref)

    def to_json(self) -> dict:
        doc = {
            "schema_version": 1,
            "name": self.name,
            "nx": self.nx,
            "ny": self.ny,
            "template": self.template_ref if self.template_ref else self.template.to_json(),
            "forbidden": [list(c) for c in self.forbidden_cells],
        }
        if self.region_cells is not None:
            doc["region"] = {"cells": [list(c) for c in self.region_cells], "alpha": self.alpha}
        return doc


def world_from_json(doc: Mapping) -> WorldSpec:
    if not isinstance(doc, Mapping):
        raise WorldError("<root>", "world file must contain a JSON object")
    for key in ("nx", "ny", "template"):
        if key not in doc:
            raise WorldError(key, "required field missing")
    nx, ny = doc["nx"], doc["ny"]
    for key, v in (("nx", nx), ("ny", ny)):
        if not isinstance(v, int) or isinstance(v, bool):
            raise WorldError(key, f"expected an integer, got {v!r}")

    tpl_doc = doc["template"]
    if isinstance(tpl_doc, str):
        if tpl_doc not in BUILTIN_TEMPLATES:
            raise WorldError("template", f"unknown built-in template {tpl_doc!r}; known: {sorted(BUILTIN_TEMPLATES)}")
        template, ref = BUILTIN_TEMPLATES[tpl_doc](), tpl_doc
    elif isinstance(tpl_doc, Mapping):
        template, ref = LocalRuleTemplate.from_json(tpl_doc), None
    else:
        raise WorldError("template", "expected a built-in name or an inline template object")

    forbidden = _cells(doc.get("forbidden", []), "forbidden")
    region_cells = alpha = None
    if doc.get("region") is not None:
        region = doc["region"]
        if not isinstance(region, Mapping):
            raise WorldError("region", "expected an object")
        if "cells" in region:
            region_cells = _cells(region["cells"], "region.cells")
        elif "rect" in region:
            try:
                x0, x1, y0, y1 = (int(v) for v in region["rect"])
            except (TypeError, ValueError):
                raise WorldError("region.rect", "expected [x_min, x_max, y_min, y_max]") from None
            region_cells = tuple((x, y) for y in range(y0, y1 + 1) for x in range(x0, x1 + 1))
        else:
            raise WorldError("region", "expected 'cells' or 'rect'")
        alpha = region.get("alpha")
        if not isinstance(alpha, (int, float)) or isinstance(alpha, bool):
            raise WorldError("region.alpha", f"expected a number, got {alpha!r}")
        alpha = float(alpha)
    return WorldSpec(nx, ny, template, forbidden, region_cells, alpha,
                     str(doc.get("name", "world")), ref)


def _cells(raw, where: str) -> tuple[tuple[int, int], ...]:
    if not isinstance(raw, list):
        raise WorldError(where, "expected a list of [x, y] pairs")
    out = []
    for i, c in enumerate(raw):
        if not (isinstance(c, list) and len(c) == 2 and all(isinstance(v, int) for v in c)):
            raise WorldError(f"{where}[{i}]", f"expected [x, y] integers, got {c!r}")
        out.append((c[0], c[1]))
    return tuple(out)


def load_world(path: str | Path) -> WorldSpec:
    """Read a world JSON file.

    Syntax errors surface as :class:`WorldError` with line and column.
    """
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise WorldError(f"line {exc.lineno} column {exc.colno}", exc.msg) from None
    return world_from_json(doc)


def wall_context(space: StateSpace, x: int, y: int, h: int) -> frozenset:
    walls = set()
    for side, off in _SIDE_OFFSET.items():
        dx, dy = _DELTA[(h + off) % 4]
        if not (1 <= x + dx <= space.nx and 1 <= y + dy <= space.ny):
            walls.add(side)
    return frozenset(walls)


def expand_kernel(spec: WorldSpec) -> TransitionKernel:
    """Instantiate the template on every cell and heading of the lattice."""
    space, actions, tpl = spec.states, spec.actions, spec.template
    rows = []
    for s in range(space.size):
        x, y, label = space.coords(s)
        h = ORIENTATIONS.index(label)
        ctx = wall_context(space, x, y, h)
        fx, fy = _DELTA[h]
        rx, ry = _DELTA[(h - 1) % 4]
        for action in actions.labels:
            acc: dict[int, float] = {}
            for o in tpl.rule(ctx, action, label):
                nx_ = x + o.right * rx + o.forward * fx
                ny_ = y + o.right * ry + o.forward * fy
                if not (1 <= nx_ <= space.nx and 1 <= ny_ <= space.ny):
                    raise WorldError(
                        f"template {tpl.name}",
                        f"rule {context_name(ctx)}/{action} moves ({x}, {y}, {label}) off the lattice",
                    )
                t = space.index(nx_, ny_, (h + _REL_HEADING[o.heading]) % 4)
                acc[t] = acc.get(t, 0.0) + o.p
            rows.append([(t, p) for t, p in acc.items() if p > 0.0])
    kernel = TransitionKernel.from_rows(space, actions, rows)
    problems = validate(kernel)
    if problems:
        raise WorldError(f"template {tpl.name}", "; ".join(map(str, problems[:5])))
    return kernel


def cells_to_states(space: StateSpace, cells: Iterable[tuple[int, int]], where: str = "cells") -> StateSet:
    ids = []
    for i, (x, y) in enumerate(cells):
        if not (1 <= x <= space.nx and 1 <= y <= space.ny):
            raise WorldError(f"{where}[{i}]", f"cell ({x}, {y}) outside {space.nx}x{space.ny} lattice")
        ids.extend(space.cell_states(x, y))
    return StateSet.from_ids(space.size, ids)


def forbidden_from_cells(spec: WorldSpec) -> StateSet:
    """All four headings of every listed forbidden cell."""
    return cells_to_states(spec.states, spec.forbidden_cells, "forbidden")


def region_states(spec: WorldSpec) -> StateSet | None:
    if spec.region_cells is None:
        return None
    return cells_to_states(spec.states, spec.region_cells, "region.cells")
