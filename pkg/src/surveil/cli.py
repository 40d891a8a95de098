"""Command line front end: solve, oracle, deploy, simulate, render, pipeline.

Exit codes: 0 success, 1 input or runtime error, 2 infeasible.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import statistics
import sys
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, worlds
from .deploy import NothingToSurveil, plan_deployment, safe_partition
from .gridworld import MissingRule, WorldError, WorldSpec, expand_kernel, forbidden_from_cells, load_world, region_states
from .maxent import ParameterError, DEFAULT_MAX_ITER, DEFAULT_TOL, solve_world_program
from .mdp import DimensionMismatch, JointPmf, Policy, StateSet, TransitionKernel, compose_closed_loop
from .oracle import recurrent_actions
from .render import render_svg
from .serialize import (
    SCHEMA_VERSION, FormatError, dumps, pmf_from_json, pmf_to_json, policy_from_json, policy_to_json, read_json,
)
from .sim import fleet_run, occupancy

log = logging.getLogger("surveil")

EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE = 0, 1, 2


class Infeasible(Exception):
    pass


@dataclass
class World:
    arg: str
    path: Path
    spec: WorldSpec
    kernel: TransitionKernel
    forbidden: StateSet
    region: StateSet | None

    @property
    def space(self):
        return self.kernel.states


def load(arg: str) -> World:
    path = Path(arg)
    if not path.exists() and arg in worlds.NAMES:
        path = worlds.path(arg)
    if not path.exists():
        raise FileNotFoundError(f"world file not found: {arg}")
    spec = load_world(path)
    kernel = expand_kernel(spec)
    return World(arg, path, spec, kernel, forbidden_from_cells(spec), region_states(spec))


def label(world: World, s: int) -> list:
    x, y, theta = world.space.coords(int(s))
    return [x, y, theta]


def sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


class Outputs:
    """Collects written files so the manifest can list them."""

    def __init__(self, root: str):
        self.root = Path(root)
        self.written: list[str] = []
        self.inputs: dict[str, str] = {}

    def json(self, name: str, doc) -> None:
        self.text(name, dumps(doc))

    def text(self, name: str, text: str) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        (self.root / name).write_text(text, encoding="utf-8")
        if name not in self.written:
            self.written.append(name)

    def manifest(self, command: str, args, world: World, planned=None, dry_run=False) -> None:
        params = {
            k: v for k, v in sorted(vars(args).items())
            if k not in ("func", "command", "out", "world", "json", "verbose") and v is not None
        }
        doc = {
            "schema_version": SCHEMA_VERSION,
            "kind": "manifest",
            "tool": "surveil",
            "version": __version__,
            "subcommand": command,
            "params": params,
            "world": world.arg,
            "input_sha256": {"world": sha256(world.path), **self.inputs},
            "outputs": sorted(planned if planned is not None else self.written),
            "dry_run": dry_run,
            "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        }
        self.root.mkdir(parents=True, exist_ok=True)
        (self.root / "manifest.json").write_text(dumps(doc), encoding="utf-8")


# ---------------------------------------------------------------- stages

def run_solve(world: World, args, out: Outputs | None):
    region = None
    alpha = getattr(args, "region_alpha", None)
    if world.region is not None:
        region = (world.region, world.spec.alpha if alpha is None else alpha)
    elif alpha is not None:
        raise WorldError("region", "--region-alpha given but the world defines no region")
    f, policy, report, program = solve_world_program(
        world.kernel, world.forbidden, region,
        prerestrict=not getattr(args, "no_prerestrict", False),
        tol=args.tol,
        max_iter=getattr(args, "max_iter", DEFAULT_MAX_ITER),
    )
    doc = {
        "schema_version": SCHEMA_VERSION,
        "kind": "solve_report",
        "world": world.spec.name,
        "status": report.status,
        "message": report.message,
        "entropy": report.entropy,
        "stationarity_residual": report.stationarity_residual,
        "normalization_residual": report.normalization_residual,
        "duality_gap": report.duality_gap,
        "forbidden_mass": report.forbidden_mass,
        "region_alpha": None if region is None else region[1],
        "region_mass": report.region_mass,
        "region_multiplier": report.region_multiplier,
        "iterations": report.iterations,
        "n_active": report.n_active,
        "prerestricted": report.prerestricted,
        "oracle_size": len(program.oracle_set),
    }
    support = None
    if f is not None:
        fs = f.values.sum(axis=1)
        cut = 0.0 if program.prerestricted else program.eps_supp
        support = StateSet(fs > cut)
        doc["support_size"] = len(support)
        doc["support"] = [label(world, s) for s in support.ids]
    else:
        doc["support_size"] = 0
        doc["support"] = []
    if out is not None:
        if f is not None:
            out.json("f_star.json", pmf_to_json(f))
            out.json("policy.json", policy_to_json(policy))
        out.json("report.json", doc)
    if f is None:
        raise Infeasible(report.message)
    return f, policy, support, doc


def run_oracle(world: World, out: Outputs | None):
    allowed, partition = recurrent_actions(world.kernel, world.forbidden)
    doc = {
        "schema_version": SCHEMA_VERSION,
        "kind": "oracle",
        "world": world.spec.name,
        "size": len(partition.union),
        "n_classes": partition.n_classes,
        "class_sizes": [len(c) for c in partition.classes],
        "classes": [[label(world, s) for s in c.ids] for c in partition.classes],
        "allowed_pairs": int(allowed.mask.sum()),
    }
    if out is not None:
        out.json("oracle.json", doc)
    return partition, doc


def run_deploy(world: World, policy: Policy, out: Outputs | None):
    partition = safe_partition(world.kernel, policy, world.forbidden)
    doc = {
        "schema_version": SCHEMA_VERSION,
        "kind": "deployment",
        "world": world.spec.name,
    }
    try:
        plan = plan_deployment(partition)
    except NothingToSurveil as exc:
        doc["message"] = str(exc)
        if out is not None:
            out.json("deployment.json", doc)
        raise Infeasible(str(exc)) from None
    doc.update({
        "r": plan.r,
        "coverage_size": len(plan.coverage),
        "class_sizes": [len(c) for c in plan.classes],
        "initial_states": [label(world, s) for s, _ in plan.assignments],
        "classes": [[label(world, s) for s in c.ids] for c in plan.classes],
    })
    if out is not None:
        out.json("deployment.json", doc)
    return plan, doc


def run_simulate(world: World, policy: Policy, f: JointPmf, args, out: Outputs | None):
    chain = compose_closed_loop(world.kernel, policy)
    fs = f.values.sum(axis=1)
    plan, _ = run_deploy(world, policy, None)
    if args.robots == "single":
        plan = type(plan)(1, plan.assignments[:1], plan.classes[0], plan.classes[:1])
    runs = []
    rows = []
    l1s = []
    bad = escapes = 0
    for j in range(args.seeds):
        seed = args.seed + j
        run = fleet_run(chain, plan, args.steps, seed, world.forbidden)
        robots = []
        for i, ((s0, k), traj) in enumerate(zip(plan.assignments, run.trajectories)):
            cls = plan.classes[k]
            st = occupancy(traj, fs, cls)
            l1s.append(st.l1)
            bad += traj.forbidden_visits
            escapes += run.escaped[i]
            robots.append({
                "robot": i,
                "stream": traj.stream,
                "initial": label(world, s0),
                "class": k,
                "l1": st.l1,
                "max_abs": st.max_abs,
                "class_mass_reference": st.reference_class_mass,
                "class_mass_empirical": st.empirical_class_mass,
                "forbidden_visits": traj.forbidden_visits,
                "left_class": run.escaped[i],
            })
            for s in cls.ids:
                rows.append([seed, i, int(s), *label(world, s), int(traj.visits[s]),
                             float(st.conditional[s]), float(st.reference[s])])
        runs.append({"seed": seed, "robots": robots, "unvisited": len(run.unvisited)})
    doc = {
        "schema_version": SCHEMA_VERSION,
        "kind": "occupancy",
        "world": world.spec.name,
        "steps": args.steps,
        "r": plan.r,
        "runs": runs,
        "summary": {
            "median_l1": statistics.median(l1s),
            "max_l1": max(l1s),
            "forbidden_visits": bad,
            "escapes": int(escapes),
        },
    }
    if out is not None:
        out.json("occupancy.json", doc)
        if args.csv:
            out.root.mkdir(parents=True, exist_ok=True)
            with open(out.root / "occupancy.csv", "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["seed", "robot", "state", "x", "y", "theta", "visits", "frequency", "reference"])
                w.writerows(rows)
            if "occupancy.csv" not in out.written:
                out.written.append("occupancy.csv")
    if bad or escapes:
        raise RuntimeError(f"safety check failed: {bad} forbidden visits, {escapes} class escapes")
    return doc


def render_pmf(world: World, f: JointPmf, out: Outputs, name="heatmap.svg"):
    if f.states != world.space:
        raise DimensionMismatch("state", f.states.size, world.space.size)
    out.text(name, render_svg(world.space, world.forbidden, pmf=f.values.sum(axis=1),
                              title=f"{world.spec.name}: state pmf"))


def render_classes(world: World, classes, out: Outputs):
    union = StateSet.empty(world.space.size)
    for c in classes:
        union = union | c
    out.text("recurrent_set.svg", render_svg(world.space, world.forbidden, states=union,
                                             title=f"{world.spec.name}: recurrent set"))
    for k, c in enumerate(classes, start=1):
        out.text(f"class_{k}.svg", render_svg(world.space, world.forbidden, states=c,
                                              title=f"{world.spec.name}: class {k}"))


def classes_from_doc(world: World, doc) -> list[StateSet]:
    space = world.space
    out = []
    for i, members in enumerate(doc.get("classes", [])):
        ids = []
        for x, y, theta in members:
            if not 1 <= x <= space.nx:
                raise DimensionMismatch(f"classes[{i}] x", x, space.nx)
            if not 1 <= y <= space.ny:
                raise DimensionMismatch(f"classes[{i}] y", y, space.ny)
            ids.append(space.index(x, y, theta))
        out.append(StateSet.from_ids(space.size, ids))
    return out


# ---------------------------------------------------------------- commands

def load_policy(world: World, path: str, out: Outputs) -> Policy:
    policy = policy_from_json(read_json(path))
    if policy.states != world.space:
        raise DimensionMismatch("state", policy.states.size, world.space.size)
    if policy.actions != world.kernel.actions:
        raise DimensionMismatch("action", policy.actions.size, world.kernel.actions.size)
    out.inputs["policy"] = sha256(Path(path))
    return policy


def load_pmf(world: World, path: str, out: Outputs) -> JointPmf:
    f = pmf_from_json(read_json(path))
    if f.states != world.space:
        raise DimensionMismatch("state", f.states.size, world.space.size)
    out.inputs["pmf"] = sha256(Path(path))
    return f


def cmd_solve(args, world, out):
    _, _, _, doc = run_solve(world, args, out)
    return {"status": doc["status"], "support_size": doc["support_size"], "entropy": doc["entropy"],
            "region_mass": doc["region_mass"]}


def cmd_oracle(args, world, out):
    _, doc = run_oracle(world, out)
    return {"size": doc["size"], "n_classes": doc["n_classes"], "class_sizes": doc["class_sizes"]}


def cmd_deploy(args, world, out):
    if args.policy:
        policy = load_policy(world, args.policy, out)
    else:
        _, policy, _, _ = run_solve(world, args, None)
    _, doc = run_deploy(world, policy, out)
    return {"r": doc["r"], "class_sizes": doc["class_sizes"], "initial_states": doc["initial_states"]}


def cmd_simulate(args, world, out):
    if bool(args.policy) != bool(args.pmf):
        raise ValueError("--policy and --pmf must be given together")
    if args.policy:
        policy, f = load_policy(world, args.policy, out), load_pmf(world, args.pmf, out)
    else:
        f, policy, _, _ = run_solve(world, args, None)
    doc = run_simulate(world, policy, f, args, out)
    return doc["summary"]


def cmd_render(args, world, out):
    if args.source is None:
        f, _, _, _ = run_solve(world, args, None)
        render_pmf(world, f, out)
        return {"outputs": list(out.written)}
    doc = read_json(args.source)
    out.inputs["source"] = sha256(Path(args.source))
    kind = doc.get("kind") if isinstance(doc, dict) else None
    if kind == "joint_pmf":
        render_pmf(world, pmf_from_json(doc), out)
    elif kind in ("deployment", "oracle"):
        render_classes(world, classes_from_doc(world, doc), out)
    else:
        raise FormatError(f"{args.source}: cannot render a document of kind {kind!r}")
    return {"outputs": list(out.written)}


def cmd_pipeline(args, world, out):
    if args.dry_run:
        return {"dry_run": True}
    f, policy, _, _ = run_solve(world, args, out)
    run_oracle(world, out)
    plan, _ = run_deploy(world, policy, out)
    summary = run_simulate(world, policy, f, args, out)["summary"]
    render_pmf(world, f, out)
    render_classes(world, plan.classes, out)
    return {"r": plan.r, "support_size": len(plan.coverage), **summary}


PIPELINE_OUTPUTS = ["deployment.json", "f_star.json", "heatmap.svg", "occupancy.json", "oracle.json",
                    "policy.json", "recurrent_set.svg", "report.json"]


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--world", required=True,
                        help="world JSON file, or a shipped world name (ex1, ex2, ex3)")
    common.add_argument("--out", default=".", help="output directory (default: current directory)")
    common.add_argument("--seed", type=int, default=0, help="base RNG seed (default 0)")
    common.add_argument("--tol", type=float, default=DEFAULT_TOL, help="solver tolerance")
    common.add_argument("--json", action="store_true", help="print a JSON summary on stdout")
    common.add_argument("-v", "--verbose", action="store_true")

    solve_opts = argparse.ArgumentParser(add_help=False)
    solve_opts.add_argument("--max-iter", type=int, default=DEFAULT_MAX_ITER)
    solve_opts.add_argument("--no-prerestrict", action="store_true",
                            help="solve over every safe pair instead of the oracle's actions")
    solve_opts.add_argument("--region-alpha", type=float, default=None,
                            help="override the world's region threshold")

    sim_opts = argparse.ArgumentParser(add_help=False)
    sim_opts.add_argument("--steps", type=int, default=100_000)
    sim_opts.add_argument("--seeds", type=int, default=1, help="number of seeds, starting at --seed")
    sim_opts.add_argument("--robots", choices=("from-plan", "single"), default="from-plan")
    sim_opts.add_argument("--csv", action="store_true", help="also write occupancy.csv")

    p = argparse.ArgumentParser(prog="surveil", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"surveil {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", parents=[common, solve_opts], help="maximum entropy policy")
    s.set_defaults(func=cmd_solve)
    s = sub.add_parser("oracle", parents=[common], help="combinatorial safe recurrent set")
    s.set_defaults(func=cmd_oracle)
    s = sub.add_parser("deploy", parents=[common, solve_opts], help="robot count and initial states")
    s.add_argument("--policy", help="policy.json to use instead of solving")
    s.set_defaults(func=cmd_deploy)
    s = sub.add_parser("simulate", parents=[common, solve_opts, sim_opts], help="Monte Carlo rollouts")
    s.add_argument("--policy", help="policy.json to use instead of solving")
    s.add_argument("--pmf", help="f_star.json matching --policy")
    s.set_defaults(func=cmd_simulate)
    s = sub.add_parser("render", parents=[common, solve_opts], help="SVG figures")
    s.add_argument("--from", dest="source",
                   help="f_star.json, deployment.json or oracle.json (default: solve and draw the pmf)")
    s.set_defaults(func=cmd_render)
    s = sub.add_parser("pipeline", parents=[common, solve_opts, sim_opts], help="all stages")
    s.add_argument("--dry-run", action="store_true", help="write the manifest only")
    s.set_defaults(func=cmd_pipeline)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = Outputs(args.out)
    code, summary = EXIT_OK, {}
    try:
        world = load(args.world)
        summary = args.func(args, world, out)
        if args.command == "pipeline" and args.dry_run:
            out.manifest(args.command, args, world, planned=PIPELINE_OUTPUTS, dry_run=True)
        else:
            out.manifest(args.command, args, world)
    except Infeasible as exc:
        code, summary = EXIT_INFEASIBLE, {"status": "infeasible", "message": str(exc)}
        print(f"infeasible: {exc}", file=sys.stderr)
    except WorldError as exc:
        code, summary = EXIT_ERROR, {"status": "error", "field": exc.field, "message": str(exc)}
        print(f"error: {args.world}: {exc}", file=sys.stderr)
    except (FormatError, DimensionMismatch, ParameterError, MissingRule, ValueError, OSError, RuntimeError) as exc:
        code, summary = EXIT_ERROR, {"status": "error", "message": str(exc)}
        print(f"error: {exc}", file=sys.stderr)
    if args.json:
        print(json.dumps(summary, sort_keys=True))
    elif code == EXIT_OK:
        for k, v in summary.items():
            print(f"{k}: {v}")
    return code


if __name__ == "__main__":
    sys.exit(main())
