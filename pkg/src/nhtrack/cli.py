"""Command-line front end: ``check``, ``plan``, ``simulate`` and ``batch``.

Scenario files are JSON (lengths in meters, angles in radians, times in
seconds).  ``--scenario`` takes a path or the stem of a bundled scenario
(see :func:`bundled_scenarios`).  The output directory is ``--out`` if
given, else ``$NHTRACK_OUT_DIR``, else ``./out``.

Exit codes: 0 success, 1 a verdict failed or the run faulted, 2 bad input.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import jsonschema
import numpy as np

from .backstepping import Gains
from .maneuver import (AdmissibilityError, InversionError, NotManeuverableError, ReferenceGenerator,
                       admissibility_report, build_transform, check_maneuverability)
from .models import (BoundaryError, UnsupportedModelError, WheeledModel, automobile,
                     automobile_front_axle, axle_chain, chaplygin_sled, component_of,
                     truck_with_trailers)
from .simulator import Scenario, Trace, diagnostics, integrate_closed_loop
from .trajectories import Trajectory, from_params

OUT_ENV = "NHTRACK_OUT_DIR"
EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2

_NUM = {"type": "number"}
_VEC2 = {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2}

TRAJECTORY_PARAMS = {
    "line": {"point": _VEC2, "velocity": _VEC2},
    "circle": {"center": _VEC2, "radius": {"type": "number", "exclusiveMinimum": 0},
               "rate": _NUM, "phase": _NUM},
    "lane_change": {"speed": _NUM, "amplitude": _NUM, "omega": _NUM, "phase": _NUM,
                    "start": _VEC2},
    "polynomial": {"cx": {"type": "array", "items": _NUM, "minItems": 1},
                   "cy": {"type": "array", "items": _NUM, "minItems": 1}},
}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["model", "trajectory", "direction", "initial_state", "horizon"],
    "properties": {
        "model": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["sled", "automobile", "automobile_front_axle", "truck"]},
                "lengths": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
            },
        },
        "trajectory": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": sorted(TRAJECTORY_PARAMS)},
                "params": {"type": "object"},
            },
        },
        "direction": {"enum": [1, -1]},
        "gains": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "gamma": {"type": "number", "exclusiveMinimum": 0},
                "deltas": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
            },
        },
        "initial_state": {"type": "array", "items": _NUM, "minItems": 3},
        "horizon": {"type": "number", "exclusiveMinimum": 0},
        "step": {"type": "number", "exclusiveMinimum": 0},
        "outputs": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "csv": {"type": "boolean"},
                "svg": {"type": "boolean"},
                "decimation": {"type": "integer", "minimum": 2},
            },
        },
    },
}


class ScenarioError(ValueError):
    """The scenario file cannot be read or does not match the schema."""


@dataclass
class ScenarioFile:
    name: str
    doc: dict
    model: WheeledModel
    trajectory: Trajectory
    direction: int
    gains: Gains
    initial_state: list
    horizon: float
    step: float
    decimation: int
    csv: bool = True
    svg: bool = True

    def scenario(self) -> Scenario:
        return Scenario(self.model, self.trajectory, self.direction, self.gains,
                        self.initial_state, self.horizon, self.step, self.decimation, self.name)


def bundled_scenarios() -> dict:
    """Stem -> path of the scenario files shipped with the package."""
    root = resources.files("nhtrack") / "scenarios"
    return {Path(p.name).stem: Path(str(p)) for p in root.iterdir() if p.name.endswith(".json")}


def resolve_scenario(name: str) -> Path:
    p = Path(name)
    if p.exists():
        return p
    bundled = bundled_scenarios()
    if name in bundled:
        return bundled[name]
    raise ScenarioError(f"{name}: no such file or bundled scenario "
                        f"(bundled: {', '.join(sorted(bundled))})")


def _model_from(doc: dict) -> WheeledModel:
    kind = doc["kind"]
    lengths = doc.get("lengths")
    if kind == "truck":
        if not lengths:
            raise ScenarioError("model.lengths: a truck needs at least one length")
        return truck_with_trailers(lengths)
    if lengths:
        raise ScenarioError(f"model.lengths: not used by model kind {kind!r}")
    return {"sled": chaplygin_sled, "automobile": automobile,
            "automobile_front_axle": automobile_front_axle}[kind]()


def parse_scenario(text: str, name: str = "scenario", step: Optional[float] = None,
                   horizon: Optional[float] = None) -> ScenarioFile:
    """Parse and validate a scenario document; raise :class:`ScenarioError`."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioError(f"{name}: line {e.lineno}, column {e.colno}: {e.msg}") from None
    errors = sorted(jsonschema.Draft202012Validator(SCHEMA).iter_errors(doc), key=lambda e: list(e.path))
    if errors:
        e = errors[0]
        where = ".".join(str(p) for p in e.absolute_path) or "<root>"
        raise ScenarioError(f"{name}: {where}: {e.message}")
    tdoc = doc["trajectory"]
    params = tdoc.get("params", {})
    allowed = TRAJECTORY_PARAMS[tdoc["kind"]]
    sub = {"type": "object", "additionalProperties": False, "properties": allowed}
    for e in jsonschema.Draft202012Validator(sub).iter_errors(params):
        where = ".".join(str(p) for p in e.absolute_path)
        raise ScenarioError(f"{name}: trajectory.params{'.' + where if where else ''}: {e.message}")
    model = _model_from(doc["model"])
    if len(doc["initial_state"]) != model.n + 2:
        raise ScenarioError(f"{name}: initial_state: {model.name} needs {model.n + 2} entries, "
                            f"got {len(doc['initial_state'])}")
    try:
        traj = from_params(tdoc["kind"], params)
    except ValueError as e:
        raise ScenarioError(f"{name}: trajectory.params: {e}") from None
    g = doc.get("gains", {})
    gains = Gains(float(g.get("gamma", 1.0)), tuple(g.get("deltas", ())))
    if gains.deltas and len(gains.deltas) != model.n:
        raise ScenarioError(f"{name}: gains.deltas: need {model.n} values, got {len(gains.deltas)}")
    out = doc.get("outputs", {})
    return ScenarioFile(
        name=name, doc=doc, model=model, trajectory=traj, direction=int(doc["direction"]),
        gains=gains, initial_state=[float(v) for v in doc["initial_state"]],
        horizon=float(horizon if horizon is not None else doc["horizon"]),
        step=float(step if step is not None else doc.get("step", 1e-3)),
        decimation=int(out.get("decimation", 10)),
        csv=bool(out.get("csv", True)), svg=bool(out.get("svg", True)),
    )


def load_scenario(path, step: Optional[float] = None, horizon: Optional[float] = None) -> ScenarioFile:
    p = resolve_scenario(str(path))
    try:
        text = p.read_text()
    except OSError as e:
        raise ScenarioError(f"{p}: {e.strerror}") from None
    return parse_scenario(text, p.stem, step, horizon)


# emitters ---------------------------------------------------------------

def _fmt(v) -> str:
    return repr(float(v))


def _write_csv(path: Path, header: Sequence[str], columns: Sequence[np.ndarray]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in zip(*columns):
        w.writerow([_fmt(v) for v in row])
    path.write_text(buf.getvalue())


def _chain_units(k: int) -> str:
    return "rad" if k == 1 else ("1/m" if k == 2 else f"1/m^{k - 1}")


def plan_columns(model: WheeledModel, points: list) -> tuple[list, list]:
    """Header and columns of a reference table."""
    n = model.n
    header = (["t [s]", "x1D [m]", "x2D [m]"] + [f"y{i + 1}D [rad]" for i in range(n)]
              + ["u1D [m/s]", "u2D [rad/s]"] + [f"s{i + 1}D [{_chain_units(i + 1)}]" for i in range(n)]
              + ["v1D [m/s]", f"v2D [{_chain_units(n)}/s]"])
    rows = np.array([[p.t] + p.qD + p.uD + p.sD + p.vD for p in points], dtype=float)
    return header, [rows[:, j] for j in range(rows.shape[1])]


def read_plan_csv(path) -> dict:
    """Columns of a plan CSV keyed by name (units stripped)."""
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        data = np.array([[float(v) for v in row] for row in r], dtype=float)
    return {h.split(" [")[0]: data[:, j] for j, h in enumerate(header)}


def trace_columns(model: WheeledModel, trace: Trace) -> tuple[list, list]:
    n = model.n
    header = (["t [s]", "x1 [m]", "x2 [m]"] + [f"y{i + 1} [rad]" for i in range(n)]
              + ["u1 [m/s]", "u2 [rad/s]", "x1D [m]", "x2D [m]"]
              + [f"y{i + 1}D [rad]" for i in range(n)]
              + ["u1D [m/s]", "u2D [rad/s]", "x_err [m]", "y_dist [rad]", "V [1]",
                 "residual [m/s]", "tau [m]"] + [f"mu{i + 2} [1]" for i in range(n - 1)])
    cols = ([trace.t] + [trace.q[:, j] for j in range(n + 2)] + [trace.u[:, 0], trace.u[:, 1]]
            + [trace.qD[:, j] for j in range(n + 2)] + [trace.uD[:, 0], trace.uD[:, 1]]
            + [trace.x_err, trace.y_dist, trace.V, trace.residual, trace.tau]
            + [trace.mu[:, j] for j in range(trace.mu.shape[1])])
    return header, cols


@dataclass
class PlotStyle:
    width: int = 640
    height: int = 640
    margin: float = 40.0
    poses: int = 7
    axle_half_width: float = 0.3
    desired_color: str = "#555555"
    actual_color: str = "#1f5fa8"
    vehicle_color: str = "#b03020"


def _nice_length(span: float) -> float:
    target = span / 5
    base = 10 ** math.floor(math.log10(target))
    for m in (5, 2, 1):
        if m * base <= target:
            return m * base
    return base


def pose_svg(model: WheeledModel, trace: Trace, style: Optional[PlotStyle] = None,
             title: str = "") -> str:
    """Self-contained SVG of the desired path, the actual path and vehicle poses."""
    st = style or PlotStyle()
    xs = np.concatenate([trace.q[:, 0], trace.qD[:, 0]])
    ys = np.concatenate([trace.q[:, 1], trace.qD[:, 1]])
    chains = []
    if len(trace) and model.kind == "truck":
        idx = np.unique(np.linspace(0, len(trace) - 1, st.poses).round().astype(int))
        for k in idx:
            ch = axle_chain(model, list(trace.q[k]))
            chains.append(ch)
            xs = np.concatenate([xs, [c[0] for c in ch.chi]])
            ys = np.concatenate([ys, [c[1] for c in ch.chi]])
    pad = st.axle_half_width * 2
    x0, x1 = float(xs.min()) - pad, float(xs.max()) + pad
    y0, y1 = float(ys.min()) - pad, float(ys.max()) + pad
    span = max(x1 - x0, y1 - y0, 1e-9)
    scale = (min(st.width, st.height) - 2 * st.margin) / span

    def px(x, y):
        return f"{st.margin + (x - x0) * scale:.3f},{st.height - st.margin - (y - y0) * scale:.3f}"

    def path(xv, yv):
        return " ".join(px(a, b) for a, b in zip(xv, yv))

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{st.width}" height="{st.height}" '
           f'viewBox="0 0 {st.width} {st.height}">',
           f'<rect x="0" y="0" width="{st.width}" height="{st.height}" fill="white"/>']
    if title:
        out.append(f'<text x="{st.margin:.3f}" y="20" font-family="sans-serif" font-size="13">'
                   f'{_escape(title)}</text>')
    out.append(f'<polyline points="{path(trace.qD[:, 0], trace.qD[:, 1])}" fill="none" '
               f'stroke="{st.desired_color}" stroke-width="1.5" stroke-dasharray="1,4" '
               f'stroke-linecap="round"/>')
    out.append(f'<polyline points="{path(trace.q[:, 0], trace.q[:, 1])}" fill="none" '
               f'stroke="{st.actual_color}" stroke-width="1"/>')
    for ch in chains:
        out.append(f'<polyline points="{path([c[0] for c in ch.chi], [c[1] for c in ch.chi])}" '
                   f'fill="none" stroke="{st.vehicle_color}" stroke-width="1.5"/>')
        for c, nu in zip(ch.chi, ch.nu_vec):
            a = (c[0] + st.axle_half_width * nu[0], c[1] + st.axle_half_width * nu[1])
            b = (c[0] - st.axle_half_width * nu[0], c[1] - st.axle_half_width * nu[1])
            out.append(f'<polyline points="{px(*a)} {px(*b)}" stroke="{st.vehicle_color}" '
                       f'stroke-width="3"/>')
    # legend
    lx, ly = st.width - st.margin - 150, st.margin
    legend = [("desired path", st.desired_color, ' stroke-dasharray="1,4" stroke-linecap="round"'),
              ("actual path", st.actual_color, "")]
    if chains:
        legend.append(("vehicle poses", st.vehicle_color, ""))
    for k, (label, color, extra) in enumerate(legend):
        yy = ly + 16 * k
        out.append(f'<line x1="{lx:.3f}" y1="{yy:.3f}" x2="{lx + 24:.3f}" y2="{yy:.3f}" '
                   f'stroke="{color}" stroke-width="1.5"{extra}/>')
        out.append(f'<text x="{lx + 30:.3f}" y="{yy + 4:.3f}" font-family="sans-serif" '
                   f'font-size="11">{label}</text>')
    # scale bar
    bar = _nice_length(span)
    bx, by = st.margin, st.height - st.margin / 2
    out.append(f'<line x1="{bx:.3f}" y1="{by:.3f}" x2="{bx + bar * scale:.3f}" y2="{by:.3f}" '
               f'stroke="black" stroke-width="2"/>')
    out.append(f'<text x="{bx + bar * scale + 6:.3f}" y="{by + 4:.3f}" font-family="sans-serif" '
               f'font-size="11">{bar:g} m</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _escape(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


# commands ---------------------------------------------------------------

def out_dir(arg: Optional[str]) -> Path:
    p = Path(arg or os.environ.get(OUT_ENV) or "out")
    p.mkdir(parents=True, exist_ok=True)
    return p


def cmd_check(sf: ScenarioFile, seed: int = 0, stream=None) -> int:
    """Admissibility, strong admissibility and maneuverability verdicts."""
    stream = stream or sys.stdout
    ok = True
    adm = admissibility_report(sf.trajectory, sf.model.n, sf.horizon)
    print(f"admissible: {'pass' if adm.admissible else 'FAIL'} (min speed {adm.min_speed:.6g} m/s)",
          file=stream)
    print(f"strongly admissible: {'pass' if adm.strongly_admissible else 'FAIL'} "
          f"(derivative bounds {', '.join(f'{b:.4g}' for b in adm.derivative_bounds)})", file=stream)
    ok &= adm.admissible and adm.strongly_admissible
    rep = check_maneuverability(sf.model, seed=seed)
    print(f"maneuverable: {'pass' if rep.passed else 'FAIL'} ({rep.summary()})", file=stream)
    ok &= rep.passed
    try:
        mu = component_of(sf.model, sf.initial_state[2:])
        print(f"initial component: {list(mu)}", file=stream)
    except BoundaryError as e:
        print(f"initial component: FAIL ({e})", file=stream)
        ok = False
    return EXIT_OK if ok else EXIT_FAIL


def plan_points(sf: ScenarioFile) -> list:
    mu = component_of(sf.model, sf.initial_state[2:])
    ref = ReferenceGenerator(sf.model, build_transform(sf.model, mu), sf.trajectory, sf.direction)
    nsteps = int(round(sf.horizon / sf.step))
    ts = np.arange(0, nsteps + 1, sf.decimation) * sf.step
    return [ref.point_from_heading(float(t), float(s)) for t, s in zip(ts, ref.headings(ts))]


def cmd_plan(sf: ScenarioFile, out: Path, stream=None) -> int:
    stream = stream or sys.stdout
    pts = plan_points(sf)
    header, cols = plan_columns(sf.model, pts)
    path = out / f"{sf.name}_plan.csv"
    _write_csv(path, header, cols)
    print(f"wrote {path} ({len(pts)} rows)", file=stream)
    return EXIT_OK


def cmd_simulate(sf: ScenarioFile, out: Path, stream=None) -> int:
    stream = stream or sys.stdout
    trace = integrate_closed_loop(sf.scenario())
    diag = diagnostics(trace, sf.gains.gamma)
    paths = []
    if sf.csv:
        header, cols = trace_columns(sf.model, trace)
        paths.append(out / f"{sf.name}_trace.csv")
        _write_csv(paths[-1], header, cols)
    if sf.svg:
        paths.append(out / f"{sf.name}_poses.svg")
        paths[-1].write_text(pose_svg(sf.model, trace, title=f"{sf.name} ({sf.model.name})"))
    report = diag.as_dict()
    report.update(scenario=sf.name, model=sf.model.name, samples=len(trace),
                  runtime_s=trace.info["wall_time"], step=sf.step, horizon=sf.horizon)
    paths.append(out / f"{sf.name}_diagnostics.json")
    paths[-1].write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    t = diag.terminal
    print(f"{sf.name}: {'pass' if diag.passed else 'FAIL'}  |x-xD|={t['x_err']:.3g}  "
          f"d(y,yD)={t['y_dist']:.3g}  |u-uD|={t['u_err']:.3g}  decay={'ok' if diag.decay_ok else 'violated'}  "
          f"residual={diag.max_residual:.3g}  runtime={trace.info['wall_time']:.2f}s", file=stream)
    if diag.fault:
        print(f"{sf.name}: fault: {diag.fault}", file=stream)
    for p in paths:
        print(f"wrote {p}", file=stream)
    return EXIT_OK if diag.passed else EXIT_FAIL


def _batch_one(args: tuple) -> tuple[str, int, str]:
    path, out, step, horizon = args
    buf = io.StringIO()
    try:
        sf = load_scenario(path, step, horizon)
        sub = out / sf.name
        sub.mkdir(parents=True, exist_ok=True)
        code = cmd_simulate(sf, sub, buf)
    except ScenarioError as e:
        buf.write(f"error: {e}\n")
        code = EXIT_INPUT
    return str(path), code, buf.getvalue()


def cmd_batch(paths: Sequence[str], out: Path, step=None, horizon=None, jobs: int = 1,
              stream=None) -> int:
    stream = stream or sys.stdout
    tasks = [(p, out, step, horizon) for p in paths]
    if jobs > 1:
        import concurrent.futures as cf
        import multiprocessing as mp
        with cf.ProcessPoolExecutor(jobs, mp_context=mp.get_context("spawn")) as ex:
            results = list(ex.map(_batch_one, tasks))
    else:
        results = [_batch_one(t) for t in tasks]
    worst = EXIT_OK
    for _, code, text in results:
        stream.write(text)
        worst = max(worst, code)
    print(f"batch: {sum(c == 0 for _, c, _ in results)}/{len(results)} passed", file=stream)
    return worst


# entry point ------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nhtrack", description="Trajectory tracking for wheeled vehicles.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, many=False):
        if many:
            p.add_argument("--scenario", action="append", required=False, default=[],
                           help="scenario file or bundled name (repeatable; default: all bundled)")
        else:
            p.add_argument("--scenario", required=True, help="scenario file or bundled name")
        p.add_argument("--step", type=float, help="integrator step h in seconds (overrides the file)")
        p.add_argument("--horizon", type=float, help="horizon T in seconds (overrides the file)")
        p.add_argument("--seed-style", type=int, default=0, metavar="SEED",
                       help="seed for the random sampling done by the checks (default 0)")

    p = sub.add_parser("check", help="admissibility and maneuverability verdicts")
    common(p)
    p = sub.add_parser("plan", help="write the feedforward reference as CSV")
    common(p)
    p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./out)")
    p = sub.add_parser("simulate", help="closed-loop run: CSV trace, SVG poses, diagnostics JSON")
    common(p)
    p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./out)")
    p = sub.add_parser("batch", help="simulate several scenarios")
    common(p, many=True)
    p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./out)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")
    p = sub.add_parser("list", help="list bundled scenarios")
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_INPUT if e.code else EXIT_OK
    try:
        if args.command == "list":
            for name, path in sorted(bundled_scenarios().items()):
                print(f"{name}\t{path}")
            return EXIT_OK
        if args.command == "batch":
            paths = args.scenario or [str(p) for _, p in sorted(bundled_scenarios().items())]
            return cmd_batch(paths, out_dir(args.out), args.step, args.horizon, args.jobs)
        sf = load_scenario(args.scenario, args.step, args.horizon)
        if args.command == "check":
            return cmd_check(sf, args.seed_style)
        if args.command == "plan":
            return cmd_plan(sf, out_dir(args.out))
        return cmd_simulate(sf, out_dir(args.out))
    except ScenarioError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except (AdmissibilityError, InversionError, NotManeuverableError, UnsupportedModelError,
            ArithmeticError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAIL
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
