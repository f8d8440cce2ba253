"""Scenario runner and command-line interface.

Subcommands map one-to-one onto package capabilities::

    cablearm simulate           --scenario s.json --out-dir out/
    cablearm optimize-stiffness --model hcdr9dof --l01 1.005 --l02 1.005 --out-dir out/
    cablearm inverse-dynamics   --model hcdr9dof --state state.json
    cablearm linearize          --model hcdr9dof --state point.json
    cablearm evaluate           --trace out/trace.csv
    cablearm compare            --scenario a.json b.json c.json --out-dir out/

Errors print a machine-readable ``{"error": {"category", "message"}}``
object on stderr; exit codes are 2 for parse errors, 3 for validation
errors, and 4 for any other package error.
"""

from __future__ import annotations

import argparse
import json
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import dynamics, metrics, sim
from .control import MpcParams, PidGains
from .errors import (
    CableRobotError,
    ComparisonError,
    ModelParseError,
    ScenarioError,
)
from .model import RobotModel, builtin_model, load_model_file
from .stiffness import stiffness_landscape

_ARCHES = tuple(a.value for a in sim.Architecture)


def _resolve_model(ref: str) -> RobotModel:
    if ref == "hcdr9dof":
        return builtin_model(ref)
    path = Path(ref)
    if not path.exists():
        raise ModelParseError(f"model reference '{ref}' is neither a builtin nor a file")
    return load_model_file(path)


def bundled_scenario_text(name: str) -> str:
    ref = resources.files("cablearm").joinpath(f"data/scenarios/{name}.json")
    try:
        return ref.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ScenarioError(f"no bundled scenario '{name}'") from None


def load_scenario(path_or_name) -> dict:
    """Load a scenario JSON document (path, bundled name, or dict)."""
    if isinstance(path_or_name, dict):
        return dict(path_or_name)
    p = Path(str(path_or_name))
    if p.exists():
        text = p.read_text(encoding="utf-8")
    else:
        text = bundled_scenario_text(str(path_or_name))
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelParseError(
            f"invalid scenario JSON at line {exc.lineno}: {exc.msg}"
        ) from None
    if not isinstance(doc, dict):
        raise ModelParseError("scenario root must be an object")
    return doc


def resolve_scenario(doc: dict, seed_override: int | None = None) -> dict:
    """Fill scenario defaults and validate the fields."""
    cfg = {
        "model": doc.get("model", "hcdr9dof"),
        "architecture": doc.get("architecture", "integrated2"),
        "trajectory": doc.get("trajectory", "case_study"),
        "t_end_s": float(doc.get("t_end_s", 6.0)),
        "seed": int(doc.get("seed", 0)),
        "noise_std": doc.get("noise_std", 0.0),
        "controller": dict(doc.get("controller", {})),
        "integrator_substeps": int(doc.get("integrator_substeps", 10)),
        "tension_scan_points": int(doc.get("tension_scan_points", 76)),
    }
    unknown = set(doc) - set(cfg)
    if unknown:
        raise ModelParseError(f"unknown scenario fields: {sorted(unknown)}")
    if cfg["architecture"] not in _ARCHES:
        raise ScenarioError(f"architecture must be one of {_ARCHES}")
    if seed_override is not None:
        cfg["seed"] = int(seed_override)
    if cfg["t_end_s"] <= 0:
        raise ScenarioError("t_end_s must be positive")
    return cfg


def _build_controller(cfg: dict):
    arch = sim.Architecture(cfg["architecture"])
    c = cfg["controller"]
    Ts = float(c.get("Ts_s", 0.01))
    p = 4 if arch is sim.Architecture.INTEGRATED_II else 2
    s = 10 if arch is sim.Architecture.INTEGRATED_II else 6
    du = c.get("du_bound", [80.0, 80.0, 2.0, 2.0][:p])
    du = np.asarray(du, dtype=float)
    if du.shape != (p,):
        raise ScenarioError(f"du_bound must have {p} entries for {arch.value}")
    params = MpcParams(
        Ts=Ts,
        Np=int(c.get("Np", 50)),
        Nc=int(c.get("Nc", 50)),
        Q=float(c.get("Q_scale", 1.0)) * np.eye(s),
        R=float(c.get("R_scale", 1e-4)) * np.eye(p),
        P=float(c.get("P_scale", 1.0)) * np.eye(s),
        du_min=-du,
        du_max=du,
    )
    pid_doc = c.get("pid", {})
    gains = PidGains(
        Kp=float(pid_doc.get("Kp", 400.0)),
        Ki=float(pid_doc.get("Ki", 100.0)),
        Kd=float(pid_doc.get("Kd", 10.0)),
    )
    return params, gains, Ts


def _build_trajectory(ref):
    if ref == "case_study":
        return sim.case_study_trajectory()
    if isinstance(ref, dict) and "waypoints" in ref:
        return sim.quintic_trajectory([(t, x) for t, x in ref["waypoints"]])
    raise ScenarioError("trajectory must be 'case_study' or {'waypoints': [[t, state10], ...]}")


def run_scenario(path_or_doc, out_dir, seed: int | None = None, fmt: str = "csv") -> dict:
    """Execute one scenario and write trace + summary artifacts.

    Returns {"trace": path, "summary": path, "report": dict}.
    """
    cfg = resolve_scenario(load_scenario(path_or_doc), seed)
    model = _resolve_model(cfg["model"])
    params, gains, Ts = _build_controller(cfg)
    traj = _build_trajectory(cfg["trajectory"])
    digest = sim.config_digest(cfg)
    trace = sim.simulate(
        model,
        cfg["architecture"],
        traj=traj,
        mpc_params=params,
        pid_gains=gains,
        noise_std=cfg["noise_std"],
        seed=cfg["seed"],
        T_end=cfg["t_end_s"],
        Ts=Ts,
        substeps=cfg["integrator_substeps"],
        scan_points=cfg["tension_scan_points"],
        config_hash=digest,
    )
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary = metrics.summary_dict(trace)
    trace_path = out / "trace.csv"
    summary_path = out / "summary.json"
    trace_path.write_text(metrics.trace_to_csv(trace), encoding="utf-8")
    summary_path.write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    if fmt == "json":
        rows = {name: trace_row.tolist() for name, trace_row in zip(
            metrics.TRACE_HEADER,
            np.column_stack([
                trace.t, trace.x, trace.tensions, trace.L0, trace.u,
                trace.p_e, trace.ke, trace.ve, trace.x_ref, trace.p_e_ref,
            ]).T,
        )}
        (out / "trace.json").write_text(
            json.dumps(rows, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    return {"trace": str(trace_path), "summary": str(summary_path), "report": summary,
            "config": cfg}


def compare_architectures(paths, out_dir, seed: int | None = None) -> dict:
    """Run scenarios that differ only in architecture and tabulate RMSEs.

    Raises ComparisonError when the scenario set does not cover the three
    architectures exactly or differs in any other field.
    """
    cfgs = [resolve_scenario(load_scenario(p), seed) for p in paths]
    seen = {}
    for cfg in cfgs:
        stripped = {k: v for k, v in cfg.items() if k != "architecture"}
        seen[cfg["architecture"]] = stripped
    missing = [a for a in _ARCHES if a not in seen]
    if missing:
        raise ComparisonError(f"missing architectures in comparison: {missing}")
    base = None
    for arch, stripped in seen.items():
        if base is None:
            base = stripped
        elif stripped != base:
            raise ComparisonError("scenarios must differ only in architecture")
    out = Path(out_dir)
    rows = []
    for cfg in cfgs:
        arch = cfg["architecture"]
        result = run_scenario(cfg, out / arch, seed)
        rows.append({"architecture": arch, **result["report"]})
    rows.sort(key=lambda r: r["rmse_2d_m"])
    table = {
        "order": [r["architecture"] for r in rows],
        "results": rows,
    }
    out.mkdir(parents=True, exist_ok=True)
    (out / "comparison.json").write_text(
        json.dumps(table, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    header = "architecture,rmse_x_m,rmse_z_m,rmse_2d_m,min_tension_N,max_tension_N"
    lines = [header] + [
        ",".join(
            [r["architecture"]]
            + [repr(float(r[k])) for k in header.split(",")[1:]]
        )
        for r in rows
    ]
    (out / "comparison.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return table


def _cmd_simulate(args) -> int:
    result = run_scenario(args.scenario, args.out_dir, args.seed, args.format)
    print(json.dumps(result["report"], indent=2, sort_keys=True))
    return 0


def _cmd_optimize_stiffness(args) -> int:
    model = _resolve_model(args.model)
    q = np.zeros(model.nq)
    q[0], q[2] = args.px, args.pz
    pos_groups = sorted(
        g for g in model.platform.actuator_groups
        if g not in model.platform.tension_controlled_groups
    )
    land = stiffness_landscape(
        model, q, {pos_groups[0]: args.l01, pos_groups[1]: args.l02},
        resolution=args.resolution,
    )
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ga, gb = land["groups"]
    lines = [f"T_{ga},T_{gb},J_K,min_eig"]
    for i, ta in enumerate(land["axis_a"]):
        for j, tb in enumerate(land["axis_b"]):
            vals = (ta, tb, land["J_K"][i, j], land["min_eig"][i, j])
            lines.append(",".join(repr(float(v)) for v in vals))
    path = out / "stiffness_grid.csv"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    best = np.unravel_index(np.argmax(land["J_K"]), land["J_K"].shape)
    print(json.dumps({
        "grid": str(path),
        "J_K_max": float(land["J_K"][best]),
        "argmax": [float(land["axis_a"][best[0]]), float(land["axis_b"][best[1]])],
        "min_eig_min": float(land["min_eig"].min()),
    }, indent=2, sort_keys=True))
    return 0


def _read_json_file(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ModelParseError(f"invalid JSON in {path}: {exc.msg}") from None


def _cmd_inverse_dynamics(args) -> int:
    model = _resolve_model(args.model)
    doc = _read_json_file(args.state)
    q = np.asarray(doc["q"], dtype=float)
    qd = np.asarray(doc.get("qdot", np.zeros(model.nq)), dtype=float)
    qdd = np.asarray(doc.get("qddot", np.zeros(model.nq)), dtype=float)
    tau_d = doc.get("tau_d")
    tau = dynamics.inverse_dynamics(model, q, qd, qdd, tau_d)
    print(json.dumps({
        "tau": tau.tolist(),
        "tau_platform": tau[:6].tolist(),
        "tau_arm": tau[6:].tolist(),
    }, indent=2, sort_keys=True))
    return 0


def _cmd_linearize(args) -> int:
    model = _resolve_model(args.model)
    doc = _read_json_file(args.state)
    plant = sim.planar_reduce(model)
    x = np.asarray(doc["x"], dtype=float)
    u = np.asarray(doc["u"], dtype=float)
    L01, L02 = float(doc["L01"]), float(doc["L02"])
    from .control import linearize

    ltv = linearize(plant.f, x, u, (L01, L02))
    out = {"A": ltv.A.tolist(), "B": ltv.B.tolist(), "f_r": ltv.f_r.tolist()}
    if args.out_dir:
        outdir = Path(args.out_dir)
        outdir.mkdir(parents=True, exist_ok=True)
        (outdir / "ltv.json").write_text(
            json.dumps(out, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    print(json.dumps({"A_shape": list(np.shape(out["A"])),
                      "B_shape": list(np.shape(out["B"]))}, sort_keys=True))
    return 0


def _cmd_evaluate(args) -> int:
    cols = metrics.trace_from_csv(Path(args.trace).read_text(encoding="utf-8"))
    p_e = np.column_stack([cols["x_e"], cols["z_e"]])
    p_ref = np.column_stack([cols["ref_x_e"], cols["ref_z_e"]])
    tensions = np.column_stack([cols[f"T{i}"] for i in range(1, 13)])
    report = metrics.rmse(p_e, p_ref, tensions)
    print(json.dumps(report.as_dict(), indent=2, sort_keys=True))
    return 0


def _cmd_compare(args) -> int:
    table = compare_architectures(args.scenario, args.out_dir, args.seed)
    print(json.dumps(table, indent=2, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cablearm", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    sim_p = sub.add_parser("simulate", help="run one closed-loop scenario")
    sim_p.add_argument("--scenario", required=True)
    sim_p.add_argument("--out-dir", default="out")
    sim_p.add_argument("--seed", type=int, default=None)
    sim_p.add_argument("--format", choices=("csv", "json"), default="csv")
    sim_p.set_defaults(func=_cmd_simulate)

    st_p = sub.add_parser("optimize-stiffness", help="emit the tension-stiffness grid")
    st_p.add_argument("--model", default="hcdr9dof")
    st_p.add_argument("--px", type=float, default=0.0)
    st_p.add_argument("--pz", type=float, default=0.0)
    st_p.add_argument("--l01", type=float, default=1.005)
    st_p.add_argument("--l02", type=float, default=1.005)
    st_p.add_argument("--resolution", type=int, default=76)
    st_p.add_argument("--out-dir", default="out")
    st_p.set_defaults(func=_cmd_optimize_stiffness)

    id_p = sub.add_parser("inverse-dynamics", help="generalized forces at a state")
    id_p.add_argument("--model", default="hcdr9dof")
    id_p.add_argument("--state", required=True, help="JSON file with q, qdot, qddot")
    id_p.set_defaults(func=_cmd_inverse_dynamics)

    lin_p = sub.add_parser("linearize", help="LTV matrices of the planar plant")
    lin_p.add_argument("--model", default="hcdr9dof")
    lin_p.add_argument("--state", required=True, help="JSON file with x, u, L01, L02")
    lin_p.add_argument("--out-dir", default=None)
    lin_p.set_defaults(func=_cmd_linearize)

    ev_p = sub.add_parser("evaluate", help="RMSE report from a trace CSV")
    ev_p.add_argument("--trace", required=True)
    ev_p.set_defaults(func=_cmd_evaluate)

    cmp_p = sub.add_parser("compare", help="run and rank the three architectures")
    cmp_p.add_argument("--scenario", nargs="+", required=True)
    cmp_p.add_argument("--out-dir", default="out")
    cmp_p.add_argument("--seed", type=int, default=None)
    cmp_p.set_defaults(func=_cmd_compare)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CableRobotError as exc:
        payload = {"error": {"category": exc.category, "message": str(exc)}}
        print(json.dumps(payload, sort_keys=True), file=sys.stderr)
        if exc.category == "parse":
            return 2
        if exc.category == "validation":
            return 3
        return 4


if __name__ == "__main__":
    sys.exit(main())
