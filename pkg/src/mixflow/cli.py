"""Command-line entry point ``mixflow``.

Exit codes: 0 success, 2 invalid input (parse or validation), 3 solver or
verification failure, 4 output error.
"""
from __future__ import annotations

import argparse
import itertools
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .algebra import ExemplaryFlux, build_bundle, det_B_closed_form, grad_D_ratio, relaxation_bound, validate_C
from .config import load_scenario, parse_text, scenario_from_mapping, set_dotted
from .errors import IoError, MixflowError, ParseError, ValidationError
from .fields import write_csv, write_fields
from .mixture import (
    NormalState,
    PrimitiveState,
    change_of_variables_jacobian,
    change_of_variables_jacobian_inv,
    psi_forward,
    psi_inverse,
)

log = logging.getLogger("mixflow")

EXIT_OK, EXIT_INPUT, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4


def _emit(obj, out_dir=None, name=None):
    text = json.dumps(obj, indent=2, default=_to_builtin)
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        (Path(out_dir) / name).write_text(text + "\n")
    print(text)


def _to_builtin(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(type(obj).__name__)


def _random_states(rng, params, samples):
    return rng.uniform(0.1, 10.0, size=(samples, params.n))


def cmd_verify_matrices(args) -> int:
    sc = load_scenario(args.config)
    params, model = sc.params, sc.flux_model()
    rng = np.random.default_rng(args.seed)
    rho_k = _random_states(rng, params, args.samples)
    Y = rho_k / rho_k.sum(axis=-1, keepdims=True)
    bundle = build_bundle(rho_k, params, model)
    report = validate_C(bundle.C, Y, tol=1e-12)
    D = bundle.D
    bound = relaxation_bound(rho_k, params)
    result = {
        "samples": args.samples,
        "n": params.n,
        "matrix": model.kind,
        "validation": report.to_dict(),
        "D_symmetry": float(np.max(np.abs(D - np.swapaxes(D, -1, -2)))),
        "D_kernel": float(np.max(np.abs(np.einsum("skl,sl->sk", D, Y)))),
        "D_min_eigenvalue": float(bundle.eig_D[:, 0].min()),
        "D_second_eigenvalue_min": float(bundle.eig_D[:, 1].min()),
        "relaxation_bound_violations": int(np.sum(bundle.eigmin_R < bound - 1e-10)),
        "relaxation_min_margin": float(np.min(bundle.eigmin_R - bound)),
        "diffusion_min_eigenvalue": float(bundle.eigmin_B.min()),
    }
    if isinstance(model, ExemplaryFlux):
        closed = det_B_closed_form(rho_k, params)
        result["det_B_max_rel_error"] = float(np.max(np.abs(bundle.detB - closed) / np.abs(closed)))
    init = sc.initial_state()
    ib = build_bundle(init.rho_k, params, model)
    result["initial_data"] = {
        "relaxation_min_eigenvalue": float(ib.eigmin_R.min()),
        "diffusion_min_eigenvalue": float(ib.eigmin_B.min()),
        "grad_D_ratio": grad_D_ratio(init.rho_k, sc.grid, params, model),
    }
    ok = (report.ok and result["relaxation_bound_violations"] == 0
          and result["diffusion_min_eigenvalue"] > 0 and result["D_second_eigenvalue_min"] > 0
          and result.get("det_B_max_rel_error", 0.0) < 1e-10)
    result["ok"] = bool(ok)
    _emit(result, args.out, "verify_matrices.json")
    return EXIT_OK if ok else EXIT_SOLVER


def _roundtrip(rho_k, params):
    normal = psi_forward(PrimitiveState(rho_k), params)
    back = psi_inverse(normal, params).rho_k
    again = psi_forward(PrimitiveState(back), params)
    J = change_of_variables_jacobian(rho_k, params) @ change_of_variables_jacobian_inv(rho_k, params)
    return {
        "density_max_rel_error": float(np.max(np.abs(back - rho_k) / rho_k)),
        "total_max_rel_error": float(np.max(np.abs(again.rho - normal.rho) / normal.rho)),
        "h_max_error": float(np.max(np.abs(again.h - normal.h) / np.maximum(1.0, np.abs(normal.h)))),
        "jacobian_identity_error": float(np.max(np.abs(J - np.eye(params.n)))),
    }


def cmd_transform(args) -> int:
    sc = load_scenario(args.config)
    rng = np.random.default_rng(args.seed)
    result = {
        "initial_data": _roundtrip(sc.initial_state().rho_k, sc.params),
        "random_states": _roundtrip(_random_states(rng, sc.params, args.samples), sc.params),
    }
    worst = max(max(v for k, v in r.items() if k != "jacobian_identity_error") for r in result.values())
    result["ok"] = bool(worst < 1e-10)
    _emit(result, args.out, "transform.json")
    return EXIT_OK if result["ok"] else EXIT_SOLVER


def _snapshots_from(params, rho0, t, sigma, v, theta, x):
    rho_k = psi_inverse(NormalState(rho0 + sigma, theta), params).rho_k
    return {"t": t, "x": x, "rho_k": rho_k, "u": v, "h": theta, "p": (rho_k / params.m).sum(axis=-1)}


def cmd_solve_linear(args) -> int:
    from .linearized import RHSBundle, boundary_flux_residual, discrete_energy
    from .picard import PicardMap
    from .picard.norms import sobolev_norm

    sc = load_scenario(args.config)
    problem = sc.problem()
    pm = PicardMap(problem)
    g, fr = problem.grid, pm.frozen
    if args.rhs == "initial":
        rhs = pm.rhs(pm.initial_iterate())
    else:
        rhs = RHSBundle.zeros(problem.steps, g.M, sc.params.n, f4_form=problem.bc_form)
    traj = pm.solver.run(rhs, np.zeros(g.M), fr.u0, fr.h0)
    energy = discrete_energy(traj, fr, g)
    bres = np.concatenate([[0.0], boundary_flux_residual(traj, fr, rhs, g)])
    s_norm = sobolev_norm(traj.sigma, g, 1, problem.q)
    v_norm = sobolev_norm(traj.v, g, 2, problem.q)
    t_norm = sum(sobolev_norm(traj.theta[:, :, k], g, 2, problem.q) for k in range(sc.params.n - 1))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = np.column_stack([traj.t, s_norm, v_norm, t_norm, energy, bres])
    write_csv(out / "steps.csv", ["t", "sigma_H1", "v_H2", "theta_H2", "energy", "boundary_flux_residual"], rows)
    last = [0, traj.steps]
    snap = _snapshots_from(sc.params, fr.rho0, traj.t[last], traj.sigma[last], traj.v[last], traj.theta[last], g.y)
    diag = {
        "species_block_spd": pm.solver.check_species_spd(),
        "max_boundary_flux_residual": float(bres.max()),
        "energy_nonincreasing": bool(np.all(np.diff(energy) <= 1e-14 * max(1.0, energy[0]))),
    }
    write_fields(snap, out / "fields", args.format, sc.config_hash, diag)
    _emit(diag, out, "summary.json")
    return EXIT_OK


def _solve(sc):
    from .picard import run_fixed_point

    return run_fixed_point(sc.problem())


def cmd_solve(args) -> int:
    from .errors import NoContraction

    sc = load_scenario(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        sol = _solve(sc)
    except NoContraction as exc:
        _emit({"converged": False, "error": str(exc), "report": exc.report.to_dict()}, out, "report.json")
        return EXIT_SOLVER
    rep = sol.report
    ratios = [float("nan")] + rep.ratios
    write_csv(out / "iterations.csv", ["iteration", "difference", "ratio", "norm"],
              [[j + 1, d, q, nm] for j, (d, q, nm) in enumerate(zip(rep.differences, ratios, rep.norms))])
    summary = rep.to_dict()
    summary.update({
        "mass": sol.mass(),
        "mass_relative_error": sol.mass_error(),
        "bounds_ok": sol.bounds_ok(),
        "min_species_density": float(sol.rho_k.min()),
        "level_diagnostics": sol.level_diagnostics,
    })
    _emit(summary, out, "report.json")
    diag = {"converged": rep.converged, "iterations": rep.iterations, "T": rep.T,
            "mass_relative_error": sol.mass_error(), "bounds_ok": sol.bounds_ok()}
    write_fields(sol.eulerian(), out / "fields", args.format, sc.config_hash, diag, every=args.every)
    return EXIT_OK if sol.bounds_ok() else EXIT_SOLVER


def parse_sweep_spec(spec: str):
    """``key=v1,v2;key2=w1`` into a list of (key, [values])."""
    axes = []
    for part in filter(None, (p.strip() for p in spec.split(";"))):
        if "=" not in part:
            raise ValidationError("grid", f"expected key=values in {part!r}")
        key, values = part.split("=", 1)
        try:
            vals = [float(v) for v in values.split(",") if v.strip()]
        except ValueError:
            raise ValidationError("grid", f"non-numeric value in {part!r}") from None
        if not vals:
            raise ValidationError("grid", f"no values for {key!r}")
        axes.append((key.strip(), vals))
    if not axes:
        raise ValidationError("grid", "empty sweep specification")
    return axes


def _sweep_job(payload):
    mapping, base_dir, point = payload
    from .errors import NoContraction

    for key, val in point.items():
        set_dotted(mapping, key, int(val) if key.endswith(".N") or key.endswith("max_iter") else val)
    row = dict(point)
    try:
        sc = scenario_from_mapping(mapping, base_dir)
        sol = _solve(sc)
        rep = sol.report
        row.update(T_final=rep.T, converged=True, iterations=rep.iterations,
                   rate=rep.rate(1e3 * np.finfo(float).eps * max(rep.norms)),
                   max_ratio=max(rep.ratios) if rep.ratios else 0.0,
                   mass_error=sol.mass_error(), error="")
    except NoContraction as exc:
        row.update(T_final=float("nan"), converged=False, iterations=exc.report.iterations,
                   rate=float("nan"), max_ratio=float("nan"), mass_error=float("nan"), error="NoContraction")
    except ValidationError as exc:
        row.update(T_final=float("nan"), converged=False, iterations=0, rate=float("nan"),
                   max_ratio=float("nan"), mass_error=float("nan"), error=f"ValidationError: {exc}")
    return row


def cmd_sweep(args) -> int:
    path = Path(args.config)
    try:
        base = parse_text(path.read_text())
    except OSError as exc:
        raise ValidationError("config", f"cannot read {path}: {exc.strerror}") from None
    axes = parse_sweep_spec(args.grid)
    keys = [k for k, _ in axes]
    points = [dict(zip(keys, combo)) for combo in itertools.product(*(v for _, v in axes))]
    import copy

    payloads = [(copy.deepcopy(base), path.parent, pt) for pt in points]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_sweep_job, payloads))
    else:
        rows = [_sweep_job(p) for p in payloads]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cols = keys + ["T_final", "converged", "iterations", "rate", "max_ratio", "mass_error", "error"]
    import csv

    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([("%.17g" % r[c]) if isinstance(r[c], float) else r[c] for c in cols])
    print((out / "sweep.csv").read_text(), end="")
    return EXIT_OK if all(r["converged"] for r in rows) else EXIT_SOLVER


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mixflow", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=False):
        p.add_argument("--config", required=True, help="scenario file (YAML)")
        p.add_argument("--out", required=out_required, default=None, help="output directory")
        p.add_argument("--format", choices=("csv", "json"), default="csv", help="field snapshot format")
        p.add_argument("--seed", type=int, default=0, help="seed for randomized checks")
        p.add_argument("--jobs", type=int, default=1, help="parallel workers (sweep)")
        return p

    p = common(sub.add_parser("verify-matrices", help="check matrix identities and coercivity"))
    p.add_argument("--samples", type=int, default=1000)
    p.set_defaults(func=cmd_verify_matrices)
    p = common(sub.add_parser("transform", help="round-trip report of the change of variables"))
    p.add_argument("--samples", type=int, default=1000)
    p.set_defaults(func=cmd_transform)
    p = common(sub.add_parser("solve-linear", help="solve the linear system once"), out_required=True)
    p.add_argument("--rhs", choices=("initial", "zero"), default="initial",
                   help="right-hand side evaluated at the initial iterate, or zero")
    p.set_defaults(func=cmd_solve_linear)
    p = common(sub.add_parser("solve", help="run the fixed-point iteration"), out_required=True)
    p.add_argument("--every", type=int, default=1, help="write every k-th time level")
    p.set_defaults(func=cmd_solve)
    p = common(sub.add_parser("sweep", help="batch of fixed-point runs"), out_required=True)
    p.add_argument("--grid", required=True, help="sweep spec, e.g. 'time.T=0.0125,0.025;parameters.amp=0.01'")
    p.set_defaults(func=cmd_sweep)
    return parser


def configure_logging():
    level = os.environ.get("MIXFLOW_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    configure_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except IoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except MixflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
