"""Command-line entry points.

Subcommands: solve-stationary, solve-transient, study-stationary,
study-transient (all take a key-value config file), and check-invariants.
Outputs are CSV tables, JSON summaries, VTK files and the plain-text
mesh/field/trace formats.
"""

import argparse
import json
import os
import sys

import numpy as np


def _add_common(p, needs_config=True):
    if needs_config:
        p.add_argument("config", help="key-value config file")
    p.add_argument("--output", default=None, help="output directory")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads for independent study cells")
    p.add_argument("--quadrature-check", action="store_true", default=None,
                   help="double time-quadrature orders and report the drift")


def build_parser():
    ap = argparse.ArgumentParser(
        prog="dgelast",
        description="Interior-penalty DG elasticity with a posteriori bounds")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("solve-stationary", "solve-transient",
                 "study-stationary", "study-transient"):
        _add_common(sub.add_parser(name))
    sub.add_parser("check-invariants")
    return ap


def _load_cfg(args, kind):
    from .config import load_study_config
    cfg = load_study_config(
        args.config, output=args.output, threads=args.threads,
        quadrature_check=args.quadrature_check)
    if cfg.kind != kind:
        raise SystemExit("config kind is %r, command expects %r"
                         % (cfg.kind, kind))
    if not cfg.output:
        cfg.output = "out"
    os.makedirs(cfg.output, exist_ok=True)
    return cfg


def _cmd_solve_stationary(args):
    from .config import load_study_config
    from .cases import get_case
    from .mesh import build_structured, write_mesh
    from .space import DgSpace, callable_error_l2, write_field
    from .assembly import PenaltyConfig
    from .stationary import (ResidualSource, solve_stationary,
                             estimate_l2_duality, estimate_energy)
    from .vtkio import write_vtk

    cfg = _load_cfg(args, "stationary")
    case = get_case(cfg.case, cfg.lam, cfg.mu)
    mesh = build_structured(cfg.mesh_size, case.domain)
    space = DgSpace(mesh, cfg.degree)
    penalty = PenaltyConfig.from_material(mesh, cfg.degree, case.material,
                                          safety=cfg.penalty_factor)
    source = ResidualSource(smooth=case.stationary_load)
    z = solve_stationary(space, case.material, penalty, source,
                         tol=cfg.solver_tol)
    dual = estimate_l2_duality(space, case.material, z, source,
                               constant=cfg.calibration)
    ener = estimate_energy(space, case.material, z, source, penalty,
                           constant=cfg.calibration)
    err = callable_error_l2(z, case.stationary_solution)

    write_mesh(mesh, os.path.join(cfg.output, "mesh.txt"))
    write_field(z, os.path.join(cfg.output, "solution.txt"))
    write_vtk(os.path.join(cfg.output, "solution.vtk"), mesh,
              point_fields={"displacement": z},
              cell_fields={"estimator_duality": dual.per_element,
                           "estimator_energy": ener.per_element})
    summary = {
        "case": cfg.case, "n": cfg.mesh_size, "degree": cfg.degree,
        "alpha": penalty.alpha, "alpha_min": penalty.alpha_min,
        "err_l2": err, "duality": dual.summary(), "energy": ener.summary(),
        "config_hash": cfg.hash(),
    }
    with open(os.path.join(cfg.output, "solve_stationary.json"), "w") as fh:
        json.dump(summary, fh, indent=1)
    print("err_l2 = %.6e  E_duality = %.6e  E_energy = %.6e"
          % (err, dual.total, ener.total))
    print("outputs in", cfg.output)


def _cmd_solve_transient(args):
    from .studies import run_transient_run, linf_l2_error
    from .transient import save_trace
    from .vtkio import write_vtk

    cfg = _load_cfg(args, "transient")
    num_steps = int(round(cfg.final_time / cfg.tau_list[0]))
    trace, recon, report, err = run_transient_run(cfg, num_steps)
    save_trace(trace, os.path.join(cfg.output, "trace"),
               case_name=cfg.case, config_hash=cfg.hash())
    report.write_csv(os.path.join(cfg.output, "indicators.csv"))
    report.write_json(os.path.join(cfg.output, "indicators.json"),
                      config_hash=cfg.hash())
    final = trace.u(trace.num_steps)
    write_vtk(os.path.join(cfg.output, "final.vtk"), final.space.mesh,
              point_fields={"displacement": final})
    print("err_linf_l2 = %.6e  total bound = %.6e  (x%.1f)"
          % (err, report.total, report.total / err if err > 0 else float("inf")))
    print("outputs in", cfg.output)


def _cmd_study(args, kind):
    cfg = _load_cfg(args, kind)
    if kind == "stationary":
        from .studies import run_stationary_study
        result = run_stationary_study(cfg)
        for row in result["rows"]:
            print("r=%d n=%3d  err=%.4e  E_dual=%.4e  E_energy=%.4e"
                  % (row["degree"], row["n"], row["err_l2"],
                     row["est_duality"], row["est_energy"]))
        for k, v in result["orders"].items():
            print("%-22s slope %.3f" % (k, v["slope"]))
    else:
        from .studies import run_transient_study
        result = run_transient_study(cfg)
        for row in result["rows"]:
            print("tau=%.5f  err=%.4e  total=%.4e  temporal=%.4e"
                  % (row["tau"], row["err_linf_l2"], row["total"],
                     row["temporal"]))
        for k, v in result["orders"].items():
            print("%-22s slope %.3f" % (k, v["slope"]))
    print("outputs in", cfg.output)


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "check-invariants":
        from .studies import check_invariants
        checks = check_invariants(verbose=True)
        return 0 if all(ok for _, ok, _ in checks) else 1
    if args.command == "solve-stationary":
        _cmd_solve_stationary(args)
    elif args.command == "solve-transient":
        _cmd_solve_transient(args)
    elif args.command == "study-stationary":
        _cmd_study(args, "stationary")
    elif args.command == "study-transient":
        _cmd_study(args, "transient")
    return 0


if __name__ == "__main__":
    sys.exit(main())
