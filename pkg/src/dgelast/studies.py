"""Convergence and effectivity studies on manufactured problems.

Stationary: solve on a mesh sequence, report errors, both estimators,
effectivities and observed orders.  Transient: step-halving runs at a
fixed mesh with the full indicator report, a mesh-change scenario, and
calibration of the estimator constant on the coarsest run.  Study cells
are independent; with ``threads > 1`` they run in a pool and results are
gathered in submission order so output files are reproducible.
"""

import csv
import json
import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .mesh import build_structured, refine_nested
from .space import DgSpace, DgField, callable_error_l2
from .assembly import PenaltyConfig, assemble_ah
from .linsolve import solve_spd
from .stationary import (ResidualSource, solve_stationary, estimate_l2_duality,
                         estimate_energy)
from .transient import ProblemSpec, backward_euler_run
from .reconstruction import build_reconstruction_data
from .indicators import total_error_bound, default_constants, Constants
from .cases import get_case
from .lagrange import ContinuousSpace, solve_conforming
from .quadrature import triangle_rule


def observed_orders(hs, values):
    """log2 ratios between successive values and the least-squares slope."""
    hs = np.asarray(hs, dtype=float)
    values = np.asarray(values, dtype=float)
    good = values > 0
    pair = [float(np.log(values[i] / values[i + 1])
                  / np.log(hs[i] / hs[i + 1]))
            if good[i] and good[i + 1] else float("nan")
            for i in range(len(values) - 1)]
    if good.sum() >= 2:
        slope = float(np.polyfit(np.log(hs[good]), np.log(values[good]), 1)[0])
    else:
        slope = float("nan")
    return pair, slope


def _map_cells(fn, cfg, cells, threads):
    """Run independent study cells, in parallel processes when asked.

    Results come back in submission order, so multi-worker runs produce
    the same tables as sequential ones.
    """
    if threads <= 1:
        return [fn(cfg, cell) for cell in cells]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(fn, cfg, cell) for cell in cells]
        return [f.result() for f in futures]


def linf_l2_error(recon, exact_u, samples_per_interval=5):
    """max_t |u_N(t) - u(t)| over a per-interval sampling of [0, T]."""
    trace = recon.trace
    worst = 0.0
    for n in range(1, trace.num_steps + 1):
        for s in np.linspace(0.0, 1.0, samples_per_interval + 1)[1:]:
            t = float(trace.times[n - 1] + s * trace.tau)
            uN = recon.time_extension(t)
            worst = max(worst, callable_error_l2(
                uN, lambda p, _t=t: exact_u(p, _t)))
    return worst


# -- stationary study -----------------------------------------------------------


def _stationary_cell(cfg, cell):
    r, n = cell
    case = get_case(cfg.case, cfg.lam, cfg.mu)
    material = case.material
    mesh = build_structured(n, case.domain)
    space = DgSpace(mesh, r)
    penalty = PenaltyConfig.from_material(mesh, r, material,
                                          safety=cfg.penalty_factor)
    source = ResidualSource(smooth=case.stationary_load)
    z = solve_stationary(space, material, penalty, source, tol=cfg.solver_tol)
    err = callable_error_l2(z, case.stationary_solution)
    dual = estimate_l2_duality(space, material, z, source,
                               constant=cfg.calibration)
    ener = estimate_energy(space, material, z, source, penalty,
                           constant=cfg.calibration)
    return {
        "degree": r, "n": n, "h": float(mesh.diameters.max()),
        "dofs": space.ndof, "alpha": penalty.alpha,
        "err_l2": err, "est_duality": dual.total,
        "est_energy": ener.total,
        "eff_duality": dual.total / err if err > 0 else float("nan"),
        "eff_energy": ener.total / err if err > 0 else float("nan"),
    }


def run_stationary_study(cfg):
    """Errors, estimators and observed orders over a mesh sequence.

    Returns {"rows": [...], "orders": {...}} and writes CSV/JSON when the
    config carries an output directory.
    """
    cells = [(r, n) for r in cfg.degrees for n in cfg.mesh_sizes]
    rows = _map_cells(_stationary_cell, cfg, cells, cfg.threads)

    orders = {}
    for r in cfg.degrees:
        sub = [row for row in rows if row["degree"] == r]
        hs = [row["h"] for row in sub]
        for key in ("err_l2", "est_duality", "est_energy"):
            pair, slope = observed_orders(hs, [row[key] for row in sub])
            orders["r%d_%s" % (r, key)] = {"stepwise": pair, "slope": slope}

    result = {"rows": rows, "orders": orders}
    if cfg.output:
        os.makedirs(cfg.output, exist_ok=True)
        _write_rows_csv(os.path.join(cfg.output, "stationary_study.csv"), rows)
        with open(os.path.join(cfg.output, "stationary_study.json"), "w") as fh:
            json.dump({"orders": orders, "config_hash": cfg.hash(),
                       "config": cfg.as_dict()}, fh, indent=1)
    return result


# -- transient study ------------------------------------------------------------


def _build_schedule(case, cfg, num_steps):
    """Spaces and per-level schedule for the requested scenario."""
    mesh0 = build_structured(cfg.mesh_size, case.domain)
    if cfg.scenario == "constant":
        spaces = [DgSpace(mesh0, cfg.degree)]
        schedule = [0] * (num_steps + 1)
    elif cfg.scenario == "refine-half":
        fine = refine_nested(mesh0, range(mesh0.num_triangles))
        spaces = [DgSpace(mesh0, cfg.degree), DgSpace(fine, cfg.degree)]
        half = num_steps // 2
        schedule = [0] * (half + 1) + [1] * (num_steps - half)
    elif cfg.scenario == "coarsen-half":
        fine = refine_nested(mesh0, range(mesh0.num_triangles))
        spaces = [DgSpace(mesh0, cfg.degree), DgSpace(fine, cfg.degree)]
        half = num_steps // 2
        schedule = [1] * (half + 1) + [0] * (num_steps - half)
    else:
        raise ValueError("unknown scenario %r" % cfg.scenario)
    return spaces, schedule


def run_transient_run(cfg, num_steps, constants=None):
    """One backward-Euler run with its indicator report and measured error."""
    case = get_case(cfg.case, cfg.lam, cfg.mu)
    material = case.material
    spaces, schedule = _build_schedule(case, cfg, num_steps)
    penalty_alpha = max(
        PenaltyConfig.from_material(s.mesh, cfg.degree, material,
                                    safety=cfg.penalty_factor).alpha
        for s in spaces)
    penalty = PenaltyConfig(alpha=penalty_alpha)
    problem = ProblemSpec(
        material=material, f=case.f, u0=case.u0, u1=case.u1,
        final_time=cfg.final_time, num_steps=num_steps, spaces=spaces,
        penalty=penalty, schedule=schedule)
    trace = backward_euler_run(problem, tol=cfg.solver_tol)
    recon = build_reconstruction_data(trace)
    if constants is None:
        constants = default_constants(case.domain, material,
                                      calibration=cfg.calibration)
        if cfg.c_f_omega is not None:
            constants.c_f_omega = cfg.c_f_omega
    report = total_error_bound(
        trace, recon, variant=cfg.estimator, constants=constants,
        time_difference_form=(cfg.time_difference_form
                              and len(set(schedule)) == 1),
        quadrature_check=cfg.quadrature_check)
    err = linf_l2_error(recon, case.u)
    return trace, recon, report, err


def _transient_cell(cfg, num_steps):
    _, _, report, err = run_transient_run(cfg, num_steps)
    s = report.summary()
    s["tau"] = cfg.final_time / num_steps
    s["num_steps"] = num_steps
    s["err_linf_l2"] = err
    s["effectivity"] = s["total"] / err if err > 0 else float("nan")
    return s


def run_transient_study(cfg):
    """Step-halving study: per-step indicator reports and observed orders."""
    taus = list(cfg.tau_list)
    steps = [int(round(cfg.final_time / t)) for t in taus]
    rows = _map_cells(_transient_cell, cfg, steps, cfg.threads)

    taus_eff = [row["tau"] for row in rows]
    orders = {}
    for key in ("err_linf_l2", "temporal", "total"):
        pair, slope = observed_orders(taus_eff, [row[key] for row in rows])
        orders[key] = {"stepwise": pair, "slope": slope}

    result = {"rows": rows, "orders": orders}
    if cfg.output:
        os.makedirs(cfg.output, exist_ok=True)
        flat = []
        for row in rows:
            r = {k: v for k, v in row.items()
                 if isinstance(v, (int, float, str))}
            flat.append(r)
        _write_rows_csv(os.path.join(cfg.output, "transient_study.csv"), flat)
        with open(os.path.join(cfg.output, "transient_study.json"), "w") as fh:
            json.dump({"orders": orders, "config_hash": cfg.hash(),
                       "config": cfg.as_dict()}, fh, indent=1)
    return result


def calibrate_constant(bound_parts, err):
    """Smallest nonnegative estimator constant making the bound reliable.

    ``bound_parts`` = (estimator-scaled part at constant 1, fixed part);
    the bound C * scaled + fixed must reach the measured error.
    """
    scaled, fixed = bound_parts
    if fixed >= err or scaled <= 0:
        return 0.0
    return (err - fixed) / scaled


# -- reconstruction-gap oracle ---------------------------------------------------


def oracle_reconstruction_gap(trace, recon, levels=None, refinements=2,
                              degree_increment=1, max_dofs=400_000):
    """Reference gap |w_ref^n - u_h^n| by over-resolved conforming solves.

    w_ref^n approximates the auxiliary stationary solution with load g^n
    on a ``refinements``-times uniformly refined mesh with a conforming
    space one degree higher.  Guarded by ``max_dofs``; intended for small
    problems only.
    """
    problem = trace.problem
    if levels is None:
        levels = range(trace.num_steps + 1)
    gaps = {}
    for n in levels:
        space_n = trace.space(n)
        mesh_ref = space_n.mesh
        for _ in range(refinements):
            mesh_ref = refine_nested(mesh_ref, range(mesh_ref.num_triangles))
        cdeg = space_n.degree + degree_increment
        cs = ContinuousSpace(mesh_ref, cdeg)
        if 2 * cs.num_nodes > max_dofs:
            raise ValueError("oracle problem exceeds the dof guard")

        rule = triangle_rule(2 * cdeg + 2)
        tri = mesh_ref.vertices[mesh_ref.triangles]
        J = np.stack([tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]], axis=2)
        pts = tri[:, 0][:, None, :] + np.einsum("tij,qj->tqi", J, rule.points)
        flat = pts.reshape(-1, 2)
        amap = mesh_ref.ancestor_tri_map(space_n.mesh)
        elems = np.repeat(amap, rule.npoints)

        disc = space_n.eval_at(recon.load_discrete[n].coeffs, elems, flat)
        bank = recon.bank
        if n == 0:
            smooth = np.asarray(problem.f(flat, 0.0))
        else:
            smooth = np.zeros_like(disc)
            for tk, wk in zip(bank.interval_times(n), bank.tq_weights):
                smooth += wk * np.asarray(problem.f(flat, float(tk)))
        load_vals = (disc + smooth).reshape(mesh_ref.num_triangles,
                                            rule.npoints, 2)

        nodal = solve_conforming(cs, problem.material, load_vals)
        w_vals = cs.eval(nodal, np.arange(mesh_ref.num_triangles), rule.points)
        u_vals = space_n.eval_at(trace.u(n).coeffs, elems, flat).reshape(
            mesh_ref.num_triangles, rule.npoints, 2)
        w = rule.weights[None, :] * (2.0 * mesh_ref.areas)[:, None]
        gaps[n] = float(np.sqrt(max(
            np.einsum("tq,tqc->", w, (w_vals - u_vals) ** 2), 0.0)))
    return gaps


# -- invariant smoke suite -------------------------------------------------------


def check_invariants(verbose=True):
    """Quick property checks across the modules; returns (name, ok, detail)."""
    from .quadrature import triangle_rule, edge_rule, gauss_1d
    from .material import StiffnessTensor, to_mandel, from_mandel, spectral_bounds
    from .reconstruction import acceleration_remainder
    from .cases import verify_strong_form
    from .space import project_function

    rng = np.random.default_rng(0)
    checks = []

    def record(name, err, tol):
        checks.append((name, bool(err <= tol), "%.3e (tol %.0e)" % (err, tol)))

    # quadrature exactness up to the advertised degree
    worst = 0.0
    for deg in (4, 6, 8):
        rule = triangle_rule(deg)
        for i in range(deg + 1):
            for j in range(deg + 1 - i):
                val = float(np.sum(rule.weights * rule.points[:, 0] ** i
                                   * rule.points[:, 1] ** j))
                import math
                exact = (math.factorial(i) * math.factorial(j)
                         / math.factorial(i + j + 2))
                worst = max(worst, abs(val - exact) / abs(exact))
    record("triangle quadrature exactness", worst, 1e-13)

    worst = 0.0
    for deg in (4, 6, 8):
        rule = edge_rule(deg)
        for i in range(deg + 1):
            val = float(np.sum(rule.weights * rule.points ** i))
            worst = max(worst, abs(val - 1.0 / (i + 1)) * (i + 1))
    record("edge quadrature exactness", worst, 1e-13)

    # element mass identity
    mesh = build_structured(3)
    space = DgSpace(mesh, 2)
    phi = space.vol_ref_phi
    mass = np.einsum("q,qi,qj->ij", space.volume_rule.weights, phi, phi)
    record("element mass identity", float(np.max(np.abs(mass - np.eye(space.nb)))),
           1e-12)

    # projection is an L2 contraction (refined-quadrature measurement)
    f = lambda p: np.column_stack([np.sin(3 * p[:, 0] + 1) * p[:, 1],
                                   np.cos(2 * p[:, 1]) - p[:, 0] ** 2])
    from .space import callable_l2, callable_error_l2
    pf = project_function(space, f)
    norm_f = callable_l2(space, f, boost=6)
    record("projection contraction", max(0.0, pf.norm_l2() - norm_f), 1e-12)

    # projection commutes with time differencing
    g = lambda p, t: np.asarray(f(p)) * np.cos(t)
    pa = project_function(space, lambda p: g(p, 0.3))
    pb = project_function(space, lambda p: g(p, 0.7))
    pdiff = project_function(space, lambda p: g(p, 0.3) - g(p, 0.7))
    record("projection commutes with time differences",
           float(np.max(np.abs((pa.coeffs - pb.coeffs) - pdiff.coeffs))), 1e-12)

    # remainder identities
    gx, gw = gauss_1d(2)
    t0, t1 = 0.31, 0.47
    tau = t1 - t0
    imu = sum(w * tau * acceleration_remainder(t0 + tau * x, t0, t1)
              for x, w in zip(gx, gw))
    record("remainder zero mean", abs(imu), 1e-14)
    imu2 = sum(w * tau * acceleration_remainder(t0 + tau * x, t0, t1) ** 2
               for x, w in zip(gx, gw))
    record("remainder square integral", abs(imu2 - 3 * tau), 1e-13)

    # cubic moment identity: int (t1-t)(3t - 2 t0 - t1) dt = 0
    worst = 0.0
    for _ in range(20):
        a = rng.uniform(-2, 2)
        b = a + rng.uniform(0.01, 3)
        gx2, gw2 = gauss_1d(2)
        val = sum(w * (b - a) * ((b - t) * (3 * t - 2 * a - b))
                  for x, w in zip(gx2, gw2)
                  for t in [a + (b - a) * x])
        worst = max(worst, abs(val) / (b - a) ** 3)
    record("vanishing cubic moment", worst, 1e-14)

    # Mandel reduction roundtrip and spectral bounds by sampling
    T = rng.standard_normal((50, 2, 2))
    T = 0.5 * (T + np.swapaxes(T, 1, 2))
    record("mandel roundtrip",
           float(np.max(np.abs(from_mandel(to_mandel(T)) - T))), 1e-14)
    mat = StiffnessTensor.from_lame(1.3, 0.7)
    lo, hi = spectral_bounds(mat)
    tm = to_mandel(T)
    quad = np.einsum("km,mn,kn->k", tm, mat.matrices[0], tm)
    nrm2 = np.einsum("km,km->k", tm, tm)
    record("tensor coercivity sampling", float(np.max(lo * nrm2 - quad)), 1e-12)
    record("tensor boundedness sampling", float(np.max(quad - hi * nrm2)), 1e-12)

    # manufactured strong forms
    record("sincos strong form", verify_strong_form(get_case("sincos")), 1e-8)
    record("bubble4 strong form", verify_strong_form(get_case("bubble4")), 1e-8)

    if verbose:
        for name, ok, detail in checks:
            print("%-45s %s  %s" % (name, "PASS" if ok else "FAIL", detail))
    return checks


def _write_rows_csv(path, rows):
    if not rows:
        return
    cols = list(rows[0].keys())
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        for row in rows:
            w.writerow({k: ("%.17g" % v if isinstance(v, float) else v)
                        for k, v in row.items() if k in cols})
