"""A posteriori indicators and the fully discrete error bound.

Temporal group: mesh change, evolution accumulator, source oscillation
and time reconstruction, each integrated per step with fixed Gauss rules
(orders documented per function; a quadrature-check mode doubles them and
reports the drift).  Spatial group: the stationary estimator applied per
level through the reconstruction loads.  The total bound is

    spatial part + 2 * (temporal group) + initial-data part,

all scalable by the single calibration constant that the stationary
estimators carry.
"""

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .quadrature import gauss_1d
from .material import spectral_bounds
from .space import DgField, project_function, project_cross_mesh
from .stationary import ResidualSource, estimate_l2_duality, estimate_energy
from .reconstruction import acceleration_remainder


def poincare_constant(domain):
    """diam(domain) / pi: a valid constant for convex domains."""
    x0, y0, x1, y1 = domain
    return float(np.hypot(x1 - x0, y1 - y0) / np.pi)


@dataclass
class Constants:
    """Constants entering the bound; calibration scales the estimators."""

    c_f_omega: float
    c_star: float
    calibration: float = 1.0


def default_constants(domain, material, calibration=1.0):
    c_lo, _ = spectral_bounds(material)
    return Constants(c_f_omega=poincare_constant(domain), c_star=c_lo,
                     calibration=calibration)


# -- temporal indicators ---------------------------------------------------------


def mesh_change_indicator(trace, recon, time_quad_points=4):
    """Projection defects caused by transferring between meshes.

    First part: per-step time quadrature of the L2 defect of the
    extension velocity against the current space; second part: the
    transfer defects of the level velocities weighted by the remaining
    time.  Identically zero (no quadrature noise) on a constant schedule.
    """
    N = trace.num_steps
    schedule = trace.problem.schedule
    per_interval = np.zeros(N + 1)
    per_transfer = np.zeros(N + 1)
    if trace.constant_schedule():
        return 0.0, per_interval, per_transfer

    space_f = recon.space
    times = trace.times
    tau = trace.tau
    gx, gw = gauss_1d(time_quad_points)

    def defect(coeffs, space_n):
        if space_n is space_f:
            return np.zeros_like(coeffs)
        proj = project_cross_mesh(DgField(space_f, coeffs), space_n)
        back = project_cross_mesh(proj, space_f)
        return coeffs - back.coeffs

    total = 0.0
    for n in range(1, N + 1):
        space_n = trace.space(n)
        d1 = defect((recon.level_u[n] - recon.level_u[n - 1]) / tau, space_n)
        d2 = defect(recon.second_diff[n], space_n)
        a11, a12, a22 = d1 @ d1, d1 @ d2, d2 @ d2
        if a11 == 0.0 and a22 == 0.0:
            continue
        acc = 0.0
        for x, w in zip(gx, gw):
            b = times[n] - (times[n - 1] + tau * x)
            c = (3 * b * b - 2 * tau * b) / tau
            acc += w * np.sqrt(max(a11 - 2 * c * a12 + c * c * a22, 0.0))
        per_interval[n] = tau * acc
        total += per_interval[n]

    for n in range(1, N):
        sp_next = trace.space(n + 1)
        if sp_next is trace.space(n):
            continue
        v_n = trace.v(n)
        proj = project_cross_mesh(project_cross_mesh(v_n, sp_next), space_f)
        diff = proj.coeffs - recon.level_v[n]
        per_transfer[n] = float(times[-1] - times[n]) * float(np.linalg.norm(diff))
        total += per_transfer[n]
    return float(total), per_interval, per_transfer


def evolution_indicator(recon, quad_points=5):
    """Time integral of the evolution accumulator norm, per-step Gauss."""
    gx, gw = gauss_1d(quad_points)
    tau = recon.tau
    per_interval = np.zeros(recon.N + 1)
    for n in range(1, recon.N + 1):
        t0 = float(recon.times[n - 1])
        acc = 0.0
        for x, w in zip(gx, gw):
            acc += w * recon.evolution_term_norm(n, t0 + tau * x)
        per_interval[n] = tau * acc
    return float(per_interval.sum()), per_interval


def _oscillation_defect_sq(trace, n, t, bank):
    """Spatial L2^2 of fbar^n - f(t), evaluated as a weighted difference.

    Forming the average minus the sample from pointwise differences makes
    the result exactly zero for loads constant in time.
    """
    space_n = trace.space(n)
    pts = space_n.vol_points.reshape(-1, 2)
    f = trace.problem.f
    ft = np.asarray(f(pts, float(t)))
    d = np.zeros_like(ft)
    for tk, wk in zip(bank.interval_times(n), bank.tq_weights):
        d += wk * (np.asarray(f(pts, float(tk))) - ft)
    d = d.reshape(space_n.mesh.num_triangles, -1, 2)
    return float(np.einsum("tq,tqc->", space_n.vol_weights, d ** 2))


def source_oscillation_indicator(trace, recon, time_quad_points=4):
    """Time oscillation of the load: (1/2pi) sum_n (tau^3 int |fbar-f|^2)^(1/2)."""
    bank = recon.bank
    tau = trace.tau
    gx, gw = gauss_1d(time_quad_points)
    per_interval = np.zeros(trace.num_steps + 1)
    for n in range(1, trace.num_steps + 1):
        t0 = float(trace.times[n - 1])
        acc = 0.0
        for x, w in zip(gx, gw):
            acc += w * _oscillation_defect_sq(trace, n, t0 + tau * x, bank)
        per_interval[n] = np.sqrt(max(tau ** 3 * tau * acc, 0.0))
    return float(per_interval.sum() / (2 * np.pi)), per_interval


def time_reconstruction_indicator(trace, recon, quad_points=2):
    """(1/2pi) sum_n (tau^3 int |mu^n|^2 dt)^(1/2) |second difference|.

    The remainder integral is quadratic, so the two-point rule is exact
    (closed form: 3 tau).
    """
    gx, gw = gauss_1d(quad_points)
    tau = trace.tau
    per_interval = np.zeros(trace.num_steps + 1)
    for n in range(1, trace.num_steps + 1):
        t0 = float(trace.times[n - 1])
        mu_sq = sum(w * acceleration_remainder(t0 + tau * x, t0, t0 + tau) ** 2
                    for x, w in zip(gx, gw)) * tau
        norm = float(np.linalg.norm(recon.second_diff[n]))
        per_interval[n] = np.sqrt(max(tau ** 3 * mu_sq, 0.0)) * norm
    return float(per_interval.sum() / (2 * np.pi)), per_interval


# -- spatial indicators ----------------------------------------------------------


def _estimate(space, material, z, source, variant, penalty, constant):
    if variant == "duality":
        return estimate_l2_duality(space, material, z, source,
                                   constant=constant)
    if variant == "energy":
        return estimate_energy(space, material, z, source, penalty,
                               constant=constant)
    raise ValueError("estimator variant must be 'duality' or 'energy'")


def level_estimates(trace, recon, variant="duality", constants=None):
    """Stationary estimator per level with the sample-load data.

    Returns the per-level values E^n (n = 0..N), the estimate for the
    initial velocity reconstruction, and the per-level breakdowns.
    """
    problem = trace.problem
    material = problem.material
    penalty = problem.penalty
    cal = 1.0 if constants is None else constants.calibration
    values = np.zeros(trace.num_steps + 1)
    breakdowns = []
    for n in range(trace.num_steps + 1):
        space_n = trace.space(n)
        src = ResidualSource(
            discrete=recon.load_discrete[n],
            smooth=lambda p, _t=float(trace.times[n]): problem.f(p, _t))
        br = _estimate(space_n, material, trace.u(n), src, variant, penalty, cal)
        values[n] = br.total
        breakdowns.append(br)

    src0 = ResidualSource(
        discrete=recon.velocity_load_discrete,
        smooth=lambda p: problem.f(p, 0.0))
    br0 = _estimate(trace.space(0), material, trace.v(0), src0, variant,
                    penalty, cal)
    return values, br0.total, breakdowns


def _fbar_sample_gap(trace, recon, n):
    """|fbar^n - f^n| in L2, zero by construction for n = 0."""
    if n == 0:
        return 0.0
    return float(np.sqrt(max(
        _oscillation_defect_sq(trace, n, float(trace.times[n]), recon.bank),
        0.0)))


def _dload_gap(trace, recon, n):
    """|d f^n - d fbar^n| in L2 of the backward time differences."""
    space_n = trace.space(n)
    pts = space_n.vol_points.reshape(-1, 2)
    f = trace.problem.f
    tau = trace.tau
    bank = recon.bank
    d_sample = (np.asarray(f(pts, float(trace.times[n])))
                - np.asarray(f(pts, float(trace.times[n - 1]))))
    # pairwise differences keep the result exactly zero for static loads
    d_avg = np.zeros_like(d_sample)
    if n >= 2:
        for ta, tb, wk in zip(bank.interval_times(n),
                              bank.interval_times(n - 1), bank.tq_weights):
            d_avg += wk * (np.asarray(f(pts, float(ta)))
                           - np.asarray(f(pts, float(tb))))
    else:
        f0 = np.asarray(f(pts, 0.0))
        for tk, wk in zip(bank.interval_times(1), bank.tq_weights):
            d_avg += wk * (np.asarray(f(pts, float(tk))) - f0)
    d = (d_sample - d_avg) / tau
    d = d.reshape(space_n.mesh.num_triangles, -1, 2)
    return float(np.sqrt(max(np.einsum("tq,tqc->", space_n.vol_weights, d ** 2),
                             0.0)))


def spatial_indicators(trace, recon, variant="duality", constants=None,
                       time_difference_form=False):
    """The three spatial groups assembled from the level estimates.

    ``time_difference_form`` switches the third group to the sharper
    stationary-mesh variant that estimates the velocity reconstruction
    directly instead of accumulating neighbour levels with a 1/tau
    factor; it requires a constant mesh schedule.
    """
    problem = trace.problem
    if constants is None:
        constants = default_constants(problem.spaces[0].mesh.domain,
                                      problem.material)
    E, E_vel0, _ = level_estimates(trace, recon, variant, constants)
    tau = trace.tau
    N = trace.num_steps
    cpc = 2.0 * constants.c_f_omega ** 2 / constants.c_star

    fgap = np.array([_fbar_sample_gap(trace, recon, n) for n in range(N + 1)])
    sp1 = np.sqrt(2.0) * E[0]
    sp2 = (3.0 * float(np.max(E + cpc * fgap))
           + (4.0 * tau / 27.0) * E_vel0)

    dgap = np.array([0.0] + [_dload_gap(trace, recon, n)
                             for n in range(1, N + 1)])
    data_part = float(np.sum(2.0 * tau * cpc * dgap[1:]))
    if time_difference_form:
        if not trace.constant_schedule():
            raise ValueError(
                "the time-difference form needs a constant mesh schedule")
        cal = constants.calibration
        acc = 0.0
        for n in range(1, N + 1):
            space_n = trace.space(n)
            disc = DgField(space_n, (recon.load_discrete[n].coeffs
                                     - recon.load_discrete[n - 1].coeffs) / tau)
            smooth = (lambda p, _a=float(trace.times[n]),
                      _b=float(trace.times[n - 1]), _f=problem.f:
                      (np.asarray(_f(p, _a)) - np.asarray(_f(p, _b))) / tau)
            br = _estimate(space_n, problem.material, trace.v(n),
                           ResidualSource(disc, smooth), variant,
                           problem.penalty, cal)
            acc += 2.0 * tau * br.total
        sp3 = acc + data_part
    else:
        sp3 = float(np.sum(2.0 * (E[1:] + E[:-1]))) + data_part
    return {"sp1": float(sp1), "sp2": float(sp2), "sp3": float(sp3),
            "levels": E, "velocity_level": float(E_vel0), "fbar_gaps": fgap,
            "dload_gaps": dgap}


# -- assembled report ------------------------------------------------------------


@dataclass
class IndicatorReport:
    """Everything the fully discrete bound is made of."""

    variant: str
    constants: Constants
    mesh_change: float
    evolution: float
    source_oscillation: float
    time_reconstruction: float
    spatial_1: float
    spatial_2: float
    spatial_3: float
    initial_l2_gap: float
    initial_velocity_gap: float
    level_estimates: np.ndarray
    velocity_level_estimate: float
    times: np.ndarray
    series: dict = field(default_factory=dict)
    quadrature_drift: dict = field(default_factory=dict)

    @property
    def temporal(self):
        return 2.0 * (self.mesh_change + self.evolution
                      + self.source_oscillation + self.time_reconstruction)

    @property
    def spatial(self):
        return self.spatial_1 + self.spatial_2 + self.spatial_3

    @property
    def initial(self):
        c = self.constants
        return (np.sqrt(2.0) * self.initial_l2_gap
                + 2.0 * c.c_f_omega / np.sqrt(c.c_star)
                * self.initial_velocity_gap)

    @property
    def total(self):
        return self.spatial + self.temporal + self.initial

    def abstract_decomposition(self):
        """The abstract bound with reconstruction norms replaced by their
        computable spatial surrogates."""
        return {
            "sup_reconstruction_gap": self.spatial_2,
            "initial_reconstruction_gap": self.spatial_1,
            "velocity_reconstruction_integral": self.spatial_3,
            "temporal_group": self.temporal,
            "initial_data": self.initial,
        }

    def summary(self):
        c = self.constants
        return {
            "variant": self.variant,
            "mesh_change": self.mesh_change,
            "evolution": self.evolution,
            "source_oscillation": self.source_oscillation,
            "time_reconstruction": self.time_reconstruction,
            "temporal": self.temporal,
            "spatial_1": self.spatial_1,
            "spatial_2": self.spatial_2,
            "spatial_3": self.spatial_3,
            "spatial": self.spatial,
            "initial": self.initial,
            "total": self.total,
            "initial_l2_gap": self.initial_l2_gap,
            "initial_velocity_gap": self.initial_velocity_gap,
            "velocity_level_estimate": self.velocity_level_estimate,
            "constants": {"c_f_omega": c.c_f_omega, "c_star": c.c_star,
                          "calibration": c.calibration},
            "abstract_decomposition": self.abstract_decomposition(),
            "quadrature_drift": self.quadrature_drift,
        }

    def write_csv(self, path):
        cols = sorted(self.series)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["level", "time", "level_estimate"] + cols)
            for n in range(len(self.times)):
                w.writerow([n, "%.17g" % self.times[n],
                            "%.17g" % self.level_estimates[n]]
                           + ["%.17g" % self.series[c][n] for c in cols])

    def write_json(self, path, config_hash=None):
        data = self.summary()
        data["config_hash"] = config_hash
        with open(path, "w") as fh:
            json.dump(data, fh, indent=1)


def initial_data_gaps(trace):
    """Quadrature distances of the projected initial data to the data."""
    from .space import callable_error_l2
    problem = trace.problem
    u0_gap = callable_error_l2(trace.u(0), problem.u0)
    u1_gap = callable_error_l2(trace.v(0), problem.u1)
    return u0_gap, u1_gap


def total_error_bound(trace, recon, variant="duality", constants=None,
                      time_difference_form=False, quadrature_check=False):
    """Assemble the full indicator report for a finished run."""
    problem = trace.problem
    if constants is None:
        constants = default_constants(problem.spaces[0].mesh.domain,
                                      problem.material,)

    mc, mc_i, mc_t = mesh_change_indicator(trace, recon)
    evo, evo_i = evolution_indicator(recon)
    osc, osc_i = source_oscillation_indicator(trace, recon)
    trec, trec_i = time_reconstruction_indicator(trace, recon)
    spx = spatial_indicators(trace, recon, variant, constants,
                             time_difference_form=time_difference_form)
    u0_gap, u1_gap = initial_data_gaps(trace)

    drift = {}
    if quadrature_check:
        mc2, _, _ = mesh_change_indicator(trace, recon, time_quad_points=8)
        evo2, _ = evolution_indicator(recon, quad_points=10)
        osc2, _ = source_oscillation_indicator(trace, recon,
                                               time_quad_points=8)
        trec2, _ = time_reconstruction_indicator(trace, recon, quad_points=4)
        drift = {"mesh_change": mc2 - mc, "evolution": evo2 - evo,
                 "source_oscillation": osc2 - osc,
                 "time_reconstruction": trec2 - trec}
    else:
        evo7, _ = evolution_indicator(recon, quad_points=7)
        drift = {"evolution": evo7 - evo}

    return IndicatorReport(
        variant=variant, constants=constants,
        mesh_change=mc, evolution=evo, source_oscillation=osc,
        time_reconstruction=trec,
        spatial_1=spx["sp1"], spatial_2=spx["sp2"], spatial_3=spx["sp3"],
        initial_l2_gap=u0_gap, initial_velocity_gap=u1_gap,
        level_estimates=spx["levels"],
        velocity_level_estimate=spx["velocity_level"],
        times=trace.times,
        series={
            "mesh_change_interval": mc_i, "mesh_change_transfer": mc_t,
            "evolution_interval": evo_i, "oscillation_interval": osc_i,
            "time_reconstruction_interval": trec_i,
            "fbar_gap": spx["fbar_gaps"], "dload_gap": spx["dload_gaps"],
        },
        quadrature_drift=drift)
