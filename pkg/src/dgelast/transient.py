"""Backward-Euler time stepping for the elastodynamic problem.

Each step solves (M/tau^2 + K_n) u^n = F^n + (M/tau^2)(u^{n-1} + tau
v^{n-1}) with the previous state carried onto the current mesh by exact
nested L2 projection when the mesh changes; the mass matrix is the
identity in the element-orthonormal basis.  Velocities are the backward
differences v^n = (u^n - P_n u^{n-1}) / tau.  The scheme is implicit and
unconditionally stable: with no load the discrete energy is
nonincreasing.
"""

import json
import os
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .space import DgSpace, DgField, project_function, project_cross_mesh
from .assembly import assemble_ah
from .linsolve import solve_spd, block_jacobi
from .mesh import write_mesh, read_mesh


@dataclass
class ProblemSpec:
    """Time-dependent problem: data, horizon, step and mesh schedule.

    ``spaces`` lists the members of one nested mesh family; ``schedule``
    assigns a space index to every level 0..N.  The time step is uniform.
    """

    material: object
    f: object            # f(points, t) -> (m, 2)
    u0: object           # u0(points) -> (m, 2), zero trace
    u1: object
    final_time: float
    num_steps: int
    spaces: list
    penalty: object
    schedule: list = None

    def __post_init__(self):
        if self.final_time <= 0 or self.num_steps < 1:
            raise ValueError("need a positive horizon and at least one step")
        if self.schedule is None:
            self.schedule = [0] * (self.num_steps + 1)
        if len(self.schedule) != self.num_steps + 1:
            raise ValueError("schedule must give one space per level 0..N")
        if any(s < 0 or s >= len(self.spaces) for s in self.schedule):
            raise ValueError("schedule entry out of range")

    @property
    def tau(self):
        return self.final_time / self.num_steps

    def times(self):
        return np.linspace(0.0, self.final_time, self.num_steps + 1)


def _check_zero_trace(space, fn, scale_hint=1.0):
    pts = space.face_points[space.mesh.boundary_faces].reshape(-1, 2)
    vals = np.asarray(fn(pts))
    worst = float(np.max(np.abs(vals))) if vals.size else 0.0
    if worst > 1e-8 * max(1.0, scale_hint):
        raise ValueError(
            "initial displacement is not zero on the boundary (max %.3e)" % worst)


class TransientTrace:
    """Discrete evolution: times, displacement and velocity per level.

    Also keeps the per-space stiffness matrices so downstream consumers
    (reconstruction loads, estimators) can apply the discrete operator
    without reassembling.
    """

    def __init__(self, problem, times, fields, velocities, stiffnesses):
        self.problem = problem
        self.times = np.asarray(times)
        self.fields = fields
        self.velocities = velocities
        self.stiffnesses = stiffnesses
        self.fbar_cache = {}

    @property
    def num_steps(self):
        return len(self.times) - 1

    @property
    def tau(self):
        return float(self.times[1] - self.times[0])

    def space(self, n):
        return self.problem.spaces[self.problem.schedule[n]]

    def u(self, n):
        return self.fields[n]

    def v(self, n):
        return self.velocities[n]

    def stiffness(self, n):
        return self.stiffnesses[self.problem.schedule[n]]

    def energy(self, n):
        """Discrete energy: kinetic plus elastic at level n."""
        K = self.stiffness(n)
        u, v = self.fields[n].coeffs, self.velocities[n].coeffs
        return 0.5 * float(v @ v) + 0.5 * float(u @ (K @ u))

    def constant_schedule(self):
        return len(set(self.problem.schedule)) == 1


def backward_euler_run(problem, tol=1e-10):
    """Run the implicit scheme over the whole horizon.

    Raises SolverError annotated with the step index if any linear solve
    fails.
    """
    tau = problem.tau
    times = problem.times()
    spaces = problem.spaces

    stiffnesses = {}
    steppers = {}
    for idx in sorted(set(problem.schedule)):
        K = assemble_ah(spaces[idx], problem.material, problem.penalty)
        stiffnesses[idx] = K
        A = (K + sp.identity(K.shape[0], format="csr") / tau ** 2).tocsr()
        steppers[idx] = (A, block_jacobi(A, 2 * spaces[idx].nb))

    sp0 = spaces[problem.schedule[0]]
    u_prev = project_function(sp0, problem.u0)
    v_prev = project_function(sp0, problem.u1)
    _check_zero_trace(sp0, problem.u0,
                      scale_hint=max(1.0, float(np.max(np.abs(u_prev.coeffs)))
                                     if u_prev.coeffs.size else 1.0))

    fields = [u_prev]
    velocities = [v_prev]
    for n in range(1, problem.num_steps + 1):
        idx = problem.schedule[n]
        space_n = spaces[idx]
        if space_n is not u_prev.space:
            u_carry = project_cross_mesh(u_prev, space_n)
            v_carry = project_cross_mesh(v_prev, space_n)
        else:
            u_carry, v_carry = u_prev, v_prev

        tn = float(times[n])
        F = project_function(space_n, lambda p: problem.f(p, tn)).coeffs
        b = F + (u_carry.coeffs + tau * v_carry.coeffs) / tau ** 2
        A, blocks = steppers[idx]
        # predictor warm start; the solution differs from it by O(tau^2)
        x0 = u_carry.coeffs + tau * v_carry.coeffs if np.any(b) else None
        try:
            x = solve_spd(A, b, tol=tol, precond_blocks=blocks, x0=x0)
        except Exception as exc:
            raise type(exc)("step %d: %s" % (n, exc)) from exc

        u_n = DgField(space_n, x)
        v_n = DgField(space_n, (x - u_carry.coeffs) / tau)
        fields.append(u_n)
        velocities.append(v_n)
        u_prev, v_prev = u_n, v_n

    return TransientTrace(problem, times, fields, velocities, stiffnesses)


# -- checkpointing -------------------------------------------------------------

def save_trace(trace, directory, case_name=None, config_hash=None):
    """Write the trace to a directory: meta.json, meshes and coefficients."""
    os.makedirs(directory, exist_ok=True)
    problem = trace.problem
    meta = {
        "version": 1,
        "case": case_name,
        "final_time": problem.final_time,
        "num_steps": problem.num_steps,
        "degree": problem.spaces[0].degree,
        "alpha": problem.penalty.alpha,
        "schedule": list(problem.schedule),
        "times": [float(t) for t in trace.times],
        "config_hash": config_hash,
        "num_spaces": len(problem.spaces),
    }
    with open(os.path.join(directory, "meta.json"), "w") as fh:
        json.dump(meta, fh, indent=1)
    for k, space in enumerate(problem.spaces):
        write_mesh(space.mesh, os.path.join(directory, "mesh_%02d.txt" % k))
    for n in range(trace.num_steps + 1):
        np.savetxt(os.path.join(directory, "u_%04d.txt" % n),
                   trace.fields[n].coeffs)
        np.savetxt(os.path.join(directory, "v_%04d.txt" % n),
                   trace.velocities[n].coeffs)


def load_trace(directory, material, f, u0, u1, penalty):
    """Rebuild a trace from a checkpoint directory.

    Mesh files are reloaded in family order (each parented on the
    previous one); data callables are supplied by the caller, typically
    from the manufactured-case registry.
    """
    with open(os.path.join(directory, "meta.json")) as fh:
        meta = json.load(fh)
    meshes = []
    for k in range(meta["num_spaces"]):
        parent = meshes[-1] if meshes else None
        meshes.append(read_mesh(os.path.join(directory, "mesh_%02d.txt" % k),
                                parent=parent))
    spaces = [DgSpace(m, meta["degree"]) for m in meshes]
    problem = ProblemSpec(
        material=material, f=f, u0=u0, u1=u1,
        final_time=meta["final_time"], num_steps=meta["num_steps"],
        spaces=spaces, penalty=penalty, schedule=list(meta["schedule"]))
    stiffnesses = {idx: assemble_ah(spaces[idx], material, penalty)
                   for idx in sorted(set(problem.schedule))}
    fields, velocities = [], []
    for n in range(meta["num_steps"] + 1):
        space_n = spaces[meta["schedule"][n]]
        fields.append(DgField(space_n, np.loadtxt(
            os.path.join(directory, "u_%04d.txt" % n)).reshape(-1)))
        velocities.append(DgField(space_n, np.loadtxt(
            os.path.join(directory, "v_%04d.txt" % n)).reshape(-1)))
    trace = TransientTrace(problem, np.array(meta["times"]), fields,
                           velocities, stiffnesses)
    return trace
