"""Space-time reconstruction of the discrete evolution.

The discrete levels are extended to a C1-in-time field (piecewise cubic)
whose acceleration is (1 + mu(t)) times the discrete second difference,
where the remainder mu has zero mean on every step.  The auxiliary
stationary loads g^n = B^n u^n - P_n f^n + fbar^n and their first and
second differences feed the evolution accumulator G(t), a piecewise
polynomial in time whose integration constants (the gamma recursion)
make it continuous with G(0) = 0.

Mixed-representation fields (a coefficient vector on the finest space of
the family plus a sparse combination of load samples / time averages)
keep every norm evaluation exact for the discrete part and
quadrature-consistent for the smooth part: norms are assembled from the
coefficients, cached term moments and the cached term Gram matrix.
"""

import numpy as np

from .quadrature import gauss_1d
from .space import DgField, project_function, project_cross_mesh
from .mesh import MeshError


def finest_space(spaces, schedule):
    """The used space whose mesh descends from every other used mesh."""
    used = [spaces[i] for i in sorted(set(schedule))]
    for cand in used:
        if all(s.mesh is cand.mesh or s.mesh.is_ancestor_of(cand.mesh)
               for s in used):
            return cand
    raise MeshError("mesh schedule is not a nested chain")


class TermBank:
    """Cached moments and Gram matrix of the load samples and averages.

    Terms 0..N are the point samples f(., t_n); terms N+1..2N are the
    interval averages fbar^n (n = 1..N, four-point Gauss in time).  The
    average over the degenerate 'interval' 0 is the sample at t = 0.
    """

    def __init__(self, space, f, times, time_quad_points=4):
        self.space = space
        self.f = f
        self.times = np.asarray(times)
        self.N = len(times) - 1
        self.nterms = 2 * self.N + 1
        gx, gw = gauss_1d(time_quad_points)
        self.tq_nodes = gx
        self.tq_weights = gw
        self._moments = None
        self._gram = None

    def sample_index(self, n):
        return n

    def average_index(self, n):
        return n if n == 0 else self.N + n

    def average_smooth(self, n):
        e = np.zeros(self.nterms)
        e[self.average_index(n)] = 1.0
        return e

    def sample_smooth(self, n):
        e = np.zeros(self.nterms)
        e[self.sample_index(n)] = 1.0
        return e

    def interval_times(self, n):
        """Time quadrature nodes inside (t^{n-1}, t^n)."""
        t0, t1 = self.times[n - 1], self.times[n]
        return t0 + (t1 - t0) * self.tq_nodes

    def _values(self):
        space = self.space
        pts = space.vol_points.reshape(-1, 2)
        npts = pts.shape[0]
        vals = np.zeros((self.nterms, npts, 2))
        for n in range(self.N + 1):
            vals[n] = np.asarray(self.f(pts, float(self.times[n])))
        for n in range(1, self.N + 1):
            acc = np.zeros((npts, 2))
            for tk, wk in zip(self.interval_times(n), self.tq_weights):
                acc += wk * np.asarray(self.f(pts, float(tk)))
            vals[self.N + n] = acc
        return vals

    def _ensure(self):
        if self._moments is not None:
            return
        space = self.space
        vals = self._values()
        nt = space.mesh.num_triangles
        nq = space.volume_rule.npoints
        v = vals.reshape(self.nterms, nt, nq, 2)
        mom = np.einsum("q,ktqc,qi->ktci", space.volume_rule.weights, v,
                        space.vol_ref_phi)
        mom *= space.sqrt_detJ[None, :, None, None]
        self._moments = mom.reshape(self.nterms, space.ndof)
        w = np.repeat(space.vol_weights.reshape(-1), 2)
        flat = vals.reshape(self.nterms, -1)
        self._gram = (flat * w) @ flat.T

    @property
    def moments(self):
        self._ensure()
        return self._moments

    @property
    def gram(self):
        self._ensure()
        return self._gram


class MixedField:
    """Discrete coefficients on the bank's space plus smooth term weights."""

    __slots__ = ("bank", "coeffs", "smooth")

    def __init__(self, bank, coeffs=None, smooth=None):
        self.bank = bank
        self.coeffs = (np.zeros(bank.space.ndof) if coeffs is None
                       else np.asarray(coeffs, dtype=float))
        self.smooth = (np.zeros(bank.nterms) if smooth is None
                       else np.asarray(smooth, dtype=float))

    def __add__(self, other):
        return MixedField(self.bank, self.coeffs + other.coeffs,
                          self.smooth + other.smooth)

    def __sub__(self, other):
        return MixedField(self.bank, self.coeffs - other.coeffs,
                          self.smooth - other.smooth)

    def __mul__(self, s):
        return MixedField(self.bank, self.coeffs * float(s),
                          self.smooth * float(s))

    __rmul__ = __mul__

    def norm_l2(self):
        """Exact for the discrete part, quadrature-consistent overall."""
        if not np.any(self.smooth):
            return float(np.linalg.norm(self.coeffs))
        m = self.bank.moments
        G = self.bank.gram
        s = self.smooth
        val = (self.coeffs @ self.coeffs
               + 2.0 * self.coeffs @ (m.T @ s) + s @ (G @ s))
        return float(np.sqrt(max(val, 0.0)))


def acceleration_remainder(t, t_lo, t_hi):
    """Zero-mean factor linking the cubic extension to the second difference.

    Slope -6/tau about the interval midpoint; the scaling is pinned by
    the identity  d2/dt2 u_N = (1 + mu) * second difference  of the cubic
    extension (asserted numerically in the tests).
    """
    tau = t_hi - t_lo
    return -(6.0 / tau) * (t - 0.5 * (t_lo + t_hi))


class ReconstructionData:
    """Loads g^n, their differences, the gamma accumulators and u_N.

    All level fields are injected (exactly) into the finest space of the
    schedule so that differences across mesh changes stay exact.
    """

    def __init__(self, trace):
        problem = trace.problem
        self.trace = trace
        self.space = finest_space(problem.spaces, problem.schedule)
        self.times = trace.times
        self.tau = trace.tau
        N = trace.num_steps
        self.N = N
        self.bank = TermBank(self.space, problem.f, trace.times)

        def inj(fld):
            return project_cross_mesh(fld, self.space).coeffs

        self.level_u = [inj(trace.u(n)) for n in range(N + 1)]
        self.level_v = [inj(trace.v(n)) for n in range(N + 1)]
        tau = self.tau
        self.second_diff = [None] + [
            (self.level_v[n] - self.level_v[n - 1]) / tau
            for n in range(1, N + 1)]

        bank = self.bank
        self.load_discrete = []   # B^n u^n - P_n f^n, native space
        loads = []
        for n in range(N + 1):
            sp_n = trace.space(n)
            disc = (trace.stiffness(n) @ trace.u(n).coeffs
                    - project_function(
                        sp_n, lambda p, _t=float(self.times[n]):
                        problem.f(p, _t)).coeffs)
            self.load_discrete.append(DgField(sp_n, disc))
            loads.append(MixedField(bank, inj(self.load_discrete[n]),
                                    bank.average_smooth(n)))
        self.loads = loads

        # first difference at level 0 uses the velocity projection
        sp0 = trace.space(0)
        d0_disc = (trace.stiffness(0) @ trace.v(0).coeffs
                   - project_function(
                       sp0, lambda p: problem.f(p, 0.0)).coeffs)
        self.velocity_load_discrete = DgField(sp0, d0_disc)
        dg0 = MixedField(bank, inj(self.velocity_load_discrete),
                         bank.sample_smooth(0))

        self.dload = [dg0] + [
            (loads[n] - loads[n - 1]) * (1.0 / tau) for n in range(1, N + 1)]
        self.d2load = [None] + [
            (self.dload[n] - self.dload[n - 1]) * (1.0 / tau)
            for n in range(1, N + 1)]

        gamma = [MixedField(bank)]
        for n in range(1, N + 1):
            gamma.append(gamma[n - 1]
                         + (tau ** 2 / 2.0) * self.dload[n]
                         + (tau ** 3 / 12.0) * self.d2load[n])
        self.gamma = gamma

    # -- time extension ---------------------------------------------------

    def interval_of(self, t):
        if t < self.times[0] - 1e-12 or t > self.times[-1] + 1e-12:
            raise ValueError("time %g outside [0, %g]" % (t, self.times[-1]))
        n = int(np.searchsorted(self.times, t, side="left"))
        return min(max(n, 1), self.N)

    def time_extension(self, t, derivative=0):
        """u_N(t) (or its first/second time derivative) on the finest space.

        Piecewise cubic: linear interpolant of the levels minus
        (t - t^{n-1})(t^n - t)^2 / tau times the second difference.
        """
        n = self.interval_of(t)
        tau = self.tau
        a = t - self.times[n - 1]
        b = self.times[n] - t
        U1, U0 = self.level_u[n], self.level_u[n - 1]
        D2 = self.second_diff[n]
        if derivative == 0:
            c = (a / tau) * U1 + (b / tau) * U0 - (a * b * b / tau) * D2
        elif derivative == 1:
            c = (U1 - U0) / tau - ((3 * b * b - 2 * tau * b) / tau) * D2
        elif derivative == 2:
            c = ((4 * b - 2 * a) / tau) * D2
        else:
            raise ValueError("derivative order must be 0, 1 or 2")
        return DgField(self.space, c)

    def remainder(self, n, t):
        """mu^n(t) on interval n."""
        return acceleration_remainder(t, float(self.times[n - 1]),
                                      float(self.times[n]))

    # -- evolution accumulator -------------------------------------------

    def evolution_term(self, n, t):
        """G^n(t) as a mixed field, for t in (t^{n-1}, t^n]."""
        b = float(self.times[n]) - t
        tau = self.tau
        P = 0.5 * b * b
        Q = b ** 4 / (4.0 * tau) - b ** 3 / 3.0
        return (P * self.dload[n] - Q * self.d2load[n] - self.gamma[n])

    def evolution_term_norm(self, n, t):
        return self.evolution_term(n, t).norm_l2()


def build_reconstruction_data(trace):
    return ReconstructionData(trace)
