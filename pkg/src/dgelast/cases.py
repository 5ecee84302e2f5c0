"""Manufactured solutions with hand-derived loads.

Every case carries the exact displacement, its time derivatives, the body
load obtained by substituting into the strong equations, and a matching
stationary problem.  ``verify_strong_form`` re-derives the load by finite
differences at random points as a self-check on the hand derivation.
"""

import numpy as np

from .material import StiffnessTensor


class ManufacturedCase:
    """Closed-form displacement field with derived data.

    Callables take points of shape (m, 2); time-dependent ones take an
    additional scalar time.  ``stationary_solution``/``stationary_load``
    define the companion stationary problem.
    """

    def __init__(self, name, domain, lam, mu, u, u_t, u_tt, f,
                 stationary_solution, stationary_load):
        self.name = name
        self.domain = domain
        self.lam = lam
        self.mu = mu
        self.material = StiffnessTensor.from_lame(lam, mu)
        self.u = u
        self.u_t = u_t
        self.u_tt = u_tt
        self.f = f
        self.stationary_solution = stationary_solution
        self.stationary_load = stationary_load

    def u0(self, pts):
        return self.u(pts, 0.0)

    def u1(self, pts):
        return self.u(pts, 0.0) * 0.0 + self.u_t(pts, 0.0)


def _sine_case(lam=1.0, mu=1.0):
    """u = cos(t) sin(pi x) sin(pi y) (1, 1); zero trace on the unit square."""
    pi = np.pi

    def w(p):
        return np.sin(pi * p[:, 0]) * np.sin(pi * p[:, 1])

    def cxcy(p):
        return np.cos(pi * p[:, 0]) * np.cos(pi * p[:, 1])

    def neg_div_sigma(p):
        # -div sigma for the spatial profile w * (1, 1)
        val = pi ** 2 * ((3 * mu + lam) * w(p) - (lam + mu) * cxcy(p))
        return np.stack([val, val], axis=-1)

    def u(p, t):
        val = np.cos(t) * w(p)
        return np.stack([val, val], axis=-1)

    def u_t(p, t):
        val = -np.sin(t) * w(p)
        return np.stack([val, val], axis=-1)

    def u_tt(p, t):
        val = -np.cos(t) * w(p)
        return np.stack([val, val], axis=-1)

    def f(p, t):
        return u_tt(p, t) + np.cos(t) * neg_div_sigma(p)

    def zs(p):
        val = w(p)
        return np.stack([val, val], axis=-1)

    return ManufacturedCase(
        name="sincos", domain=(0.0, 0.0, 1.0, 1.0), lam=lam, mu=mu,
        u=u, u_t=u_t, u_tt=u_tt, f=f,
        stationary_solution=zs, stationary_load=neg_div_sigma)


def _bubble_case(lam=1.0, mu=1.0):
    """Polynomial z = x(1-x) y(1-y) (1, 1): degree 4, zero trace, stationary."""

    def parts(p):
        x, y = p[:, 0], p[:, 1]
        return x, y, x * (1 - x), y * (1 - y)

    def zs(p):
        x, y, bx, by = parts(p)
        val = bx * by
        return np.stack([val, val], axis=-1)

    def load(p):
        x, y, bx, by = parts(p)
        wxx, wyy = -2 * by, -2 * bx
        wxy = (1 - 2 * x) * (1 - 2 * y)
        r1 = -((2 * mu + lam) * wxx + (lam + mu) * wxy + mu * wyy)
        r2 = -(mu * wxx + (lam + mu) * wxy + (2 * mu + lam) * wyy)
        return np.stack([r1, r2], axis=-1)

    def still(p, t):
        return zs(p)

    def zero_t(p, t):
        return np.zeros((len(p), 2))

    def f(p, t):
        return load(p)

    return ManufacturedCase(
        name="bubble4", domain=(0.0, 0.0, 1.0, 1.0), lam=lam, mu=mu,
        u=still, u_t=zero_t, u_tt=zero_t, f=f,
        stationary_solution=zs, stationary_load=load)


def _zero_case(lam=1.0, mu=1.0):
    def zf(p, t=0.0):
        return np.zeros((len(p), 2))

    def zf_s(p):
        return np.zeros((len(p), 2))

    return ManufacturedCase(
        name="zero", domain=(0.0, 0.0, 1.0, 1.0), lam=lam, mu=mu,
        u=zf, u_t=zf, u_tt=zf, f=zf,
        stationary_solution=zf_s, stationary_load=zf_s)


CASES = {
    "sincos": _sine_case,
    "bubble4": _bubble_case,
    "zero": _zero_case,
}


def get_case(name, lam=1.0, mu=1.0):
    if name not in CASES:
        raise KeyError("unknown manufactured case %r (have %s)"
                       % (name, ", ".join(sorted(CASES))))
    return CASES[name](lam, mu)


def _fd_hessian(fn, pts, t, h):
    """4th-order finite-difference Hessian of u(pts, t), (m, 2, 2, 2)."""
    def d2(axis):
        e = np.zeros(2)
        e[axis] = 1.0
        vals = [fn(pts + s * h * e, t) for s in (-2, -1, 0, 1, 2)]
        return (-vals[4] + 16 * vals[3] - 30 * vals[2]
                + 16 * vals[1] - vals[0]) / (12 * h ** 2)

    def dxy():
        def dx(q):
            ex = np.array([h, 0.0])
            return (fn(q - 2 * ex, t) - 8 * fn(q - ex, t)
                    + 8 * fn(q + ex, t) - fn(q + 2 * ex, t)) / (12 * h)
        ey = np.array([0.0, h])
        return (dx(pts - 2 * ey) - 8 * dx(pts - ey)
                + 8 * dx(pts + ey) - dx(pts + 2 * ey)) / (12 * h)

    H = np.zeros((len(pts), 2, 2, 2))
    H[:, :, 0, 0] = d2(0)
    H[:, :, 1, 1] = d2(1)
    H[:, :, 0, 1] = H[:, :, 1, 0] = dxy()
    return H


def verify_strong_form(case, npts=100, seed=0, h=5e-3):
    """Largest relative defect of the strong equations at random points.

    Replaces the hand-derived load by finite differences of the exact
    displacement and returns max |f_fd - f| / max |f| (absolute defect
    when the load vanishes identically).
    """
    rng = np.random.default_rng(seed)
    x0, y0, x1, y1 = case.domain
    margin = 4 * h
    pts = np.column_stack([
        rng.uniform(x0 + margin, x1 - margin, npts),
        rng.uniform(y0 + margin, y1 - margin, npts)])
    ts = rng.uniform(0.0, 1.0, npts)

    lam, mu = case.lam, case.mu
    worst = 0.0
    scale = 0.0
    for t in np.unique(ts):
        sel = ts == t
        p = pts[sel]
        H = _fd_hessian(case.u, p, float(t), h)
        div1 = ((2 * mu + lam) * H[:, 0, 0, 0] + (lam + mu) * H[:, 1, 0, 1]
                + mu * H[:, 0, 1, 1])
        div2 = (mu * H[:, 1, 0, 0] + (lam + mu) * H[:, 0, 0, 1]
                + (2 * mu + lam) * H[:, 1, 1, 1])
        utt = (-case.u(p, t + 2 * h) + 16 * case.u(p, t + h)
               - 30 * case.u(p, t) + 16 * case.u(p, t - h)
               - case.u(p, t - 2 * h)) / (12 * h ** 2)
        f_fd = utt - np.stack([div1, div2], axis=-1)
        f_ex = case.f(p, float(t))
        worst = max(worst, float(np.max(np.abs(f_fd - f_ex))))
        scale = max(scale, float(np.max(np.abs(f_ex))))
    return worst / scale if scale > 0 else worst
