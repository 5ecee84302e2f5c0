"""Stationary solves and the two L2 a posteriori estimators.

The estimators share three ingredients per mesh entity: the strong volume
residual r + div sigma(z_h), the traction jump across interior faces and
the solution jump across all faces.  The duality variant weights them
h^4 / h^3 / h, the energy variant h^2 / h / (h + alpha/h); the energy
variant is one order weaker in the mesh size but needs no adjoint
regularity.  Local indicators split every interior-face contribution
evenly between its two elements so the squares sum exactly to the global
square.
"""

from dataclasses import dataclass

import numpy as np

from .material import mandel_normal_flux
from .space import DgField, project_function, jump_norms_sq
from .assembly import assemble_ah, apply_discrete_operator
from .lagrange import ContinuousSpace, interpolate_dg_nodal
from .linsolve import solve_spd, block_jacobi

SQRT2 = np.sqrt(2.0)


class ResidualSource:
    """Load with a discrete and a smooth part.

    The reconstruction data mixes a field in V_h with a plain callable;
    either part may be absent.  ``moments`` is the load vector, exact for
    the discrete part and quadrature-accurate for the smooth one.
    """

    def __init__(self, discrete=None, smooth=None):
        self.discrete = discrete
        self.smooth = smooth

    def scaled(self, s):
        disc = None if self.discrete is None else self.discrete * s
        if self.smooth is None:
            smooth = None
        else:
            inner = self.smooth
            smooth = lambda p, _f=inner, _s=s: _s * np.asarray(_f(p))
        return ResidualSource(disc, smooth)

    def moments(self, space):
        vec = np.zeros(space.ndof)
        if self.discrete is not None:
            if self.discrete.space is not space:
                raise ValueError("discrete part lives on a different space")
            vec += self.discrete.coeffs
        if self.smooth is not None:
            vec += project_function(space, self.smooth).coeffs
        return vec

    def values_at_volume_quad(self, space):
        nt = space.mesh.num_triangles
        nq = space.volume_rule.npoints
        vals = np.zeros((nt, nq, 2))
        if self.discrete is not None:
            if self.discrete.space is not space:
                raise ValueError("discrete part lives on a different space")
            vals += space.values_at_volume_quad(self.discrete.coeffs)
        if self.smooth is not None:
            pts = space.vol_points.reshape(-1, 2)
            vals += np.asarray(self.smooth(pts)).reshape(nt, nq, 2)
        return vals


def solve_stationary(space, material, penalty, source, tol=1e-10,
                     stiffness=None, precond=None):
    """DG solution of the stationary problem with the given load."""
    if stiffness is None:
        stiffness = assemble_ah(space, material, penalty)
    if precond is None:
        precond = block_jacobi(stiffness, 2 * space.nb)
    b = source.moments(space)
    x = solve_spd(stiffness, b, tol=tol, precond_blocks=precond)
    return DgField(space, x)


# -- shared estimator ingredients ------------------------------------------------


def divergence_of_stress(space, material, coeffs):
    """div sigma(u) at the volume quadrature points, (nt, nq, 2).

    Exact per element: differentiates the polynomial basis, so no finite
    differences enter.
    """
    H = space.hessians_at_volume_quad(coeffs)  # (nt, nq, c, k, l)
    mandel = material.for_elements(space.mesh.num_triangles)
    # d_l of the strain Mandel vector
    de = np.stack([H[:, :, 0, 0, :], H[:, :, 1, 1, :],
                   (H[:, :, 0, 1, :] + H[:, :, 1, 0, :]) / SQRT2], axis=2)
    ds = np.einsum("tmn,tqnl->tqml", mandel, de)  # d_l sigma_mandel
    div1 = ds[:, :, 0, 0] + ds[:, :, 2, 1] / SQRT2
    div2 = ds[:, :, 2, 0] / SQRT2 + ds[:, :, 1, 1]
    return np.stack([div1, div2], axis=-1)


def traction_jumps_sq(space, material, coeffs):
    """Per-face integral of |[sigma(u) nu]|^2; zero on boundary faces."""
    mesh = space.mesh
    mandel = material.for_elements(mesh.num_triangles)
    flux = []
    for side in range(2):
        elems = np.maximum(mesh.face_elems[:, side], 0)
        g = space.face_grad[side]
        c = coeffs.reshape(mesh.num_triangles, 2, space.nb)[elems]
        grad_u = np.einsum("fci,fqik->fqck", c, g)
        eps = np.stack([grad_u[..., 0, 0], grad_u[..., 1, 1],
                        (grad_u[..., 0, 1] + grad_u[..., 1, 0]) / SQRT2],
                       axis=-1)
        sig = np.einsum("fmn,fqn->fqm", mandel[elems], eps)
        flux.append(mandel_normal_flux(sig, mesh.face_normals[:, None, :]))
    jump = flux[0] - flux[1]
    out = np.einsum("fq,fqc->f", space.face_weights, jump ** 2)
    out[mesh.boundary_faces] = 0.0
    return out


def volume_residuals_sq(space, material, z, source):
    """Per-element integral of |r + div sigma(z)|^2."""
    vals = source.values_at_volume_quad(space)
    vals = vals + divergence_of_stress(space, material, z.coeffs)
    return np.einsum("tq,tqc->t", space.vol_weights, vals ** 2)


@dataclass
class EstimatorBreakdown:
    """Global estimator with its element split and term groups."""

    variant: str
    constant: float
    total: float
    per_element: np.ndarray
    volume_term: float
    stress_jump_term: float
    solution_jump_term: float

    def summary(self):
        return {
            "variant": self.variant, "constant": self.constant,
            "total": self.total, "volume_term": self.volume_term,
            "stress_jump_term": self.stress_jump_term,
            "solution_jump_term": self.solution_jump_term,
        }


def _breakdown(space, variant, constant, vol_sq, sj_sq, uj_sq,
               w_vol, w_sj, w_uj):
    mesh = space.mesh
    vol = w_vol * vol_sq
    sj = w_sj * sj_sq
    uj = w_uj * uj_sq

    per_el = vol.copy()
    fe = mesh.face_elems
    interior = fe[:, 1] >= 0
    share = np.where(interior, 0.5, 1.0)
    np.add.at(per_el, fe[:, 0], share * (sj + uj))
    np.add.at(per_el, np.maximum(fe[:, 1], 0),
              np.where(interior, 0.5 * (sj + uj), 0.0))

    c2 = constant ** 2
    total = constant * float(np.sqrt(max(vol.sum() + sj.sum() + uj.sum(), 0.0)))
    return EstimatorBreakdown(
        variant=variant, constant=constant, total=total,
        per_element=np.sqrt(np.maximum(c2 * per_el, 0.0)),
        volume_term=constant * float(np.sqrt(max(vol.sum(), 0.0))),
        stress_jump_term=constant * float(np.sqrt(max(sj.sum(), 0.0))),
        solution_jump_term=constant * float(np.sqrt(max(uj.sum(), 0.0))))


def estimate_l2_duality(space, material, z, source, constant=1.0):
    """L2 estimator from the adjoint (duality) argument.

    Weights: h_K^4 on the volume residual, h^3 on interior traction
    jumps, h on all solution jumps; valid on convex domains where the
    adjoint problem is H2-regular.
    """
    mesh = space.mesh
    return _breakdown(
        space, "duality", constant,
        volume_residuals_sq(space, material, z, source),
        traction_jumps_sq(space, material, z.coeffs),
        jump_norms_sq(z),
        mesh.diameters ** 4, mesh.face_h ** 3, mesh.face_h)


def estimate_energy(space, material, z, source, penalty, constant=1.0):
    """L2 estimator routed through the energy-norm bound.

    Weights: h_K^2 / h / (h + alpha/h); one order weaker in h than the
    duality variant but free of adjoint regularity assumptions.
    """
    mesh = space.mesh
    return _breakdown(
        space, "energy", constant,
        volume_residuals_sq(space, material, z, source),
        traction_jumps_sq(space, material, z.coeffs),
        jump_norms_sq(z),
        mesh.diameters ** 2, mesh.face_h,
        mesh.face_h + penalty.alpha / mesh.face_h)


def galerkin_residual(space, stiffness, z, source):
    """Max residual of the discrete equations over all basis functions."""
    return float(np.max(np.abs(stiffness @ z.coeffs - source.moments(space))))


def conforming_recovery(z):
    """Nodal-averaged continuous field with zero boundary values.

    Returns the recovered DgField (continuous across faces, zero trace)
    and diagnostic ratios comparing the recovery defect to the jump norms
    that bound it.
    """
    space = z.space
    mesh = space.mesh
    cs = ContinuousSpace(mesh, space.degree)
    nodal = interpolate_dg_nodal(space, z.coeffs, cs.ref_nodes)  # (nt, nlat, 2)

    sums = np.zeros((cs.num_nodes, 2))
    counts = np.zeros(cs.num_nodes)
    np.add.at(sums, cs.elem_nodes, nodal)
    np.add.at(counts, cs.elem_nodes, 1.0)
    avg = sums / counts[:, None]
    avg[cs.boundary_nodes] = 0.0

    # back to element-wise modal coefficients
    phi_lat = space.basis_at(cs.ref_nodes)  # (nlat, nb), square
    to_modal = np.linalg.inv(phi_lat)
    nodal_c = avg[cs.elem_nodes]            # (nt, nlat, 2)
    coeffs = np.einsum("in,tnc->tci", to_modal, nodal_c)
    coeffs *= space.sqrt_detJ[:, None, None]
    zc = DgField(space, coeffs.ravel())

    diff = z - zc
    jump_sq = jump_norms_sq(z)
    l2_bound = float(np.sqrt(np.sum(mesh.face_h * jump_sq)))
    h1_bound = float(np.sqrt(np.sum(jump_sq / mesh.face_h)))
    from .space import broken_h1_seminorm
    l2_defect = diff.norm_l2()
    h1_defect = broken_h1_seminorm(diff)
    diags = {
        "l2_defect": l2_defect, "l2_jump_bound": l2_bound,
        "l2_ratio": l2_defect / l2_bound if l2_bound > 0 else 0.0,
        "h1_defect": h1_defect, "h1_jump_bound": h1_bound,
        "h1_ratio": h1_defect / h1_bound if h1_bound > 0 else 0.0,
    }
    return zc, diags
