"""Broken vector-valued polynomial spaces and L2 projections.

Each element carries a modal basis on the reference triangle that is
orthonormalized against the physical element measure, so the global mass
matrix is exactly the identity and every L2 projection reduces to
quadrature moments.  Cross-mesh projections between members of one nested
family integrate parent-child products exactly (piecewise polynomial
integrands, quadrature of sufficient degree).
"""

import numpy as np

from .quadrature import triangle_rule, edge_rule
from .mesh import MeshError

SQRT2 = np.sqrt(2.0)


def _monomial_exponents(degree):
    return [(k - j, j) for k in range(degree + 1) for j in range(k + 1)]


def _mono_eval(pts, exps):
    x, y = pts[:, 0], pts[:, 1]
    cols = [x ** i * y ** j for i, j in exps]
    return np.column_stack(cols)


def _mono_grad(pts, exps):
    x, y = pts[:, 0], pts[:, 1]
    out = np.zeros((pts.shape[0], len(exps), 2))
    for k, (i, j) in enumerate(exps):
        if i > 0:
            out[:, k, 0] = i * x ** (i - 1) * y ** j
        if j > 0:
            out[:, k, 1] = j * x ** i * y ** (j - 1)
    return out


def _mono_hess(pts, exps):
    x, y = pts[:, 0], pts[:, 1]
    out = np.zeros((pts.shape[0], len(exps), 2, 2))
    for k, (i, j) in enumerate(exps):
        if i > 1:
            out[:, k, 0, 0] = i * (i - 1) * x ** (i - 2) * y ** j
        if j > 1:
            out[:, k, 1, 1] = j * (j - 1) * x ** i * y ** (j - 2)
        if i > 0 and j > 0:
            out[:, k, 0, 1] = out[:, k, 1, 0] = i * j * x ** (i - 1) * y ** (j - 1)
    return out


class DgSpace:
    """Discontinuous vector P_r space on a triangulation.

    The scalar modal basis is orthonormal w.r.t. the reference measure;
    physical basis functions divide by sqrt(det J) so the element mass
    matrix is the identity.  Fields have two displacement components per
    scalar mode; coefficients are laid out (element, component, mode).
    """

    def __init__(self, mesh, degree):
        if degree < 1:
            raise ValueError("polynomial degree must be at least 1")
        self.mesh = mesh
        self.degree = degree
        self.exps = _monomial_exponents(degree)
        self.nb = len(self.exps)
        self.ncomp = 2
        self.ndof = mesh.num_triangles * self.ncomp * self.nb

        rule = triangle_rule(2 * degree)
        V = _mono_eval(rule.points, self.exps)
        mass = V.T @ (rule.weights[:, None] * V)
        self._coeff = np.linalg.inv(np.linalg.cholesky(mass))  # rows: modes

        self.volume_rule = triangle_rule(2 * degree + 2)
        self.edge_rule = edge_rule(2 * degree + 2)

        tri = mesh.vertices[mesh.triangles]  # (nt, 3, 2)
        self.v0 = tri[:, 0]
        self.J = np.stack([tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]], axis=2)
        self.detJ = 2.0 * mesh.areas
        self.sqrt_detJ = np.sqrt(self.detJ)
        self.Jinv = np.linalg.inv(self.J)

        rp = self.volume_rule.points
        self.vol_ref_phi = self.basis_at(rp)            # (nq, nb)
        self.vol_ref_grad = self.basis_grad_at(rp)      # (nq, nb, 2)
        self.vol_ref_hess = self.basis_hess_at(rp)      # (nq, nb, 2, 2)
        self.vol_points = (self.v0[:, None, :]
                           + np.einsum("tij,qj->tqi", self.J, rp))
        self.vol_weights = self.volume_rule.weights[None, :] * self.detJ[:, None]

        self._build_face_tables()

    # -- reference basis ---------------------------------------------------

    def basis_at(self, ref_pts):
        return _mono_eval(np.atleast_2d(ref_pts), self.exps) @ self._coeff.T

    def basis_grad_at(self, ref_pts):
        g = _mono_grad(np.atleast_2d(ref_pts), self.exps)
        return np.einsum("km,qmd->qkd", self._coeff, g)

    def basis_hess_at(self, ref_pts):
        h = _mono_hess(np.atleast_2d(ref_pts), self.exps)
        return np.einsum("km,qmde->qkde", self._coeff, h)

    # -- face tables ---------------------------------------------------------

    def _build_face_tables(self):
        mesh = self.mesh
        s = self.edge_rule.points
        pa = mesh.vertices[mesh.faces[:, 0]]
        pb = mesh.vertices[mesh.faces[:, 1]]
        self.face_points = pa[:, None, :] + s[None, :, None] * (pb - pa)[:, None, :]
        self.face_weights = (self.edge_rule.weights[None, :]
                             * mesh.face_lengths[:, None])

        self.face_phi = []   # per side: (nf, qe, nb), physical values
        self.face_grad = []  # per side: (nf, qe, nb, 2), physical gradients
        for side in range(2):
            elems = mesh.face_elems[:, side]
            safe = np.maximum(elems, 0)
            rel = self.face_points - self.v0[safe][:, None, :]
            ref = np.einsum("fij,fqj->fqi", self.Jinv[safe], rel)
            flat = ref.reshape(-1, 2)
            phi = self.basis_at(flat).reshape(ref.shape[0], ref.shape[1], self.nb)
            grad = self.basis_grad_at(flat).reshape(
                ref.shape[0], ref.shape[1], self.nb, 2)
            grad = np.einsum("fdk,fqnd->fqnk", self.Jinv[safe], grad)
            scale = self.sqrt_detJ[safe][:, None, None]
            phi = phi / scale
            grad = grad / scale[..., None]
            missing = elems < 0
            phi[missing] = 0.0
            grad[missing] = 0.0
            self.face_phi.append(phi)
            self.face_grad.append(grad)

    # -- per-field evaluation --------------------------------------------

    def values_at_volume_quad(self, coeffs):
        """Field values at the volume quadrature points, (nt, nq, 2)."""
        c = coeffs.reshape(self.mesh.num_triangles, 2, self.nb)
        out = np.einsum("qi,tci->tqc", self.vol_ref_phi, c)
        return out / self.sqrt_detJ[:, None, None]

    def gradients_at_volume_quad(self, coeffs):
        """Displacement gradients d u_c / d x_k, (nt, nq, 2, 2)."""
        c = coeffs.reshape(self.mesh.num_triangles, 2, self.nb)
        gphys = np.einsum("qid,tdk->tqik", self.vol_ref_grad, self.Jinv)
        out = np.einsum("tci,tqik->tqck", c, gphys)
        return out / self.sqrt_detJ[:, None, None, None]

    def strain_mandel_at_volume_quad(self, coeffs):
        g = self.gradients_at_volume_quad(coeffs)
        return np.stack([g[..., 0, 0], g[..., 1, 1],
                         (g[..., 0, 1] + g[..., 1, 0]) / SQRT2], axis=-1)

    def hessians_at_volume_quad(self, coeffs):
        """Second derivatives d2 u_c / dx_k dx_l, (nt, nq, 2, 2, 2)."""
        c = coeffs.reshape(self.mesh.num_triangles, 2, self.nb)
        hphys = np.einsum("tdk,qide,tel->tqikl", self.Jinv, self.vol_ref_hess,
                          self.Jinv)
        out = np.einsum("tci,tqikl->tqckl", c, hphys)
        return out / self.sqrt_detJ[:, None, None, None, None]

    def values_at_faces(self, coeffs, side):
        """Trace values from one side, (nf, qe, 2); zero where absent."""
        elems = np.maximum(self.mesh.face_elems[:, side], 0)
        c = coeffs.reshape(self.mesh.num_triangles, 2, self.nb)[elems]
        return np.einsum("fqi,fci->fqc", self.face_phi[side], c)

    def jumps_at_faces(self, coeffs):
        """[u] = u(+) - u(-); equals the one-sided trace on the boundary."""
        return (self.values_at_faces(coeffs, 0)
                - self.values_at_faces(coeffs, 1))

    def eval_at(self, coeffs, elems, pts):
        """Field values at global points located in the given elements."""
        elems = np.asarray(elems)
        ref = np.einsum("mij,mj->mi", self.Jinv[elems], pts - self.v0[elems])
        phi = self.basis_at(ref)
        c = coeffs.reshape(self.mesh.num_triangles, 2, self.nb)[elems]
        return np.einsum("mci,mi->mc", c, phi) / self.sqrt_detJ[elems, None]


class DgField:
    """Coefficient vector bound to a DgSpace."""

    def __init__(self, space, coeffs=None):
        self.space = space
        if coeffs is None:
            coeffs = np.zeros(space.ndof)
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != (space.ndof,):
            raise ValueError("coefficient length does not match the space")
        self.coeffs = coeffs

    def copy(self):
        return DgField(self.space, self.coeffs.copy())

    def norm_l2(self):
        # exact: the basis is orthonormal
        return float(np.linalg.norm(self.coeffs))

    def __add__(self, other):
        self._check(other)
        return DgField(self.space, self.coeffs + other.coeffs)

    def __sub__(self, other):
        self._check(other)
        return DgField(self.space, self.coeffs - other.coeffs)

    def __mul__(self, s):
        return DgField(self.space, self.coeffs * float(s))

    __rmul__ = __mul__

    def _check(self, other):
        if other.space is not self.space:
            raise ValueError("fields live on different spaces")


# -- projections --------------------------------------------------------------

def project_function(space, fn):
    """Orthogonal L2 projection of a callable fn(pts)->(m, 2) onto V_h."""
    pts = space.vol_points.reshape(-1, 2)
    vals = np.asarray(fn(pts), dtype=float).reshape(
        space.mesh.num_triangles, space.volume_rule.npoints, 2)
    if not np.all(np.isfinite(vals)):
        raise ValueError("function returned non-finite values at quadrature points")
    w = space.volume_rule.weights
    c = np.einsum("q,tqc,qi->tci", w, vals, space.vol_ref_phi)
    c *= space.sqrt_detJ[:, None, None]
    return DgField(space, c.ravel())


def project_cross_mesh(field, target):
    """Exact L2 projection between spaces on nested-related meshes."""
    src = field.space
    if src is target or src.mesh is target.mesh:
        if src.degree != target.degree:
            raise MeshError("projection between degrees is not supported")
        return DgField(target, field.coeffs.copy())
    if src.degree != target.degree:
        raise MeshError("projection between degrees is not supported")

    if src.mesh.is_ancestor_of(target.mesh):
        # refinement: V_src is a subspace of V_target, exact injection
        amap = target.mesh.ancestor_tri_map(src.mesh)
        pts = target.vol_points  # (nt, nq, 2)
        nq = pts.shape[1]
        elems = np.repeat(amap, nq)
        vals = src.eval_at(field.coeffs, elems, pts.reshape(-1, 2))
        vals = vals.reshape(target.mesh.num_triangles, nq, 2)
        w = target.volume_rule.weights
        c = np.einsum("q,tqc,qi->tci", w, vals, target.vol_ref_phi)
        c *= target.sqrt_detJ[:, None, None]
        return DgField(target, c.ravel())

    if target.mesh.is_ancestor_of(src.mesh):
        # coarsening: integrate source polynomials against coarse basis
        amap = src.mesh.ancestor_tri_map(target.mesh)
        vals = src.values_at_volume_quad(field.coeffs)      # (nt_s, nq, 2)
        pts = src.vol_points
        nq = pts.shape[1]
        flat_elems = np.repeat(amap, nq)
        rel = pts.reshape(-1, 2) - target.v0[flat_elems]
        ref = np.einsum("mij,mj->mi", target.Jinv[flat_elems], rel)
        phi = target.basis_at(ref).reshape(src.mesh.num_triangles, nq, target.nb)
        wts = src.vol_weights                                # (nt_s, nq)
        contrib = np.einsum("tq,tqc,tqi->tci", wts, vals, phi)
        c = np.zeros((target.mesh.num_triangles, 2, target.nb))
        np.add.at(c, amap, contrib)
        c /= target.sqrt_detJ[:, None, None]
        return DgField(target, c.ravel())

    raise MeshError("meshes are not nested-related")


# -- norms ---------------------------------------------------------------------

def broken_h1_seminorm(field):
    """Elementwise H1 seminorm (sum of squared gradient norms)."""
    g = field.space.gradients_at_volume_quad(field.coeffs)
    val = np.einsum("tq,tqck->", field.space.vol_weights, g ** 2)
    return float(np.sqrt(max(val, 0.0)))


def strain_l2(field):
    eps = field.space.strain_mandel_at_volume_quad(field.coeffs)
    val = np.einsum("tq,tqm->", field.space.vol_weights, eps ** 2)
    return float(np.sqrt(max(val, 0.0)))


def jump_norms_sq(field):
    """Per-face integral of |[u]|^2, shape (nf,)."""
    j = field.space.jumps_at_faces(field.coeffs)
    return np.einsum("fq,fqc->f", field.space.face_weights, j ** 2)


def dg_norm(field, alpha, return_parts=False):
    """Mesh-dependent energy norm: strain part plus alpha/h-weighted jumps."""
    eps2 = strain_l2(field) ** 2
    per_face = (alpha / field.space.mesh.face_h) * jump_norms_sq(field)
    total = float(np.sqrt(eps2 + per_face.sum()))
    if return_parts:
        return total, {"strain_sq": eps2, "jump_sq_per_face": per_face}
    return total


def field_norms(field, alpha=None):
    """L2, broken H1 seminorm and (if alpha is given) the DG norm."""
    out = {"l2": field.norm_l2(), "h1_broken": broken_h1_seminorm(field)}
    if alpha is not None:
        out["dg"] = dg_norm(field, alpha)
    return out


def callable_error_l2(field, fn, boost=2):
    """Quadrature L2 distance between a field and a callable."""
    space = field.space
    rule = triangle_rule(2 * space.degree + 2 + boost)
    phi = space.basis_at(rule.points)
    pts = (space.v0[:, None, :] + np.einsum("tij,qj->tqi", space.J, rule.points))
    vals_f = np.asarray(fn(pts.reshape(-1, 2))).reshape(
        space.mesh.num_triangles, rule.npoints, 2)
    c = field.coeffs.reshape(space.mesh.num_triangles, 2, space.nb)
    vals_u = np.einsum("qi,tci->tqc", phi, c) / space.sqrt_detJ[:, None, None]
    w = rule.weights[None, :] * space.detJ[:, None]
    err2 = np.einsum("tq,tqc->", w, (vals_f - vals_u) ** 2)
    return float(np.sqrt(max(err2, 0.0)))


def callable_l2(space, fn, boost=0):
    """Quadrature L2 norm of a callable over the mesh."""
    if boost:
        rule = triangle_rule(2 * space.degree + 2 + boost)
        pts = (space.v0[:, None, :]
               + np.einsum("tij,qj->tqi", space.J, rule.points)).reshape(-1, 2)
        w = rule.weights[None, :] * space.detJ[:, None]
        vals = np.asarray(fn(pts)).reshape(space.mesh.num_triangles,
                                           rule.npoints, 2)
    else:
        w = space.vol_weights
        vals = np.asarray(fn(space.vol_points.reshape(-1, 2))).reshape(
            space.mesh.num_triangles, space.volume_rule.npoints, 2)
    return float(np.sqrt(max(np.einsum("tq,tqc->", w, vals ** 2), 0.0)))


# -- serialization -------------------------------------------------------------

def write_field(field, path):
    with open(path, "w") as fh:
        fh.write("dgelast field 1\n")
        fh.write("degree %d\n" % field.space.degree)
        fh.write("ndof %d\n" % field.space.ndof)
        for c in field.coeffs:
            fh.write("%.17g\n" % c)


def read_field(space, path):
    with open(path) as fh:
        tokens = fh.read().split()
    if tokens[:3] != ["dgelast", "field", "1"]:
        raise ValueError("not a dgelast field file")
    if tokens[3] != "degree" or int(tokens[4]) != space.degree:
        raise ValueError("field degree does not match the space")
    if tokens[5] != "ndof" or int(tokens[6]) != space.ndof:
        raise ValueError("field size does not match the space")
    coeffs = np.array([float(t) for t in tokens[7:7 + space.ndof]])
    return DgField(space, coeffs)
