"""Assembly of the interior-penalty DG forms.

Builds the symmetric interior penalty matrix (volume stress-strain term,
two consistency face terms and the alpha/h jump penalty), the jump
lifting operator, the lifted non-consistent form that extends the DG form
to discrete-plus-H1 arguments, and measured trace-inverse constants used
to pick the penalty.  All loops are vectorized over elements and faces;
matrices are returned in compressed sparse row form.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .quadrature import triangle_rule, edge_rule
from .material import mandel_normal_flux
from .space import DgField, _monomial_exponents, _mono_eval

SQRT2 = np.sqrt(2.0)

_SIGN = (1.0, -1.0)  # jump signs of the two face sides


def _strain_tables_volume(space):
    """Strain Mandel vectors of every vector basis function.

    Returns (nt, nq, 2*nb, 3); dof index is component-major (modes of
    component 0 first).
    """
    gphys = np.einsum("qid,tdk->tqik", space.vol_ref_grad, space.Jinv)
    gphys = gphys / space.sqrt_detJ[:, None, None, None]
    nt, nq, nb, _ = gphys.shape
    E = np.zeros((nt, nq, 2 * nb, 3))
    E[:, :, :nb, 0] = gphys[..., 0]
    E[:, :, :nb, 2] = gphys[..., 1] / SQRT2
    E[:, :, nb:, 1] = gphys[..., 1]
    E[:, :, nb:, 2] = gphys[..., 0] / SQRT2
    return E


def _strain_tables_face(space, side):
    g = space.face_grad[side]  # (nf, qe, nb, 2), physical
    nf, qe, nb, _ = g.shape
    E = np.zeros((nf, qe, 2 * nb, 3))
    E[:, :, :nb, 0] = g[..., 0]
    E[:, :, :nb, 2] = g[..., 1] / SQRT2
    E[:, :, nb:, 1] = g[..., 1]
    E[:, :, nb:, 2] = g[..., 0] / SQRT2
    return E


def _value_tables_face(space, side):
    phi = space.face_phi[side]  # (nf, qe, nb)
    nf, qe, nb = phi.shape
    V = np.zeros((nf, qe, 2 * nb, 2))
    V[:, :, :nb, 0] = phi
    V[:, :, nb:, 1] = phi
    return V


@dataclass
class PenaltyConfig:
    """Jump penalty alpha with the measured threshold it was derived from."""

    alpha: float
    alpha_min: float = 0.0
    c_inv: float = 0.0

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("penalty must be positive")

    @classmethod
    def from_material(cls, mesh, degree, material, safety=2.0):
        """alpha = safety * 4 C_inv^2 C*^2 / c_* with C_inv measured."""
        from .material import spectral_bounds
        c_lo, c_hi = spectral_bounds(material)
        c_inv = estimate_inverse_constant(mesh, degree)
        alpha_min = 4.0 * c_inv ** 2 * c_hi ** 2 / c_lo
        return cls(alpha=safety * alpha_min, alpha_min=alpha_min, c_inv=c_inv)

    def face_weights(self, mesh):
        return self.alpha / mesh.face_h


def _volume_matrix_blocks(space, mandel):
    E = _strain_tables_volume(space)
    S = np.einsum("tqam,tnm->tqan", E, mandel)
    return np.einsum("tq,tqam,tqbm->tab", space.vol_weights, S, E)


def _scatter_element_blocks(space, blocks, rows_out, cols_out, vals_out):
    nt = space.mesh.num_triangles
    m = 2 * space.nb
    dof = (np.arange(nt)[:, None] * m + np.arange(m)[None, :])
    rows_out.append(np.repeat(dof, m, axis=1).ravel())
    cols_out.append(np.tile(dof, (1, m)).ravel())
    vals_out.append(blocks.ravel())


def _face_dof_indices(space, side):
    m = 2 * space.nb
    elems = np.maximum(space.mesh.face_elems[:, side], 0)
    return elems[:, None] * m + np.arange(m)[None, :]


def _scatter_face_blocks(space, faces, side_v, side_u, blocks,
                         rows_out, cols_out, vals_out):
    dof_v = _face_dof_indices(space, side_v)[faces]
    dof_u = _face_dof_indices(space, side_u)[faces]
    m = dof_v.shape[1]
    rows_out.append(np.repeat(dof_v, m, axis=1).ravel())
    cols_out.append(np.tile(dof_u, (1, m)).ravel())
    vals_out.append(blocks.ravel())


def _assemble(space, mandel, alpha, include_consistency=True):
    """Shared assembly core for the DG form and the DG-norm Gram matrix."""
    mesh = space.mesh
    rows, cols, vals = [], [], []

    _scatter_element_blocks(space, _volume_matrix_blocks(space, mandel),
                            rows, cols, vals)

    wf = space.face_weights           # (nf, qe)
    pen = alpha / mesh.face_h         # (nf,)
    V = [_value_tables_face(space, s) for s in range(2)]

    flux = None
    if include_consistency:
        flux = []
        for s in range(2):
            elems = np.maximum(mesh.face_elems[:, s], 0)
            E = _strain_tables_face(space, s)
            stress = np.einsum("fqam,fnm->fqan", E, mandel[elems])
            flux.append(mandel_normal_flux(
                stress, mesh.face_normals[:, None, None, :]))

    interior = mesh.interior_faces
    boundary = mesh.boundary_faces

    for faces, sides, avg_w in ((interior, (0, 1), 0.5), (boundary, (0,), 1.0)):
        if len(faces) == 0:
            continue
        w = wf[faces]
        p = pen[faces]
        for sv in sides:
            for su in sides:
                blk = (p[:, None, None] * _SIGN[su] * _SIGN[sv]
                       * np.einsum("fq,fqac,fqbc->fab",
                                   w, V[sv][faces], V[su][faces]))
                if include_consistency:
                    blk -= avg_w * _SIGN[sv] * np.einsum(
                        "fq,fqbc,fqac->fab", w, flux[su][faces], V[sv][faces])
                    blk -= avg_w * _SIGN[su] * np.einsum(
                        "fq,fqac,fqbc->fab", w, flux[sv][faces], V[su][faces])
                _scatter_face_blocks(space, faces, sv, su, blk,
                                     rows, cols, vals)

    K = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(space.ndof, space.ndof)).tocsr()
    K.sum_duplicates()
    return K


def assemble_ah(space, material, penalty):
    """Stiffness matrix of the symmetric interior penalty form."""
    mandel = material.for_elements(space.mesh.num_triangles)
    return _assemble(space, mandel, penalty.alpha, include_consistency=True)


def dg_norm_gram(space, penalty):
    """Gram matrix of the mesh-dependent energy norm."""
    eye = np.broadcast_to(np.eye(3), (space.mesh.num_triangles, 3, 3))
    return _assemble(space, eye, penalty.alpha, include_consistency=False)


# -- lifting operator -----------------------------------------------------------


class LiftedField:
    """Element-wise symmetric tensor polynomial in Mandel coefficients.

    Coefficients have shape (nt, 3, nb) against the orthonormal basis
    (Mandel direction) x (scalar mode), so the L2 norm is the Euclidean
    norm of the coefficients.
    """

    def __init__(self, space, coeffs):
        self.space = space
        self.coeffs = coeffs

    def norm_l2(self):
        return float(np.linalg.norm(self.coeffs))

    def values_at_volume_quad(self):
        """Mandel values at volume quadrature points, (nt, nq, 3)."""
        out = np.einsum("qi,tmi->tqm", self.space.vol_ref_phi, self.coeffs)
        return out / self.space.sqrt_detJ[:, None, None]


def apply_lifting(space, material, field):
    """Lift the jumps of a field into element-wise tensor polynomials.

    The result L satisfies int L : tau = sum_faces int [v] . {(C tau) n}
    for every element-wise polynomial tensor tau.
    """
    mesh = space.mesh
    mandel = material.for_elements(mesh.num_triangles)
    jumps = space.jumps_at_faces(field.coeffs)       # (nf, qe, 2)
    L = np.zeros((mesh.num_triangles, 3, space.nb))

    for side in range(2):
        elems = mesh.face_elems[:, side]
        valid = elems >= 0
        if not np.any(valid):
            continue
        safe = np.maximum(elems, 0)
        # traction of each unit Mandel stress direction: (nf, 3 dirs, 2)
        cols = np.swapaxes(mandel[safe], 1, 2)       # columns of C
        F = mandel_normal_flux(cols, mesh.face_normals[:, None, :])
        inner = np.einsum("fq,fqc,fqi->fci", space.face_weights, jumps,
                          space.face_phi[side])
        avg = np.where(mesh.face_elems[:, 1] >= 0, 0.5, 1.0)
        contrib = avg[:, None, None] * np.einsum("fmc,fci->fmi", F, inner)
        np.add.at(L, safe[valid], contrib[valid])
    return LiftedField(space, L)


def _strain_to_sigma_matrix(space):
    """Sparse map from field dofs to tensor-space Mandel coefficients."""
    E = _strain_tables_volume(space)  # (nt, nq, 2nb, 3)
    phi = space.vol_ref_phi / space.sqrt_detJ[:, None, None].reshape(-1, 1, 1)
    # blocks[t, (m,i), (a)] = sum_q w phi_i eps_a,m
    blocks = np.einsum("tq,tqam,tqi->tmia", space.vol_weights, E, phi)
    nt = space.mesh.num_triangles
    m2, nb = 2 * space.nb, space.nb
    nsig = nt * 3 * nb
    rows = (np.arange(nt)[:, None, None, None] * 3 * nb
            + np.arange(3)[None, :, None, None] * nb
            + np.arange(nb)[None, None, :, None])
    cols = (np.arange(nt)[:, None, None, None] * m2
            + np.arange(m2)[None, None, None, :])
    rows = np.broadcast_to(rows, blocks.shape).ravel()
    cols = np.broadcast_to(cols, blocks.shape).ravel()
    M = sp.coo_matrix((blocks.ravel(), (rows, cols)),
                      shape=(nsig, space.ndof)).tocsr()
    return M


def _lifting_matrix(space, material):
    """Sparse matrix of the lifting operator (field dofs -> tensor dofs)."""
    mesh = space.mesh
    mandel = material.for_elements(mesh.num_triangles)
    nb = space.nb
    nsig = mesh.num_triangles * 3 * nb
    rows, cols, vals = [], [], []
    avg = np.where(mesh.face_elems[:, 1] >= 0, 0.5, 1.0)

    for st in range(2):      # element receiving the lift
        el_t = mesh.face_elems[:, st]
        ok_t = el_t >= 0
        safe_t = np.maximum(el_t, 0)
        cols_C = np.swapaxes(mandel[safe_t], 1, 2)
        F = mandel_normal_flux(cols_C, mesh.face_normals[:, None, :])  # (nf,3,2)
        for su in range(2):  # side contributing to the jump
            el_u = mesh.face_elems[:, su]
            ok = ok_t & (el_u >= 0)
            if not np.any(ok):
                continue
            # overlap of scalar traces: (nf, nb_t, nb_u)
            P = np.einsum("fq,fqi,fqj->fij", space.face_weights,
                          space.face_phi[st], space.face_phi[su])
            blocks = (_SIGN[su] * avg[:, None, None, None, None]
                      * np.einsum("fmc,fij->fmicj", F, P))  # (nf,3,nb,2,nb)
            f = np.nonzero(ok)[0]
            b = blocks[f]
            r = (safe_t[f][:, None, None, None, None] * 3 * nb
                 + np.arange(3)[None, :, None, None, None] * nb
                 + np.arange(nb)[None, None, :, None, None])
            c = (np.maximum(el_u, 0)[f][:, None, None, None, None] * 2 * nb
                 + np.arange(2)[None, None, None, :, None] * nb
                 + np.arange(nb)[None, None, None, None, :])
            rows.append(np.broadcast_to(r, b.shape).ravel())
            cols.append(np.broadcast_to(c, b.shape).ravel())
            vals.append(b.ravel())

    return sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(nsig, space.ndof)).tocsr()


def assemble_extended_A(space, material, penalty):
    """Matrix of the lifted (non-consistent) DG form.

    Volume term minus both strain-against-lifting couplings plus the jump
    penalty; agrees with the interior penalty matrix on the broken space.
    """
    mandel = material.for_elements(space.mesh.num_triangles)
    rows, cols, vals = [], [], []
    _scatter_element_blocks(space, _volume_matrix_blocks(space, mandel),
                            rows, cols, vals)
    wf = space.face_weights
    pen = penalty.alpha / space.mesh.face_h
    V = [_value_tables_face(space, s) for s in range(2)]
    for faces, sides in ((space.mesh.interior_faces, (0, 1)),
                         (space.mesh.boundary_faces, (0,))):
        if len(faces) == 0:
            continue
        w, p = wf[faces], pen[faces]
        for sv in sides:
            for su in sides:
                blk = (p[:, None, None] * _SIGN[su] * _SIGN[sv]
                       * np.einsum("fq,fqac,fqbc->fab",
                                   w, V[sv][faces], V[su][faces]))
                _scatter_face_blocks(space, faces, sv, su, blk,
                                     rows, cols, vals)
    K = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(space.ndof, space.ndof)).tocsr()

    E = _strain_to_sigma_matrix(space)
    L = _lifting_matrix(space, material)
    K = K - E.T @ L - L.T @ E
    return K.tocsr()


def apply_discrete_operator(stiffness, field):
    """Riesz representer of the DG form: coefficients are K times the field."""
    if stiffness.shape[1] != field.space.ndof:
        raise ValueError("operator and field dimensions do not match")
    return DgField(field.space, stiffness @ field.coeffs)


def estimate_inverse_constant(mesh, degree):
    """Measured trace-inverse constant of P_degree on this mesh.

    Largest ratio of the edge L2 norm to h_K^{-1/2} times the element L2
    norm over all elements, edges and polynomials, computed from the edge
    mass matrix in the element-orthonormal basis.
    """
    if degree < 0:
        raise ValueError("degree must be nonnegative")
    exps = _monomial_exponents(degree)
    rule = triangle_rule(max(2 * degree, 1))
    V = _mono_eval(rule.points, exps)
    mass = V.T @ (rule.weights[:, None] * V)
    C = np.linalg.inv(np.linalg.cholesky(mass))

    erule = edge_rule(max(2 * degree, 1))
    tri = mesh.vertices[mesh.triangles]
    J = np.stack([tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]], axis=2)
    Jinv = np.linalg.inv(J)
    detJ = 2.0 * mesh.areas

    s = erule.points
    pa = mesh.vertices[mesh.faces[:, 0]]
    pb = mesh.vertices[mesh.faces[:, 1]]
    pts = pa[:, None, :] + s[None, :, None] * (pb - pa)[:, None, :]
    w = erule.weights[None, :] * mesh.face_lengths[:, None]

    best = 0.0
    for side in range(2):
        elems = mesh.face_elems[:, side]
        valid = elems >= 0
        if not np.any(valid):
            continue
        safe = np.maximum(elems, 0)
        rel = pts - tri[safe, 0][:, None, :]
        ref = np.einsum("fij,fqj->fqi", Jinv[safe], rel)
        phi = (_mono_eval(ref.reshape(-1, 2), exps) @ C.T).reshape(
            pts.shape[0], pts.shape[1], len(exps))
        phi = phi / np.sqrt(detJ[safe])[:, None, None]
        emass = np.einsum("fq,fqi,fqj->fij", w, phi, phi)
        lam = np.linalg.eigvalsh(emass)[:, -1]
        ratio = mesh.diameters[safe] * lam
        best = max(best, float(np.max(ratio[valid])))
    return float(np.sqrt(best))


def dump_matrix(path, matrix):
    """Matrix Market dump for debugging."""
    from scipy.io import mmwrite
    mmwrite(path, matrix.tocoo())
