"""Continuous Lagrange spaces on triangulations.

Used in two supporting roles: nodal-averaging recovery of a conforming
field from a discontinuous one, and the over-resolved conforming solves
that serve as a reference for the reconstruction gap.  Nodes sit on the
barycentric lattice of each triangle; shared edge nodes are numbered
through the face list so the space is H1-conforming.
"""

import numpy as np
import scipy.sparse as sp

from .quadrature import triangle_rule
from .space import _monomial_exponents, _mono_eval, _mono_grad
from .linsolve import solve_spd

SQRT2 = np.sqrt(2.0)


def _lattice(degree):
    """Barycentric lattice points on the reference triangle."""
    pts, kind = [], []
    for i in range(degree + 1):
        for j in range(degree + 1 - i):
            pts.append((i / degree, j / degree))
            if (i, j) in ((0, 0), (degree, 0), (0, degree)):
                kind.append("v")
            elif i == 0 or j == 0 or i + j == degree:
                kind.append("e")
            else:
                kind.append("i")
    return np.array(pts), kind


class ContinuousSpace:
    """Vector P_k Lagrange space; dof = 2 * node + component."""

    def __init__(self, mesh, degree):
        if degree < 1:
            raise ValueError("degree must be at least 1")
        self.mesh = mesh
        self.degree = degree
        ref, kinds = _lattice(degree)
        self.ref_nodes = ref
        nlat = len(ref)

        exps = _monomial_exponents(degree)
        V = _mono_eval(ref, exps)
        self._nodal_coeff = np.linalg.inv(V)  # columns: nodal basis functions

        nv, nf, nt = mesh.num_vertices, mesh.num_faces, mesh.num_triangles
        per_edge = degree - 1
        n_int = nlat - 3 - 3 * per_edge
        self.num_nodes = nv + nf * per_edge + nt * n_int

        face_of = {}
        for fidx, (a, b) in enumerate(mesh.faces):
            key = (int(a), int(b)) if a < b else (int(b), int(a))
            face_of[key] = fidx

        elem_nodes = np.empty((nt, nlat), dtype=np.int64)
        coords = np.zeros((self.num_nodes, 2))
        local_edges = [(0, 1), (1, 2), (2, 0)]
        for t in range(nt):
            tri = mesh.triangles[t]
            v = mesh.vertices[tri]
            interior_count = 0
            for li, ((x, y), kind) in enumerate(zip(ref, kinds)):
                lam = (1 - x - y, x, y)
                phys = lam[0] * v[0] + lam[1] * v[1] + lam[2] * v[2]
                if kind == "v":
                    corner = int(np.argmax(lam))
                    g = int(tri[corner])
                elif kind == "e":
                    for a_loc, b_loc in local_edges:
                        if lam[3 - a_loc - b_loc] < 1e-12:
                            break
                    va, vb = int(tri[a_loc]), int(tri[b_loc])
                    step = int(round(lam[b_loc] * degree))
                    if va > vb:
                        va, vb = vb, va
                        step = degree - step
                    fidx = face_of[(va, vb)]
                    g = nv + fidx * per_edge + (step - 1)
                else:
                    g = (nv + nf * per_edge + t * n_int + interior_count)
                    interior_count += 1
                elem_nodes[t, li] = g
                coords[g] = phys
        self.elem_nodes = elem_nodes
        self.node_coords = coords

        bnodes = np.zeros(self.num_nodes, dtype=bool)
        for fidx in mesh.boundary_faces:
            a, b = mesh.faces[fidx]
            bnodes[int(a)] = bnodes[int(b)] = True
            bnodes[nv + fidx * per_edge: nv + fidx * per_edge + per_edge] = True
        self.boundary_nodes = bnodes

    def basis_at(self, ref_pts):
        """Nodal basis values at reference points, (m, nlat)."""
        exps = _monomial_exponents(self.degree)
        return _mono_eval(np.atleast_2d(ref_pts), exps) @ self._nodal_coeff

    def basis_grad_at(self, ref_pts):
        exps = _monomial_exponents(self.degree)
        g = _mono_grad(np.atleast_2d(ref_pts), exps)
        return np.einsum("mn,qmd->qnd", self._nodal_coeff, g)

    def eval(self, nodal_values, elems, ref_pts):
        """Values at shared reference points inside given elements, (m, q, 2)."""
        phi = self.basis_at(ref_pts)                 # (q, nlat)
        vals = nodal_values[self.elem_nodes[elems]]  # (m, nlat, 2)
        return np.einsum("qn,mnc->mqc", phi, vals)


def interpolate_dg_nodal(space, coeffs, ref_nodes):
    """DG field values at per-element reference nodes, (nt, nlat, 2)."""
    phi = space.basis_at(ref_nodes)  # (nlat, nb)
    c = coeffs.reshape(space.mesh.num_triangles, 2, space.nb)
    return np.einsum("ni,tci->tnc", phi, c) / space.sqrt_detJ[:, None, None]


def solve_conforming(cspace, material, load, tol=1e-10):
    """Conforming FEM solve of the stationary problem with zero trace.

    ``load`` is either a callable points -> (m, 2) or a precomputed value
    array of shape (num_triangles, nq, 2) matching this solver's
    quadrature rule (degree 2k+2).  Returns nodal displacement values,
    (num_nodes, 2).
    """
    mesh = cspace.mesh
    k = cspace.degree
    rule = triangle_rule(2 * k + 2)
    nlat = cspace.elem_nodes.shape[1]

    tri = mesh.vertices[mesh.triangles]
    J = np.stack([tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]], axis=2)
    Jinv = np.linalg.inv(J)
    detJ = 2.0 * mesh.areas

    gref = cspace.basis_grad_at(rule.points)          # (nq, nlat, 2)
    gphys = np.einsum("qnd,tdk->tqnk", gref, Jinv)     # (nt, nq, nlat, 2)
    nt = mesh.num_triangles
    E = np.zeros((nt, rule.npoints, 2 * nlat, 3))
    E[:, :, 0::2, 0] = gphys[..., 0]
    E[:, :, 0::2, 2] = gphys[..., 1] / SQRT2
    E[:, :, 1::2, 1] = gphys[..., 1]
    E[:, :, 1::2, 2] = gphys[..., 0] / SQRT2
    mandel = material.for_elements(nt)
    w = rule.weights[None, :] * detJ[:, None]
    S = np.einsum("tqam,tnm->tqan", E, mandel)
    blocks = np.einsum("tq,tqam,tqbm->tab", w, S, E)

    dof = np.empty((nt, 2 * nlat), dtype=np.int64)
    dof[:, 0::2] = 2 * cspace.elem_nodes
    dof[:, 1::2] = 2 * cspace.elem_nodes + 1
    m = 2 * nlat
    rows = np.repeat(dof, m, axis=1).ravel()
    cols = np.tile(dof, (1, m)).ravel()
    n = 2 * cspace.num_nodes
    K = sp.coo_matrix((blocks.ravel(), (rows, cols)), shape=(n, n)).tocsr()

    phi = cspace.basis_at(rule.points)                 # (nq, nlat)
    if callable(load):
        pts = tri[:, 0][:, None, :] + np.einsum("tij,qj->tqi", J, rule.points)
        fvals = np.asarray(load(pts.reshape(-1, 2))).reshape(
            nt, rule.npoints, 2)
    else:
        fvals = np.asarray(load).reshape(nt, rule.npoints, 2)
    lb = np.einsum("tq,tqc,qn->tnc", w, fvals, phi)
    b = np.zeros(n)
    np.add.at(b, 2 * cspace.elem_nodes, lb[..., 0])
    np.add.at(b, 2 * cspace.elem_nodes + 1, lb[..., 1])

    free = ~np.repeat(cspace.boundary_nodes, 2)
    Kff = K[free][:, free].tocsr()
    diag = Kff.diagonal()
    Dinv = sp.diags(1.0 / diag)
    x = np.zeros(n)
    # Jacobi-preconditioned CG through the SPD solver interface
    xf = solve_spd(Dinv @ Kff @ Dinv, Dinv @ b[free], tol=tol)
    x[free] = Dinv @ xf
    return x.reshape(-1, 2)
