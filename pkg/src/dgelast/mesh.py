"""Conforming 2D triangulations with nested refinement.

A mesh is an immutable triangulation of a polygonal domain.  Meshes form
nested families: ``refine_nested`` produces a child mesh whose triangles
record the parent triangle they subdivide, which is what makes cross-mesh
L2 projections exact (see the space module).  Refinement is red (four
congruent children) on marked triangles, with red promotion and green
bisection as closure so no hanging nodes remain.
"""

import numpy as np


class MeshError(ValueError):
    pass


def _freeze(a):
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


class Mesh:
    """Triangulation with face connectivity and per-entity geometry.

    Attributes
    ----------
    vertices : (nv, 2) float array
    triangles : (nt, 3) int array, counter-clockwise
    faces : (nf, 2) int array of vertex pairs
    face_elems : (nf, 2) int array; second entry is -1 on boundary faces.
        The stored unit normal points from the first element into the
        second (outward on boundary faces).
    face_normals : (nf, 2) float array
    face_lengths, face_h : (nf,) float arrays; ``face_h`` is
        min(h_K, h_K') on interior faces and h_K on boundary faces.
    areas, diameters, inball_diameters : (nt,) float arrays
    parent : Mesh or None
    parent_tri : (nt,) int array of parent triangle ids (identity for a
        root mesh)
    """

    _next_id = 0

    def __init__(self, vertices, triangles, parent=None, parent_tri=None, domain=None):
        vertices = np.asarray(vertices, dtype=float)
        triangles = np.asarray(triangles, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 2:
            raise MeshError("vertices must be (nv, 2)")
        if triangles.ndim != 2 or triangles.shape[1] != 3:
            raise MeshError("triangles must be (nt, 3)")

        v = vertices[triangles]
        signed = 0.5 * np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])
        if np.any(signed <= 0):
            flip = signed <= 0
            triangles = triangles.copy()
            triangles[flip] = triangles[flip][:, [0, 2, 1]]
            v = vertices[triangles]
            signed = 0.5 * np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])
        if np.any(signed <= 0):
            raise MeshError("degenerate triangle (zero area)")

        self.vertices = _freeze(vertices)
        self.triangles = _freeze(triangles)
        self.areas = _freeze(signed)
        self.domain = tuple(domain) if domain is not None else None
        self.parent = parent
        if parent_tri is None:
            parent_tri = np.arange(len(triangles))
        self.parent_tri = _freeze(np.asarray(parent_tri, dtype=np.int64))

        edge = np.linalg.norm(
            v[:, [1, 2, 0]] - v[:, [0, 1, 2]], axis=2)  # (nt, 3): edges 01, 12, 20
        self.diameters = _freeze(edge.max(axis=1))
        self.inball_diameters = _freeze(4.0 * signed / edge.sum(axis=1))

        self._build_faces()
        self.mesh_id = Mesh._next_id
        Mesh._next_id += 1

    @property
    def num_vertices(self):
        return self.vertices.shape[0]

    @property
    def num_triangles(self):
        return self.triangles.shape[0]

    @property
    def num_faces(self):
        return self.faces.shape[0]

    def _build_faces(self):
        tris = self.triangles
        nt = tris.shape[0]
        found = {}
        face_v, face_el = [], []
        local = [(0, 1), (1, 2), (2, 0)]
        for t in range(nt):
            for le, (i, j) in enumerate(local):
                a, b = int(tris[t, i]), int(tris[t, j])
                key = (a, b) if a < b else (b, a)
                if key in found:
                    face_el[found[key]][1] = t
                else:
                    found[key] = len(face_v)
                    face_v.append((a, b))  # traversal order in the first element
                    face_el.append([t, -1])
        face_v = np.array(face_v, dtype=np.int64)
        face_el = np.array(face_el, dtype=np.int64)

        pa = self.vertices[face_v[:, 0]]
        pb = self.vertices[face_v[:, 1]]
        d = pb - pa
        lengths = np.linalg.norm(d, axis=1)
        if np.any(lengths == 0):
            raise MeshError("zero-length face")
        # outward normal of the first element (CCW traversal): rotate by -90 deg
        normals = np.column_stack([d[:, 1], -d[:, 0]]) / lengths[:, None]

        interior = face_el[:, 1] >= 0
        hplus = self.diameters[face_el[:, 0]]
        hminus = np.where(interior, self.diameters[face_el[:, 1]], hplus)
        face_h = np.minimum(hplus, hminus)

        self.faces = _freeze(face_v)
        self.face_elems = _freeze(face_el)
        self.face_normals = _freeze(normals)
        self.face_lengths = _freeze(lengths)
        self.face_h = _freeze(face_h)
        self.interior_faces = _freeze(np.nonzero(interior)[0])
        self.boundary_faces = _freeze(np.nonzero(~interior)[0])
        bverts = np.zeros(self.num_vertices, dtype=bool)
        bverts[face_v[~interior].ravel()] = True
        self.boundary_vertices = _freeze(bverts)

    # -- nesting ---------------------------------------------------------

    def lineage(self):
        """This mesh and its ancestors, nearest first."""
        chain, m = [], self
        while m is not None:
            chain.append(m)
            m = m.parent
        return chain

    def ancestor_tri_map(self, ancestor):
        """Map triangle ids of self onto triangle ids of ``ancestor``.

        Raises if ``ancestor`` is not in this mesh's lineage.
        """
        amap = np.arange(self.num_triangles)
        m = self
        while m is not ancestor:
            if m.parent is None:
                raise MeshError("meshes are not nested-related")
            amap = m.parent_tri[amap]
            m = m.parent
        return amap

    def is_ancestor_of(self, other):
        return self in other.lineage()


def build_structured(n, domain=(0.0, 0.0, 1.0, 1.0)):
    """Uniform triangulation of an axis-aligned rectangle.

    Each of the n x n grid cells is split along the lower-left to
    upper-right diagonal, giving 2*n^2 triangles.
    """
    if n < 1:
        raise MeshError("need at least one subdivision per side")
    x0, y0, x1, y1 = map(float, domain)
    if not (x1 > x0 and y1 > y0):
        raise MeshError("degenerate rectangle")
    xs = np.linspace(x0, x1, n + 1)
    ys = np.linspace(y0, y1, n + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    verts = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return i * (n + 1) + j

    tris = []
    for i in range(n):
        for j in range(n):
            v00, v10 = vid(i, j), vid(i + 1, j)
            v01, v11 = vid(i, j + 1), vid(i + 1, j + 1)
            tris.append((v00, v10, v11))
            tris.append((v00, v11, v01))
    return Mesh(verts, np.array(tris), domain=(x0, y0, x1, y1))


def refine_nested(mesh, marked):
    """Refine ``marked`` triangles red, closing so no hanging nodes remain.

    Closure promotes any triangle with two or more split edges to red and
    bisects triangles with exactly one split edge (green).  An empty set
    returns an identical child mesh with identity ancestry.
    """
    marked = set(int(t) for t in marked)
    nt = mesh.num_triangles
    if any(t < 0 or t >= nt for t in marked):
        raise MeshError("marked triangle id out of range")
    if not marked:
        return Mesh(mesh.vertices, mesh.triangles, parent=mesh,
                    domain=mesh.domain)

    tris = mesh.triangles
    local = [(0, 1), (1, 2), (2, 0)]

    def edge_key(t, le):
        i, j = local[le]
        a, b = int(tris[t, i]), int(tris[t, j])
        return (a, b) if a < b else (b, a)

    red = set(marked)
    while True:
        split = {edge_key(t, le) for t in red for le in range(3)}
        grow = [t for t in range(nt) if t not in red
                and sum(edge_key(t, le) in split for le in range(3)) >= 2]
        if not grow:
            break
        red.update(grow)

    verts = [mesh.vertices]
    mid_id = {}
    next_id = mesh.num_vertices
    new_pts = []
    for key in sorted(split):
        mid_id[key] = next_id
        new_pts.append(0.5 * (mesh.vertices[key[0]] + mesh.vertices[key[1]]))
        next_id += 1
    if new_pts:
        verts.append(np.array(new_pts))
    verts = np.vstack(verts)

    new_tris, parent_tri = [], []

    def emit(t, conn):
        new_tris.append(conn)
        parent_tri.append(t)

    for t in range(nt):
        v0, v1, v2 = (int(x) for x in tris[t])
        if t in red:
            m01 = mid_id[edge_key(t, 0)]
            m12 = mid_id[edge_key(t, 1)]
            m20 = mid_id[edge_key(t, 2)]
            emit(t, (v0, m01, m20))
            emit(t, (m01, v1, m12))
            emit(t, (m20, m12, v2))
            emit(t, (m01, m12, m20))
        else:
            cut = [le for le in range(3) if edge_key(t, le) in split]
            if not cut:
                emit(t, (v0, v1, v2))
            else:
                le = cut[0]  # exactly one, by closure
                m = mid_id[edge_key(t, le)]
                corners = (v0, v1, v2)
                a, b = local[le]
                c = 3 - a - b
                emit(t, (corners[a], m, corners[c]))
                emit(t, (m, corners[b], corners[c]))

    return Mesh(verts, np.array(new_tris, dtype=np.int64), parent=mesh,
                parent_tri=np.array(parent_tri), domain=mesh.domain)


def quality_report(mesh):
    """Shape regularity and local quasi-uniformity of a mesh.

    Returns {'theta': max diameter/inball-diameter,
             'kappa': max diameter ratio across interior faces}.
    """
    theta = float(np.max(mesh.diameters / mesh.inball_diameters))
    ii = mesh.interior_faces
    if len(ii) == 0:
        kappa = 1.0
    else:
        hp = mesh.diameters[mesh.face_elems[ii, 0]]
        hm = mesh.diameters[mesh.face_elems[ii, 1]]
        kappa = float(np.max(np.maximum(hp / hm, hm / hp)))
    return {"theta": theta, "kappa": kappa}


def validate(mesh, tol=1e-12):
    """Check mesh invariants; raises MeshError on the first violation."""
    if np.any(mesh.areas <= 0):
        raise MeshError("nonpositive triangle area")

    nrm = np.linalg.norm(mesh.face_normals, axis=1)
    if np.max(np.abs(nrm - 1.0)) > 1e-12:
        raise MeshError("non-unit face normal")

    ni = len(mesh.interior_faces)
    nb = len(mesh.boundary_faces)
    if ni + nb != mesh.num_faces:
        raise MeshError("face partition mismatch")

    # face_h definition
    fe = mesh.face_elems
    hp = mesh.diameters[fe[:, 0]]
    hm = np.where(fe[:, 1] >= 0, mesh.diameters[np.maximum(fe[:, 1], 0)], hp)
    if np.max(np.abs(mesh.face_h - np.minimum(hp, hm))) > 0:
        raise MeshError("face_h inconsistent")

    # normals point from the first incident element into the second
    centers = mesh.vertices[mesh.triangles].mean(axis=1)
    mid = 0.5 * (mesh.vertices[mesh.faces[:, 0]] + mesh.vertices[mesh.faces[:, 1]])
    outward = np.einsum("fk,fk->f", mesh.face_normals, mid - centers[fe[:, 0]])
    if np.any(outward <= 0):
        raise MeshError("face normal does not leave the first element")

    # no hanging nodes: no vertex strictly inside a face
    pa = mesh.vertices[mesh.faces[:, 0]]
    d = mesh.vertices[mesh.faces[:, 1]] - pa
    L2 = np.einsum("fk,fk->f", d, d)
    for fidx in range(mesh.num_faces):
        rel = mesh.vertices - pa[fidx]
        cross = rel[:, 0] * d[fidx, 1] - rel[:, 1] * d[fidx, 0]
        s = (rel @ d[fidx]) / L2[fidx]
        on = (np.abs(cross) <= 1e-12 * np.sqrt(L2[fidx])) & (s > 1e-10) & (s < 1 - 1e-10)
        if np.any(on):
            raise MeshError("hanging node on face %d" % fidx)

    if mesh.domain is not None:
        x0, y0, x1, y1 = mesh.domain
        area = (x1 - x0) * (y1 - y0)
        if abs(mesh.areas.sum() - area) > tol * area:
            raise MeshError("triangle areas do not sum to the domain area")

    if mesh.parent is not None:
        # children geometrically contained in their recorded parent
        p = mesh.parent
        pv = p.vertices[p.triangles[mesh.parent_tri]]  # (nt, 3, 2)
        T = np.stack([pv[:, 1] - pv[:, 0], pv[:, 2] - pv[:, 0]], axis=2)
        Tinv = np.linalg.inv(T)
        for k in range(3):
            lam = np.einsum("tij,tj->ti", Tinv,
                            mesh.vertices[mesh.triangles[:, k]] - pv[:, 0])
            if np.any(lam < -1e-12) or np.any(lam.sum(axis=1) > 1 + 1e-12):
                raise MeshError("child triangle escapes its parent")
    return True


# -- plain-text serialization ------------------------------------------------

def write_mesh(mesh, path):
    """Write vertex coordinates, connectivity and ancestry as plain text."""
    with open(path, "w") as fh:
        fh.write("dgelast mesh 1\n")
        if mesh.domain is not None:
            fh.write("domain %.17g %.17g %.17g %.17g\n" % mesh.domain)
        else:
            fh.write("domain none\n")
        fh.write("vertices %d\n" % mesh.num_vertices)
        for x, y in mesh.vertices:
            fh.write("%.17g %.17g\n" % (x, y))
        fh.write("triangles %d\n" % mesh.num_triangles)
        has_parent = mesh.parent is not None
        for t in range(mesh.num_triangles):
            a, b, c = mesh.triangles[t]
            par = mesh.parent_tri[t] if has_parent else -1
            fh.write("%d %d %d %d\n" % (a, b, c, par))


def read_mesh(path, parent=None):
    """Read a mesh written by ``write_mesh``; ``parent`` restores nesting."""
    with open(path) as fh:
        tokens = fh.read().split()
    it = iter(tokens)
    if next(it) != "dgelast" or next(it) != "mesh" or next(it) != "1":
        raise MeshError("not a dgelast mesh file")
    if next(it) != "domain":
        raise MeshError("missing domain record")
    first = next(it)
    domain = None
    if first != "none":
        domain = (float(first), float(next(it)), float(next(it)), float(next(it)))
    if next(it) != "vertices":
        raise MeshError("missing vertex record")
    nv = int(next(it))
    verts = np.array([[float(next(it)), float(next(it))] for _ in range(nv)])
    if next(it) != "triangles":
        raise MeshError("missing triangle record")
    nt = int(next(it))
    rows = np.array([[int(next(it)) for _ in range(4)] for _ in range(nt)])
    parent_tri = rows[:, 3] if parent is not None else None
    return Mesh(verts, rows[:, :3], parent=parent, parent_tri=parent_tri,
                domain=domain)
