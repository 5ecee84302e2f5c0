"""Legacy ASCII VTK output with per-element point duplication.

Each triangle contributes its own three points so discontinuities across
faces render as they are; estimator maps ride along as cell data.
"""

import numpy as np


def write_vtk(path, mesh, point_fields=None, cell_fields=None):
    """Write an unstructured-grid file.

    point_fields: {name: DgField} evaluated at the duplicated vertices.
    cell_fields:  {name: (num_triangles,) array}.
    """
    point_fields = point_fields or {}
    cell_fields = cell_fields or {}
    nt = mesh.num_triangles
    corners = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])

    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write("dgelast output\n")
        fh.write("ASCII\n")
        fh.write("DATASET UNSTRUCTURED_GRID\n")
        fh.write("POINTS %d double\n" % (3 * nt))
        coords = mesh.vertices[mesh.triangles].reshape(-1, 2)
        for x, y in coords:
            fh.write("%.12g %.12g 0\n" % (x, y))
        fh.write("CELLS %d %d\n" % (nt, 4 * nt))
        for t in range(nt):
            fh.write("3 %d %d %d\n" % (3 * t, 3 * t + 1, 3 * t + 2))
        fh.write("CELL_TYPES %d\n" % nt)
        fh.write("5\n" * nt)

        if point_fields:
            fh.write("POINT_DATA %d\n" % (3 * nt))
            for name, fld in point_fields.items():
                elems = np.repeat(np.arange(nt), 3)
                pts = coords
                vals = fld.space.eval_at(fld.coeffs, elems, pts)
                fh.write("VECTORS %s double\n" % name)
                for vx, vy in vals:
                    fh.write("%.12g %.12g 0\n" % (vx, vy))
        if cell_fields:
            fh.write("CELL_DATA %d\n" % nt)
            for name, arr in cell_fields.items():
                arr = np.asarray(arr)
                if arr.shape != (nt,):
                    raise ValueError("cell field %r has wrong length" % name)
                fh.write("SCALARS %s double 1\n" % name)
                fh.write("LOOKUP_TABLE default\n")
                for v in arr:
                    fh.write("%.12g\n" % v)
