"""Fourth-order stiffness tensors in reduced (Mandel) form.

Symmetric 2x2 tensors are stored as 3-vectors (t11, t22, sqrt(2)*t12), so
the Frobenius inner product of tensors equals the Euclidean product of the
reduced vectors and tensor spectral bounds are ordinary matrix eigenvalues.
The tensor may be piecewise constant over element subdomains; subdomain
interfaces must then align with element faces.
"""

import numpy as np

SQRT2 = np.sqrt(2.0)


def to_mandel(t):
    """Reduce symmetric 2x2 tensor(s) of shape (..., 2, 2) to (..., 3)."""
    return np.stack([t[..., 0, 0], t[..., 1, 1], SQRT2 * t[..., 0, 1]], axis=-1)


def from_mandel(m):
    """Expand Mandel vector(s) of shape (..., 3) to (..., 2, 2)."""
    out = np.empty(m.shape[:-1] + (2, 2))
    out[..., 0, 0] = m[..., 0]
    out[..., 1, 1] = m[..., 1]
    out[..., 0, 1] = out[..., 1, 0] = m[..., 2] / SQRT2
    return out


def mandel_normal_flux(m, normals):
    """Traction vectors (sigma . n) from Mandel stresses.

    ``m`` has shape (..., 3), ``normals`` broadcastable (..., 2).
    """
    n1, n2 = normals[..., 0], normals[..., 1]
    s12 = m[..., 2] / SQRT2
    return np.stack([m[..., 0] * n1 + s12 * n2,
                     s12 * n1 + m[..., 1] * n2], axis=-1)


class StiffnessTensor:
    """Piecewise constant stiffness tensor with spectral bounds.

    Parameters
    ----------
    matrices : (m, 3, 3) array of symmetric positive definite Mandel
        matrices, one per material subdomain.
    element_materials : optional (nt,) int array mapping element id to
        subdomain; omitted for a single-material body.
    """

    def __init__(self, matrices, element_materials=None):
        matrices = np.atleast_3d(np.asarray(matrices, dtype=float))
        if matrices.ndim != 3 or matrices.shape[1:] != (3, 3):
            raise ValueError("expected (m, 3, 3) Mandel matrices")
        asym = np.max(np.abs(matrices - np.swapaxes(matrices, 1, 2)))
        if asym > 1e-12 * max(1.0, np.max(np.abs(matrices))):
            raise ValueError("Mandel matrix is not symmetric")
        eig = np.linalg.eigvalsh(matrices)
        if np.min(eig) <= 0:
            raise ValueError("stiffness tensor is not positive definite")
        self.matrices = matrices
        self.element_materials = (None if element_materials is None
                                  else np.asarray(element_materials, dtype=np.int64))
        self._eig_min = float(np.min(eig))
        self._eig_max = float(np.max(eig))

    @classmethod
    def from_lame(cls, lam, mu):
        """Isotropic tensor sigma(eps) = 2*mu*eps + lam*tr(eps)*I."""
        if mu <= 0:
            raise ValueError("shear modulus must be positive")
        if lam < 0:
            raise ValueError("compressible regime requires lam >= 0")
        M = np.array([[2 * mu + lam, lam, 0.0],
                      [lam, 2 * mu + lam, 0.0],
                      [0.0, 0.0, 2 * mu]])
        return cls(M[None, :, :])

    @classmethod
    def from_lame_by_subdomain(cls, lame_pairs, element_materials):
        """Piecewise isotropic tensor: one (lam, mu) pair per subdomain."""
        mats = []
        for lam, mu in lame_pairs:
            mats.append(cls.from_lame(lam, mu).matrices[0])
        return cls(np.array(mats), element_materials)

    def for_elements(self, num_triangles):
        """Per-element Mandel matrices, shape (nt, 3, 3)."""
        if self.element_materials is None:
            return np.broadcast_to(self.matrices[0], (num_triangles, 3, 3))
        if len(self.element_materials) != num_triangles:
            raise ValueError("subdomain map does not match the mesh")
        return self.matrices[self.element_materials]

    def apply(self, strain_mandel, elements=None):
        """Stress Mandel vectors for strain Mandel vectors (..., 3)."""
        if self.element_materials is None or elements is None:
            return strain_mandel @ self.matrices[0].T
        M = self.matrices[self.element_materials[elements]]
        return np.einsum("...ij,...j->...i", M, strain_mandel)


def spectral_bounds(tensor):
    """Smallest and largest eigenvalue over all subdomains.

    The lower bound c is the coercivity constant of the tensor on
    symmetric arguments, the upper bound C satisfies |C tau| <= C |tau|.
    """
    return tensor._eig_min, tensor._eig_max
