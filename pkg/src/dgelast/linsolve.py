"""Conjugate gradients with a block-Jacobi (element-wise) preconditioner.

The systems solved here (stiffness, backward-Euler operator) are
symmetric positive definite by construction, so plain CG with the
element-local blocks inverted once is enough.  Everything is
deterministic: same inputs give bitwise identical iterates.
"""

import numpy as np


class SolverError(RuntimeError):
    """Nonconvergence; carries the relative residual that was reached."""

    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


def block_jacobi(matrix, block_size):
    """Inverted diagonal blocks of a sparse SPD matrix, (nblocks, bs, bs)."""
    n = matrix.shape[0]
    if n % block_size != 0:
        raise ValueError("matrix size is not a multiple of the block size")
    nb = n // block_size
    A = matrix.tocsr()
    blocks = np.empty((nb, block_size, block_size))
    for k in range(nb):
        lo = k * block_size
        blocks[k] = A[lo:lo + block_size, lo:lo + block_size].toarray()
    return np.linalg.inv(blocks)


def _apply_blocks(blocks, r):
    bs = blocks.shape[1]
    return np.einsum("kij,kj->ki", blocks, r.reshape(-1, bs)).ravel()


def solve_spd(matrix, rhs, tol=1e-10, max_iter=None, precond_blocks=None,
              x0=None, refresh_every=50):
    """Solve A x = b for SPD A to a relative true residual of ``tol``.

    The recursive CG residual is replaced by the true residual every
    ``refresh_every`` iterations so the exit test cannot drift.

    Parameters
    ----------
    precond_blocks : optional output of :func:`block_jacobi`
    x0 : optional warm start

    Raises
    ------
    SolverError if the iteration budget is exhausted before the
    tolerance is met; the error carries the residual that was reached.
    """
    b = np.asarray(rhs, dtype=float)
    n = b.shape[0]
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n)
    if max_iter is None:
        max_iter = max(2000, 20 * n)

    if x0 is None:
        x = np.zeros(n)
        r = b.copy()
    else:
        x = np.array(x0, dtype=float)
        r = b - matrix @ x

    def precond(v):
        return _apply_blocks(precond_blocks, v) if precond_blocks is not None else v

    z = precond(r)
    p = z.copy()
    rz = r @ z
    it = 0
    while it < max_iter:
        if np.linalg.norm(r) <= tol * bnorm:
            r = b - matrix @ x  # confirm against the true residual
            if np.linalg.norm(r) <= tol * bnorm:
                return x
            z = precond(r)
            p = z.copy()
            rz = r @ z
        Ap = matrix @ p
        pAp = p @ Ap
        if pAp <= 0:
            raise SolverError("conjugate gradients broke down (matrix not SPD?)",
                              float(np.linalg.norm(r) / bnorm))
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        it += 1
        if it % refresh_every == 0:
            r = b - matrix @ x
            z = precond(r)
            p = z.copy()
            rz = r @ z
            continue
        z = precond(r)
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new

    achieved = float(np.linalg.norm(b - matrix @ x) / bnorm)
    if achieved <= tol:
        return x
    raise SolverError(
        "conjugate gradients did not converge in %d iterations "
        "(relative residual %.3e)" % (max_iter, achieved), achieved)
