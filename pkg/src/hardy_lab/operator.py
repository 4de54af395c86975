"""Assembly of the divergence-form operator L = -div(A grad) in flux form.

The discrete operator is built as L = G^H A G where G stacks one forward
difference per axis and A acts cellwise as the d x d coefficient matrix.
This makes the sesquilinear form exact at the discrete level: the adjoint
is the entrywise conjugate transpose and accretivity follows from
ellipticity with the same constant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .grid import (
    PERIODIC,
    CoefficientField,
    Grid,
    GridError,
    check_ellipticity,
)


def _shift_matrix(size: int, periodic: bool) -> sp.csr_matrix:
    """Maps u_i to u_{i+1}, wrapping or using a zero ghost value."""
    rows = np.arange(size - 1)
    cols = np.arange(1, size)
    data = np.ones(size - 1)
    if periodic:
        rows = np.append(rows, size - 1)
        cols = np.append(cols, 0)
        data = np.append(data, 1.0)
    return sp.csr_matrix((data, (rows, cols)), shape=(size, size))


def gradient_matrices(grid: Grid) -> tuple[sp.csr_matrix, ...]:
    """Forward-difference matrices, one per axis, shape N x N each."""
    periodic = grid.boundary == PERIODIC
    h = grid.spacing
    mats = []
    eyes = [sp.identity(s, format="csr") for s in grid.sizes]
    for a in range(grid.dim):
        shift = _shift_matrix(grid.sizes[a], periodic)
        d1 = (shift - sp.identity(grid.sizes[a])) / h
        factors = [d1 if b == a else eyes[b] for b in range(grid.dim)]
        m = factors[0]
        for f in factors[1:]:
            m = sp.kron(m, f, format="csr")
        mats.append(sp.csr_matrix(m))
    return tuple(mats)


@dataclass(frozen=True, eq=False)
class DiscreteOperator:
    """Sparse L with its exact adjoint and the gradient it was built from."""

    matrix: sp.csr_matrix
    adjoint_matrix: sp.csr_matrix
    grid: Grid
    kernel_dim: int
    grads: tuple[sp.csr_matrix, ...]

    @property
    def n(self) -> int:
        return self.grid.n_nodes

    def apply(self, v: np.ndarray) -> np.ndarray:
        return self.matrix @ v

    def gradient(self, v: np.ndarray) -> np.ndarray:
        """Discrete gradient, shape (dim, ...) matching the input columns."""
        return np.stack([g @ v for g in self.grads])


def assemble_operator(grid: Grid, coeff: CoefficientField) -> DiscreteOperator:
    """Second-order conservative stencil for -div(A grad), plus its adjoint."""
    if coeff.grid != grid:
        raise GridError("coefficient field lives on a different grid")
    check_ellipticity(coeff)
    grads = gradient_matrices(grid)
    mat = None
    for a in range(grid.dim):
        ga_h = grads[a].conj().T.tocsr()
        for b in range(grid.dim):
            diag = sp.diags(coeff.matrices[:, a, b])
            term = ga_h @ diag @ grads[b]
            mat = term if mat is None else mat + term
    mat = sp.csr_matrix(mat)
    mat.sort_indices()
    adj = sp.csr_matrix(mat.conj().T)
    adj.sort_indices()
    kernel_dim = 1 if grid.boundary == PERIODIC else 0
    return DiscreteOperator(mat, adj, grid, kernel_dim, grads)


def adjoint_operator(op: DiscreteOperator) -> DiscreteOperator:
    """The operator L* with the roles of matrix and adjoint swapped."""
    return DiscreteOperator(
        op.adjoint_matrix, op.matrix, op.grid, op.kernel_dim, op.grads
    )
