"""The Riesz transform grad L^{-1/2} and its boundedness experiments.

L^{-1/2} is realized by the quadrature

    L^{-1/2} f = (1/sqrt(pi)) int_0^inf e^{-sL} f ds/sqrt(s)

after the substitution s = e^u, which turns the 1/sqrt(s) endpoint and the
e^{-s lambda_min} tail into doubly smooth decay so the trapezoid rule
converges geometrically.  The constant 1/sqrt(pi) makes the identity
L^{-1/2} L^{1/2} = I exact on eigenmodes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import ScalarField, VectorField, lp_norm, restricted_lp_norm
from .operator import DiscreteOperator
from . import semigroup
from .functionals import vertical_square_function
from .semigroup import KernelComponentError

MIN_QUAD_NODES = 32


def _spectral_bounds(op: DiscreteOperator) -> tuple[float, float]:
    """(smallest nonzero, largest) eigenvalue magnitudes of L."""
    if op.n <= semigroup.AUTO_DENSE_MAX:
        w = np.abs(semigroup.dense_calculus(op).w)
        nonzero = w[w > 1e-10 * max(w.max(), 1.0)]
        return float(nonzero.min()), float(w.max())
    # Gershgorin upper bound; lower bound from the Laplacian gap scaled by
    # the declared accretivity of the assembled form
    mat = op.matrix
    upper = float(np.abs(mat).sum(axis=1).max())
    h = op.grid.spacing
    size = max(op.grid.sizes)
    lower = (2.0 / h * math.sin(math.pi / size)) ** 2 * 1e-2
    return lower, upper


def inv_sqrt_apply(
    op: DiscreteOperator, f: ScalarField, quad_nodes: int = 96
) -> ScalarField:
    """L^{-1/2} f by log-substituted trapezoid quadrature."""
    if quad_nodes < MIN_QUAD_NODES:
        raise ValueError(f"need quad_nodes >= {MIN_QUAD_NODES}")
    v = f.values
    if op.kernel_dim:
        scale = max(float(np.abs(v).max()), 1e-300)
        if abs(v.mean()) > 1e-10 * scale:
            raise KernelComponentError(
                "kernel component: field is not mean-zero on a periodic grid"
            )
        v = v - v.mean()
        f = ScalarField(v, op.grid)
    lam_min, lam_max = _spectral_bounds(op)
    # s-window: integrand ~ sqrt(s) for s below 1/lam_max, ~ e^{-s lam_min}
    # above 1/lam_min; both tails are pushed below 1e-8
    u_lo = math.log(1e-16 / lam_max)
    u_hi = math.log(50.0 / lam_min)
    u = np.linspace(u_lo, u_hi, quad_nodes)
    du = u[1] - u[0]
    weights = np.full(quad_nodes, du)
    weights[0] *= 0.5
    weights[-1] *= 0.5
    s_vals = np.exp(u)
    if semigroup._resolve_method(op, "auto") == semigroup.DENSE_ORACLE:
        batch = semigroup.dense_calculus(op).heat_batch(s_vals, v)
        out = batch @ (weights * np.sqrt(s_vals))
    else:
        out = np.zeros_like(v)
        for s, w in zip(s_vals, weights * np.sqrt(s_vals)):
            out = out + w * semigroup.heat_apply(op, float(s), f, semigroup.KRYLOV).values
    return ScalarField(out / math.sqrt(math.pi), op.grid)


def riesz_apply(
    op: DiscreteOperator, f: ScalarField, quad_nodes: int = 96
) -> VectorField:
    """grad L^{-1/2} f as a vector field."""
    half = inv_sqrt_apply(op, f, quad_nodes)
    return VectorField(op.gradient(half.values), op.grid)


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RieszH1Report:
    per_molecule: list  # (index, cube sidelength, L1 norm of |grad L^{-1/2} m|)
    sup_norm: float
    max_min_ratio: float

    def csv_rows(self):
        yield ("molecule", "cube_sidelength", "l1_norm")
        for idx, ell, val in self.per_molecule:
            yield (idx, f"{ell:.12g}", f"{val:.12g}")


def riesz_h1_experiment(
    molecules: list, op: DiscreteOperator, quad_nodes: int = 96
) -> RieszH1Report:
    """L^1 norms of the Riesz transform over a molecule corpus."""
    rows = []
    for idx, mol in enumerate(molecules):
        out = riesz_apply(op, mol.field, quad_nodes)
        l1 = lp_norm(out.magnitude(), op.grid, 1)
        rows.append((idx, mol.cube.sidelength, l1))
    vals = [r[2] for r in rows]
    sup = max(vals, default=0.0)
    positive = [v for v in vals if v > 0]
    ratio = (max(positive) / min(positive)) if positive else 1.0
    return RieszH1Report(rows, sup, ratio)


@dataclass(frozen=True, eq=False)
class CommutatorPoint:
    t: float
    measured_expansive: float  # T (I - e^{-tL})^M f
    measured_compact: float  # T (tL e^{-tL})^M f
    reference: float  # (t / dist^2)^M


def gaffney_commutator_check(
    op: DiscreteOperator,
    T: str,
    M: int,
    t: float,
    E: np.ndarray,
    F: np.ndarray,
    quad_nodes: int = 96,
) -> CommutatorPoint:
    """Off-diagonal norms of T composed with semigroup commutator factors.

    f is the L^2-normalized indicator of E; both (I - e^{-tL})^M f and
    (tL e^{-tL})^M f are measured through T on F and reported next to the
    reference decay (t/dist(E,F)^2)^M.
    """
    if T not in ("g_h", "riesz"):
        raise ValueError(f"unknown transform {T!r}")
    if M < 1:
        raise ValueError("need M >= 1")
    grid = op.grid
    d = semigroup.set_distance(grid, E, F)
    if not d > 0:
        raise ValueError("E and F must be separated")
    ind = np.zeros(grid.n_nodes, dtype=complex)
    ind[np.asarray(E, dtype=int)] = 1.0
    ind /= lp_norm(ind, grid, 2)
    # binomial expansion of (I - e^{-tL})^M
    expansive = np.zeros_like(ind)
    for i in range(M + 1):
        term = ind if i == 0 else semigroup.heat_apply(op, i * t, ScalarField(ind, grid)).values
        expansive = expansive + (-1) ** i * math.comb(M, i) * term
    compact = semigroup.heat_apply(op, M * t, ScalarField(ind, grid)).values
    for _ in range(M):
        compact = t * (op.matrix @ compact)

    def transform_norm(values: np.ndarray) -> float:
        field = ScalarField(values, grid)
        if T == "riesz":
            if op.kernel_dim:
                field = ScalarField(values - values.mean(), grid)
            out = riesz_apply(op, field, quad_nodes).magnitude()
        else:
            out = vertical_square_function(field, op, "g_h").values
        return restricted_lp_norm(out, grid, np.asarray(F, dtype=int), 2)

    ref = (t / (d * d)) ** M
    return CommutatorPoint(t, transform_norm(expansive), transform_norm(compact), ref)


def commutator_slope(
    op: DiscreteOperator,
    T: str,
    M: int,
    E: np.ndarray,
    F: np.ndarray,
    t_values: np.ndarray,
    which: str = "expansive",
    quad_nodes: int = 96,
) -> float:
    """Log-log slope of the measured commutator norm against t."""
    pts = [gaffney_commutator_check(op, T, M, float(t), E, F, quad_nodes) for t in t_values]
    ys = np.array(
        [p.measured_expansive if which == "expansive" else p.measured_compact for p in pts]
    )
    ys = np.maximum(ys, 1e-300)
    slope = np.polyfit(np.log(np.asarray(t_values, dtype=float)), np.log(ys), 1)[0]
    return float(slope)
