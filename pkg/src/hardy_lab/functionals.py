"""Square functions, vertical square functions, non-tangential maximal
functions and the Hardy-Littlewood maximal operator.

Everything is driven by one substrate: a space-time field F(y, t) on the
spatial grid times a logarithmic time grid.  Cone integrals discretize

    S^alpha F(x) = ( int int_{|x-y| < alpha t} |F(y,t)|^2 dy dt / t^{n+1} )^{1/2}

with cell-volume weights in y and trapezoid weights in log t; vertical
square functions drop the cone and integrate dt/t pointwise; maximal
functions take suprema of lattice-ball averages.  All evaluations are
direct vectorized sums (desk scale), deterministic for fixed inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import Grid, GridError, ScalarField, lp_norm
from .operator import DiscreteOperator
from . import semigroup
from .semigroup import TimeGrid

SQUARE_KINDS = (
    "heat",
    "heat_K",
    "poisson_grad",
    "poisson_K",
    "poisson_tderiv",
    "poisson_full_grad",
)
VERTICAL_KINDS = ("g_h", "g_h_M", "g_P", "g_P_bar", "g_P_aux")
MAXIMAL_KINDS = (
    "heat",
    "heat_beta",
    "heat_star",
    "heat_star_M",
    "poisson",
    "poisson_star",
)


@dataclass(frozen=True)
class ConeSpec:
    """Aperture and time truncation of the cone |x - y| < alpha * t.

    Both truncation comparisons are inclusive so that the default window
    (the time grid's own bounds) keeps every sample.
    """

    aperture: float = 1.0
    t_lower: float = 0.0
    t_upper: float = math.inf

    def __post_init__(self):
        if not self.aperture > 0:
            raise ValueError("aperture must be positive")
        if not self.t_lower < self.t_upper:
            raise ValueError("need t_lower < t_upper")


@dataclass(frozen=True, eq=False)
class SpaceTimeField:
    """Values F(y, t_j) on grid nodes x time samples, shape (N, T)."""

    values: np.ndarray
    grid: Grid
    times: TimeGrid
    integrand_tag: str = ""

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.shape != (self.grid.n_nodes, self.times.count):
            raise GridError("space-time values must have shape (n_nodes, count)")
        object.__setattr__(self, "values", v)


def cone_integrate(F: SpaceTimeField, cone: ConeSpec) -> ScalarField:
    """Discrete cone integral of |F|^2 against dy dt/t^{n+1}, square-rooted."""
    grid = F.grid
    n = grid.dim
    dist = grid.distance_matrix()
    ts = F.times.samples
    wlog = F.times.log_weights
    absF2 = np.abs(F.values) ** 2
    out = np.zeros(grid.n_nodes)
    for j, t in enumerate(ts):
        if not (cone.t_lower <= t <= cone.t_upper):
            continue
        mask = dist < cone.aperture * t
        contrib = mask @ absF2[:, j]
        out += (wlog[j] * grid.cell_volume / t**n) * contrib
    return ScalarField(np.sqrt(out), grid)


def _build_profile(
    f: ScalarField,
    op: DiscreteOperator,
    kind: str,
    K: int,
    times: TimeGrid,
    quad_nodes: int,
    method: str,
) -> np.ndarray:
    """Space-time magnitudes for one integrand kind; shape (N, T), real."""
    ts = times.samples
    if kind in ("heat", "g_h"):
        return np.abs(semigroup.heat_profile(op, f, times, 1, method))
    if kind in ("heat_K", "g_h_M"):
        if K < 1:
            raise ValueError("need K >= 1")
        return np.abs(semigroup.heat_profile(op, f, times, K, method))
    if kind in ("poisson_grad", "g_P"):
        prof = semigroup.poisson_profile(op, f, times, quad_nodes, method)
        grad2 = sum(np.abs(g @ prof) ** 2 for g in op.grads)
        return np.sqrt(grad2) * ts[None, :]
    if kind == "poisson_K":
        if K < 1:
            raise ValueError("need K >= 1")
        prof = semigroup.poisson_profile(op, f, times, quad_nodes, method)
        for _ in range(K):
            prof = (op.matrix @ prof) * (ts**2)[None, :]
        return np.abs(prof)
    if kind in ("poisson_tderiv", "g_P_bar"):
        root = semigroup.sqrt_apply(op, f, method)
        prof = semigroup.poisson_profile(op, root, times, quad_nodes, method)
        return np.abs(prof) * ts[None, :]
    if kind == "poisson_full_grad":
        prof = semigroup.poisson_profile(op, f, times, quad_nodes, method)
        grad2 = sum(np.abs(g @ prof) ** 2 for g in op.grads)
        root = semigroup.sqrt_apply(op, f, method)
        tprof = semigroup.poisson_profile(op, root, times, quad_nodes, method)
        return np.sqrt(grad2 + np.abs(tprof) ** 2) * ts[None, :]
    if kind == "g_P_aux":
        pois = semigroup.poisson_profile(op, f, times, quad_nodes, method)
        heat = semigroup.heat_profile(op, f, times, 0, method)
        return np.abs(pois - heat)
    raise ValueError(f"unknown kind {kind!r}")


def square_function(
    f: ScalarField,
    op: DiscreteOperator,
    cone: ConeSpec,
    kind: str = "heat",
    K: int = 1,
    times: TimeGrid | None = None,
    quad_nodes: int = semigroup.DEFAULT_QUAD_NODES,
    method: str = "auto",
) -> ScalarField:
    """Cone square function of the chosen semigroup integrand."""
    if kind not in SQUARE_KINDS:
        raise ValueError(f"unknown kind {kind!r}")
    times = times or semigroup.default_time_grid(op.grid)
    vals = _build_profile(f, op, kind, K, times, quad_nodes, method)
    F = SpaceTimeField(vals, op.grid, times, integrand_tag=kind)
    return cone_integrate(F, cone)


def vertical_square_function(
    f: ScalarField,
    op: DiscreteOperator,
    kind: str = "g_h",
    M: int = 1,
    times: TimeGrid | None = None,
    quad_nodes: int = semigroup.DEFAULT_QUAD_NODES,
    method: str = "auto",
) -> ScalarField:
    """Pointwise dt/t square function, no cone."""
    if kind not in VERTICAL_KINDS:
        raise ValueError(f"unknown kind {kind!r}")
    times = times or semigroup.default_time_grid(op.grid)
    vals = _build_profile(f, op, kind, M, times, quad_nodes, method)
    out = np.sqrt((np.abs(vals) ** 2) @ times.log_weights)
    return ScalarField(out, op.grid)


def _ball_averages(grid: Grid, g2_col: np.ndarray, radius: float) -> np.ndarray:
    """Mean of g2 over the lattice ball of the given radius around each node.

    Balls are inclusive (dist <= r) and always contain the center node, so
    the sub-grid-scale average degenerates to the single nearest node.
    """
    mask = grid.distance_matrix() <= radius
    counts = mask.sum(axis=1)
    return (mask @ g2_col) / counts


def nontangential_max(
    f: ScalarField,
    op: DiscreteOperator,
    kind: str = "heat",
    beta: float = 1.0,
    M: int = 1,
    times: TimeGrid | None = None,
    quad_nodes: int = semigroup.DEFAULT_QUAD_NODES,
    method: str = "auto",
) -> ScalarField:
    """Non-tangential (or vertical sup) maximal function of a semigroup image.

    Cone kinds take the sup over |x - y| < beta*t of the L^2 ball mean over
    B(y, beta*t); star kinds take the sup over t of the ball mean centered
    at x with radius t.
    """
    if kind not in MAXIMAL_KINDS:
        raise ValueError(f"unknown kind {kind!r}")
    if not beta > 0:
        raise ValueError("aperture beta must be positive")
    times = times or semigroup.default_time_grid(op.grid)
    if kind in ("heat", "heat_beta", "heat_star"):
        prof = semigroup.heat_profile(op, f, times, 0, method)
    elif kind == "heat_star_M":
        if M < 1:
            raise ValueError("need M >= 1")
        prof = semigroup.heat_profile(op, f, times, M, method)
    else:  # poisson, poisson_star
        prof = semigroup.poisson_profile(op, f, times, quad_nodes, method)
    if kind in ("heat", "poisson"):
        beta = 1.0
    grid = op.grid
    g2 = np.abs(prof) ** 2
    dist = grid.distance_matrix()
    ts = times.samples
    best = np.zeros(grid.n_nodes)
    star = kind.endswith("_star") or kind.endswith("star_M") or kind in (
        "heat_star",
        "poisson_star",
    )
    for j, t in enumerate(ts):
        if kind in ("heat_star", "heat_star_M", "poisson_star"):
            avg = _ball_averages(grid, g2[:, j], t)
            best = np.maximum(best, avg)
        else:
            r = beta * t
            avg = _ball_averages(grid, g2[:, j], r)
            cone = dist < r
            cand = np.where(cone, avg[None, :], -np.inf).max(axis=1)
            best = np.maximum(best, np.where(np.isfinite(cand), cand, 0.0))
    return ScalarField(np.sqrt(best), grid)


def hl_maximal(f: ScalarField) -> ScalarField:
    """Hardy-Littlewood maximal function over all distinct lattice-ball radii."""
    grid = f.grid
    dist = grid.distance_matrix()
    a = np.abs(f.values)
    out = np.empty(grid.n_nodes)
    for x in range(grid.n_nodes):
        order = np.argsort(dist[x], kind="stable")
        dsorted = dist[x][order]
        csum = np.cumsum(a[order])
        # valid ball cutoffs are where the next distance strictly increases
        boundary = np.empty(dsorted.size, dtype=bool)
        boundary[:-1] = dsorted[1:] > dsorted[:-1]
        boundary[-1] = True
        k = np.nonzero(boundary)[0]
        out[x] = (csum[k] / (k + 1)).max()
    return ScalarField(out, grid)


@dataclass(frozen=True)
class ApertureReport:
    """L^1 comparison of cone square functions at two apertures."""

    aperture: float
    norm_alpha: float
    norm_base: float
    ratio: float


def aperture_compare(F: SpaceTimeField, alpha: float) -> ApertureReport:
    """Compares ||S^alpha F||_1 against ||S^1 F||_1 (ratio 1 on zero input)."""
    if alpha < 1:
        raise ValueError("need alpha >= 1")
    s_alpha = cone_integrate(F, ConeSpec(aperture=alpha))
    s_base = cone_integrate(F, ConeSpec(aperture=1.0))
    na = lp_norm(s_alpha.values, F.grid, 1)
    nb = lp_norm(s_base.values, F.grid, 1)
    ratio = 1.0 if (na == 0 and nb == 0) else na / nb
    return ApertureReport(alpha, na, nb, ratio)
