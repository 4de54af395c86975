"""Operator-adapted BMO norms, Carleson measure functional, tent-space
norms and the square-function duality pairing.

Cube-mean subtraction is replaced by (I - A_l)^M where A_l is either the
heat operator e^{-l^2 L} or the resolvent (I + l^2 L)^{-1} at the cube's
sidelength l.  The cube/ball family is dyadic with every anchor position
in 1D and anchored on the dyadic lattice in 2D; the family is fixed so
that all suprema are reproducible bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import (
    Cube,
    Grid,
    GridError,
    PERIODIC,
    ScalarField,
    lp_norm,
    restricted_lp_norm,
)
from .operator import DiscreteOperator, adjoint_operator
from . import semigroup
from .functionals import ConeSpec, SpaceTimeField, cone_integrate
from .semigroup import TimeGrid

BMO_VARIANTS = ("heat", "resolvent", "p")


def dyadic_cubes(grid: Grid) -> list:
    """The fixed cube family behind every BMO/Carleson supremum.

    Sidelengths are 2h, 4h, ... up to the full axis; anchors run over all
    positions in 1D and over the dyadic lattice in 2D.
    """
    cubes = []
    size = min(grid.sizes)
    m = 2
    while m <= size:
        if grid.dim == 1:
            anchors = range(grid.sizes[0] if grid.boundary == PERIODIC else grid.sizes[0] - m + 1)
            cubes.extend(Cube(grid, (a,), m) for a in anchors)
        else:
            steps = [range(0, s, m) for s in grid.sizes]
            cubes.extend(
                Cube(grid, (a, b), m) for a in steps[0] for b in steps[1]
            )
        m *= 2
    return cubes


def _oscillation_fields(
    f: ScalarField,
    op: DiscreteOperator,
    M: int,
    variant: str,
    lengths: list,
    method: str,
) -> dict:
    """(I - A_l)^M f for each distinct sidelength l, by binomial expansion."""
    v = f.values
    grid = op.grid
    out = {}
    for ell in lengths:
        acc = np.zeros_like(v)
        power = v
        for i in range(M + 1):
            acc = acc + (-1) ** i * math.comb(M, i) * power
            if i == M:
                break
            if variant == "resolvent":
                power = semigroup.resolvent_apply(op, ell, ScalarField(power, grid)).values
            else:
                power = semigroup.heat_apply(op, ell * ell, ScalarField(power, grid), method).values
        out[ell] = acc
    return out


@dataclass(frozen=True, eq=False)
class BmoReport:
    variant: str
    M: int
    p: float
    per_cube: list  # (cube, local value), sorted by (sidelength, anchor)
    norm: float


def bmo_norm(
    f: ScalarField,
    op: DiscreteOperator,
    M: int = 1,
    variant: str = "heat",
    p: float = 2.0,
    method: str = "auto",
) -> BmoReport:
    """sup over the dyadic cube family of the L^p cube mean of (I - A_l)^M f."""
    if variant not in BMO_VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    if M < 1:
        raise ValueError("need M >= 1")
    if variant != "p":
        p = 2.0
    if not p > 1:
        raise ValueError("need p > 1")
    grid = op.grid
    cubes = dyadic_cubes(grid)
    lengths = sorted({c.sidelength for c in cubes})
    osc = _oscillation_fields(
        f, op, M, "resolvent" if variant == "resolvent" else "heat", lengths, method
    )
    per_cube = []
    for cube in sorted(cubes, key=lambda c: (c.nnodes, c.anchor)):
        nodes = cube.node_set(0)
        local = restricted_lp_norm(osc[cube.sidelength], grid, nodes, p)
        local /= cube.volume ** (1.0 / p)
        per_cube.append((cube, local))
    norm = max((v for _, v in per_cube), default=0.0)
    return BmoReport(variant, M, p, per_cube, norm)


# ---------------------------------------------------------------------------
# Carleson measure and tent norms
# ---------------------------------------------------------------------------


def _tent_dist(grid: Grid, nodes: np.ndarray) -> np.ndarray:
    comp = np.setdiff1d(np.arange(grid.n_nodes), nodes, assume_unique=True)
    if comp.size == 0:
        return np.full(grid.n_nodes, np.inf)
    return grid.distance_matrix()[:, comp].min(axis=1)


def _ball_tent_masses(
    density: np.ndarray, grid: Grid, times: TimeGrid, balls: list
) -> np.ndarray:
    """integral of a space-time density over the tent above each ball.

    density has shape (N, T) and already carries |.|^2; the integral is
    against dy dt/t (trapezoid in log t, so the 1/t is in the weights).
    """
    ts = times.samples
    wlog = times.log_weights
    masses = np.zeros(len(balls))
    for b, cube in enumerate(balls):
        nodes = cube.node_set(0)
        dist = _tent_dist(grid, nodes)
        mask = dist[:, None] >= ts[None, :]
        masses[b] = float(
            ((mask * density).sum(axis=0) * wlog).sum() * grid.cell_volume
        )
    return masses


@dataclass(frozen=True, eq=False)
class CarlesonReport:
    per_ball: list  # (cube, mass, mass / |B|)
    carleson_norm: float


def carleson_functional(
    f: ScalarField,
    op: DiscreteOperator,
    M: int = 1,
    times: TimeGrid | None = None,
    method: str = "auto",
) -> CarlesonReport:
    """Carleson norm of the measure |(t^2 L)^M e^{-t^2 L} f|^2 dy dt/t."""
    if M < 1:
        raise ValueError("need M >= 1")
    grid = op.grid
    times = times or semigroup.default_time_grid(grid)
    prof = semigroup.heat_profile(op, f, times, K=M, method=method)
    density = np.abs(prof) ** 2
    balls = sorted(dyadic_cubes(grid), key=lambda c: (c.nnodes, c.anchor))
    masses = _ball_tent_masses(density, grid, times, balls)
    per_ball = []
    best = 0.0
    for cube, mass in zip(balls, masses):
        ratio = mass / cube.volume
        best = max(best, ratio)
        per_ball.append((cube, mass, ratio))
    return CarlesonReport(per_ball, best)


def carleson_sup_function(F: SpaceTimeField) -> ScalarField:
    """C F(x): sup over family balls containing x of the tent-mean mass."""
    grid = F.grid
    density = np.abs(F.values) ** 2
    balls = sorted(dyadic_cubes(grid), key=lambda c: (c.nnodes, c.anchor))
    masses = _ball_tent_masses(density, grid, F.times, balls)
    out = np.zeros(grid.n_nodes)
    for cube, mass in zip(balls, masses):
        nodes = cube.node_set(0)
        out[nodes] = np.maximum(out[nodes], mass / cube.volume)
    return ScalarField(np.sqrt(out), grid)


def tent_norms(F: SpaceTimeField) -> tuple[float, float]:
    """(T^1, T^inf) norms: L^1 of the cone square functional and the sup
    over family balls of the root tent-mean mass."""
    s = cone_integrate(F, ConeSpec(1.0))
    t1 = lp_norm(s.values, F.grid, 1)
    density = np.abs(F.values) ** 2
    balls = dyadic_cubes(F.grid)
    masses = _ball_tent_masses(density, F.grid, F.times, balls)
    ratios = [m / c.volume for c, m in zip(balls, masses)]
    tinf = math.sqrt(max(ratios, default=0.0))
    return t1, tinf


# ---------------------------------------------------------------------------
# duality
# ---------------------------------------------------------------------------


def duality_constant(M: int) -> float:
    """C such that C int_0^inf (t^2 mu)^{M+1} e^{-2 t^2 mu} dt/t = 1."""
    if M < 1:
        raise ValueError("need M >= 1")
    return 2.0 ** (M + 2) / math.gamma(M + 1)


def duality_pair(
    f: ScalarField,
    g: ScalarField,
    op: DiscreteOperator,
    M: int = 1,
    times: TimeGrid | None = None,
    method: str = "auto",
) -> complex:
    """<f, g> recovered from the two-sided square-function expansion

        C'_M int int (t^2 L*)^M e^{-t^2 L*} f . conj(t^2 L e^{-t^2 L} g) dx dt/t

    which reduces on each eigenmode to the scalar identity fixing C'_M.
    """
    grid = op.grid
    if f.grid != grid or g.grid != grid:
        raise GridError("field grids do not match the operator")
    if op.kernel_dim:
        for v in (f.values, g.values):
            scale = max(float(np.abs(v).max()), 1e-300)
            if scale > 1e-300 and abs(v.mean()) > 1e-8 * scale:
                raise semigroup.KernelComponentError(
                    "duality pairing needs mean-zero fields on a periodic grid"
                )
    times = times or _duality_time_grid(grid)
    star = adjoint_operator(op)
    prof_f = semigroup.heat_profile(star, f, times, K=M, method=method)
    prof_g = semigroup.heat_profile(op, g, times, K=1, method=method)
    integrand = (prof_f * np.conj(prof_g)).sum(axis=0) * grid.cell_volume
    return complex(duality_constant(M) * (integrand @ times.log_weights))


def _duality_time_grid(grid: Grid, count: int = 128) -> TimeGrid:
    # wide window: the scalar profile must be integrated essentially over
    # (0, inf) for every eigenvalue of L to recover the inner product
    return TimeGrid(grid.spacing / 256.0, 8.0 * max(grid.side_lengths), count)


@dataclass(frozen=True, eq=False)
class JohnNirenbergReport:
    norms: dict  # p -> BMO_L^p norm
    ratios: dict  # (p, q) -> norm_p / norm_q


def john_nirenberg_compare(
    f: ScalarField,
    op: DiscreteOperator,
    M: int = 1,
    p_list: tuple = (1.5, 2.0, 3.0),
    method: str = "auto",
) -> JohnNirenbergReport:
    """BMO_L^p norms across exponents with their pairwise ratios."""
    norms = {
        p: bmo_norm(f, op, M, "p", p, method).norm for p in p_list
    }
    ratios = {}
    for p in p_list:
        for q in p_list:
            if p == q:
                continue
            ratios[(p, q)] = (
                norms[p] / norms[q] if norms[q] > 0 else math.inf if norms[p] > 0 else 1.0
            )
    return JohnNirenbergReport(norms, ratios)
