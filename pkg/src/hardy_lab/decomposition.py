"""Molecular decomposition machinery.

The decomposition follows the level-set construction: level sets of the
cone square function of f, density-expanded through the Hardy-Littlewood
maximal operator, Whitney-decomposed into dyadic cubes, and intersected
with tent regions to cut the reproducing-formula integral

    f = C_M int_0^inf (t^2 L e^{-t^2 L})^{M+2} f dt/t

into one molecule per (level, cube), with weight C_M 2^k |Q|.  Molecules
are validated against the annular decay and negative-power cancellation
bounds that define a (p, eps, M)-molecule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grid import (
    Cube,
    Grid,
    GridError,
    ScalarField,
    full_grid_cube,
    lp_norm,
    restricted_lp_norm,
)
from .operator import DiscreteOperator
from . import semigroup
from .functionals import ConeSpec, SpaceTimeField, cone_integrate, hl_maximal
from .semigroup import TimeGrid

WHITNEY_C1 = 1.0 / 8.0
WHITNEY_C2 = 0.5


class DegenerateFieldError(ValueError):
    """Field has no usable square-function mass (kernel component only)."""


class SupportError(ValueError):
    """Molecule seed is not supported inside its cube."""


def calderon_constant(M: int) -> float:
    """Normalizing constant of the reproducing formula with exponent M + 2.

    Defined by C_M * int_0^inf u^{M+2} e^{-(M+2)u} du/u = 1, i.e.
    C_M = 2 (M+2)^{M+2} / Gamma(M+2) after the substitution u = t^2 mu.
    """
    if M < 1:
        raise ValueError("need M >= 1")
    return 2.0 * (M + 2) ** (M + 2) / math.gamma(M + 2)


def _require_dyadic(grid: Grid):
    for s in grid.sizes:
        if s & (s - 1):
            raise GridError("decomposition requires power-of-two axis sizes")
    if len(set(grid.sizes)) != 1:
        raise GridError("decomposition requires equal axis sizes")


# ---------------------------------------------------------------------------
# level sets, Whitney cubes, tents
# ---------------------------------------------------------------------------


def density_expansion(O: np.ndarray, gamma: float, grid: Grid) -> np.ndarray:
    """Nodes where the maximal function of the indicator of O exceeds 1 - gamma."""
    if not 0 < gamma < 1:
        raise ValueError("need 0 < gamma < 1")
    O = np.asarray(O, dtype=int)
    if O.size == 0:
        return O.copy()
    ind = np.zeros(grid.n_nodes, dtype=complex)
    ind[O] = 1.0
    m = hl_maximal(ScalarField(ind, grid)).values.real
    return np.nonzero(m > 1.0 - gamma)[0]


def dist_to_complement(grid: Grid, node_set: np.ndarray) -> np.ndarray:
    """Per-node distance to the complement of the set (inf if it is empty)."""
    node_set = np.asarray(node_set, dtype=int)
    comp = np.setdiff1d(np.arange(grid.n_nodes), node_set, assume_unique=False)
    if comp.size == 0:
        return np.full(grid.n_nodes, np.inf)
    return grid.distance_matrix()[:, comp].min(axis=1)


@dataclass(frozen=True, eq=False)
class WhitneySet:
    """Dyadic cubes partitioning an open node set with distance comparability."""

    cubes: list
    parent_open_set: np.ndarray
    overlap_bound: int
    covers_whole_grid: bool = False


def whitney_decompose(open_set: np.ndarray, grid: Grid) -> WhitneySet:
    """Dyadic Whitney partition of a node set.

    Accepted cubes are maximal dyadic blocks contained in the set with
    sidelength at most WHITNEY_C2 times their distance to the complement;
    single-node blocks are exempt from the upper comparison (resolution
    floor).  The output is a partition, so the overlap bound is 1.
    """
    _require_dyadic(grid)
    open_set = np.unique(np.asarray(open_set, dtype=int))
    if open_set.size == 0:
        return WhitneySet([], open_set, 0)
    if open_set.size == grid.n_nodes:
        return WhitneySet([full_grid_cube(grid)], open_set, 1, covers_whole_grid=True)
    in_open = np.zeros(grid.n_nodes, dtype=bool)
    in_open[open_set] = True
    dist = dist_to_complement(grid, open_set)
    cubes: list[Cube] = []
    stack = [Cube(grid, (0,) * grid.dim, grid.sizes[0])]
    while stack:
        cube = stack.pop()
        nodes = cube.node_set(0)
        inside = in_open[nodes]
        if not inside.any():
            continue
        if inside.all():
            d = float(dist[nodes].min())
            if cube.nnodes == 1 or cube.sidelength <= WHITNEY_C2 * d:
                cubes.append(cube)
                continue
        if cube.nnodes == 1:
            continue
        half = cube.nnodes // 2
        for corner in np.ndindex(*(2,) * grid.dim):
            anchor = tuple(
                cube.anchor[a] + corner[a] * half for a in range(grid.dim)
            )
            stack.append(Cube(grid, anchor, half))
    cubes.sort(key=lambda c: (-c.nnodes, c.anchor))
    return WhitneySet(cubes, open_set, 1)


@dataclass(frozen=True, eq=False)
class TentRegion:
    """Space-time region above a node set: dist(x, complement) >= t."""

    base_set: np.ndarray
    dist: np.ndarray  # per-node distance to the complement of base_set
    grid: Grid

    def contains(self, x: int, t: float) -> bool:
        return bool(self.dist[x] >= t)

    def mask(self, times: TimeGrid) -> np.ndarray:
        return self.dist[:, None] >= times.samples[None, :]


def tent_region(grid: Grid, node_set: np.ndarray) -> TentRegion:
    node_set = np.asarray(node_set, dtype=int)
    return TentRegion(node_set, dist_to_complement(grid, node_set), grid)


@dataclass(frozen=True, eq=False)
class TruncatedTent:
    """T_k^j: the cube column, inside one tent, outside the next level's tent."""

    cube: Cube
    tent_lower: TentRegion
    tent_upper: TentRegion

    def mask(self, times: TimeGrid) -> np.ndarray:
        grid = self.cube.grid
        in_cube = np.zeros(grid.n_nodes, dtype=bool)
        in_cube[self.cube.node_set(0)] = True
        ts = times.samples[None, :]
        lower = self.tent_lower.dist[:, None] >= ts
        upper = self.tent_upper.dist[:, None] >= ts
        return in_cube[:, None] & lower & ~upper


def build_truncated_tents(
    O_k_star: np.ndarray, O_k1_star: np.ndarray, cube: Cube
) -> TruncatedTent:
    """Membership region for one Whitney cube between consecutive levels."""
    grid = cube.grid
    return TruncatedTent(cube, tent_region(grid, O_k_star), tent_region(grid, O_k1_star))


# ---------------------------------------------------------------------------
# molecules
# ---------------------------------------------------------------------------


def molecule_bound(i: int, grid: Grid, p: float, eps: float, cube: Cube) -> float:
    """Annular decay bound 2^{-i(n - n/p + eps)} |Q|^{1/p - 1}."""
    n = grid.dim
    return 2.0 ** (-i * (n - n / p + eps)) * cube.volume ** (1.0 / p - 1.0)


@dataclass(frozen=True)
class MoleculeCheck:
    annulus: int
    k: int
    measured: float
    bound: float
    passes: bool


@dataclass(frozen=True, eq=False)
class MoleculeReport:
    checks: list
    max_ratio: float
    passes: bool


@dataclass(frozen=True, eq=False)
class Molecule:
    """A scalar field adapted to a cube with (p, eps, M) decay certificates."""

    field: ScalarField
    cube: Cube
    p: float
    eps: float
    M: int
    normalization: float
    report: MoleculeReport | None = None


def _annular_table(
    values: np.ndarray,
    cube: Cube,
    op: DiscreteOperator,
    p: float,
    eps: float,
    M: int,
) -> MoleculeReport:
    """Annulus-by-annulus decay table for the field and its negative powers."""
    grid = op.grid
    imax = cube.max_annulus()
    annuli = [cube.annulus(i) for i in range(imax + 1)]
    ell2 = cube.sidelength**2
    checks = []
    max_ratio = 0.0
    g = ScalarField(values, grid)
    for k in range(M + 1):
        if k > 0:
            g = semigroup.neg_power_apply(op, 1, g)
            g = ScalarField(g.values / ell2, grid)
        for i, nodes in enumerate(annuli):
            if nodes.size == 0:
                continue
            measured = restricted_lp_norm(g.values, grid, nodes, p)
            bound = molecule_bound(i, grid, p, eps, cube)
            ratio = measured / bound
            max_ratio = max(max_ratio, ratio)
            checks.append(MoleculeCheck(i, k, measured, bound, ratio <= 1.0 + 1e-9))
    return MoleculeReport(checks, max_ratio, all(c.passes for c in checks))


def validate_molecule(m: Molecule, op: DiscreteOperator) -> MoleculeReport:
    """Checks the annular decay and cancellation bounds of a molecule."""
    if m.M < 1:
        raise ValueError("need M >= 1")
    return _annular_table(m.field.values, m.cube, op, m.p, m.eps, m.M)


def make_molecule(
    f_on_Q: ScalarField,
    cube: Cube,
    op: DiscreteOperator,
    M: int,
    kind: str = "heat",
    eps: float = 1.0,
    p: float = 2.0,
) -> Molecule:
    """Hand-built molecule from a seed supported in a cube.

    kind "heat" applies (l(Q)^2 L)^M e^{-l(Q)^2 L}; kind "resolvent" applies
    (I - (I + l(Q)^2 L)^{-1})^M.  The result is scaled by the smallest
    constant making the (p, eps, M) bounds hold on all computable annuli.
    """
    grid = op.grid
    v = f_on_Q.values
    inside = cube.node_set(0)
    outside = np.setdiff1d(np.arange(grid.n_nodes), inside, assume_unique=True)
    if outside.size and np.abs(v[outside]).max(initial=0.0) > 0:
        raise SupportError("seed has support outside the cube")
    if lp_norm(v, grid, 2) > cube.volume ** (-0.5) * (1 + 1e-9):
        raise ValueError("seed L2 norm exceeds |Q|^{-1/2}")
    ell = cube.sidelength
    if kind == "heat":
        out = semigroup.heat_power_apply(op, ell, M, f_on_Q).values
    elif kind == "resolvent":
        out = v.copy()
        for _ in range(M):
            out = out - semigroup.resolvent_apply(op, ell, ScalarField(out, grid)).values
    else:
        raise ValueError(f"unknown molecule kind {kind!r}")
    if op.kernel_dim:
        # the cancellation factor annihilates constants exactly; remove the
        # roundoff-level mean so the inverse-power chain stays well posed
        out = out - out.mean()
    raw = _annular_table(out, cube, op, p, eps, M)
    norm_const = raw.max_ratio if raw.max_ratio > 0 else 1.0
    scaled = out / norm_const
    report = _annular_table(scaled, cube, op, p, eps, M)
    return Molecule(ScalarField(scaled, grid), cube, p, eps, M, norm_const, report)


def molecular_norm(
    mu: ScalarField,
    p: float,
    eps: float,
    M: int,
    cube: Cube,
    op: DiscreteOperator,
) -> float:
    """sup_i 2^{i(n - n/p + eps)} |Q|^{1 - 1/p} sum_{v=0}^M ||(l(Q)^2 L)^{-v} mu||_{L^p(S_i)}."""
    grid = op.grid
    n = grid.dim
    imax = cube.max_annulus()
    annuli = [cube.annulus(i) for i in range(imax + 1)]
    ell2 = cube.sidelength**2
    sums = np.zeros(imax + 1)
    g = mu
    for k in range(M + 1):
        if k > 0:
            g = semigroup.neg_power_apply(op, 1, g)
            g = ScalarField(g.values / ell2, grid)
        for i, nodes in enumerate(annuli):
            sums[i] += restricted_lp_norm(g.values, grid, nodes, p)
    best = 0.0
    for i, nodes in enumerate(annuli):
        if nodes.size == 0:
            continue
        best = max(
            best,
            2.0 ** (i * (n - n / p + eps)) * cube.volume ** (1.0 - 1.0 / p) * sums[i],
        )
    return best


# ---------------------------------------------------------------------------
# the decomposition itself
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DecompositionTerm:
    level: int
    cube_index: int
    weight: float
    molecule: Molecule


@dataclass(frozen=True, eq=False)
class LevelInfo:
    level: int
    set_size: int
    expanded_size: int
    cube_count: int


@dataclass(frozen=True, eq=False)
class MolecularDecomposition:
    terms: list
    residual: ScalarField
    truncation: tuple[float, float]
    weight_sum: float
    calderon: float
    global_molecule_constant: float
    s_h: ScalarField
    levels: list


def molecular_decompose(
    f: ScalarField,
    op: DiscreteOperator,
    M: int = 1,
    p: float = 2.0,
    eps: float = 1.0,
    gamma: float = 0.5,
    times: TimeGrid | None = None,
    method: str = "auto",
    validate: bool = True,
) -> MolecularDecomposition:
    """Level-set molecular decomposition of f with reconstruction residual."""
    grid = op.grid
    _require_dyadic(grid)
    times = times or semigroup.default_time_grid(grid)
    v = f.values
    if op.kernel_dim:
        scale = max(float(np.abs(v).max()), 1e-300)
        if abs(v.mean()) > 1e-10 * scale:
            raise DegenerateFieldError("field must be mean-zero on a periodic grid")
        v = v - v.mean()
        f = ScalarField(v, grid)
    u = semigroup.heat_profile(op, f, times, K=1, method=method)
    s_h = cone_integrate(SpaceTimeField(u, grid, times, "heat"), ConeSpec(1.0))
    s = s_h.values.real
    smax = float(s.max())
    if smax == 0.0:
        if lp_norm(v, grid, 2) > 0:
            raise DegenerateFieldError(
                "square function vanishes identically on a nonzero field"
            )
        zero = ScalarField(np.zeros(grid.n_nodes), grid)
        return MolecularDecomposition(
            [], zero, (times.t_min, times.t_max), 0.0, calderon_constant(M), 1.0, s_h, []
        )
    pos = s[s > 0]
    kmin = math.floor(math.log2(float(pos.min())))
    kmax = math.ceil(math.log2(smax))
    c_m = calderon_constant(M)
    calc = (
        semigroup.dense_calculus(op)
        if semigroup._resolve_method(op, method) == semigroup.DENSE_ORACLE
        else None
    )
    ts = times.samples
    wlog = times.log_weights

    # per level: expanded sets and Whitney cubes
    expanded: dict[int, np.ndarray] = {}
    for k in range(kmin, kmax + 2):
        o_k = np.nonzero(s > 2.0**k)[0]
        expanded[k] = density_expansion(o_k, gamma, grid) if o_k.size else o_k

    levels: list[LevelInfo] = []
    recon = np.zeros(grid.n_nodes, dtype=complex)
    pending = []  # (level, cube index, weight, tent mask, cube)
    for k in range(kmin, kmax + 1):
        o_star = expanded[k]
        if o_star.size == 0:
            continue
        wset = whitney_decompose(o_star, grid)
        lower = tent_region(grid, o_star)
        upper = tent_region(grid, expanded[k + 1])
        o_k_size = int((s > 2.0**k).sum())
        levels.append(LevelInfo(k, o_k_size, o_star.size, len(wset.cubes)))
        for j, cube in enumerate(wset.cubes):
            mask = TruncatedTent(cube, lower, upper).mask(times)
            if not mask.any():
                continue
            weight = c_m * 2.0**k * cube.volume
            pending.append((k, j, weight, mask, cube))

    # integrate (t^2 L e^{-t^2 L})^{M+1} over each truncated tent, batched in t
    raw = [np.zeros(grid.n_nodes, dtype=complex) for _ in pending]
    for jt, t in enumerate(ts):
        active = [i for i, item in enumerate(pending) if item[3][:, jt].any()]
        if not active:
            continue
        cols = np.stack(
            [u[:, jt] * pending[i][3][:, jt] for i in active], axis=1
        )
        s_t = float(t * t)
        if calc is not None and calc.use_eig:
            vals = (s_t * calc.w) ** (M + 1) * np.exp(-(M + 1) * s_t * calc.w)
            out = calc._apply_vals(vals, cols)
        else:
            out = np.stack(
                [
                    semigroup.heat_apply(
                        op, (M + 1) * s_t, ScalarField(cols[:, c], grid), method
                    ).values
                    for c in range(cols.shape[1])
                ],
                axis=1,
            )
            for _ in range(M + 1):
                out = s_t * (op.matrix @ out)
        for pos_i, i in enumerate(active):
            raw[i] += wlog[jt] * out[:, pos_i]

    terms = []
    global_const = 1.0
    for (k, j, weight, _, cube), integral in zip(pending, raw):
        mvals = integral * (c_m / weight)
        recon += weight * mvals
        report = _annular_table(mvals, cube, op, p, eps, M) if validate else None
        if report is not None:
            global_const = max(global_const, report.max_ratio)
        mol = Molecule(ScalarField(mvals, grid), cube, p, eps, M, 1.0, report)
        terms.append(DecompositionTerm(k, j, weight, mol))

    residual = ScalarField(f.values - recon, grid)
    weight_sum = float(sum(t.weight for t in terms))
    return MolecularDecomposition(
        terms,
        residual,
        (times.t_min, times.t_max),
        weight_sum,
        c_m,
        global_const,
        s_h,
        levels,
    )


@dataclass(frozen=True)
class H1Estimate:
    weight_sum: float
    l1_norm: float
    estimate: float
    s_h_l1: float


def h1_norm_estimate(
    f: ScalarField,
    op: DiscreteOperator,
    M: int = 1,
    p: float = 2.0,
    eps: float = 1.0,
    gamma: float = 0.5,
    times: TimeGrid | None = None,
    method: str = "auto",
) -> H1Estimate:
    """Decomposition-based upper proxy for the molecular Hardy norm."""
    dec = molecular_decompose(
        f, op, M, p, eps, gamma, times, method=method, validate=False
    )
    l1 = lp_norm(f.values, op.grid, 1)
    s_h_l1 = lp_norm(dec.s_h.values, op.grid, 1)
    return H1Estimate(dec.weight_sum, l1, dec.weight_sum + l1, s_h_l1)
