"""Canonical pairs, invariant functions, and primary invariant tuples.

Scalar-input systems (one drift, one controlled field) in dimension
n >= 4 admit a unique feedback-normalized pair of fields near a point
where the relevant bracket frames have full rank. This module builds
that pair, the canonical coordinates attached to it, the invariant
coefficient functions, and the tuple of derivative-extracted functional
invariants that classifies the system.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field as dc_field
from typing import Callable, Sequence

import numpy as np

from . import exprs as ex
from .errors import GenericityError, InputError, NumericalError
from .fields import (
    RANK_TOL,
    AffineSystem,
    CallableField,
    Frame,
    SymbolicField,
    VectorField,
    as_point,
    combine,
    coordinate_field,
    decompose_in_frame,
    check_genericity,
    lie_bracket,
    rank_of_matrix,
    scalar_bracket_family,
)
from .flows import Chart
from .grids import Grid, GridFunction

PROBE_RADIUS = 0.05
FIXED_POINT_TOL = 1e-6
NORMALIZATION_TOL = 1e-6
CANONICAL_CHART_BOX = 0.25


def probe_points(q0: np.ndarray, radius: float = PROBE_RADIUS) -> list[np.ndarray]:
    """The base point plus axis-offset points used for spot checks."""
    pts = [np.array(q0, dtype=float)]
    n = len(q0)
    for i in range(n):
        for s in (1.0, -1.0):
            p = np.array(q0, dtype=float)
            p[i] += s * radius
            pts.append(p)
    return pts


def _stage_fields(f0: VectorField, f1: VectorField, n: int) -> list[VectorField]:
    """Bracket frame (f0, f1, [f1,f0], (ad f1)^2 f0, ..., (ad f1)^{n-2} f0)."""
    fam = scalar_bracket_family(f0, f1, n)
    return [f0, f1] + [fam["ad"][k] for k in range(1, n - 1)]


def _double_bracket(f0: VectorField, f1: VectorField) -> VectorField:
    return lie_bracket(f0, lie_bracket(f0, f1))


def drift_decomposition(f0: VectorField, f1: VectorField, q0) -> list[ex.Expr]:
    """Coefficients of [f0,[f0,f1]] in the stage frame of (f0, f1).

    Entry 0 is the coefficient on f0, entry 3 the one on (ad f1)^2 f0;
    these drive the normalization. Symbolic fields only.
    """
    n = f0.dim
    frame = Frame(_stage_fields(f0, f1, n), q0)
    return decompose_in_frame(_double_bracket(f0, f1), frame)


class _StageSolver:
    """Pointwise stage-frame decomposition for non-symbolic fields."""

    def __init__(self, f0: VectorField, f1: VectorField, n: int):
        self.cols = _stage_fields(f0, f1, n)
        self.rhs = _double_bracket(f0, f1)
        self._memo: dict[tuple, np.ndarray] = {}

    def coefficients(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        key = tuple(round(float(v), 12) for v in q)
        hit = self._memo.get(key)
        if hit is None:
            M = np.column_stack([c(q) for c in self.cols])
            try:
                hit = np.linalg.solve(M, self.rhs(q))
            except np.linalg.LinAlgError:
                raise GenericityError(["frame_rank"], point=q) from None
            self._memo[key] = hit
        return hit


@dataclass
class CanonicalPair:
    """Feedback-normalized pair: scaled controlled field, shifted drift.

    E is the stage-one coefficient on f0 (scaling data), Z the
    recomposed coefficient on (ad F1)^2 f0 (shift data). Both are exact
    expressions on the symbolic path and pointwise evaluators otherwise.
    """

    F0: VectorField
    F1: VectorField
    E: ex.Expr | Callable
    Z: ex.Expr | Callable
    system: AffineSystem
    _invariants: "InvariantFields | None" = dc_field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.F0.dim

    @property
    def q0(self) -> np.ndarray:
        return self.system.q0

    @property
    def is_symbolic(self) -> bool:
        return isinstance(self.E, ex.Expr)

    def E_at(self, q) -> float:
        if isinstance(self.E, ex.Expr):
            return ex.evaluate(self.E, np.asarray(q, dtype=float))
        return float(self.E(q))

    def Z_at(self, q) -> float:
        if isinstance(self.Z, ex.Expr):
            return ex.evaluate(self.Z, np.asarray(q, dtype=float))
        return float(self.Z(q))


def _scalar_genericity_gate(sys: AffineSystem) -> None:
    """Raise when the frame or double-bracket rank fails at the base point."""
    report = check_genericity(sys)
    failed = [c for c in report.failed if c in ("frame_rank", "double_bracket_rank")]
    if failed:
        raise GenericityError(failed, point=sys.q0)


def canonical_pair(
    sys: AffineSystem,
    fixed_point_tol: float = FIXED_POINT_TOL,
    probe_radius: float = PROBE_RADIUS,
) -> CanonicalPair:
    """The unique normalized pair in the feedback orbit of the system.

    Stage one rescales the controlled field by the reciprocal of the
    stage-frame coefficient E of the double bracket on f0; stage two
    reads the remaining (ad f1')^2 f0 coefficient Z' and absorbs it into
    the drift. Inputs already normalized (within ``fixed_point_tol`` at
    probe points) are returned unchanged on the pointwise path.
    """
    if sys.r != 1:
        raise InputError("canonical pair is defined for scalar-input systems")
    n = sys.n
    if n < 4:
        raise InputError("canonical pair needs dimension at least 4")
    _scalar_genericity_gate(sys)
    f0, f1, q0 = sys.f0, sys.f1, sys.q0

    if sys.is_symbolic:
        dec = drift_decomposition(f0, f1, q0)
        E = dec[0]
        if abs(ex.evaluate(E, q0)) <= RANK_TOL:
            raise GenericityError(["double_bracket_rank"], point=q0)
        f1p = combine([ex.div(ex.ONE, E)], [f1])
        dec2 = decompose_in_frame(
            _double_bracket(f0, f1p), Frame(_stage_fields(f0, f1p, n), q0)
        )
        Zp = dec2[3]
        F0 = combine([ex.ONE, Zp], [f0, f1p])
        return CanonicalPair(F0=F0, F1=f1p, E=E, Z=Zp, system=sys)

    solver = _StageSolver(f0, f1, n)

    def E_at(q) -> float:
        return float(solver.coefficients(q)[0])

    def Zp_at(q) -> float:
        c = solver.coefficients(q)
        return float(c[0] * c[3])

    deviation = 0.0
    for p in probe_points(q0, probe_radius):
        c = solver.coefficients(p)
        deviation = max(deviation, abs(c[0] - 1.0), abs(c[3]))
    if deviation <= fixed_point_tol:
        return CanonicalPair(F0=f0, F1=f1, E=E_at, Z=Zp_at, system=sys)

    # The rescaled coefficient on (ad f1')^2 f0 equals E*Z exactly (the
    # raw coefficient scales by 1/beta under f1 -> beta f1), so the
    # shifted drift needs no division at all: Z'*f1' = Z*f1.
    def new_f0(q):
        c = solver.coefficients(q)
        return f0(q) + c[3] * f1(q)

    def new_f1(q):
        return f1(q) / float(solver.coefficients(q)[0])

    depth = max(f0.depth, f1.depth, 2)
    return CanonicalPair(
        F0=CallableField(new_f0, n, depth=depth),
        F1=CallableField(new_f1, n, depth=depth),
        E=E_at,
        Z=Zp_at,
        system=sys,
    )


@dataclass
class InvariantFields:
    """Coefficients I_1..I_{n-2} of the normalized structure equation."""

    n: int
    I: dict[int, ex.Expr | Callable]
    pair: CanonicalPair

    @property
    def is_symbolic(self) -> bool:
        return all(isinstance(v, ex.Expr) for v in self.I.values())

    def at(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        out = np.empty(self.n - 2)
        for s in range(1, self.n - 1):
            f = self.I[s]
            out[s - 1] = ex.evaluate(f, q) if isinstance(f, ex.Expr) else float(f(q))
        return out


def _check_normalization(values: Sequence[np.ndarray], tol: float) -> None:
    worst = 0.0
    for c in values:
        worst = max(worst, abs(float(c[0]) - 1.0), abs(float(c[3])))
    if worst > tol:
        raise NumericalError(
            f"canonical pair failed its normalization check ({worst:.2e} > {tol:.0e})"
        )


def invariant_fields(cp: CanonicalPair, tol: float = NORMALIZATION_TOL) -> InvariantFields:
    """Invariant coefficient functions of the canonical pair.

    The double bracket of the pair decomposes in the pair's own stage
    frame with coefficient 1 on F0 and 0 on (ad F1)^2 F0; the remaining
    coefficients are the invariants (drift-level I_1, bracket-level I_2,
    then the higher ad-powers).
    """
    if cp._invariants is not None:
        return cp._invariants
    n, q0 = cp.n, cp.q0

    if cp.is_symbolic:
        frame = Frame(_stage_fields(cp.F0, cp.F1, n), q0)
        dec = decompose_in_frame(_double_bracket(cp.F0, cp.F1), frame)
        probe_vals = []
        for p in probe_points(q0):
            probe_vals.append(np.array([ex.evaluate(c, p) for c in dec]))
        _check_normalization(probe_vals, tol)
        # residual of the reconstruction at probe points
        fields = frame.fields
        double = _double_bracket(cp.F0, cp.F1)
        for p, coeffs in zip(probe_points(q0), probe_vals):
            recon = sum(c * f(p) for c, f in zip(coeffs, fields))
            scale = max(1.0, float(np.max(np.abs(recon))))
            if float(np.max(np.abs(double(p) - recon))) > tol * scale:
                raise NumericalError("invariant decomposition residual too large")
        I = {1: dec[1], 2: dec[2]}
        for s in range(3, n - 1):
            I[s] = dec[s + 1]
    else:
        solver = _StageSolver(cp.F0, cp.F1, n)
        _check_normalization([solver.coefficients(p) for p in probe_points(q0)], tol)

        def make(idx: int) -> Callable:
            return lambda q: float(solver.coefficients(q)[idx])

        I = {1: make(1), 2: make(2)}
        for s in range(3, n - 1):
            I[s] = make(s + 1)

    inv = InvariantFields(n=n, I=I, pair=cp)
    cp._invariants = inv
    return inv


def chart_fields(cp: CanonicalPair) -> list[VectorField]:
    """Ordered flow fields of the canonical coordinates."""
    F0, F1 = cp.F0, cp.F1
    b1 = lie_bracket(F1, F0)
    if cp.n == 4:
        return [F0, F1, b1, lie_bracket(F1, b1)]
    fields = [F1, F0, b1, _double_bracket(F0, F1)]
    adk = b1
    for _ in range(2, cp.n - 2):
        adk = lie_bracket(F1, adk)
        fields.append(adk)
    return fields


def canonical_chart(cp: CanonicalPair, box: float = CANONICAL_CHART_BOX) -> Chart:
    """Canonical coordinates: composed flows of the chart fields.

    The n=4 chart leads with the drift (its pushforward is the first
    coordinate field); for n >= 5 the controlled field leads instead.
    """
    fields = chart_fields(cp)
    M = np.column_stack([f(cp.q0) for f in fields])
    if rank_of_matrix(M) != cp.n:
        name = "frame_rank" if cp.n == 4 else "lead_rank"
        raise GenericityError([name], point=cp.q0)
    return Chart(fields, cp.q0, box=box)


def _axis_tuple(n: int, first: int) -> tuple[str, ...]:
    return tuple(f"x{i}" for i in range(first, n + 1))


def sampled_invariants(
    cp: CanonicalPair,
    chart: Chart,
    grid: Grid,
    inv: InvariantFields | None = None,
) -> dict[str, GridFunction]:
    """Invariant functions composed with the chart, sampled on the lattice."""
    n = cp.n
    if grid.span > chart.box + 1e-12:
        raise InputError("grid span exceeds the chart box")
    if inv is None:
        inv = invariant_fields(cp)
    if inv.is_symbolic:
        fn = ex.compile_exprs([inv.I[s] for s in range(1, n - 1)])

        def values_at(q):
            return np.asarray(fn(q), dtype=float)
    else:
        values_at = inv.at

    weight = 2 if n == 4 else n - 2
    shape = (grid.points,) * n
    data = np.empty(shape + (n - 2,))
    for idx in np.ndindex(shape):
        x = np.array([grid.axis[i] for i in idx])
        data[idx] = values_at(chart.forward(x))
    out = {}
    for s in range(1, n - 1):
        out[f"I{s}"] = GridFunction(
            name=f"I{s}",
            axis_names=_axis_tuple(n, 1),
            axes=(grid.axis,) * n,
            values=data[..., s - 1],
            weight=weight,
        )
    return out


# ---------------------------------------------------------------------------
# derivative extraction

_STENCILS = {
    1: ((-1, -0.5), (1, 0.5)),
    2: ((-1, 1.0), (0, -2.0), (1, 1.0)),
    3: ((-2, -0.5), (-1, 1.0), (1, -1.0), (2, 0.5)),
    4: ((-2, 1.0), (-1, -4.0), (0, 6.0), (1, -4.0), (2, 1.0)),
    5: ((-3, -0.5), (-2, 2.0), (-1, -2.5), (1, 2.5), (2, -2.0), (3, 0.5)),
}


def _shift(x: tuple, axis: int, d: float) -> tuple:
    return x[:axis] + (x[axis] + d,) + x[axis + 1 :]


def _axis_diff(fn: Callable, axis: int, order: int, h: float) -> Callable:
    """Central-difference derivative along one axis, Richardson (h, h/2)."""
    st = _STENCILS.get(order)
    if st is None:
        raise InputError(f"derivative order {order} not supported")

    def single(x, step):
        return sum(c * fn(_shift(x, axis, m * step)) for m, c in st) / step**order

    def out(x):
        return (4.0 * single(x, 0.5 * h) - single(x, h)) / 3.0

    return out


class _Sampler:
    """Memoized pushforward components of one field through a chart."""

    def __init__(self, chart: Chart, field: VectorField):
        self.chart = chart
        self.field = field
        self._memo: dict[tuple, np.ndarray] = {}

    def __call__(self, x: tuple) -> np.ndarray:
        key = tuple(round(float(v), 12) for v in x)
        hit = self._memo.get(key)
        if hit is None:
            hit = self.chart.pushforward_components(self.field, np.asarray(x))
            self._memo[key] = hit
        return hit


@dataclass
class PrimaryInvariantTuple:
    """Grid-sampled functional invariants with their weights."""

    n: int
    grid: Grid
    functions: dict[str, GridFunction]
    weights: dict[str, int]
    boundary_max: float
    residual_max: float | None

    @property
    def names(self) -> list[str]:
        return list(self.functions)


def _face_bases(grid: Grid, n: int, lead_zeros: int):
    """Lattice bases (0,...,0, x_{lead+1}, ..., x_n) with their indices."""
    m = n - lead_zeros
    for idx in np.ndindex(*(grid.points,) * m):
        coords = tuple(float(grid.axis[i]) for i in idx)
        yield idx, (0.0,) * lead_zeros + coords


def _unit(n: int, k: int) -> np.ndarray:
    e = np.zeros(n)
    e[k - 1] = 1.0
    return e


def primary_invariants(
    cp: CanonicalPair,
    chart: Chart,
    grid: Grid,
    h: float = 1e-2,
    boundary_tol: float = 1e-5,
    residual_tol: float | None = None,
    sample_points: int | None = None,
) -> PrimaryInvariantTuple:
    """Extract the functional invariant tuple by finite differences.

    The pushforward components of the non-rectified field are
    differentiated on coordinate subspaces: second x2-derivative of the
    x1-derivative for the beta family, the mixed x1 x2 x3 derivative for
    psi, and for n >= 5 the higher x1-powers crossed with one transverse
    axis for the phi family. Sampled invariant functions live on a full
    lattice with ``sample_points`` per axis (the grid's count when
    omitted), which also hosts the structure-equation residual check.
    """
    n = cp.n
    if residual_tol is None:
        residual_tol = 1e-3 if n == 4 else 1e-2
    margin = 3.0 * h
    if grid.span + margin > chart.box + 1e-12:
        raise InputError("grid plus stencil margin exceeds the chart box")
    sample_grid = grid if sample_points in (None, grid.points) else grid.subgrid(sample_points)

    afield = cp.F1 if n == 4 else cp.F0
    a = _Sampler(chart, afield)
    functions: dict[str, GridFunction] = dict(
        sampled_invariants(cp, chart, sample_grid)
    )
    weights = {name: gf.weight for name, gf in functions.items()}

    # beta: d^3 a / dx1 dx2^2 on the x1=0 face
    beta_fn = _axis_diff(_axis_diff(a, 1, 2, h), 0, 1, h)
    beta_vals = np.empty((n,) + (grid.points,) * (n - 1))
    for idx, base in _face_bases(grid, n, 1):
        beta_vals[(slice(None),) + idx] = beta_fn(base)
    for k in range(1, n + 1):
        name = f"beta{k}"
        functions[name] = GridFunction(
            name=name,
            axis_names=_axis_tuple(n, 2),
            axes=(grid.axis,) * (n - 1),
            values=beta_vals[k - 1],
            weight=3,
        )
        weights[name] = 3

    # psi: d^3 a / dx1 dx2 dx3 on the x1=x2=0 face
    psi_fn = _axis_diff(_axis_diff(_axis_diff(a, 2, 1, h), 1, 1, h), 0, 1, h)
    psi_vals = np.empty((n,) + (grid.points,) * (n - 2))
    for idx, base in _face_bases(grid, n, 2):
        psi_vals[(slice(None),) + idx] = psi_fn(base)
    for k in range(1, n + 1):
        name = f"psi{k}"
        functions[name] = GridFunction(
            name=name,
            axis_names=_axis_tuple(n, 3),
            axes=(grid.axis,) * (n - 2),
            values=psi_vals[k - 1],
            weight=3,
        )
        weights[name] = 3

    # phi_{kjl}: d^{j+1} a / dx1^j dx_l with l-1 leading zeros (n >= 5)
    if n >= 5:
        for j in range(2, n - 2):
            d1j = _axis_diff(a, 0, j, h)
            for l in range(2, j + 3):
                fn = _axis_diff(d1j, l - 1, 1, h)
                vals = np.empty((n,) + (grid.points,) * (n - l + 1))
                for idx, base in _face_bases(grid, n, l - 1):
                    vals[(slice(None),) + idx] = fn(base)
                for k in range(1, n + 1):
                    name = f"phi{k}{j}{l}"
                    functions[name] = GridFunction(
                        name=name,
                        axis_names=_axis_tuple(n, l),
                        axes=(grid.axis,) * (n - l + 1),
                        values=vals[k - 1],
                        weight=j + 1,
                    )
                    weights[name] = j + 1

    # boundary structure of the pushforward components
    boundary_max = 0.0
    for _idx, base in _face_bases(grid, n, 1):
        boundary_max = max(boundary_max, float(np.max(np.abs(a(base) - _unit(n, 2)))))
    d1 = _axis_diff(a, 0, 1, h)
    b_sign = -1.0 if n == 4 else 1.0
    for _idx, base in _face_bases(grid, n, 2):
        boundary_max = max(
            boundary_max, float(np.max(np.abs(d1(base) - b_sign * _unit(n, 3))))
        )
    d1d2 = _axis_diff(d1, 1, 1, h)
    for _idx, base in _face_bases(grid, n, 3):
        boundary_max = max(
            boundary_max, float(np.max(np.abs(d1d2(base) + _unit(n, 4))))
        )
    if n >= 5:
        for j in range(2, n - 2):
            d1j = _axis_diff(a, 0, j, h)
            for _idx, base in _face_bases(grid, n, j):
                boundary_max = max(
                    boundary_max,
                    float(np.max(np.abs(d1j(base) - _unit(n, j + 3)))),
                )
    if boundary_max > boundary_tol:
        raise NumericalError(
            f"boundary structure violated by {boundary_max:.2e} "
            f"(> {boundary_tol:.0e}); canonical data inconsistent"
        )

    # structure-equation residual on the sampling lattice
    residual_max = _structure_residual(
        cp, a, functions, sample_grid, h, n
    )
    if residual_max is not None and residual_max > residual_tol:
        raise NumericalError(
            f"structure equation residual {residual_max:.2e} exceeds {residual_tol:.0e}"
        )

    return PrimaryInvariantTuple(
        n=n,
        grid=grid,
        functions=functions,
        weights=weights,
        boundary_max=boundary_max,
        residual_max=residual_max,
    )


def _structure_residual(cp, a, functions, sample_grid, h, n):
    """Sup-norm of the normal-form differential relation on the lattice.

    n=4: linear second-order relation along x1 for each component.
    n>=5: quasi-linear relation coupling the x1-powers, the invariant
    coefficients, and one mixed derivative per state axis; evaluated at
    interior lattice points only (one-sided boundary stencils are not
    worth their noise).
    """
    pts = sample_grid.points
    I = [functions[f"I{s}"].values for s in range(1, n - 1)]
    d1 = _axis_diff(a, 0, 1, h)
    d2 = _axis_diff(a, 0, 2, h)
    e1 = _unit(n, 1)
    worst = 0.0
    if n == 4:
        for idx in np.ndindex(*(pts,) * n):
            x = tuple(float(sample_grid.axis[i]) for i in idx)
            r = d2(x) + I[1][idx] * d1(x) - I[0][idx] * a(x) - e1
            worst = max(worst, float(np.max(np.abs(r))))
        return worst
    if pts < 3:
        return None
    interior = [range(1, pts - 1)] * n
    dpow = {j: _axis_diff(a, 0, j, h) for j in range(3, n - 1)}
    dmix = {l: _axis_diff(d1, l - 1, 1, h) for l in range(2, n + 1)}
    dax = {l: _axis_diff(a, l - 1, 1, h) for l in range(2, n + 1)}
    for idx in itertools.product(*interior):
        x = tuple(float(sample_grid.axis[i]) for i in idx)
        av = a(x)
        d1v = d1(x)
        r = av + I[0][idx] * e1 + I[1][idx] * d1v
        for j in range(3, n - 1):
            r = r + I[j - 1][idx] * dpow[j](x)
        # mixed term: sum_l (a_l d^2a/dx1 dx_l - da_l/dx1 da/dx_l)
        r = r + av[0] * d2(x) - d1v[0] * d1v
        for l in range(2, n + 1):
            r = r + av[l - 1] * dmix[l](x) - d1v[l - 1] * dax[l](x)
        worst = max(worst, float(np.max(np.abs(r))))
    return worst


def affine_extension(m: int, F: Sequence, q0=None) -> AffineSystem:
    """Scalar-input affine representation of dq/dt = F(y, v), dv/dt = u.

    The m given expressions may use variables x1..x_{m+1}, the last one
    being the appended input-integrator coordinate v. No genericity is
    implied; run check_genericity on the result when it matters.
    """
    comps = []
    for f in F:
        if isinstance(f, str):
            f = ex.parse(f, m + 1)
        if not isinstance(f, ex.Expr):
            raise InputError("drift components must be expressions")
        comps.append(f)
    if len(comps) != m:
        raise InputError(f"expected {m} drift components, got {len(comps)}")
    comps.append(ex.ZERO)
    drift = SymbolicField(comps, m + 1)
    control = coordinate_field(m + 1, m + 1)
    base = np.zeros(m + 1) if q0 is None else as_point(q0, m + 1)
    return AffineSystem(drift, (control,), base, check_rank=False)
