"""Vector fields on R^n: brackets, frames, decompositions, genericity."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from . import exprs as ex
from .errors import GenericityError, InputError, NumericalError

RANK_TOL = 1e-8

# FD steps for nested numeric Jacobians; deeper nesting carries more noise,
# so the step grows to keep the rounding term below the truncation term.
_FD_STEPS = (1e-3, 1e-2, 5e-2)


def _fd_step(depth: int) -> float:
    return _FD_STEPS[min(depth, len(_FD_STEPS) - 1)]


def as_point(point, dim: int) -> np.ndarray:
    p = np.asarray(point, dtype=float)
    if p.shape != (dim,):
        raise InputError(f"expected a point of dimension {dim}, got shape {p.shape}")
    return p


class VectorField:
    """Base class: a field knows its dimension, values, and Jacobians.

    ``jacobian(p)[k, l]`` is the derivative of component k along axis l
    (axes are 0-based here; expression variables stay 1-based).
    """

    dim: int
    is_symbolic = False
    depth = 0

    def __call__(self, point) -> np.ndarray:
        raise NotImplementedError

    def jacobian(self, point) -> np.ndarray:
        raise NotImplementedError


class _FDJacobianMixin:
    """Central differences with one Richardson level, step set by depth."""

    def jacobian(self, point) -> np.ndarray:
        p = np.asarray(point, dtype=float)
        n = self.dim
        h = _fd_step(self.depth)
        J = np.empty((n, n))
        for axis in range(n):
            e = np.zeros(n)
            e[axis] = 1.0
            d1 = (self(p + h * e) - self(p - h * e)) / (2.0 * h)
            d2 = (self(p + 0.5 * h * e) - self(p - 0.5 * h * e)) / h
            J[:, axis] = (4.0 * d2 - d1) / 3.0
        return J


class SymbolicField(VectorField):
    """Field with expression components; derivatives are exact."""

    is_symbolic = True

    def __init__(self, components: Sequence[ex.Expr], dim: int | None = None):
        comps = tuple(components)
        if not comps:
            raise InputError("a vector field needs at least one component")
        for c in comps:
            if not isinstance(c, ex.Expr):
                raise InputError("symbolic field components must be expressions")
        self.dim = len(comps) if dim is None else dim
        if len(comps) != self.dim:
            raise InputError(
                f"field has {len(comps)} components, expected {self.dim}"
            )
        used = set()
        for c in comps:
            used |= ex.vars_used(c)
        if used and max(used) > self.dim:
            raise InputError(
                f"component references x{max(used)} beyond dimension {self.dim}"
            )
        self.components = comps
        self._fn = None
        self._jac_fn = None

    def __call__(self, point) -> np.ndarray:
        if self._fn is None:
            self._fn = ex.compile_exprs(self.components)
        return np.asarray(self._fn(point), dtype=float)

    def jacobian(self, point) -> np.ndarray:
        if self._jac_fn is None:
            flat = [
                ex.diff(c, axis + 1) for c in self.components for axis in range(self.dim)
            ]
            self._jac_fn = ex.compile_exprs(flat)
        vals = self._jac_fn(point)
        return np.asarray(vals, dtype=float).reshape(self.dim, self.dim)

    def __repr__(self):
        body = ", ".join(ex.print_expr(c) for c in self.components)
        return f"SymbolicField({body})"


class CallableField(_FDJacobianMixin, VectorField):
    """Field backed by a plain evaluator.

    ``exact_partials`` may map a 0-based axis to a callable returning the
    derivative of all components along that axis; remaining axes fall back
    to finite differences.
    """

    def __init__(
        self,
        fn: Callable[[np.ndarray], Sequence[float]],
        dim: int,
        depth: int = 0,
        exact_partials: dict[int, Callable] | None = None,
    ):
        self.fn = fn
        self.dim = dim
        self.depth = depth
        self.exact_partials = exact_partials or {}

    def __call__(self, point) -> np.ndarray:
        return np.asarray(self.fn(np.asarray(point, dtype=float)), dtype=float)

    def jacobian(self, point) -> np.ndarray:
        if not self.exact_partials:
            return super().jacobian(point)
        p = np.asarray(point, dtype=float)
        n = self.dim
        h = _fd_step(self.depth)
        J = np.empty((n, n))
        for axis in range(n):
            exact = self.exact_partials.get(axis)
            if exact is not None:
                J[:, axis] = np.asarray(exact(p), dtype=float)
                continue
            e = np.zeros(n)
            e[axis] = 1.0
            d1 = (self(p + h * e) - self(p - h * e)) / (2.0 * h)
            d2 = (self(p + 0.5 * h * e) - self(p - 0.5 * h * e)) / h
            J[:, axis] = (4.0 * d2 - d1) / 3.0
        return J


class BracketField(_FDJacobianMixin, VectorField):
    """Pointwise Lie bracket of two fields, at least one non-symbolic."""

    def __init__(self, f: VectorField, g: VectorField):
        if f.dim != g.dim:
            raise InputError("bracket of fields of different dimensions")
        self.f = f
        self.g = g
        self.dim = f.dim
        self.depth = max(f.depth, g.depth) + 1

    def __call__(self, point) -> np.ndarray:
        p = np.asarray(point, dtype=float)
        return self.g.jacobian(p) @ self.f(p) - self.f.jacobian(p) @ self.g(p)


class CombinationField(_FDJacobianMixin, VectorField):
    """Pointwise linear combination sum_i c_i(p) * field_i(p)."""

    def __init__(self, coeffs: Sequence, fields: Sequence[VectorField]):
        if len(coeffs) != len(fields) or not fields:
            raise InputError("combination needs matching coefficients and fields")
        self.dim = fields[0].dim
        self.fields = tuple(fields)
        self.coeffs = tuple(coeffs)
        self.depth = max(f.depth for f in fields) + 1

    def _coeff(self, c, p) -> float:
        if callable(c):
            return float(c(p))
        return float(c)

    def __call__(self, point) -> np.ndarray:
        p = np.asarray(point, dtype=float)
        out = np.zeros(self.dim)
        for c, f in zip(self.coeffs, self.fields):
            out += self._coeff(c, p) * f(p)
        return out


def field_from_exprs(texts: Sequence[str], dim: int) -> SymbolicField:
    """Parse one expression per component."""
    return SymbolicField([ex.parse(t, dim) for t in texts], dim)


def coordinate_field(dim: int, axis: int) -> SymbolicField:
    """The constant field d/dx_axis (1-based axis)."""
    comps = [ex.ONE if k == axis else ex.ZERO for k in range(1, dim + 1)]
    return SymbolicField(comps, dim)


def lie_bracket(f: VectorField, g: VectorField) -> VectorField:
    """[f, g], exact when both fields are symbolic."""
    if f.dim != g.dim:
        raise InputError("bracket of fields of different dimensions")
    if f.is_symbolic and g.is_symbolic:
        n = f.dim
        comps = []
        for k in range(n):
            terms = []
            for l in range(n):
                fl, gl = f.components[l], g.components[l]
                dgk = ex.diff(g.components[k], l + 1)
                dfk = ex.diff(f.components[k], l + 1)
                if fl is not ex.ZERO and dgk is not ex.ZERO:
                    terms.append(ex.mul(fl, dgk))
                if gl is not ex.ZERO and dfk is not ex.ZERO:
                    terms.append(ex.neg(ex.mul(gl, dfk)))
            comps.append(ex.add(*terms))
        return SymbolicField(comps, n)
    return BracketField(f, g)


def ad_power(f: VectorField, g: VectorField, k: int) -> VectorField:
    """(ad f)^k g; k=0 returns g."""
    if k < 0:
        raise InputError("ad power needs k >= 0")
    out = g
    for _ in range(k):
        out = lie_bracket(f, out)
    return out


def combine(coeffs: Sequence, fields: Sequence[VectorField]) -> VectorField:
    """Linear combination; symbolic when every ingredient is."""
    if all(f.is_symbolic for f in fields) and all(
        isinstance(c, ex.Expr) or isinstance(c, (int, float)) for c in coeffs
    ):
        n = fields[0].dim
        comps = []
        for k in range(n):
            terms = []
            for c, f in zip(coeffs, fields):
                cc = c if isinstance(c, ex.Expr) else ex.const(c)
                if cc is ex.ZERO or f.components[k] is ex.ZERO:
                    continue
                terms.append(ex.mul(cc, f.components[k]))
            comps.append(ex.add(*terms))
        return SymbolicField(comps, fields[0].dim)
    return CombinationField(coeffs, fields)


# ---------------------------------------------------------------------------
# rank tests


def rank_of_matrix(M: np.ndarray, tol: float = RANK_TOL) -> int:
    if M.size == 0:
        return 0
    sing = np.linalg.svd(M, compute_uv=False)
    if sing[0] == 0.0:
        return 0
    return int(np.sum(sing > tol * sing[0]))


def rank_at(fields: Sequence[VectorField], point, tol: float = RANK_TOL) -> int:
    """Rank of the span of the field values at the point."""
    if not fields:
        return 0
    p = as_point(point, fields[0].dim)
    M = np.column_stack([f(p) for f in fields])
    return rank_of_matrix(M, tol)


# ---------------------------------------------------------------------------
# frames and decompositions


class Frame:
    """An ordered tuple of n fields spanning R^n at the base point."""

    def __init__(self, fields: Sequence[VectorField], base, tol: float = RANK_TOL):
        fields = tuple(fields)
        if not fields:
            raise InputError("empty frame")
        n = fields[0].dim
        if len(fields) != n or any(f.dim != n for f in fields):
            raise InputError("a frame needs exactly n fields of dimension n")
        self.fields = fields
        self.dim = n
        self.base = as_point(base, n)
        self.tol = tol
        M = self.matrix_at(self.base)
        if abs(np.linalg.det(M)) <= tol:
            raise GenericityError(["frame_rank"], point=self.base)

    @property
    def is_symbolic(self) -> bool:
        return all(f.is_symbolic for f in self.fields)

    def matrix_at(self, point) -> np.ndarray:
        p = np.asarray(point, dtype=float)
        return np.column_stack([f(p) for f in self.fields])


def _sym_det(mat: list[list[ex.Expr]]) -> ex.Expr:
    """Determinant by memoized minor expansion along columns."""
    n = len(mat)
    memo: dict[tuple[int, ...], ex.Expr] = {}

    def minor(rows: tuple[int, ...]) -> ex.Expr:
        if not rows:
            return ex.ONE
        got = memo.get(rows)
        if got is not None:
            return got
        col = n - len(rows)
        terms = []
        for pos, r in enumerate(rows):
            entry = mat[r][col]
            if entry is ex.ZERO:
                continue
            rest = rows[:pos] + rows[pos + 1 :]
            term = ex.mul(entry, minor(rest))
            terms.append(term if pos % 2 == 0 else ex.neg(term))
        out = ex.add(*terms)
        memo[rows] = out
        return out

    return minor(tuple(range(n)))


def decompose_in_frame(field: VectorField, frame: Frame) -> list[ex.Expr]:
    """Coefficients of the field in the frame, as expression quotients.

    Cramer's rule on the symbolic component matrix; the result is verified
    against a plain linear solve at the frame's base point.
    """
    if not (field.is_symbolic and frame.is_symbolic):
        raise InputError("symbolic decomposition needs symbolic fields")
    n = frame.dim
    cols = [f.components for f in frame.fields]
    mat = [[cols[j][i] for j in range(n)] for i in range(n)]
    det = _sym_det(mat)
    coeffs = []
    for k in range(n):
        mk = [row[:] for row in mat]
        for i in range(n):
            mk[i][k] = field.components[i]
        coeffs.append(ex.div(_sym_det(mk), det))

    want = decompose_at(field(frame.base), frame, frame.base)
    scale = max(1.0, float(np.max(np.abs(want))))
    for k in range(n):
        got = ex.evaluate(coeffs[k], frame.base)
        if abs(got - want[k]) > 1e-8 * scale:
            raise NumericalError(
                f"frame decomposition inconsistent at base point "
                f"(coefficient {k}: {got} vs {want[k]})"
            )
    return coeffs


def decompose_at(vec, frame: Frame | Sequence[VectorField], point) -> np.ndarray:
    """Numeric frame coefficients of a vector (or field) at one point."""
    fields = frame.fields if isinstance(frame, Frame) else tuple(frame)
    p = np.asarray(point, dtype=float)
    M = np.column_stack([f(p) for f in fields])
    if isinstance(vec, VectorField):
        vec = vec(p)
    v = np.asarray(vec, dtype=float)
    try:
        sol = np.linalg.solve(M, v)
    except np.linalg.LinAlgError:
        raise GenericityError(["frame_rank"], point=p) from None
    return sol


class StructuralFunctions:
    """Coefficients c[j][i][k] of [f_i, f_j] in the frame itself."""

    def __init__(self, frame: Frame):
        if not frame.is_symbolic:
            raise InputError("structural functions need a symbolic frame")
        n = frame.dim
        self.frame = frame
        self.n = n
        c: list[list[list[ex.Expr] | None]] = [[None] * n for _ in range(n)]
        for i in range(n):
            c[i][i] = [ex.ZERO] * n
        for i in range(n):
            for j in range(i + 1, n):
                dec = decompose_in_frame(
                    lie_bracket(frame.fields[i], frame.fields[j]), frame
                )
                c[j][i] = dec
                c[i][j] = [ex.neg(e) for e in dec]
        self.c = tuple(tuple(tuple(row) for row in plane) for plane in c)
        self._fn = None

    def entry(self, j: int, i: int, k: int) -> ex.Expr:
        return self.c[j][i][k]

    def at(self, point) -> np.ndarray:
        """All values as an (n, n, n) array indexed [j, i, k]."""
        if self._fn is None:
            flat = [
                self.c[j][i][k]
                for j in range(self.n)
                for i in range(self.n)
                for k in range(self.n)
            ]
            self._fn = ex.compile_exprs(flat)
        vals = np.asarray(self._fn(np.asarray(point, dtype=float)))
        return vals.reshape(self.n, self.n, self.n)


def structural_functions(frame: Frame) -> StructuralFunctions:
    return StructuralFunctions(frame)


def structural_values(fields: Sequence[VectorField], point) -> np.ndarray:
    """Numeric structure coefficients at one point, indexed [j, i, k]."""
    fields = tuple(fields)
    n = fields[0].dim
    p = np.asarray(point, dtype=float)
    M = np.column_stack([f(p) for f in fields])
    out = np.zeros((n, n, n))
    for i in range(n):
        for j in range(i + 1, n):
            bv = lie_bracket(fields[i], fields[j])(p)
            sol = np.linalg.solve(M, bv)
            out[j, i] = sol
            out[i, j] = -sol
    return out


# ---------------------------------------------------------------------------
# control-affine systems


class AffineSystem:
    """dq/dt = f0(q) + sum_i u_i f_i(q) with a marked base point."""

    def __init__(
        self,
        f0: VectorField,
        controls: Sequence[VectorField],
        q0,
        rank_tol: float = RANK_TOL,
        check_rank: bool = True,
    ):
        controls = tuple(controls)
        n = f0.dim
        r = len(controls)
        if not 1 <= r < n:
            raise InputError(f"need 1 <= r < n, got r={r}, n={n}")
        if any(f.dim != n for f in controls):
            raise InputError("all fields must share one dimension")
        self.f0 = f0
        self.controls = controls
        self.n = n
        self.r = r
        self.q0 = as_point(q0, n)
        if check_rank and rank_at((f0,) + controls, self.q0, rank_tol) != r + 1:
            raise GenericityError(["system_rank"], point=self.q0)

    @property
    def fields(self) -> tuple[VectorField, ...]:
        return (self.f0,) + self.controls

    @property
    def f1(self) -> VectorField:
        return self.controls[0]

    @property
    def f2(self) -> VectorField:
        return self.controls[1]

    @property
    def is_symbolic(self) -> bool:
        return all(f.is_symbolic for f in self.fields)

    def __repr__(self):
        return f"AffineSystem(r={self.r}, n={self.n}, q0={self.q0.tolist()})"


class FeedbackTransform:
    """Affine control reparameterization.

    r=1: new drift f0 + alpha*f1, new control beta*f1.
    r=2: new drift f0 + a1*f1 + a2*f2, new controls (f1, f2) @ B.
    """

    def __init__(self, alpha: Sequence[ex.Expr], matrix: Sequence[Sequence[ex.Expr]]):
        self.alpha = tuple(alpha)
        self.matrix = tuple(tuple(row) for row in matrix)
        self.r = len(self.alpha)
        if self.r not in (1, 2):
            raise InputError("feedback supports one or two controls")
        if len(self.matrix) != self.r or any(len(row) != self.r for row in self.matrix):
            raise InputError("feedback matrix shape must be r x r")

    @classmethod
    def scalar(cls, alpha: ex.Expr, beta: ex.Expr) -> "FeedbackTransform":
        return cls((alpha,), ((beta,),))

    def matrix_at(self, point) -> np.ndarray:
        return np.array(
            [[ex.evaluate(b, point) for b in row] for row in self.matrix]
        )


def apply_feedback(sys: AffineSystem, fb: FeedbackTransform) -> AffineSystem:
    if fb.r != sys.r:
        raise InputError("feedback arity does not match the system")
    if not sys.is_symbolic:
        raise InputError("feedback application needs symbolic fields")
    det = np.linalg.det(fb.matrix_at(sys.q0))
    if abs(det) <= RANK_TOL:
        raise InputError("feedback matrix is singular at the base point")
    new_f0 = combine([ex.ONE] + list(fb.alpha), [sys.f0] + list(sys.controls))
    new_controls = []
    for i in range(sys.r):
        col = [fb.matrix[j][i] for j in range(sys.r)]
        new_controls.append(combine(col, list(sys.controls)))
    return AffineSystem(new_f0, new_controls, sys.q0)


# ---------------------------------------------------------------------------
# genericity


class Condition:
    def __init__(self, name: str, required: int, measured: int):
        self.name = name
        self.required = required
        self.measured = measured
        self.ok = measured == required

    def __repr__(self):
        state = "ok" if self.ok else "FAIL"
        return f"{self.name}: rank {self.measured} (need {self.required}) {state}"


class GenericityReport:
    def __init__(self, conditions: list[Condition], point):
        self.conditions = conditions
        self.point = np.asarray(point, dtype=float)

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.conditions)

    @property
    def failed(self) -> list[str]:
        return [c.name for c in self.conditions if not c.ok]

    def require(self):
        if not self.ok:
            raise GenericityError(self.failed, point=self.point)

    def __repr__(self):
        return "; ".join(repr(c) for c in self.conditions)


def scalar_bracket_family(f0: VectorField, f1: VectorField, n: int) -> dict:
    """The bracket fields every scalar-input rank condition draws from."""
    ad = {0: f0}
    for k in range(1, n - 1):
        ad[k] = lie_bracket(f1, ad[k - 1])
    double = lie_bracket(f0, lie_bracket(f0, f1))
    return {"ad": ad, "double": double}


def check_genericity(sys: AffineSystem, tol: float = RANK_TOL) -> GenericityReport:
    """Rank verdicts for the conditions matching the system's (r, n)."""
    n, q0 = sys.n, sys.q0
    conds: list[Condition] = []
    if sys.r == 1:
        fam = scalar_bracket_family(sys.f0, sys.f1, n)
        ad, double = fam["ad"], fam["double"]
        frame = [sys.f0, sys.f1] + [ad[k] for k in range(1, n - 1)]
        conds.append(Condition("frame_rank", n, rank_at(frame, q0, tol)))
        g2 = [sys.f1, double] + [ad[k] for k in range(1, n - 1)]
        conds.append(Condition("double_bracket_rank", n, rank_at(g2, q0, tol)))
        if n >= 5:
            g3 = [sys.f0, sys.f1, double] + [ad[k] for k in range(1, n - 2)]
            conds.append(Condition("lead_rank", n, rank_at(g3, q0, tol)))
    elif sys.r == 2 and n == 4:
        f0, f1, f2 = sys.f0, sys.f1, sys.f2
        b12 = lie_bracket(f1, f2)
        conds.append(Condition("D2sq", 3, rank_at([f1, f2, b12], q0, tol)))
        vd2 = [f1, f2, b12, lie_bracket(f0, f1), lie_bracket(f0, f2)]
        conds.append(Condition("VD2", 4, rank_at(vd2, q0, tol)))
        conds.append(Condition("D23", 4, rank_at([f0, f1, f2, b12], q0, tol)))
    elif sys.r == 2 and n == 5:
        f0, f1, f2 = sys.f0, sys.f1, sys.f2
        b12 = lie_bracket(f1, f2)
        conds.append(Condition("D23", 4, rank_at([f0, f1, f2, b12], q0, tol)))
        d3sq = [f0, f1, f2, lie_bracket(f0, f1), lie_bracket(f0, f2), b12]
        conds.append(Condition("D3sqr", 5, rank_at(d3sq, q0, tol)))
    else:
        raise InputError(f"no genericity conditions for (r, n) = ({sys.r}, {sys.n})")
    return GenericityReport(conds, q0)


def reduced_scalar_conditions(
    g0: VectorField, g1: VectorField, q0, n: int, tol: float = RANK_TOL
) -> GenericityReport:
    """Rank conditions a reduction (g0, g1) must satisfy, by dimension."""
    b10 = lie_bracket(g1, g0)
    b110 = lie_bracket(g1, b10)
    b010 = lie_bracket(g0, b10)
    conds: list[Condition] = []
    if n == 4:
        conds.append(Condition("geng1", 4, rank_at([g1, b10, b110, b010], q0, tol)))
        conds.append(Condition("geng2", 4, rank_at([g0, g1, b10, b110], q0, tol)))
    elif n == 5:
        conds.append(
            Condition("geng15", 5, rank_at([g0, g1, b10, b110, b010], q0, tol))
        )
        fam = scalar_bracket_family(g0, g1, 5)
        ad, double = fam["ad"], fam["double"]
        frame = [g0, g1, ad[1], ad[2], ad[3]]
        conds.append(Condition("geng25", 5, rank_at(frame, q0, tol)))
        g35 = [g1, double, ad[1], ad[2], ad[3]]
        conds.append(Condition("geng35", 5, rank_at(g35, q0, tol)))
    else:
        raise InputError("reduced-system conditions exist for n = 4 and 5 only")
    return GenericityReport(conds, q0)
