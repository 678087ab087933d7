"""Flows of vector fields and charts built from flow compositions."""

from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .errors import InputError, NumericalError
from .fields import VectorField, as_point

FLOW_TOL = 1e-10
CHART_BOX = 0.5
_KEY_DIGITS = 12


def flow(field: VectorField, q, t: float, with_jacobian: bool = False):
    """Point reached from q at time t along the field.

    With ``with_jacobian`` the sensitivity to the initial point is
    integrated alongside (the variational system) and a pair
    (point, matrix) is returned.
    """
    n = field.dim
    q = as_point(q, n)
    if t == 0.0:
        return (q.copy(), np.eye(n)) if with_jacobian else q.copy()

    if not with_jacobian:
        def rhs(_t, y):
            return field(y)

        y0 = q
    else:
        def rhs(_t, y):
            p = y[:n]
            M = y[n:].reshape(n, n)
            return np.concatenate([field(p), (field.jacobian(p) @ M).ravel()])

        y0 = np.concatenate([q, np.eye(n).ravel()])

    sol = solve_ivp(rhs, (0.0, t), y0, method="RK45", rtol=FLOW_TOL, atol=FLOW_TOL)
    if not sol.success:
        raise NumericalError(f"flow integration failed: {sol.message}")
    yT = sol.y[:, -1]
    if not np.all(np.isfinite(yT)):
        raise NumericalError("flow integration produced non-finite values")
    if with_jacobian:
        return yT[:n], yT[n:].reshape(n, n)
    return yT


class _Line:
    """Dense flow solution along one segment direction, from a fixed start."""

    __slots__ = ("sol", "T", "message")

    def __init__(self, sol, T: float, message: str):
        self.sol = sol
        self.T = T
        self.message = message


class Chart:
    """Composition of flows x -> e^{x1 V1}( ... e^{xn Vn}(q0) ... ).

    The last listed field acts on the base point first; the x1 flow is
    applied last, so d(forward)/dx1 equals V1 at the image point.

    Each segment's flow line (fixed start, one sign direction) is
    integrated once with dense output across the whole coordinate box and
    then evaluated at every requested time, so grid sweeps cost one
    integration per line rather than one per point. Plain evaluations and
    Jacobian-carrying evaluations keep separate line tiers so each API is
    deterministic regardless of call order.
    """

    def __init__(
        self,
        fields: Sequence[VectorField],
        q0,
        box: float = CHART_BOX,
    ):
        fields = tuple(fields)
        if not fields:
            raise InputError("chart needs at least one field")
        n = fields[0].dim
        if len(fields) != n or any(f.dim != n for f in fields):
            raise InputError("a chart needs exactly n fields of dimension n")
        self.fields = fields
        self.n = n
        self.q0 = as_point(q0, n)
        self.box = float(box)
        self._state_lines: dict[tuple, _Line] = {}
        self._var_lines: dict[tuple, _Line] = {}

    def _check(self, x) -> np.ndarray:
        x = as_point(x, self.n)
        if np.max(np.abs(x)) > self.box + 1e-12:
            raise InputError(
                f"chart point {x.tolist()} outside the |x_i| <= {self.box} box"
            )
        return x

    def _key(self, x: np.ndarray, start: int) -> tuple:
        return tuple(round(float(v), _KEY_DIGITS) for v in x[start:])

    def _integrate_line(self, j: int, start: np.ndarray, sign: float, var: bool) -> _Line:
        n = self.n
        field = self.fields[j]
        if var:
            def rhs(_t, y):
                p = y[:n]
                M = y[n:].reshape(n, n)
                return np.concatenate([field(p), (field.jacobian(p) @ M).ravel()])

            y0 = np.concatenate([start, np.eye(n).ravel()])
        else:
            def rhs(_t, y):
                return field(y)

            y0 = start
        res = solve_ivp(
            rhs,
            (0.0, sign * self.box),
            y0,
            method="RK45",
            rtol=FLOW_TOL,
            atol=FLOW_TOL,
            dense_output=True,
        )
        # A failure partway still yields a usable dense solution on the
        # integrated part; requests beyond it raise at evaluation time.
        reached = abs(float(res.t[-1])) if len(res.t) > 1 else 0.0
        sol = res.sol if len(res.t) > 1 else None
        return _Line(sol, reached, str(res.message))

    def _segment(self, j: int, x: np.ndarray, start: np.ndarray, var: bool):
        """Evaluate segment j at time x[j] from `start` via its cached line."""
        t = float(x[j])
        n = self.n
        if t == 0.0:
            return start, (np.eye(n) if var else None)
        cache = self._var_lines if var else self._state_lines
        key = (j, 1.0 if t > 0 else -1.0, self._key(x, j + 1))
        line = cache.get(key)
        if line is None:
            line = self._integrate_line(j, start, 1.0 if t > 0 else -1.0, var)
            cache[key] = line
        if line.sol is None or abs(t) > line.T + 1e-13:
            raise NumericalError(
                f"flow integration failed before reaching t={t}: {line.message}"
            )
        y = line.sol(t)
        if not np.all(np.isfinite(y)):
            raise NumericalError("flow integration produced non-finite values")
        if var:
            return y[:n], y[n:].reshape(n, n)
        return y, None

    def _chain(self, x: np.ndarray, var_below: int):
        """Run all segments; variational matrices kept for j < var_below."""
        n = self.n
        after = [None] * n
        mats = [None] * n
        p = self.q0
        for j in range(n - 1, -1, -1):
            p, M = self._segment(j, x, p, j < var_below)
            after[j] = p
            mats[j] = M
        return after, mats

    def forward(self, x) -> np.ndarray:
        x = self._check(x)
        after, _ = self._chain(x, 0)
        return np.array(after[0], dtype=float)

    def forward_with_jacobian(self, x) -> tuple[np.ndarray, np.ndarray]:
        """Image point and the derivative matrix of the chart map.

        Column k of the matrix is the x_k partial. Each flow segment
        contributes its variational matrix; the column for x_k is the
        product of the segment matrices later in the composition applied
        to V_k at the intermediate point. The innermost segment's own
        variational matrix enters no column, so it is never integrated.
        """
        x = self._check(x)
        n = self.n
        after, mats = self._chain(x, n - 1)

        # The x_k partial is (M_1 ... M_{k-1}) V_k evaluated where segment k
        # ends; for k=1 that point is the image itself.
        D = np.empty((n, n))
        prefix = np.eye(n)
        for k in range(n):
            D[:, k] = prefix @ self.fields[k](after[k])
            if k < n - 1:
                prefix = prefix @ mats[k]
        return np.array(after[0], dtype=float), D

    def inverse(self, q, tol: float = FLOW_TOL, max_iter: int = 50) -> np.ndarray:
        """Newton inversion of the chart map, started at the origin."""
        q = as_point(q, self.n)
        x = np.zeros(self.n)
        for _ in range(max_iter):
            p, D = self.forward_with_jacobian(x)
            res = p - q
            if np.linalg.norm(res) < tol:
                return x
            try:
                step = np.linalg.solve(D, res)
            except np.linalg.LinAlgError:
                raise NumericalError("chart Jacobian singular during inversion") from None
            x = x - step
            if np.max(np.abs(x)) > self.box:
                raise NumericalError(
                    "chart inversion left the coordinate box; point too far"
                )
        raise NumericalError(f"chart inversion did not converge in {max_iter} steps")

    def pushforward_components(self, field: VectorField, x) -> np.ndarray:
        """Components a(x) with DPhi(x) a(x) = field(Phi(x))."""
        p, D = self.forward_with_jacobian(x)
        try:
            return np.linalg.solve(D, field(p))
        except np.linalg.LinAlgError:
            raise NumericalError("chart Jacobian singular in pushforward") from None


def chart_forward(chart: Chart, x) -> np.ndarray:
    return chart.forward(x)


def chart_inverse(chart: Chart, q, tol: float = FLOW_TOL, max_iter: int = 50):
    return chart.inverse(q, tol=tol, max_iter=max_iter)


def pushforward_components(chart: Chart, field: VectorField, x) -> np.ndarray:
    return chart.pushforward_components(field, x)
