"""Shared fixtures: random polynomial fields and small numeric oracles."""

from fractions import Fraction

import numpy as np

from fbinv import exprs as ex
from fbinv.fields import SymbolicField


def rand_poly(rng, dim, degree=3, terms=3, allow_const=True):
    """Sparse random polynomial with small rational coefficients."""
    parts = []
    for _ in range(terms):
        total = int(rng.integers(0 if allow_const else 1, degree + 1))
        exps = [0] * dim
        for _ in range(total):
            exps[int(rng.integers(0, dim))] += 1
        num = int(rng.integers(1, 5)) * (1 if rng.random() < 0.5 else -1)
        den = int(rng.choice([1, 2, 4]))
        factors = [ex.const(Fraction(num, den))]
        for axis, e in enumerate(exps):
            if e:
                factors.append(ex.pow_(ex.var(axis + 1), e))
        parts.append(ex.mul(*factors))
    return ex.add(*parts)


def rand_field(rng, dim, degree=3, terms=3):
    return SymbolicField([rand_poly(rng, dim, degree, terms) for _ in range(dim)], dim)


def rand_point(rng, dim, radius=0.3):
    return rng.uniform(-radius, radius, size=dim)


def gauss_rank(M, tol=1e-8):
    """Row-reduction rank with partial pivoting, relative threshold."""
    A = np.array(M, dtype=float)
    if A.size == 0:
        return 0
    scale = np.max(np.abs(A))
    if scale == 0.0:
        return 0
    rows, cols = A.shape
    rank = 0
    row = 0
    for col in range(cols):
        pivot = row + int(np.argmax(np.abs(A[row:, col]))) if row < rows else None
        if pivot is None:
            break
        if abs(A[pivot, col]) <= tol * scale:
            continue
        A[[row, pivot]] = A[[pivot, row]]
        A[row] = A[row] / A[row, col]
        for r in range(rows):
            if r != row:
                A[r] -= A[r, col] * A[row]
        rank += 1
        row += 1
        if row == rows:
            break
    return rank
