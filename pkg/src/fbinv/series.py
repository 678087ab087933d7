"""Exact rational-series bookkeeping for counting functional moduli.

A family of invariants containing, for each listed pair, ``p`` independent
functions of ``l`` variables starting at weight ``w`` is summarised by the
generating series

    M(t) = sum over entries of  p * t^w / (1-t)^(l+1),

because a function of ``l`` variables contributes C(l+k-w, l) coefficients
at weight ``k``.  Everything in this module is exact: coefficients are
integers or Fractions, never floats.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction

from .errors import CapExceededError, InputError

__all__ = [
    "PolyQ",
    "MSeries",
    "ParamMatrix",
    "WLRep",
    "NSBounds",
    "series_from_matrix",
    "wl_representation",
    "is_nice",
    "ns_bounds",
    "characteristic_pair",
    "characteristic_matrix",
    "elementary_transform",
    "norm_matrix",
    "norm_closed_form",
    "lemma2_check",
    "charn_closed_form",
    "scalar_counts_matrix",
    "two_input_counts_matrix",
    "parse_series_text",
    "parse_matrix_text",
    "format_matrix",
]


# ---------------------------------------------------------------------------
# polynomials over Q


class PolyQ:
    """Dense univariate polynomial with Fraction coefficients, ascending order."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs=()):
        cs = [Fraction(c) for c in coeffs]
        while cs and cs[-1] == 0:
            cs.pop()
        self.coeffs = tuple(cs)

    @property
    def degree(self) -> int:
        # degree of the zero polynomial is -1 by convention
        return len(self.coeffs) - 1

    def is_zero(self) -> bool:
        return not self.coeffs

    def __bool__(self) -> bool:
        return bool(self.coeffs)

    def __eq__(self, other) -> bool:
        return isinstance(other, PolyQ) and self.coeffs == other.coeffs

    def __hash__(self) -> int:
        return hash(self.coeffs)

    def __repr__(self) -> str:
        return f"PolyQ({list(self.coeffs)})"

    def coeff(self, k: int) -> Fraction:
        if 0 <= k < len(self.coeffs):
            return self.coeffs[k]
        return Fraction(0)

    def __add__(self, other: "PolyQ") -> "PolyQ":
        n = max(len(self.coeffs), len(other.coeffs))
        return PolyQ([self.coeff(i) + other.coeff(i) for i in range(n)])

    def __sub__(self, other: "PolyQ") -> "PolyQ":
        n = max(len(self.coeffs), len(other.coeffs))
        return PolyQ([self.coeff(i) - other.coeff(i) for i in range(n)])

    def __neg__(self) -> "PolyQ":
        return PolyQ([-c for c in self.coeffs])

    def __mul__(self, other):
        if isinstance(other, (int, Fraction)):
            return PolyQ([c * other for c in self.coeffs])
        out = [Fraction(0)] * (len(self.coeffs) + len(other.coeffs) - 1 or 1)
        for i, a in enumerate(self.coeffs):
            if a == 0:
                continue
            for j, b in enumerate(other.coeffs):
                out[i + j] += a * b
        return PolyQ(out)

    __rmul__ = __mul__

    def shift(self, k: int) -> "PolyQ":
        """Multiply by t^k (k >= 0)."""
        if k < 0:
            raise ValueError("negative shift")
        return PolyQ((Fraction(0),) * k + self.coeffs)

    def valuation(self) -> int:
        """Index of the lowest nonzero coefficient; 0 for the zero polynomial."""
        for i, c in enumerate(self.coeffs):
            if c != 0:
                return i
        return 0

    def __call__(self, x) -> Fraction:
        acc = Fraction(0)
        for c in reversed(self.coeffs):
            acc = acc * x + c
        return acc

    def pow(self, k: int) -> "PolyQ":
        if k < 0:
            raise ValueError("negative power")
        out = PolyQ([1])
        base = self
        while k:
            if k & 1:
                out = out * base
            base = base * base
            k >>= 1
        return out

    def divmod_one_minus_t(self) -> tuple["PolyQ", Fraction]:
        """Write self = (1-t) * q + r with scalar remainder r = self(1)."""
        # synthetic division by (1-t), highest coefficient first
        q = [Fraction(0)] * max(len(self.coeffs) - 1, 0)
        carry = Fraction(0)
        for i in range(len(self.coeffs) - 1, 0, -1):
            carry = carry + self.coeffs[i]
            q[i - 1] = -carry  # note (1-t) has leading coefficient -1
        r = self.coeff(0) + carry
        return PolyQ(q), r

    def expand_in_one_minus_t(self) -> list[Fraction]:
        """Coefficients s_m with self(t) = sum_m s_m (1-t)^m."""
        out = []
        p = self
        while p:
            p, r = p.divmod_one_minus_t()
            out.append(r)
        return out


_ONE_MINUS_T = PolyQ([1, -1])


# ---------------------------------------------------------------------------
# the series type


class MSeries:
    """Power series with nonnegative coefficients of the shape t^w0 * Z(t) / (1-t)^(N+1).

    Stored in canonical form: Z(0) != 0 and (1-t) does not divide Z, so the
    triple (w0, N, Z) is unique.  N may be negative when the series is in
    fact a polynomial.  The zero series is (0, -1, 0).
    """

    __slots__ = ("w0", "npole", "numer")

    def __init__(self, numer: PolyQ, denom_exp: int = 0):
        """Build numer(t) / (1-t)^denom_exp and canonicalise."""
        if numer.is_zero():
            self.w0 = 0
            self.npole = -1
            self.numer = PolyQ()
            return
        w0 = numer.valuation()
        z = PolyQ(numer.coeffs[w0:])
        while True:
            q, r = z.divmod_one_minus_t()
            if r != 0:
                break
            z = q
            denom_exp -= 1
        self.w0 = w0
        self.npole = denom_exp - 1
        self.numer = z

    @classmethod
    def zero(cls) -> "MSeries":
        return cls(PolyQ())

    @classmethod
    def from_terms(cls, terms) -> "MSeries":
        """Sum of c * t^w / (1-t)^(l+1) over (c, w, l) triples."""
        terms = list(terms)
        if not terms:
            return cls.zero()
        dmax = max(l + 1 for _, _, l in terms)
        dmax = max(dmax, 0)
        num = PolyQ()
        for c, w, l in terms:
            num = num + _ONE_MINUS_T.pow(dmax - (l + 1)) * PolyQ([c]).shift(w)
        return cls(num, dmax)

    def is_zero(self) -> bool:
        return self.numer.is_zero()

    @property
    def d_infinity(self) -> int:
        """Degree of the closed form at infinity: deg numerator minus deg denominator."""
        if self.is_zero():
            raise ValueError("zero series has no degree")
        return self.w0 + self.numer.degree - (self.npole + 1)

    def coefficient(self, k: int) -> Fraction:
        if k < self.w0:
            return Fraction(0)
        base = k - self.w0
        d = self.npole + 1
        if d <= 0:
            # plain polynomial: multiply out the remaining (1-t) factor
            p = self.numer * _ONE_MINUS_T.pow(-d)
            return p.coeff(base)
        acc = Fraction(0)
        for j, zj in enumerate(self.numer.coeffs):
            if zj != 0 and j <= base:
                acc += zj * math.comb(d - 1 + base - j, d - 1)
        return acc

    def coefficients(self, upto: int) -> list[Fraction]:
        return [self.coefficient(k) for k in range(upto + 1)]

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, MSeries)
            and self.w0 == other.w0
            and self.npole == other.npole
            and self.numer == other.numer
        )

    def __hash__(self) -> int:
        return hash((self.w0, self.npole, self.numer))

    def __add__(self, other: "MSeries") -> "MSeries":
        if self.is_zero():
            return other
        if other.is_zero():
            return self
        d = max(self.npole + 1, other.npole + 1, 0)
        num = self.numer.shift(self.w0) * _ONE_MINUS_T.pow(d - (self.npole + 1))
        num = num + other.numer.shift(other.w0) * _ONE_MINUS_T.pow(d - (other.npole + 1))
        return MSeries(num, d)

    def __sub__(self, other: "MSeries") -> "MSeries":
        if other.is_zero():
            return self
        neg = MSeries((other.numer * -1).shift(other.w0), other.npole + 1)
        return self + neg

    def __repr__(self) -> str:
        return f"MSeries({self.to_text()!r})"

    def to_text(self) -> str:
        if self.is_zero():
            return "0"
        parts = []
        if self.w0 == 1:
            parts.append("t * ")
        elif self.w0 > 1:
            parts.append(f"t^{self.w0} * ")
        parts.append("(" + _poly_text(self.numer) + ")")
        d = self.npole + 1
        if d >= 1:
            parts.append(f" / (1-t)^{d}" if d != 1 else " / (1-t)")
        elif d < 0:
            parts.append(f" * (1-t)^{-d}")
        return "".join(parts)


def _frac_text(c: Fraction) -> str:
    if c.denominator == 1:
        return str(c.numerator)
    return f"{c.numerator}/{c.denominator}"


def _poly_text(p: PolyQ) -> str:
    if p.is_zero():
        return "0"
    chunks = []
    for k, c in enumerate(p.coeffs):
        if c == 0:
            continue
        sign = "-" if c < 0 else "+"
        mag = abs(c)
        if k == 0:
            body = _frac_text(mag)
        else:
            tpow = "t" if k == 1 else f"t^{k}"
            body = tpow if mag == 1 else f"{_frac_text(mag)} {tpow}"
        if not chunks:
            chunks.append(body if sign == "+" else "-" + body)
        else:
            chunks.append(f" {sign} {body}")
    return "".join(chunks)


# ---------------------------------------------------------------------------
# parameterization matrices


@dataclass(frozen=True)
class ParamMatrix:
    """Integer table of invariant counts.

    Row i (1-based) counts invariants of n1+i-1 variables; column j counts
    invariants of weight w1+j-1.
    """

    entries: tuple[tuple[int, ...], ...]
    n1: int
    w1: int

    def __post_init__(self):
        if not self.entries or not self.entries[0]:
            raise ValueError("empty matrix")
        k2 = len(self.entries[0])
        if any(len(row) != k2 for row in self.entries):
            raise ValueError("ragged matrix")
        if any(not isinstance(v, int) for row in self.entries for v in row):
            raise ValueError("entries must be integers")
        if self.n1 < 1:
            raise ValueError("n1 must be at least 1")

    @classmethod
    def from_rows(cls, rows, n1: int, w1: int) -> "ParamMatrix":
        return cls(tuple(tuple(int(v) for v in row) for row in rows), n1, w1)

    @property
    def k1(self) -> int:
        return len(self.entries)

    @property
    def k2(self) -> int:
        return len(self.entries[0])

    def entry(self, i: int, j: int) -> int:
        """1-based access; out-of-range reads are 0."""
        if 1 <= i <= self.k1 and 1 <= j <= self.k2:
            return self.entries[i - 1][j - 1]
        return 0

    def rows(self) -> list[list[int]]:
        return [list(row) for row in self.entries]

    def var_count(self, i: int) -> int:
        return self.n1 + i - 1

    def weight(self, j: int) -> int:
        return self.w1 + j - 1

    def total(self) -> int:
        return sum(v for row in self.entries for v in row)

    def is_normalized_shape(self) -> bool:
        """First and last row and column each hold a nonzero entry."""
        rows = self.entries
        cols = list(zip(*rows))
        return (
            any(rows[0])
            and any(rows[-1])
            and any(cols[0])
            and any(cols[-1])
        )


def series_from_matrix(p: ParamMatrix) -> MSeries:
    """Generating series of the counts table.

    Entry p[i][j] adds p_ij * t^weight(j) / (1-t)^(vars(i)+1).
    """
    if any(v < 0 for row in p.entries for v in row):
        raise ValueError("counts must be nonnegative")
    terms = []
    for i in range(1, p.k1 + 1):
        for j in range(1, p.k2 + 1):
            v = p.entry(i, j)
            if v:
                terms.append((Fraction(v), p.weight(j), p.var_count(i)))
    return MSeries.from_terms(terms)


# ---------------------------------------------------------------------------
# (w, l)-representations


@dataclass(frozen=True)
class WLRep:
    """Split M = t^w0 R(t)/(1-t)^(l+1) + t^w Q(t) with R of degree < w - w0.

    q maps pole order minus one to the coefficient: Q = sum q[j] / (1-t)^(j+1).
    """

    w0: int
    w: int
    l: int
    npole: int
    r: tuple[Fraction, ...]
    q: dict[int, Fraction]

    @property
    def l1(self) -> int | None:
        """Least variable count appearing in the tail, None when the tail vanishes."""
        nz = [j for j, c in self.q.items() if c != 0]
        return min(nz) if nz else None

    def reconstruct(self) -> MSeries:
        terms = [(c, self.w0 + i, self.l) for i, c in enumerate(self.r) if c != 0]
        terms += [(c, self.w, j) for j, c in self.q.items() if c != 0]
        return MSeries.from_terms(terms)


def wl_representation(m: MSeries, w: int, l: int) -> WLRep:
    """Unique decomposition of the series at scan position (w, l).

    Peels one weight-layer at a time: the head collects, for each weight
    v in [w0, w), the count of l-variable invariants forced at weight v;
    the tail is whatever rational remainder starts at weight w.
    """
    if m.is_zero():
        raise ValueError("zero series has no (w, l)-representation")
    if l < 0:
        raise ValueError("negative variable count")
    if w < m.w0:
        raise ValueError(f"w must be at least the series onset {m.w0}")
    d = max(m.npole + 1, l + 1)
    # work with Q = M / t^shift as numer/(1-t)^d, peeling constant terms
    numer = m.numer * _ONE_MINUS_T.pow(d - (m.npole + 1))
    r: list[Fraction] = []
    for _ in range(w - m.w0):
        q0 = numer.coeff(0)
        r.append(q0)
        numer = numer - _ONE_MINUS_T.pow(d - (l + 1)) * PolyQ([q0])
        assert numer.coeff(0) == 0
        numer = PolyQ(numer.coeffs[1:])
    q: dict[int, Fraction] = {}
    for mpow, s in enumerate(numer.expand_in_one_minus_t()):
        if s != 0:
            q[d - 1 - mpow] = s
    return WLRep(w0=m.w0, w=w, l=l, npole=m.npole, r=tuple(r), q=q)


def is_nice(rep: WLRep) -> bool:
    """Admissibility of a representation as an actual table of invariant counts.

    Requires 1 <= l <= N, head and tail coefficients nonnegative integers,
    and every tail variable count at least l.
    """
    if not (1 <= rep.l <= rep.npole):
        return False
    for c in rep.r:
        if c < 0 or c.denominator != 1:
            return False
    for j, c in rep.q.items():
        if c == 0:
            continue
        if c < 0 or c.denominator != 1:
            return False
        if j < rep.l or j > rep.npole:
            return False
    return True


@dataclass(frozen=True)
class NSBounds:
    """Where nice representations can live for a fixed series."""

    w0: int
    npole: int
    d: int

    @property
    def w_min(self) -> int:
        return max(self.w0, self.d + 2)

    def l_max(self, w: int) -> int:
        return min(w - self.d - 1, self.npole)


def ns_bounds(m: MSeries) -> NSBounds:
    """Necessary bounds: a nice (w, l) needs w >= w_min and l <= l_max(w).

    The tail of a nice representation has at most N+1 variables, forcing
    the coefficient growth degree to fit: l <= w - d - 1 where d is the
    degree at infinity.
    """
    if m.is_zero():
        raise ValueError("zero series")
    return NSBounds(w0=m.w0, npole=m.npole, d=m.d_infinity)


def characteristic_pair(m: MSeries, w_cap: int | None = None) -> tuple[int, int]:
    """First admissible (w, l) in the scan order: w ascending, l descending.

    Raises CapExceededError when no nice representation shows up at any
    weight up to w_cap (default w0 + 64).
    """
    if m.is_zero():
        raise ValueError("zero series")
    if w_cap is None:
        w_cap = m.w0 + 64
    b = ns_bounds(m)
    for w in range(b.w_min, w_cap + 1):
        lmax = b.l_max(w)
        for l in range(min(lmax, b.npole), 0, -1):
            if is_nice(wl_representation(m, w, l)):
                return (w, l)
    raise CapExceededError(
        f"no admissible (w, l) pair found with w <= {w_cap}; raise the cap to search further"
    )


def characteristic_matrix(m: MSeries, pair: tuple[int, int] | None = None) -> ParamMatrix:
    """Counts table of the representation at `pair` (default: the characteristic pair).

    The head fills the first row (one column per weight from w0 to w-1);
    the tail fills the last column, ordered by variable count.
    """
    if pair is None:
        pair = characteristic_pair(m)
    w, l = pair
    rep = wl_representation(m, w, l)
    if not is_nice(rep):
        raise ValueError(f"representation at (w={w}, l={l}) is not admissible")
    k1 = rep.npole - l + 1
    k2 = w - rep.w0 + 1
    rows = [[0] * k2 for _ in range(k1)]
    for i, c in enumerate(rep.r):
        rows[0][i] = int(c)
    for j in range(l, rep.npole + 1):
        rows[j - l][k2 - 1] = int(rep.q.get(j, 0))
    out = ParamMatrix.from_rows(rows, n1=l, w1=rep.w0)
    assert series_from_matrix(out) == m
    return out


# ---------------------------------------------------------------------------
# matrix moves


def elementary_transform(p: ParamMatrix, i0: int, j0: int) -> ParamMatrix:
    """Trade one invariant at (i0, j0) for one with fewer variables and one
    with higher weight.  Preserves the generating series.
    """
    if not (2 <= i0 <= p.k1):
        raise ValueError(f"row index {i0} out of range [2, {p.k1}]")
    if not (1 <= j0 <= p.k2 - 1):
        raise ValueError(f"column index {j0} out of range [1, {p.k2 - 1}]")
    if p.entry(i0, j0) < 1:
        raise ValueError(f"entry ({i0}, {j0}) is {p.entry(i0, j0)}, nothing to move")
    rows = p.rows()
    rows[i0 - 1][j0 - 1] -= 1
    rows[i0 - 2][j0 - 1] += 1
    rows[i0 - 1][j0] += 1
    return ParamMatrix.from_rows(rows, p.n1, p.w1)


def norm_matrix(p: ParamMatrix) -> ParamMatrix:
    """Normal form under elementary moves: sweep columns left to right,
    within a column bottom to top, flushing every movable entry.

    The result is supported on the first row and the last column only.
    """
    rows = p.rows()
    k1, k2 = p.k1, p.k2
    for j in range(k2 - 1):
        for i in range(k1 - 1, 0, -1):
            v = rows[i][j]
            if v:
                rows[i][j] = 0
                rows[i - 1][j] += v
                rows[i][j + 1] += v
    return ParamMatrix.from_rows(rows, p.n1, p.w1)


def norm_closed_form(p: ParamMatrix) -> ParamMatrix:
    """Closed binomial formula for norm_matrix, no sweeping."""
    k1, k2 = p.k1, p.k2
    rows = [[0] * k2 for _ in range(k1)]
    for j in range(1, k2):
        acc = p.entry(1, j)
        for l in range(j):
            for k in range(1, k1):
                acc += math.comb(k + l - 1, l) * p.entry(k + 1, j - l)
        rows[0][j - 1] = acc
    for i in range(2, k1 + 1):
        acc = p.entry(i, k2)
        for l in range(k1 - i + 1):
            for k in range(1, k2):
                acc += math.comb(k2 - k + l - 1, l) * p.entry(i + l, k)
        rows[i - 1][k2 - 1] = acc
    rows[0][k2 - 1] = p.entry(1, k2)
    return ParamMatrix.from_rows(rows, p.n1, p.w1)


def lemma2_check(m: MSeries, w: int, l: int) -> bool:
    """Whether (w-1, l-1) is nice, for use with the descent lemma.

    If (w, l) is nice with a tail entry at exactly l variables, the answer
    is always False.  Out of range pairs are reported False.
    """
    if w - 1 < m.w0 or l - 1 < 1:
        return False
    return is_nice(wl_representation(m, w - 1, l - 1))


# ---------------------------------------------------------------------------
# count tables for the systems handled by this package


def scalar_counts_matrix(n: int) -> ParamMatrix:
    """Counts of primary invariants for a scalar-input system in dimension n.

    Rows are variable counts starting at 2, columns weights.  Built from
    the sizes of the invariant tuples produced by the canonical chart.
    """
    if n < 4:
        raise ValueError("defined for dimension at least 4")
    if n == 4:
        # four psi of 2 vars and four beta of 3 vars at weight 3, two
        # structure coefficients of 4 vars at weight 2
        return ParamMatrix.from_rows([[0, 4], [0, 4], [2, 0]], n1=2, w1=2)
    # n >= 5: rows hold the mixed-derivative families (n per slot) by
    # variable count and weight, beta and psi merge into rows n-3 and n-2,
    # and the n-2 structure coefficients of n vars sit in the corner
    k2 = max(n - 4, 1)
    rows = [[0] * k2 for _ in range(n - 1)]
    for i in range(1, n - 4 + 1):
        for j in range(1, k2 + 1):
            rows[i - 1][j - 1] = n if i + j >= n - 3 else 0
    for i in (n - 3, n - 2):
        rows[i - 1] = [2 * n] + [n] * (k2 - 1)
    rows[n - 2] = [0] * (k2 - 1) + [n - 2]
    return ParamMatrix.from_rows(rows, n1=2, w1=3)


def two_input_counts_matrix(n: int = 5) -> ParamMatrix:
    """Counts of primary invariants for the two-input case in dimension 5."""
    if n != 5:
        raise ValueError("two-input counts are tabulated for dimension 5 only")
    return ParamMatrix.from_rows(
        [[0, 0, 0, 5], [0, 0, 0, 10], [0, 0, 0, 10], [1, 0, 0, 3]], n1=2, w1=0
    )


def charn_closed_form(n: int) -> ParamMatrix:
    """Characteristic matrix for the scalar-input series in dimension n >= 6,
    written directly from binomial sums instead of running the scan.
    """
    if n < 6:
        raise ValueError("closed form applies for dimension at least 6")
    k1, k2 = n - 1, n - 4
    rows = [[0] * k2 for _ in range(k1)]
    for j in range(1, n - 4):
        s = (
            math.comb(n - 4 + j, j - 1)
            + 2 * math.comb(n - 5 + j, j - 1)
            + 2 * math.comb(n - 6 + j, j - 1)
            + math.comb(n - 7 + j, j - 1)
            - 1
            - sum(math.comb(n + 2 * l - 7 - j, l) for l in range(1, j))
        )
        rows[0][j - 1] = n * s
    rows[0][k2 - 1] = n
    for i in range(2, n - 2):
        s = (
            1
            + sum(math.comb(i + 2 * l - 3, l) for l in range(1, n - 2 - i))
            + math.comb(2 * n - 9 - i, n - 3 - i)
            + 2 * math.comb(2 * n - 8 - i, n - 2 - i)
            + math.comb(2 * n - 7 - i, n - 1 - i)
        )
        rows[i - 1][k2 - 1] = n * s
    rows[n - 3][k2 - 1] = n * (n - 3)
    rows[n - 2][k2 - 1] = n - 2
    return ParamMatrix.from_rows(rows, n1=2, w1=3)


# ---------------------------------------------------------------------------
# text formats


_TOKEN_RE = re.compile(r"\s*(?:(\d+)|(t)|(\^)|(\*)|(/)|(\+)|(-)|(\()|(\)))")


def _tokenize_series(text: str):
    tokens = []
    pos = 0
    while pos < len(text):
        mt = _TOKEN_RE.match(text, pos)
        if mt is None:
            if text[pos:].strip() == "":
                break
            raise InputError(f"unexpected character {text[pos]!r} in series", pos)
        groups = mt.groups()
        if groups[0] is not None:
            tokens.append(("int", int(groups[0]), mt.start(1)))
        else:
            for gi, name in ((1, "t"), (2, "^"), (3, "*"), (4, "/"), (5, "+"), (6, "-"), (7, "("), (8, ")")):
                if groups[gi] is not None:
                    tokens.append((name, None, mt.start(gi + 1)))
                    break
        pos = mt.end()
    tokens.append(("end", None, len(text)))
    return tokens


class _SeriesParser:
    """Recursive-descent reader for sums of rational terms in t.

    Values are kept as (numerator PolyQ, pole exponent); division is only
    allowed by constants and powers of (1-t), which covers every closed
    form this package prints or accepts.
    """

    def __init__(self, text: str):
        self.text = text
        self.toks = _tokenize_series(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def next(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, kind: str):
        tok = self.next()
        if tok[0] != kind:
            raise InputError(f"expected {kind!r} in series literal", tok[2])
        return tok

    def parse(self) -> MSeries:
        num, pole = self.expr()
        self.expect("end")
        return MSeries(num, pole)

    def expr(self):
        sign = 1
        while self.peek()[0] in ("+", "-"):
            if self.next()[0] == "-":
                sign = -sign
        num, pole = self.term()
        num = num * sign
        while self.peek()[0] in ("+", "-"):
            op = self.next()[0]
            n2, p2 = self.term()
            if op == "-":
                n2 = n2 * -1
            d = max(pole, p2)
            num = num * _ONE_MINUS_T.pow(d - pole) + n2 * _ONE_MINUS_T.pow(d - p2)
            pole = d
        return num, pole

    def term(self):
        num, pole = self.factor()
        while True:
            kind = self.peek()[0]
            if kind == "*":
                self.next()
                n2, p2 = self.factor()
                num, pole = num * n2, pole + p2
            elif kind == "/":
                self.next()
                n2, p2 = self.factor()
                num, pole = self._divide(num, pole, n2, p2)
            elif kind in ("int", "t", "("):
                # implicit product, as in "28 t^3" or "t^2 (1 + t)"
                n2, p2 = self.factor()
                num, pole = num * n2, pole + p2
            else:
                return num, pole

    def _divide(self, num, pole, dnum, dpole):
        pos = self.peek()[2]
        pole -= dpole
        strip = 0
        p = dnum
        while True:
            q, r = p.divmod_one_minus_t()
            if r != 0:
                break
            p = q
            strip += 1
        if p.degree > 0:
            raise InputError("can only divide by constants and powers of (1-t)", pos)
        if p.is_zero() or p.coeff(0) == 0:
            raise InputError("division by zero in series literal", pos)
        return num * (1 / p.coeff(0)), pole + strip

    def factor(self):
        base = self.atom()
        if self.peek()[0] == "^":
            self.next()
            tok = self.next()
            neg = False
            if tok[0] == "-":
                neg = True
                tok = self.next()
            if tok[0] != "int":
                raise InputError("exponent must be an integer", tok[2])
            k = tok[1]
            num, pole = base
            if neg:
                return self._divide(PolyQ([1]), 0, num.pow(k), pole * k)
            return num.pow(k), pole * k
        return base

    def atom(self):
        tok = self.next()
        if tok[0] == "int":
            # allow the ratio form p/q when the next two tokens are "/ int"
            # and the division is not followed by a parenthesis
            return PolyQ([tok[1]]), 0
        if tok[0] == "t":
            return PolyQ([0, 1]), 0
        if tok[0] == "(":
            num, pole = self.expr()
            self.expect(")")
            return num, pole
        if tok[0] == "-":
            num, pole = self.atom()
            return num * -1, pole
        raise InputError("expected a number, t, or a parenthesised group", tok[2])


def parse_series_text(text: str) -> MSeries:
    """Read a series literal such as ``t^3 * (5 + 2 t) / (1-t)^6``.

    Sums of such terms are accepted too, so tables of simple fractions can
    be pasted directly.
    """
    if not text.strip():
        raise InputError("empty series literal")
    return _SeriesParser(text).parse()


_HEADER_RE = re.compile(r"n1\s*=\s*(-?\d+)\s+w1\s*=\s*(-?\d+)\s*$")


def parse_matrix_text(text: str) -> ParamMatrix:
    """Read a counts table: a header line ``n1=<int> w1=<int>`` followed by
    one row of integers per line.  ``#`` starts a comment.
    """
    n1 = w1 = None
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        mh = _HEADER_RE.match(line)
        if mh:
            if n1 is not None:
                raise InputError(f"duplicate header on line {lineno}")
            n1, w1 = int(mh.group(1)), int(mh.group(2))
            continue
        try:
            rows.append([int(v) for v in line.replace(";", " ").split()])
        except ValueError:
            raise InputError(f"bad matrix row on line {lineno}: {line!r}") from None
    if n1 is None:
        raise InputError("missing header line 'n1=<int> w1=<int>'")
    if not rows:
        raise InputError("matrix has no rows")
    try:
        return ParamMatrix.from_rows(rows, n1, w1)
    except ValueError as exc:
        raise InputError(str(exc)) from None


def format_matrix(p: ParamMatrix) -> str:
    lines = [f"n1={p.n1} w1={p.w1}"]
    width = max(len(str(v)) for row in p.entries for v in row)
    for row in p.entries:
        lines.append(" ".join(str(v).rjust(width) for v in row))
    return "\n".join(lines) + "\n"
