"""Symbolic expressions in variables x1..xn.

Nodes are interned: structurally equal expressions are the same object,
so equality is identity and derivative caches can live on the nodes.
Constant arithmetic is exact whenever the constants are rational; decimal
literals bring in floats and stay floats.
"""

from __future__ import annotations

import itertools
import math
import re
import weakref
from fractions import Fraction
from typing import Callable, Sequence

from .errors import EvalError, InputError

__all__ = [
    "Expr",
    "Const",
    "Var",
    "Add",
    "Mul",
    "Div",
    "Pow",
    "Func",
    "const",
    "var",
    "add",
    "sub",
    "neg",
    "mul",
    "div",
    "pow_",
    "func",
    "diff",
    "evaluate",
    "compile_exprs",
    "parse",
    "print_expr",
    "vars_used",
    "ZERO",
    "ONE",
]

_table: "weakref.WeakValueDictionary[tuple, Expr]" = weakref.WeakValueDictionary()
_serial = itertools.count()

FUNCTIONS = ("sin", "cos", "exp", "log", "sqrt")


class Expr:
    __slots__ = ("_sn", "_dc", "__weakref__")

    def __repr__(self) -> str:
        return print_expr(self)

    # interned nodes compare by identity; these exist for dict/set use
    def __hash__(self) -> int:
        return object.__hash__(self)

    def __eq__(self, other) -> bool:
        return self is other


class Const(Expr):
    __slots__ = ("value",)

    def __init__(self, value):
        self.value = value


class Var(Expr):
    __slots__ = ("index",)

    def __init__(self, index: int):
        self.index = index


class Add(Expr):
    __slots__ = ("args",)

    def __init__(self, args):
        self.args = args


class Mul(Expr):
    __slots__ = ("args",)

    def __init__(self, args):
        self.args = args


class Div(Expr):
    __slots__ = ("num", "den")

    def __init__(self, num, den):
        self.num = num
        self.den = den


class Pow(Expr):
    __slots__ = ("base", "exp")

    def __init__(self, base, exp: int):
        self.base = base
        self.exp = exp


class Func(Expr):
    __slots__ = ("name", "arg")

    def __init__(self, name: str, arg):
        self.name = name
        self.arg = arg


def _intern(key, build):
    node = _table.get(key)
    if node is None:
        node = build()
        node._sn = next(_serial)
        node._dc = None
        _table[key] = node
    return node


def const(value) -> Expr:
    if isinstance(value, bool):
        raise TypeError("boolean is not a constant")
    if isinstance(value, int):
        value = Fraction(value)
    if isinstance(value, Fraction):
        key = ("c", value.numerator, value.denominator)
    elif isinstance(value, float):
        if math.isnan(value) or math.isinf(value):
            raise EvalError(f"non-finite constant {value!r}")
        key = ("cf", repr(value))
    else:
        raise TypeError(f"bad constant {value!r}")
    return _intern(key, lambda: Const(value))


ZERO = const(0)
ONE = const(1)


def var(index: int) -> Expr:
    if index < 1:
        raise ValueError("variable indices are 1-based")
    return _intern(("v", index), lambda: Var(index))


def _order_key(e: Expr):
    if isinstance(e, Const):
        return (0, 0, e._sn)
    if isinstance(e, Var):
        return (1, e.index, 0)
    if isinstance(e, Pow):
        return (2, 0, e._sn)
    if isinstance(e, Func):
        return (3, FUNCTIONS.index(e.name), e._sn)
    if isinstance(e, Div):
        return (4, 0, e._sn)
    if isinstance(e, Mul):
        return (5, 0, e._sn)
    return (6, 0, e._sn)


def _split_coeff(t: Expr):
    if isinstance(t, Mul) and isinstance(t.args[0], Const):
        rest = t.args[1:]
        return t.args[0].value, (rest[0] if len(rest) == 1 else _make_mul(rest))
    return Fraction(1), t


def _make_mul(args: tuple) -> Expr:
    args = tuple(sorted(args, key=_order_key))
    key = ("m",) + tuple(id(a) for a in args)
    return _intern(key, lambda: Mul(args))


def add(*terms) -> Expr:
    flat = []
    stack = list(terms)
    while stack:
        t = stack.pop()
        if isinstance(t, Add):
            stack.extend(t.args)
        else:
            flat.append(t)
    const_acc = Fraction(0)
    bucket: dict[Expr, object] = {}
    for t in reversed(flat):
        if isinstance(t, Const):
            const_acc = const_acc + t.value
            continue
        c, rest = _split_coeff(t)
        bucket[rest] = bucket.get(rest, Fraction(0)) + c
    parts = []
    for rest, c in bucket.items():
        if c == 0:
            continue
        parts.append(rest if c == 1 else mul(const(c), rest))
    if const_acc != 0:
        parts.append(const(const_acc))
    if not parts:
        return ZERO
    if len(parts) == 1:
        return parts[0]
    parts.sort(key=_order_key)
    key = ("a",) + tuple(id(a) for a in parts)
    return _intern(key, lambda: Add(tuple(parts)))


def neg(e: Expr) -> Expr:
    return mul(const(-1), e)


def sub(a: Expr, b: Expr) -> Expr:
    return add(a, neg(b))


def mul(*factors) -> Expr:
    flat = []
    stack = list(factors)
    while stack:
        f = stack.pop()
        if isinstance(f, Mul):
            stack.extend(f.args)
        else:
            flat.append(f)
    coeff = Fraction(1)
    powers: dict[Expr, int] = {}
    for f in reversed(flat):
        if isinstance(f, Const):
            coeff = coeff * f.value
        elif isinstance(f, Pow):
            powers[f.base] = powers.get(f.base, 0) + f.exp
        else:
            powers[f] = powers.get(f, 0) + 1
    if coeff == 0:
        return ZERO
    parts = []
    for b, k in powers.items():
        if k == 0:
            continue
        parts.append(b if k == 1 else pow_(b, k))
    if coeff != 1 or not parts:
        parts.append(const(coeff))
    if len(parts) == 1:
        return parts[0]
    return _make_mul(tuple(parts))


def _coeff_split(e: Expr):
    if isinstance(e, Const):
        return e.value, ONE
    return _split_coeff(e)


def _power_map(e: Expr) -> dict[Expr, int]:
    out: dict[Expr, int] = {}
    factors = e.args if isinstance(e, Mul) else (e,)
    for f in factors:
        if isinstance(f, Pow):
            out[f.base] = out.get(f.base, 0) + f.exp
        else:
            out[f] = out.get(f, 0) + 1
    return out


def div(num: Expr, den: Expr) -> Expr:
    if isinstance(den, Const):
        if den.value == 0:
            raise EvalError("division by zero")
        if isinstance(den.value, Fraction):
            return mul(const(1 / den.value), num)
        return mul(const(1.0 / den.value), num)
    if num is ZERO:
        return ZERO
    cn, rn = _coeff_split(num)
    cd, rd = _coeff_split(den)
    # unnest quotients so only one Div level remains
    if isinstance(rn, Div):
        return mul(const(cn), div(rn.num, mul(const(cd), rn.den, rd)))
    if isinstance(rd, Div):
        return div(mul(const(cn), rn, rd.den), mul(const(cd), rd.num))
    if cd < 0:
        cn, cd = -cn, -cd
    coeff = cn / cd
    # cancel shared power factors
    net = _power_map(rn)
    if rd is not ONE:
        for b, k in _power_map(rd).items():
            net[b] = net.get(b, 0) - k
    num_parts = [pow_(b, k) for b, k in net.items() if k > 0]
    den_parts = [pow_(b, -k) for b, k in net.items() if k < 0]
    new_num = mul(*num_parts) if num_parts else ONE
    if not den_parts:
        return mul(const(coeff), new_num)
    new_den = mul(*den_parts) if len(den_parts) > 1 else den_parts[0]
    key = ("d", id(new_num), id(new_den))
    core = _intern(key, lambda: Div(new_num, new_den))
    return mul(const(coeff), core)


def pow_(base: Expr, exp: int) -> Expr:
    if not isinstance(exp, int):
        raise TypeError("exponent must be an integer")
    if exp == 0:
        return ONE
    if exp == 1:
        return base
    if isinstance(base, Const):
        v = base.value
        if v == 0 and exp < 0:
            raise EvalError("zero raised to a negative power")
        return const(v**exp)
    if isinstance(base, Pow):
        return pow_(base.base, base.exp * exp)
    key = ("p", id(base), exp)
    return _intern(key, lambda: Pow(base, exp))


def func(name: str, arg: Expr) -> Expr:
    if name not in FUNCTIONS:
        raise ValueError(f"unknown function {name!r}")
    key = ("f", name, id(arg))
    return _intern(key, lambda: Func(name, arg))


# ---------------------------------------------------------------------------
# differentiation


def diff(e: Expr, i: int) -> Expr:
    """Exact partial derivative with respect to x_i, cached on the node."""
    cache = e._dc
    if cache is None:
        cache = e._dc = {}
    got = cache.get(i)
    if got is not None:
        return got
    out = _diff(e, i)
    cache[i] = out
    return out


def _diff(e: Expr, i: int) -> Expr:
    if isinstance(e, Const):
        return ZERO
    if isinstance(e, Var):
        return ONE if e.index == i else ZERO
    if isinstance(e, Add):
        return add(*[diff(a, i) for a in e.args])
    if isinstance(e, Mul):
        terms = []
        for k, a in enumerate(e.args):
            da = diff(a, i)
            if da is ZERO:
                continue
            terms.append(mul(*(e.args[:k] + (da,) + e.args[k + 1 :])))
        return add(*terms)
    if isinstance(e, Div):
        du, dv = diff(e.num, i), diff(e.den, i)
        if dv is ZERO:
            return div(du, e.den)
        return div(sub(mul(du, e.den), mul(e.num, dv)), mul(e.den, e.den))
    if isinstance(e, Pow):
        return mul(const(e.exp), pow_(e.base, e.exp - 1), diff(e.base, i))
    if isinstance(e, Func):
        da = diff(e.arg, i)
        if da is ZERO:
            return ZERO
        if e.name == "sin":
            return mul(da, func("cos", e.arg))
        if e.name == "cos":
            return neg(mul(da, func("sin", e.arg)))
        if e.name == "exp":
            return mul(da, e)
        if e.name == "log":
            return div(da, e.arg)
        if e.name == "sqrt":
            return div(da, mul(const(2), e))
    raise TypeError(f"cannot differentiate {e!r}")


def vars_used(e: Expr) -> set[int]:
    out: set[int] = set()
    seen: set[int] = set()
    stack = [e]
    while stack:
        n = stack.pop()
        if id(n) in seen:
            continue
        seen.add(id(n))
        if isinstance(n, Var):
            out.add(n.index)
        elif isinstance(n, Add) or isinstance(n, Mul):
            stack.extend(n.args)
        elif isinstance(n, Div):
            stack.extend((n.num, n.den))
        elif isinstance(n, Pow):
            stack.append(n.base)
        elif isinstance(n, Func):
            stack.append(n.arg)
    return out


# ---------------------------------------------------------------------------
# evaluation


def _const_float(v) -> float:
    if isinstance(v, Fraction):
        return v.numerator / v.denominator
    return v


def evaluate(e: Expr, point: Sequence[float]) -> float:
    """Interpretive evaluation; domain violations raise EvalError."""
    memo: dict[int, float] = {}

    def rec(n: Expr) -> float:
        got = memo.get(id(n))
        if got is not None:
            return got
        try:
            if isinstance(n, Const):
                v = _const_float(n.value)
            elif isinstance(n, Var):
                if n.index > len(point):
                    raise EvalError(f"point has no coordinate x{n.index}")
                v = float(point[n.index - 1])
            elif isinstance(n, Add):
                v = math.fsum(rec(a) for a in n.args)
            elif isinstance(n, Mul):
                v = 1.0
                for a in n.args:
                    v *= rec(a)
            elif isinstance(n, Div):
                v = rec(n.num) / rec(n.den)
            elif isinstance(n, Pow):
                v = rec(n.base) ** n.exp
            elif isinstance(n, Func):
                v = getattr(math, n.name)(rec(n.arg))
            else:
                raise TypeError(f"cannot evaluate {n!r}")
        except ZeroDivisionError:
            raise EvalError("division by zero during evaluation") from None
        except OverflowError:
            raise EvalError("overflow during evaluation") from None
        except ValueError as exc:
            raise EvalError(f"domain error during evaluation: {exc}") from None
        memo[id(n)] = v
        return v

    return rec(e)


_COMPILE_NODE_CAP = 200_000


def compile_exprs(exprs: Sequence[Expr]) -> Callable[[Sequence[float]], list[float]]:
    """Build one python function evaluating all expressions at a point.

    Shared subtrees are computed once.  Falls back to the interpreter when
    the combined graph is unreasonably large.
    """
    order: list[Expr] = []
    seen: set[int] = set()
    stack: list[tuple[Expr, bool]] = [(e, False) for e in reversed(exprs)]
    while stack:
        n, done = stack.pop()
        if done:
            order.append(n)
            continue
        if id(n) in seen:
            continue
        seen.add(id(n))
        stack.append((n, True))
        if isinstance(n, (Add, Mul)):
            stack.extend((a, False) for a in n.args)
        elif isinstance(n, Div):
            stack.extend(((n.num, False), (n.den, False)))
        elif isinstance(n, Pow):
            stack.append((n.base, False))
        elif isinstance(n, Func):
            stack.append((n.arg, False))
    if len(order) > _COMPILE_NODE_CAP:
        return lambda point: [evaluate(e, point) for e in exprs]

    names: dict[int, str] = {}
    lines = []

    def ref(n: Expr) -> str:
        got = names.get(id(n))
        if got is not None:
            return got
        if isinstance(n, Const):
            v = n.value
            if isinstance(v, Fraction):
                return f"({v.numerator}/{v.denominator})"
            return f"({v!r})"
        if isinstance(n, Var):
            return f"_p[{n.index - 1}]"
        raise AssertionError("referenced before defined")

    for n in order:
        if isinstance(n, (Const, Var)):
            continue
        name = f"_v{len(lines)}"
        if isinstance(n, Add):
            body = " + ".join(ref(a) for a in n.args)
        elif isinstance(n, Mul):
            body = " * ".join(ref(a) for a in n.args)
        elif isinstance(n, Div):
            body = f"{ref(n.num)} / {ref(n.den)}"
        elif isinstance(n, Pow):
            body = f"{ref(n.base)} ** ({n.exp})"
        else:
            body = f"{n.name}({ref(n.arg)})"
        lines.append(f"    {name} = {body}")
        names[id(n)] = name

    ret = ", ".join(ref(e) for e in exprs)
    src = "def _f(_p):\n" + "\n".join(lines) + f"\n    return [{ret}]\n"
    env = {fn: getattr(math, fn) for fn in FUNCTIONS}
    exec(src, env)  # noqa: S102 - source is generated from vetted nodes only
    raw = env["_f"]

    def run(point: Sequence[float]) -> list[float]:
        try:
            return raw(point)
        except ZeroDivisionError:
            raise EvalError("division by zero during evaluation") from None
        except OverflowError:
            raise EvalError("overflow during evaluation") from None
        except ValueError as exc:
            raise EvalError(f"domain error during evaluation: {exc}") from None
        except IndexError:
            raise EvalError("point has too few coordinates") from None

    return run


# ---------------------------------------------------------------------------
# reading and writing


_TOKEN = re.compile(
    r"\s*(?:"
    r"(?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()])"
    r")"
)


def _lex(text: str):
    toks = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            if not text[pos:].strip():
                break
            raise InputError(f"unexpected character {text[pos]!r}", pos)
        if m.group("num") is not None:
            s = m.group("num")
            if "." in s or "e" in s or "E" in s:
                toks.append(("num", float(s), m.start("num")))
            else:
                toks.append(("num", Fraction(int(s)), m.start("num")))
        elif m.group("name") is not None:
            toks.append(("name", m.group("name"), m.start("name")))
        else:
            toks.append((m.group("op"), None, m.start("op")))
        pos = m.end()
    toks.append(("end", None, len(text)))
    return toks


class _Parser:
    def __init__(self, text: str, dim: int):
        self.toks = _lex(text)
        self.i = 0
        self.dim = dim

    def peek(self):
        return self.toks[self.i]

    def next(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def parse(self) -> Expr:
        e = self.expr()
        tok = self.next()
        if tok[0] != "end":
            raise InputError("trailing input after expression", tok[2])
        return e

    def expr(self) -> Expr:
        terms = [self.term()]
        while self.peek()[0] in ("+", "-"):
            op = self.next()[0]
            t = self.term()
            terms.append(t if op == "+" else neg(t))
        return add(*terms) if len(terms) > 1 else terms[0]

    def term(self) -> Expr:
        e = self.factor()
        while self.peek()[0] in ("*", "/"):
            op = self.next()[0]
            rhs = self.factor()
            e = mul(e, rhs) if op == "*" else div(e, rhs)
        return e

    def factor(self) -> Expr:
        a = self.atom()
        if self.peek()[0] == "^":
            self.next()
            sign = 1
            if self.peek()[0] == "-":
                self.next()
                sign = -1
            tok = self.next()
            if tok[0] != "num" or not isinstance(tok[1], Fraction) or tok[1].denominator != 1:
                raise InputError("exponent must be an integer", tok[2])
            return pow_(a, sign * int(tok[1]))
        return a

    def atom(self) -> Expr:
        tok = self.next()
        kind, val, pos = tok
        if kind == "num":
            return const(val)
        if kind == "-":
            return neg(self.atom())
        if kind == "(":
            e = self.expr()
            closing = self.next()
            if closing[0] != ")":
                raise InputError("expected ')'", closing[2])
            return e
        if kind == "name":
            m = re.fullmatch(r"x(\d+)", val)
            if m:
                idx = int(m.group(1))
                if not (1 <= idx <= self.dim):
                    raise InputError(
                        f"variable x{idx} out of range for dimension {self.dim}", pos
                    )
                return var(idx)
            if val in FUNCTIONS:
                opening = self.next()
                if opening[0] != "(":
                    raise InputError(f"expected '(' after {val}", opening[2])
                arg = self.expr()
                closing = self.next()
                if closing[0] != ")":
                    raise InputError("expected ')'", closing[2])
                return func(val, arg)
            raise InputError(f"unknown identifier {val!r}", pos)
        raise InputError("expected a number, variable, or '('", pos)


def parse(text: str, dim: int) -> Expr:
    """Read one expression in variables x1..x<dim>."""
    return _Parser(text, dim).parse()


def _fmt_const(v) -> str:
    if isinstance(v, Fraction):
        if v.denominator == 1:
            return str(v.numerator)
        return f"{v.numerator}/{v.denominator}"
    return repr(v)


def _level(e: Expr) -> int:
    # 1 sum, 2 product, 3 power, 4 atom
    if isinstance(e, Add):
        return 1
    if isinstance(e, (Mul, Div)):
        return 2
    if isinstance(e, Pow):
        return 3
    if isinstance(e, Const):
        neg_or_frac = (
            e.value < 0
            or (isinstance(e.value, Fraction) and e.value.denominator != 1)
        )
        return 1 if neg_or_frac else 4
    return 4


def print_expr(e: Expr) -> str:
    """Render in the same grammar parse() reads; parse(print_expr(e)) is e."""
    return _print(e, 0)


def _print(e: Expr, ctx: int) -> str:
    lvl = _level(e)
    if isinstance(e, Const):
        s = _fmt_const(e.value)
    elif isinstance(e, Var):
        s = f"x{e.index}"
    elif isinstance(e, Func):
        s = f"{e.name}({_print(e.arg, 0)})"
    elif isinstance(e, Pow):
        s = f"{_print(e.base, 4)}^{e.exp}"
    elif isinstance(e, Div):
        s = f"{_print(e.num, 2)}/{_print(e.den, 3)}"
    elif isinstance(e, Mul):
        # a leading constant needs no parens: unary minus and the '/' in a
        # ratio both bind before '*' when read back
        first = e.args[0]
        chunks = [_fmt_const(first.value) if isinstance(first, Const) else _print(first, 2)]
        chunks += [_print(a, 3) for a in e.args[1:]]
        s = "*".join(chunks)
    elif isinstance(e, Add):
        s = _print(e.args[0], 1)
        for a in e.args[1:]:
            piece = _print(a, 1)
            if piece.startswith("-"):
                s += " - " + piece[1:]
            else:
                s += " + " + piece
    else:
        raise TypeError(f"cannot print {e!r}")
    if lvl < ctx:
        return f"({s})"
    return s
