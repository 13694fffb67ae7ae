"""Exact trig-polynomial ring.

A :class:`TrigPoly` is a polynomial in the registry's polynomial variables
whose angle variables enter only through ``cos`` and ``sin``.  Terms are kept
in the normal form ``cos(t)^a * sin(t)^e`` with ``e in {0, 1}``: every
``sin(t)^2`` is rewritten as ``1 - cos(t)^2``.  Two polynomials are equal iff
their term maps are equal, so symbolic zero tests reduce to emptiness.

Coefficients are :class:`fractions.Fraction`; nothing in this module rounds.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction
from types import MappingProxyType
from typing import Callable, Iterable, Mapping, Sequence, Union

import numpy as np

POLY = "poly"
ANGLE = "angle"

Number = Union[int, Fraction, float]


class ExprError(ValueError):
    """Raised on invalid expressions or registry misuse."""


class ParseError(ExprError):
    def __init__(self, message: str, position: int, text: str = ""):
        self.position = position
        self.text = text
        super().__init__(f"{message} (at position {position})")


@dataclass(frozen=True)
class VariableRegistry:
    """Ordered state variables, their kinds, and the x1/x2 split.

    ``split`` is the number of leading variables forming the x1 block.
    """

    names: tuple
    kinds: tuple
    split: int

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "kinds", tuple(self.kinds))
        if len(set(self.names)) != len(self.names):
            raise ExprError(f"duplicate variable names in {self.names}")
        if len(self.kinds) != len(self.names):
            raise ExprError("one kind per variable required")
        for k in self.kinds:
            if k not in (POLY, ANGLE):
                raise ExprError(f"unknown variable kind {k!r}")
        if not 0 <= self.split <= len(self.names):
            raise ExprError("split index out of range")
        for name in self.names:
            if not re.fullmatch(r"[A-Za-z_][A-Za-z_0-9]*", name) or name in ("sin", "cos"):
                raise ExprError(f"invalid variable name {name!r}")

    @classmethod
    def build(cls, names: Sequence[str], angles: Iterable[str] = (), split: int | None = None):
        angles = set(angles)
        unknown = angles - set(names)
        if unknown:
            raise ExprError(f"angle variables not in registry: {sorted(unknown)}")
        kinds = tuple(ANGLE if n in angles else POLY for n in names)
        return cls(tuple(names), kinds, len(names) if split is None else split)

    @property
    def n(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise ExprError(f"unknown variable {name!r}") from None

    def is_angle(self, i: int) -> bool:
        return self.kinds[i] == ANGLE

    @property
    def x2_positions(self) -> range:
        return range(self.split, self.n)

    def unit_key(self) -> tuple:
        return tuple((0, 0) if k == ANGLE else 0 for k in self.kinds)


def _mul_keys(k1: tuple, k2: tuple) -> list:
    """Product of two monomials as a list of (key, coefficient)."""
    out = [((), 1)]
    for p, q in zip(k1, k2):
        if isinstance(p, tuple):
            a, e = p[0] + q[0], p[1] + q[1]
            if e == 2:
                # sin^2 -> 1 - cos^2
                out = [(k + ((a, 0),), c) for k, c in out] + [
                    (k + ((a + 2, 0),), -c) for k, c in out
                ]
            else:
                out = [(k + ((a, e),), c) for k, c in out]
        else:
            out = [(k + (p + q,), c) for k, c in out]
    return out


class TrigPoly:
    """Immutable exact trig-polynomial over a :class:`VariableRegistry`."""

    __slots__ = ("registry", "_terms", "_hash")

    def __init__(self, registry: VariableRegistry, terms: Mapping | None = None):
        self.registry = registry
        clean = {}
        if terms:
            for k, c in terms.items():
                c = Fraction(c)
                if c != 0:
                    clean[k] = c
        self._terms = clean
        self._hash = None

    # construction helpers -------------------------------------------------
    @classmethod
    def zero(cls, registry: VariableRegistry) -> "TrigPoly":
        return cls(registry)

    @classmethod
    def const(cls, registry: VariableRegistry, value) -> "TrigPoly":
        return cls(registry, {registry.unit_key(): Fraction(value)})

    @classmethod
    def var(cls, registry: VariableRegistry, name: str) -> "TrigPoly":
        i = registry.index(name)
        if registry.is_angle(i):
            raise ExprError(f"angle variable {name!r} may only appear inside sin/cos")
        key = list(registry.unit_key())
        key[i] = 1
        return cls(registry, {tuple(key): Fraction(1)})

    @classmethod
    def trig(cls, registry: VariableRegistry, func: str, name: str) -> "TrigPoly":
        i = registry.index(name)
        if not registry.is_angle(i):
            raise ExprError(f"{func}() applied to non-angle variable {name!r}")
        key = list(registry.unit_key())
        key[i] = (1, 0) if func == "cos" else (0, 1)
        return cls(registry, {tuple(key): Fraction(1)})

    # basic protocol --------------------------------------------------------
    @property
    def terms(self) -> Mapping:
        return MappingProxyType(self._terms)

    def is_zero(self) -> bool:
        return not self._terms

    def __bool__(self) -> bool:
        return bool(self._terms)

    def __eq__(self, other) -> bool:
        if isinstance(other, (int, Fraction)):
            other = TrigPoly.const(self.registry, other)
        if not isinstance(other, TrigPoly):
            return NotImplemented
        return self.registry == other.registry and self._terms == other._terms

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash((self.registry, frozenset(self._terms.items())))
        return self._hash

    def _coerce(self, other) -> "TrigPoly":
        if isinstance(other, TrigPoly):
            if other.registry != self.registry:
                raise ExprError("mismatched registries")
            return other
        if isinstance(other, (int, Fraction)):
            return TrigPoly.const(self.registry, other)
        raise TypeError(f"cannot combine TrigPoly with {type(other).__name__}")

    # ring operations -------------------------------------------------------
    def __add__(self, other) -> "TrigPoly":
        other = self._coerce(other)
        out = dict(self._terms)
        for k, c in other._terms.items():
            out[k] = out.get(k, 0) + c
        return TrigPoly(self.registry, out)

    __radd__ = __add__

    def __neg__(self) -> "TrigPoly":
        return TrigPoly(self.registry, {k: -c for k, c in self._terms.items()})

    def __sub__(self, other) -> "TrigPoly":
        return self + (-self._coerce(other))

    def __rsub__(self, other) -> "TrigPoly":
        return self._coerce(other) - self

    def __mul__(self, other) -> "TrigPoly":
        if isinstance(other, (int, Fraction)):
            return TrigPoly(self.registry, {k: c * other for k, c in self._terms.items()})
        other = self._coerce(other)
        out: dict = {}
        for k1, c1 in self._terms.items():
            for k2, c2 in other._terms.items():
                for k, c in _mul_keys(k1, k2):
                    out[k] = out.get(k, 0) + c * c1 * c2
        return TrigPoly(self.registry, out)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "TrigPoly":
        if not isinstance(other, (int, Fraction)) or other == 0:
            raise ExprError("TrigPoly can only be divided by a nonzero rational")
        return self * (Fraction(1) / Fraction(other))

    def __pow__(self, k: int) -> "TrigPoly":
        if not isinstance(k, int) or isinstance(k, bool):
            raise ExprError("exponent must be an integer")
        if k < 0:
            raise ExprError("negative exponent")
        result = TrigPoly.const(self.registry, 1)
        base = self
        while k:
            if k & 1:
                result = result * base
            k >>= 1
            if k:
                base = base * base
        return result

    # calculus --------------------------------------------------------------
    def diff(self, name: str) -> "TrigPoly":
        i = self.registry.index(name)
        out: dict = {}
        for k, c in self._terms.items():
            p = k[i]
            if isinstance(p, tuple):
                a, e = p
                pieces = []
                if e == 0:
                    if a:
                        pieces.append(((a - 1, 1), -a))
                else:
                    # d(cos^a sin) = -a cos^(a-1) + (a+1) cos^(a+1)
                    if a:
                        pieces.append(((a - 1, 0), -a))
                    pieces.append(((a + 1, 0), a + 1))
                for q, m in pieces:
                    nk = k[:i] + (q,) + k[i + 1:]
                    out[nk] = out.get(nk, 0) + c * m
            elif p:
                nk = k[:i] + (p - 1,) + k[i + 1:]
                out[nk] = out.get(nk, 0) + c * p
        return TrigPoly(self.registry, out)

    # structure -------------------------------------------------------------
    def degree_in(self, positions: Iterable[int]) -> int:
        """Total degree in the given polynomial positions; -1 for zero."""
        positions = list(positions)
        for i in positions:
            if self.registry.is_angle(i):
                raise ExprError(f"degree requested in angle variable {self.registry.names[i]!r}")
        if not self._terms:
            return -1
        return max(sum(k[i] for i in positions) for k in self._terms)

    def depends_on(self, name: str) -> bool:
        i = self.registry.index(name)
        unit = (0, 0) if self.registry.is_angle(i) else 0
        return any(k[i] != unit for k in self._terms)

    def constant_value(self) -> Fraction | None:
        """The value if this is a constant polynomial, else None."""
        unit = self.registry.unit_key()
        if not self._terms:
            return Fraction(0)
        if len(self._terms) == 1 and unit in self._terms:
            return self._terms[unit]
        return None

    def substitute(self, target: VariableRegistry, mapping: Mapping[str, "TrigPoly | str"]) -> "TrigPoly":
        """Rewrite over ``target``.

        Polynomial variables map to TrigPolys over ``target``; angle variables
        map to the name of an angle variable of ``target``.  Variables absent
        from ``mapping`` are carried over by name.
        """
        reg = self.registry
        images = []
        for i, name in enumerate(reg.names):
            img = mapping.get(name, name)
            if reg.is_angle(i):
                if not isinstance(img, str):
                    raise ExprError(f"angle variable {name!r} must map to an angle variable name")
                j = target.index(img)
                if not target.is_angle(j):
                    raise ExprError(f"{img!r} is not an angle variable of the target registry")
                images.append(j)
            else:
                if isinstance(img, str):
                    img = TrigPoly.var(target, img)
                elif img.registry != target:
                    raise ExprError(f"image of {name!r} lives over a different registry")
                images.append(img)
        out = TrigPoly.zero(target)
        power_cache: dict = {}
        for k, c in self._terms.items():
            term = TrigPoly.const(target, c)
            for i, p in enumerate(k):
                if reg.is_angle(i):
                    a, e = p
                    if a or e:
                        key = list(target.unit_key())
                        key[images[i]] = (a, e)
                        term = term * TrigPoly(target, {tuple(key): 1})
                elif p:
                    if (i, p) not in power_cache:
                        power_cache[(i, p)] = images[i] ** p
                    term = term * power_cache[(i, p)]
            out = out + term
        return out

    # evaluation ------------------------------------------------------------
    def evaluate(self, point: Mapping[str, object]):
        """Evaluate at ``point`` (variable name -> value).

        Angle values are either a ``(cos, sin)`` pair, used as given, or a
        float angle in radians.  With rational inputs and rational-pair angles
        the result is an exact :class:`Fraction`; any float input makes the
        whole computation IEEE double.
        """
        reg = self.registry
        values = []
        for i, name in enumerate(reg.names):
            if name not in point:
                raise ExprError(f"missing assignment for {name!r}")
            values.append(_angle_pair(point[name]) if reg.is_angle(i) else _number(point[name]))
        return self._eval_values(values)

    def evaluate_at(self, values: Sequence):
        """Positional variant of :meth:`evaluate`."""
        reg = self.registry
        if len(values) != reg.n:
            raise ExprError(f"expected {reg.n} values, got {len(values)}")
        vals = [_angle_pair(v) if reg.is_angle(i) else _number(v) for i, v in enumerate(values)]
        return self._eval_values(vals)

    def _eval_values(self, vals):
        total = Fraction(0)
        for k, c in self._terms.items():
            t = c
            for p, v in zip(k, vals):
                if isinstance(p, tuple):
                    a, e = p
                    if a:
                        t = t * v[0] ** a
                    if e:
                        t = t * v[1]
                elif p:
                    t = t * v ** p
            total = total + t
        return total

    # printing ----------------------------------------------------------------
    def sorted_terms(self) -> list:
        reg = self.registry
        poly_pos = [i for i in range(reg.n) if not reg.is_angle(i)]
        ang_pos = [i for i in range(reg.n) if reg.is_angle(i)]

        def order(item):
            k = item[0]
            return tuple(k[i] for i in poly_pos) + tuple(k[i] for i in ang_pos)

        return sorted(self._terms.items(), key=order, reverse=True)

    def __str__(self) -> str:
        if not self._terms:
            return "0"
        reg = self.registry
        parts = []
        for idx, (k, c) in enumerate(self.sorted_terms()):
            factors = []
            for i, p in enumerate(k):
                name = reg.names[i]
                if isinstance(p, tuple):
                    a, e = p
                    if a:
                        factors.append(f"cos({name})" + (f"^{a}" if a > 1 else ""))
                    if e:
                        factors.append(f"sin({name})")
                elif p:
                    factors.append(name + (f"^{p}" if p > 1 else ""))
            mag = abs(c)
            if factors and mag == 1:
                body = "*".join(factors)
                # "-x^2" would parse as (-x)^2, so a leading minus keeps an explicit 1
                lead_body = "1*" + body
            else:
                body = "*".join([_fmt_rational(mag)] + factors)
                lead_body = body
            if idx == 0:
                parts.append(("-" + lead_body) if c < 0 else body)
            else:
                parts.append((" - " if c < 0 else " + ") + body)
        return "".join(parts)

    def __repr__(self) -> str:
        return f"TrigPoly({str(self)!r})"

    # numerics ----------------------------------------------------------------
    def to_source(self, values: Sequence[str], cos_names: Mapping[int, str], sin_names: Mapping[int, str]) -> str:
        if not self._terms:
            return "0.0"
        pieces = []
        for k, c in self.sorted_terms():
            f = [repr(float(c))]
            for i, p in enumerate(k):
                if isinstance(p, tuple):
                    a, e = p
                    if a:
                        f.append(cos_names[i] if a == 1 else f"{cos_names[i]}**{a}")
                    if e:
                        f.append(sin_names[i])
                elif p:
                    f.append(values[i] if p == 1 else f"{values[i]}**{p}")
            pieces.append("*".join(f))
        return " + ".join(pieces)


def _fmt_rational(c: Fraction) -> str:
    return str(c.numerator) if c.denominator == 1 else f"{c.numerator}/{c.denominator}"


def _number(v):
    if isinstance(v, (int, Fraction)) and not isinstance(v, bool):
        return v
    if isinstance(v, (float, np.floating)):
        return float(v)
    if isinstance(v, str):
        return Fraction(v)
    raise ExprError(f"cannot use {v!r} as a numeric value")


def _angle_pair(v):
    if isinstance(v, (tuple, list)) and len(v) == 2:
        return (_number(v[0]), _number(v[1]))
    v = float(_number(v))
    return (math.cos(v), math.sin(v))


def compile_polys(polys: Sequence[TrigPoly]) -> Callable[[Sequence[float]], list]:
    """Compile TrigPolys sharing one registry into a fast float function.

    The returned callable takes a positional state (angles in radians) and
    returns a list of floats, one per polynomial.
    """
    if not polys:
        return lambda x: []
    reg = polys[0].registry
    for p in polys:
        if p.registry != reg:
            raise ExprError("mismatched registries")
    values = [f"x{i}" for i in range(reg.n)]
    cos_names = {i: f"c{i}" for i in range(reg.n) if reg.is_angle(i)}
    sin_names = {i: f"s{i}" for i in range(reg.n) if reg.is_angle(i)}
    lines = ["def _compiled(x):"]
    if reg.n:
        lines.append(f"    {', '.join(values)}{',' if reg.n == 1 else ''} = x")
    for i in cos_names:
        lines.append(f"    c{i} = _cos(x{i}); s{i} = _sin(x{i})")
    body = ", ".join(p.to_source(values, cos_names, sin_names) for p in polys)
    lines.append(f"    return [{body}]")
    namespace = {"_cos": math.cos, "_sin": math.sin}
    exec("\n".join(lines), namespace)  # noqa: S102 - generated from exact terms only
    return namespace["_compiled"]


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

_TOKEN = re.compile(r"\s*(?:(\d+)|([A-Za-z_][A-Za-z_0-9]*)|(.))")


def _tokenize(text: str) -> list:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:  # trailing whitespace
            break
        start = m.start(m.lastindex) if m.lastindex else m.end()
        if m.group(1) is not None:
            tokens.append(("int", int(m.group(1)), start))
        elif m.group(2) is not None:
            tokens.append(("name", m.group(2), start))
        elif m.group(3) is not None:
            ch = m.group(3)
            if ch not in "+-*^/().":
                raise ParseError(f"unexpected character {ch!r}", start, text)
            tokens.append(("op", ch, start))
        pos = m.end()
    tokens.append(("end", None, len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, registry: VariableRegistry):
        self.text = text
        self.reg = registry
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, kind, value=None):
        tok = self.take()
        if tok[0] != kind or (value is not None and tok[1] != value):
            want = value if value is not None else kind
            got = tok[1] if tok[0] != "end" else "end of input"
            raise ParseError(f"expected {want!r}, got {got!r}", tok[2], self.text)
        return tok

    def error(self, msg, tok):
        return ParseError(msg, tok[2], self.text)

    def parse(self) -> TrigPoly:
        result = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            raise self.error(f"unexpected token {tok[1]!r}", tok)
        return result

    def expr(self) -> TrigPoly:
        result = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.take()[1]
            rhs = self.term()
            result = result + rhs if op == "+" else result - rhs
        return result

    def term(self) -> TrigPoly:
        result = self.factor()
        while self.peek()[0] == "op" and self.peek()[1] == "*":
            self.take()
            result = result * self.factor()
        return result

    def factor(self) -> TrigPoly:
        base = self.base()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            tok = self.peek()
            if tok[0] != "int":
                raise self.error("exponent must be a non-negative integer", tok)
            self.take()
            nxt = self.peek()
            if nxt[0] == "op" and nxt[1] in "/.":
                raise self.error("exponent must be an integer", nxt)
            return base ** tok[1]
        return base

    def base(self) -> TrigPoly:
        tok = self.peek()
        if tok[0] == "int":
            self.take()
            value = Fraction(tok[1])
            if self.peek()[0] == "op" and self.peek()[1] == "/":
                self.take()
                den = self.peek()
                if den[0] != "int" or den[1] == 0:
                    raise self.error("denominator must be a positive integer", den)
                self.take()
                value = value / den[1]
            return TrigPoly.const(self.reg, value)
        if tok[0] == "name":
            self.take()
            name = tok[1]
            if name in ("sin", "cos"):
                self.expect("op", "(")
                arg = self.expect("name")
                if arg[1] not in self.reg.names:
                    raise self.error(f"unknown variable {arg[1]!r}", arg)
                if not self.reg.is_angle(self.reg.index(arg[1])):
                    raise self.error(f"{name}() applied to non-angle variable {arg[1]!r}", arg)
                self.expect("op", ")")
                return TrigPoly.trig(self.reg, name, arg[1])
            if name not in self.reg.names:
                raise self.error(f"unknown variable {name!r}", tok)
            if self.reg.is_angle(self.reg.index(name)):
                raise self.error(f"angle variable {name!r} may only appear inside sin/cos", tok)
            return TrigPoly.var(self.reg, name)
        if tok[0] == "op" and tok[1] == "(":
            self.take()
            inner = self.expr()
            self.expect("op", ")")
            return inner
        if tok[0] == "op" and tok[1] == "-":
            self.take()
            return -self.base()
        if tok[0] == "end":
            raise self.error("unexpected end of input", tok)
        if tok[0] == "op" and tok[1] == ".":
            raise self.error("decimal literals are not supported; use a rational like 3/2", tok)
        raise self.error(f"unexpected token {tok[1]!r}", tok)


def parse_expr(text: str, registry: VariableRegistry) -> TrigPoly:
    """Parse ``text`` into a canonical :class:`TrigPoly`.

    Grammar::

        expr   := term (('+'|'-') term)*
        term   := factor ('*' factor)*
        factor := base ('^' integer)?
        base   := rational | var | 'sin' '(' var ')' | 'cos' '(' var ')'
                | '(' expr ')' | '-' base
        rational := integer ('/' positive-integer)?

    Unary minus sits inside ``base``, so ``-x^2`` reads as ``(-x)^2``.
    """
    return _Parser(text, registry).parse()


def partial_derivative(p: TrigPoly, var: str) -> TrigPoly:
    return p.diff(var)
