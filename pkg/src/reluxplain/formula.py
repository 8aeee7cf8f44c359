"""Quantifier-free linear real arithmetic formulas over named variables.

Formulas are immutable trees of linear atoms combined with conjunction and
disjunction.  All arithmetic is exact (``fractions.Fraction``); no floating
point enters through this module.  Atoms keep the relation they were written
with (all five of <=, <, =, >=, >) so that derived explanations print in
their natural orientation instead of a <=-only normal form.

The text format is a small s-expression grammar::

    formula  := atom | "(and" formula+ ")" | "(or" formula+ ")"
              | "true" | "false"
    atom     := "(" rel sum rational ")"
    sum      := "(+" item+ ")"
    item     := var | "(*" rational var ")"
    rel      := "<=" | "<" | "=" | ">=" | ">"

Rationals are printed as ``p/q`` or as a plain integer.  Atom coefficients
are scaled by their rational gcd when printing only; in-memory atoms keep
whatever scale produced them.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from math import gcd, lcm
from typing import Iterable, Mapping, Optional, Sequence, Union

Rational = Fraction

RELATIONS = ("<=", "<", "=", ">=", ">")

_NEGATED_REL = {"<=": ">", "<": ">=", ">=": "<", ">": "<="}


class FormulaError(ValueError):
    """Malformed formula, unknown variable, or bad operation argument."""


class FormulaParseError(FormulaError):
    """Syntax error while parsing formula text; carries the offset."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at offset {position})")
        self.position = position


_VAR_KEY_SPLIT = re.compile(r"(\d+)")


def var_key(name: str) -> tuple:
    """Sort key splitting digit runs so x2 orders before x10."""
    parts = _VAR_KEY_SPLIT.split(name)
    return tuple(int(p) if p.isdigit() else p for p in parts)


def _holds(lhs: Fraction, rel: str, rhs: Fraction) -> bool:
    if rel == "<=":
        return lhs <= rhs
    if rel == "<":
        return lhs < rhs
    if rel == "=":
        return lhs == rhs
    if rel == ">=":
        return lhs >= rhs
    if rel == ">":
        return lhs > rhs
    raise FormulaError(f"unknown relation {rel!r}")


@dataclass(frozen=True)
class Truth:
    """Constant formula; the two instances are TRUE and FALSE."""

    value: bool


TRUE = Truth(True)
FALSE = Truth(False)


@dataclass(frozen=True)
class Atom:
    """Linear constraint ``sum(coeff * var) rel const``.

    ``coeffs`` is sorted by variable and contains no zero coefficients;
    use :func:`make_atom` rather than the constructor so empty atoms fold
    to TRUE/FALSE.
    """

    coeffs: tuple[tuple[str, Fraction], ...]
    rel: str
    const: Fraction

    def coeff_map(self) -> dict[str, Fraction]:
        return dict(self.coeffs)

    def value(self, assignment: Mapping[str, Fraction]) -> Fraction:
        total = Fraction(0)
        for var, coeff in self.coeffs:
            if var not in assignment:
                raise FormulaError(f"unknown variable {var!r}")
            total += coeff * assignment[var]
        return total


@dataclass(frozen=True)
class And:
    """Conjunction; ``labels``, when present, names each top-level conjunct."""

    children: tuple["Formula", ...]
    labels: Optional[tuple[str, ...]] = None


@dataclass(frozen=True)
class Or:
    children: tuple["Formula", ...]


Formula = Union[Truth, Atom, And, Or]

LinearTerm = Mapping[str, Fraction]


def make_atom(coeffs: Union[LinearTerm, Iterable[tuple[str, Fraction]]],
              rel: str, const) -> Formula:
    """Build a canonical atom; folds to TRUE/FALSE when the term is empty."""
    if rel not in RELATIONS:
        raise FormulaError(f"unknown relation {rel!r}")
    if isinstance(coeffs, Mapping):
        items = [(v, Fraction(c)) for v, c in coeffs.items() if c != 0]
    else:
        items = [(v, Fraction(c)) for v, c in coeffs if c != 0]
    items.sort(key=lambda p: var_key(p[0]))
    names = [v for v, _ in items]
    if len(set(names)) != len(names):
        raise FormulaError("duplicate variable in atom term")
    const = Fraction(const)
    if not items:
        return TRUE if _holds(Fraction(0), rel, const) else FALSE
    return Atom(tuple(items), rel, const)


def conj(children: Iterable[Formula]) -> Formula:
    """Unlabeled conjunction; flattens nested Ands and folds constants."""
    flat: list[Formula] = []
    for child in children:
        if child is TRUE or child == TRUE:
            continue
        if child is FALSE or child == FALSE:
            return FALSE
        if isinstance(child, And) and child.labels is None:
            flat.extend(child.children)
        else:
            flat.append(child)
    if not flat:
        return TRUE
    if len(flat) == 1:
        return flat[0]
    return And(tuple(flat))


def labeled_conj(pairs: Sequence[tuple[str, Formula]]) -> Formula:
    """Conjunction with per-conjunct labels (kept for core tracking)."""
    kept: list[tuple[str, Formula]] = []
    seen: set[str] = set()
    for label, child in pairs:
        if label in seen:
            raise FormulaError(f"duplicate conjunct label {label!r}")
        seen.add(label)
        if child == TRUE:
            continue
        if child == FALSE:
            return FALSE
        kept.append((label, child))
    if not kept:
        return TRUE
    if len(kept) == 1:
        return kept[0][1]
    return And(tuple(c for _, c in kept), tuple(l for l, _ in kept))


def disj(children: Iterable[Formula]) -> Formula:
    flat: list[Formula] = []
    for child in children:
        if child == FALSE:
            continue
        if child == TRUE:
            return TRUE
        if isinstance(child, Or):
            flat.extend(child.children)
        else:
            flat.append(child)
    if not flat:
        return FALSE
    if len(flat) == 1:
        return flat[0]
    return Or(tuple(flat))


def top_conjuncts(f: Formula) -> list[tuple[Optional[str], Formula]]:
    """Top-level conjuncts with their labels (None when unlabeled)."""
    if f == TRUE:
        return []
    if isinstance(f, And):
        if f.labels is not None:
            return list(zip(f.labels, f.children))
        return [(None, c) for c in f.children]
    return [(None, f)]


def evaluate(f: Formula, assignment: Mapping[str, Fraction]) -> bool:
    """Exact truth value of ``f`` under a total variable assignment."""
    if isinstance(f, Truth):
        return f.value
    if isinstance(f, Atom):
        return _holds(f.value(assignment), f.rel, f.const)
    if isinstance(f, And):
        return all(evaluate(c, assignment) for c in f.children)
    if isinstance(f, Or):
        return any(evaluate(c, assignment) for c in f.children)
    raise FormulaError(f"not a formula: {f!r}")


def substitute(f: Formula, assignment: Mapping[str, Fraction]) -> Formula:
    """Replace variables by constants, folding atoms and collapsing nodes."""
    if not assignment:
        return f
    if isinstance(f, Truth):
        return f
    if isinstance(f, Atom):
        coeffs = {}
        const = f.const
        for var, coeff in f.coeffs:
            if var in assignment:
                const -= coeff * Fraction(assignment[var])
            else:
                coeffs[var] = coeff
        return make_atom(coeffs, f.rel, const)
    if isinstance(f, And):
        if f.labels is not None:
            return labeled_conj([(l, substitute(c, assignment))
                                 for l, c in zip(f.labels, f.children)])
        return conj(substitute(c, assignment) for c in f.children)
    if isinstance(f, Or):
        return disj(substitute(c, assignment) for c in f.children)
    raise FormulaError(f"not a formula: {f!r}")


def negate(f: Formula) -> Formula:
    """Negation pushed down to atoms; equalities split into strict halves."""
    if isinstance(f, Truth):
        return FALSE if f.value else TRUE
    if isinstance(f, Atom):
        if f.rel == "=":
            return disj([make_atom(f.coeffs, "<", f.const),
                         make_atom(f.coeffs, ">", f.const)])
        return make_atom(f.coeffs, _NEGATED_REL[f.rel], f.const)
    if isinstance(f, And):
        return disj(negate(c) for c in f.children)
    if isinstance(f, Or):
        return conj(negate(c) for c in f.children)
    raise FormulaError(f"not a formula: {f!r}")


def count_terms(f: Formula) -> int:
    """Number of atomic in/equalities in the tree."""
    if isinstance(f, Truth):
        return 0
    if isinstance(f, Atom):
        return 1
    return sum(count_terms(c) for c in f.children)


def variables(f: Formula) -> set[str]:
    if isinstance(f, Truth):
        return set()
    if isinstance(f, Atom):
        return {v for v, _ in f.coeffs}
    out: set[str] = set()
    for c in f.children:
        out |= variables(c)
    return out


# ---------------------------------------------------------------------------
# Printing


def format_rational(x: Fraction) -> str:
    return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


def _scale_gcd(values: Iterable[Fraction]) -> Fraction:
    num = 0
    den = 1
    for v in values:
        if v == 0:
            continue
        num = gcd(num, abs(v.numerator))
        den = lcm(den, v.denominator)
    return Fraction(num, den) if num else Fraction(1)


def normalize_atom(a: Atom) -> Atom:
    """Divide coefficients and constant by their positive rational gcd."""
    g = _scale_gcd([c for _, c in a.coeffs] + [a.const])
    if g == 1:
        return a
    return Atom(tuple((v, c / g) for v, c in a.coeffs), a.rel, a.const / g)


def format_formula(f: Formula) -> str:
    if isinstance(f, Truth):
        return "true" if f.value else "false"
    if isinstance(f, Atom):
        a = normalize_atom(f)
        items = []
        for var, coeff in a.coeffs:
            if coeff == 1:
                items.append(var)
            else:
                items.append(f"(* {format_rational(coeff)} {var})")
        return f"({a.rel} (+ {' '.join(items)}) {format_rational(a.const)})"
    if isinstance(f, And):
        return f"(and {' '.join(format_formula(c) for c in f.children)})"
    if isinstance(f, Or):
        return f"(or {' '.join(format_formula(c) for c in f.children)})"
    raise FormulaError(f"not a formula: {f!r}")


# ---------------------------------------------------------------------------
# Parsing

_TOKEN = re.compile(r"\s*(\(|\)|[^\s()]+)")
_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")
_RATIONAL = re.compile(r"-?\d+(/\d+)?\Z")


def parse_rational(text: str) -> Fraction:
    """Exact rational from 'p/q', integer, or decimal text."""
    return Fraction(text)


def _tokenize(text: str) -> list[tuple[str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            break
        tokens.append((m.group(1), m.start(1)))
        pos = m.end()
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.index = 0

    def error(self, message: str) -> FormulaParseError:
        pos = self.tokens[self.index][1] if self.index < len(self.tokens) else len(self.text)
        return FormulaParseError(message, pos)

    def peek(self) -> Optional[str]:
        return self.tokens[self.index][0] if self.index < len(self.tokens) else None

    def next(self) -> str:
        if self.index >= len(self.tokens):
            raise self.error("unexpected end of input")
        tok = self.tokens[self.index][0]
        self.index += 1
        return tok

    def expect(self, token: str) -> None:
        got = self.next()
        if got != token:
            self.index -= 1
            raise self.error(f"expected {token!r}, got {got!r}")

    def rational(self) -> Fraction:
        tok = self.next()
        if not _RATIONAL.match(tok):
            self.index -= 1
            raise self.error(f"expected rational, got {tok!r}")
        return Fraction(tok)

    def formula(self) -> Formula:
        tok = self.next()
        if tok == "true":
            return TRUE
        if tok == "false":
            return FALSE
        if tok != "(":
            self.index -= 1
            raise self.error(f"expected formula, got {tok!r}")
        head = self.next()
        if head in ("and", "or"):
            children = []
            while self.peek() != ")":
                children.append(self.formula())
            self.expect(")")
            if not children:
                self.index -= 1
                raise self.error(f"empty ({head})")
            return conj(children) if head == "and" else disj(children)
        if head in RELATIONS:
            coeffs = self.sum_()
            const = self.rational()
            self.expect(")")
            return make_atom(coeffs, head, const)
        self.index -= 1
        raise self.error(f"unknown operator {head!r}")

    def sum_(self) -> list[tuple[str, Fraction]]:
        self.expect("(")
        self.expect("+")
        items: list[tuple[str, Fraction]] = []
        while self.peek() != ")":
            items.append(self.item())
        self.expect(")")
        if not items:
            self.index -= 1
            raise self.error("empty sum")
        return items

    def item(self) -> tuple[str, Fraction]:
        tok = self.next()
        if tok == "(":
            self.expect("*")
            coeff = self.rational()
            var = self.next()
            if not _IDENT.match(var):
                self.index -= 1
                raise self.error(f"expected variable, got {var!r}")
            self.expect(")")
            return (var, coeff)
        if not _IDENT.match(tok):
            self.index -= 1
            raise self.error(f"expected sum item, got {tok!r}")
        return (tok, Fraction(1))


def parse_formula(text: str) -> Formula:
    parser = _Parser(text)
    f = parser.formula()
    if parser.index != len(parser.tokens):
        raise parser.error("trailing input after formula")
    return f
