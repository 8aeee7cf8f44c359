"""Exact feasibility checking for conjunctions of linear atoms.

The solver is a general simplex over bounds-on-variables in the style of
Dutertre and de Moura ("A Fast Linear-Arithmetic Solver for DPLL(T)",
CAV 2006).  Every asserted atom becomes a bound on a variable: single
variable atoms bound the variable directly, multi-variable atoms bound a
slack variable defined by the atom's (sign-normalized) term.  Strict
inequalities are handled with delta-rationals, pairs a + b*delta compared
lexicographically, where delta stands for an arbitrarily small positive
rational that is instantiated only when a concrete model is reported.

Feasible outcomes carry an exact rational model; infeasible outcomes carry
a Farkas certificate: multipliers over the asserted atoms whose weighted
sum cancels every variable and leaves a contradictory constant.  The
certificate can be replayed independently with :func:`certify`.

Pivot selection uses Bland's smallest-index rule, so the procedure
terminates on all inputs.  Assertions can be pushed and popped in stack
discipline, which is what the case-splitting search layer uses.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Optional, Sequence, Union

from .formula import Atom

_ZERO = Fraction(0)


class DeltaRational:
    """Rational plus a symbolic infinitesimal multiple: real + delta*d."""

    __slots__ = ("real", "delta")

    def __init__(self, real, delta=0):
        self.real = real if isinstance(real, Fraction) else Fraction(real)
        self.delta = delta if isinstance(delta, Fraction) else Fraction(delta)

    def __add__(self, other: "DeltaRational") -> "DeltaRational":
        return DeltaRational(self.real + other.real, self.delta + other.delta)

    def __sub__(self, other: "DeltaRational") -> "DeltaRational":
        return DeltaRational(self.real - other.real, self.delta - other.delta)

    def scaled(self, k: Fraction) -> "DeltaRational":
        return DeltaRational(self.real * k, self.delta * k)

    def _key(self):
        return (self.real, self.delta)

    def __eq__(self, other) -> bool:
        return isinstance(other, DeltaRational) and self._key() == other._key()

    def __lt__(self, other: "DeltaRational") -> bool:
        return self._key() < other._key()

    def __le__(self, other: "DeltaRational") -> bool:
        return self._key() <= other._key()

    def __gt__(self, other: "DeltaRational") -> bool:
        return self._key() > other._key()

    def __ge__(self, other: "DeltaRational") -> bool:
        return self._key() >= other._key()

    def __hash__(self):
        return hash(self._key())

    def at(self, delta_value: Fraction) -> Fraction:
        return self.real + self.delta * delta_value

    def __repr__(self):
        return f"DeltaRational({self.real!r}, {self.delta!r})"


@dataclass(frozen=True)
class FarkasCertificate:
    """Nonnegative multipliers (sign-free on equalities) proving infeasibility.

    Inequality atoms are taken in <=-orientation (>= and > are negated into
    <= and <); multiplying and summing the oriented atoms must cancel every
    variable and yield ``0 <= constant`` (or ``0 < constant`` when ``strict``),
    which is contradictory because ``constant < 0`` or it is 0 while strict.
    """

    multipliers: Mapping[str, Fraction]
    constant: Fraction
    strict: bool


@dataclass
class Feasible:
    model: dict[str, Fraction]


@dataclass
class Infeasible:
    certificate: FarkasCertificate


CheckResult = Union[Feasible, Infeasible]


def oriented(atom: Atom) -> tuple[dict[str, Fraction], Fraction, str]:
    """Atom as term <= / < / = const, with >= and > negated into <= form."""
    coeffs = atom.coeff_map()
    if atom.rel in ("<=", "<", "="):
        return coeffs, atom.const, atom.rel
    flipped = {v: -c for v, c in coeffs.items()}
    return flipped, -atom.const, "<=" if atom.rel == ">=" else "<"


def certify(cert: FarkasCertificate, atoms: Mapping[str, Atom]) -> bool:
    """Replay a certificate with direct exact arithmetic."""
    total: dict[str, Fraction] = {}
    constant = Fraction(0)
    strict = False
    for atom_id, mult in cert.multipliers.items():
        if atom_id not in atoms:
            return False
        atom = atoms[atom_id]
        if atom.rel != "=" and mult < 0:
            return False
        if mult == 0:
            continue
        coeffs, const, rel = oriented(atom)
        for var, coeff in coeffs.items():
            total[var] = total.get(var, _ZERO) + mult * coeff
        constant += mult * const
        if rel == "<":
            strict = True
    if any(v != 0 for v in total.values()):
        return False
    if constant != cert.constant or strict != cert.strict:
        return False
    return constant < 0 or (constant == 0 and strict)


@dataclass
class _Bound:
    value: DeltaRational
    atom_id: str
    cert_coeff: Fraction


class SimplexError(RuntimeError):
    pass


class Simplex:
    """Incremental exact simplex; single-use, single-threaded."""

    def __init__(self):
        self._var_order: dict[str, int] = {}
        self._vars: list[str] = []
        self._rows: dict[str, dict[str, Fraction]] = {}
        self._basic: set[str] = set()
        self._beta: dict[str, DeltaRational] = {}
        self._lower: dict[str, Optional[_Bound]] = {}
        self._upper: dict[str, Optional[_Bound]] = {}
        self._term_slack: dict[tuple, str] = {}
        self._atoms: dict[str, Atom] = {}
        self._trail: list[list[tuple]] = []
        self._slack_counter = itertools.count()

    # -- variables and rows -------------------------------------------------

    def _new_var(self, name: str) -> str:
        if name not in self._var_order:
            self._var_order[name] = len(self._vars)
            self._vars.append(name)
            self._beta[name] = DeltaRational(0)
            self._lower[name] = None
            self._upper[name] = None
        return name

    def _row_value(self, row: dict[str, Fraction]) -> DeltaRational:
        total = DeltaRational(0)
        for var, coeff in row.items():
            total = total + self._beta[var].scaled(coeff)
        return total

    def _canonical(self, atom: Atom) -> tuple[str, Fraction]:
        """Variable carrying the atom's bounds and the scale a0 with
        term = a0 * var (single-variable) or a0 * slack-term (multi)."""
        if len(atom.coeffs) == 1:
            var, coeff = atom.coeffs[0]
            self._new_var(var)
            return var, coeff
        a0 = atom.coeffs[0][1]
        key = tuple((v, c / a0) for v, c in atom.coeffs)
        slack = self._term_slack.get(key)
        if slack is None:
            slack = f"#s{next(self._slack_counter)}"
            self._term_slack[key] = slack
            self._new_var(slack)
            row: dict[str, Fraction] = {}
            for var, coeff in key:
                self._new_var(var)
                if var in self._basic:
                    for nb, c2 in self._rows[var].items():
                        row[nb] = row.get(nb, _ZERO) + coeff * c2
                        if row[nb] == 0:
                            del row[nb]
                else:
                    row[var] = row.get(var, _ZERO) + coeff
                    if row[var] == 0:
                        del row[var]
            self._rows[slack] = row
            self._basic.add(slack)
            self._beta[slack] = self._row_value(row)
        return slack, a0

    def register(self, atom: Atom) -> None:
        """Create the variables/row for an atom without asserting bounds."""
        self._canonical(atom)

    # -- assertion stack ----------------------------------------------------

    def push(self) -> None:
        self._trail.append([])

    def pop(self) -> None:
        for entry in reversed(self._trail.pop()):
            kind = entry[0]
            if kind == "bound":
                _, side, var, old = entry
                (self._lower if side == "lo" else self._upper)[var] = old
            else:  # asserted atom bookkeeping
                del self._atoms[entry[1]]

    def _record(self, entry: tuple) -> None:
        if self._trail:
            self._trail[-1].append(entry)

    def _set_bound(self, side: str, var: str, value: DeltaRational,
                   atom_id: str, cert_coeff: Fraction) -> None:
        table = self._lower if side == "lo" else self._upper
        cur = table[var]
        if cur is not None:
            if side == "lo" and value <= cur.value:
                return
            if side == "hi" and value >= cur.value:
                return
        self._record(("bound", side, var, cur))
        table[var] = _Bound(value, atom_id, cert_coeff)
        if var not in self._basic:
            beta = self._beta[var]
            if side == "lo" and beta < value:
                self._update(var, value)
            elif side == "hi" and beta > value:
                self._update(var, value)

    def assert_atom(self, atom_id: str, atom: Atom) -> None:
        if atom_id in self._atoms:
            raise SimplexError(f"atom id {atom_id!r} asserted twice")
        self._atoms[atom_id] = atom
        self._record(("atom", atom_id))
        var, a0 = self._canonical(atom)
        rel, const = atom.rel, atom.const
        bound = const / a0
        if rel == "=":
            self._set_bound("hi", var, DeltaRational(bound), atom_id,
                            Fraction(1) / a0)
            self._set_bound("lo", var, DeltaRational(bound), atom_id,
                            Fraction(-1) / a0)
            return
        strict = rel in ("<", ">")
        upper = (rel in ("<=", "<")) == (a0 > 0)
        coeff = Fraction(1) / abs(a0)
        if upper:
            value = DeltaRational(bound, -1 if strict else 0)
            self._set_bound("hi", var, value, atom_id, coeff)
        else:
            value = DeltaRational(bound, 1 if strict else 0)
            self._set_bound("lo", var, value, atom_id, coeff)

    # -- solving ------------------------------------------------------------

    def _update(self, var: str, value: DeltaRational) -> None:
        diff = value - self._beta[var]
        self._beta[var] = value
        for basic, row in self._rows.items():
            coeff = row.get(var)
            if coeff:
                self._beta[basic] = self._beta[basic] + diff.scaled(coeff)

    def _pivot_and_update(self, basic: str, nonbasic: str,
                          target: DeltaRational) -> None:
        row = self._rows.pop(basic)
        self._basic.discard(basic)
        a = row[nonbasic]
        theta = (target - self._beta[basic]).scaled(Fraction(1) / a)
        self._beta[basic] = target
        self._beta[nonbasic] = self._beta[nonbasic] + theta
        for other, orow in self._rows.items():
            coeff = orow.get(nonbasic)
            if coeff:
                self._beta[other] = self._beta[other] + theta.scaled(coeff)
        new_row = {basic: Fraction(1) / a}
        for var, coeff in row.items():
            if var != nonbasic:
                c = -coeff / a
                if c:
                    new_row[var] = c
        for other, orow in list(self._rows.items()):
            coeff = orow.pop(nonbasic, None)
            if coeff:
                for var, c2 in new_row.items():
                    val = orow.get(var, _ZERO) + coeff * c2
                    if val:
                        orow[var] = val
                    else:
                        orow.pop(var, None)
        self._rows[nonbasic] = new_row
        self._basic.add(nonbasic)

    def _bound_conflict(self) -> Optional[Infeasible]:
        for var in self._vars:
            lo, hi = self._lower[var], self._upper[var]
            if lo is not None and hi is not None and lo.value > hi.value:
                usages = [("lo", var, Fraction(1)), ("hi", var, Fraction(1))]
                return Infeasible(self._certificate(usages))
        return None

    def _certificate(self, usages: Sequence[tuple[str, str, Fraction]]
                     ) -> FarkasCertificate:
        mults: dict[str, Fraction] = {}
        for side, var, weight in usages:
            bound = (self._lower if side == "lo" else self._upper)[var]
            mults[bound.atom_id] = (mults.get(bound.atom_id, _ZERO)
                                    + weight * bound.cert_coeff)
        constant = Fraction(0)
        strict = False
        for atom_id, mult in mults.items():
            if mult == 0:
                continue
            atom = self._atoms[atom_id]
            _, const, rel = oriented(atom)
            constant += mult * const
            if rel == "<":
                strict = True
        return FarkasCertificate(dict(mults), constant, strict)

    def check(self) -> CheckResult:
        conflict = self._bound_conflict()
        if conflict is not None:
            return conflict
        order = self._var_order
        while True:
            violated = None
            direction = None
            for var in self._vars:
                if var not in self._basic:
                    continue
                beta = self._beta[var]
                lo, hi = self._lower[var], self._upper[var]
                if lo is not None and beta < lo.value:
                    violated, direction = var, "lo"
                    break
                if hi is not None and beta > hi.value:
                    violated, direction = var, "hi"
                    break
            if violated is None:
                return Feasible(self._model())
            row = self._rows[violated]
            candidates = sorted(row, key=order.__getitem__)
            pivot = None
            if direction == "lo":
                for var in candidates:
                    a = row[var]
                    hi = self._upper[var]
                    lo = self._lower[var]
                    if a > 0 and (hi is None or self._beta[var] < hi.value):
                        pivot = var
                        break
                    if a < 0 and (lo is None or self._beta[var] > lo.value):
                        pivot = var
                        break
                if pivot is None:
                    usages = [("lo", violated, Fraction(1))]
                    for var in candidates:
                        a = row[var]
                        usages.append(("hi", var, a) if a > 0
                                      else ("lo", var, -a))
                    return Infeasible(self._certificate(usages))
                self._pivot_and_update(violated, pivot,
                                       self._lower[violated].value)
            else:
                for var in candidates:
                    a = row[var]
                    hi = self._upper[var]
                    lo = self._lower[var]
                    if a < 0 and (hi is None or self._beta[var] < hi.value):
                        pivot = var
                        break
                    if a > 0 and (lo is None or self._beta[var] > lo.value):
                        pivot = var
                        break
                if pivot is None:
                    usages = [("hi", violated, Fraction(1))]
                    for var in candidates:
                        a = row[var]
                        usages.append(("lo", var, a) if a > 0
                                      else ("hi", var, -a))
                    return Infeasible(self._certificate(usages))
                self._pivot_and_update(violated, pivot,
                                       self._upper[violated].value)

    def _model(self) -> dict[str, Fraction]:
        structural = [v for v in self._vars if not v.startswith("#s")]
        if all(self._beta[v].delta == 0 for v in structural):
            return {v: self._beta[v].real for v in structural}
        atoms = list(self._atoms.values())
        for k in range(65):
            delta = Fraction(1, 2 ** k)
            model = {v: self._beta[v].at(delta) for v in structural}
            if all(_atom_holds(a, model) for a in atoms):
                return model
        raise AssertionError(
            "no delta in {1/2^k : k <= 64} satisfies all strict bounds")


def _atom_holds(atom: Atom, model: Mapping[str, Fraction]) -> bool:
    total = Fraction(0)
    for var, coeff in atom.coeffs:
        total += coeff * model[var]
    rel = atom.rel
    if rel == "<=":
        return total <= atom.const
    if rel == "<":
        return total < atom.const
    if rel == "=":
        return total == atom.const
    if rel == ">=":
        return total >= atom.const
    return total > atom.const


def lp_check(atoms: Sequence[tuple[str, Atom]]) -> CheckResult:
    """Feasibility of a conjunction of atoms; total on all linear inputs."""
    solver = Simplex()
    for _, atom in atoms:
        solver.register(atom)
    for atom_id, atom in atoms:
        solver.assert_atom(atom_id, atom)
    return solver.check()
