"""Craig interpolation from case-split proof trees.

At every infeasible leaf the Farkas certificate splits into an a-side and a
b-side weighted sum: P_A is ``s.x <= c_A`` (strict when a strict a-atom
carries weight), P_B is the mirror sum with ``s_A = -s_B``, and the total
constant ``b = c_A + c_B`` is negative (or zero with strictness).  The
theory-level interpolant families all read off these two sums:

    F          the single atom P_A
    F'         the negation of P_B, i.e. s.x <(=) c_A - b
    factor(q)  s.x <= c_A - q*b, sliding from F (q=0) to F' (q=1)
    DF         a conjunction of partial a-side sums, grouped so every group
               cancels the a-local variables (those not shared with b);
               rows already over shared variables stay singleton groups
    DF'        the negation of DF applied to the b side: a disjunction

Leaf interpolants combine over the proof tree: a split on a b-part
disjunction takes the conjunction of its children's interpolants, a split
on an a-part disjunction the disjunction.  The dual propositional mode
swaps the roles of the two parts, applies the dual theory family, and
negates the result.

Every produced interpolant satisfies the Craig contract -- the a-part
implies it, it is jointly unsatisfiable with the b-part, and it mentions
only shared variables -- which :func:`interpolate` can machine-check.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Optional, Union

from .encoding import PartitionedSystem
from .formula import (FALSE, TRUE, Formula, conj, disj, make_atom, negate,
                      variables)
from .search import (AtomInfo, Leaf, ProofTree, SolveResult, Split,
                     solve, check_formula)
from .simplex import FarkasCertificate, oriented


class InterpolationError(RuntimeError):
    """The produced formula violates the Craig contract (internal bug)."""


class SatError(RuntimeError):
    """Interpolation was asked for a satisfiable conjunction."""

    def __init__(self, model):
        super().__init__("a_part and b_part are jointly satisfiable")
        self.model = model


@dataclass(frozen=True)
class TheoryAlgo:
    kind: str  # "DF" | "F" | "factor" | "F'" | "DF'"
    q: Optional[Fraction] = None

    def dual(self) -> "TheoryAlgo":
        if self.kind == "factor":
            return TheoryAlgo("factor", 1 - self.q)
        return TheoryAlgo({"DF": "DF'", "F": "F'",
                           "F'": "F", "DF'": "DF"}[self.kind])


@dataclass(frozen=True)
class ItpAlgo:
    theory: TheoryAlgo
    propositional: str  # "M" | "M'"


PRESETS: dict[str, ItpAlgo] = {
    "stronger": ItpAlgo(TheoryAlgo("DF"), "M"),
    "strong": ItpAlgo(TheoryAlgo("F"), "M"),
    "mid": ItpAlgo(TheoryAlgo("factor", Fraction(1, 2)), "M"),
    "weak": ItpAlgo(TheoryAlgo("F'"), "M"),
    "weaker": ItpAlgo(TheoryAlgo("DF'"), "M'"),
}


def parse_preset(name: str) -> ItpAlgo:
    """Preset name or factor:<q> with q a rational in [0, 1]."""
    if name in PRESETS:
        return PRESETS[name]
    if name.startswith("factor:"):
        try:
            q = Fraction(name.split(":", 1)[1])
        except (ValueError, ZeroDivisionError) as exc:
            raise ValueError(f"bad factor in {name!r}") from exc
        if not 0 <= q <= 1:
            raise ValueError(f"factor {q} outside [0, 1]")
        return ItpAlgo(TheoryAlgo("factor", q), "M")
    raise ValueError(f"unknown interpolation preset {name!r}")


@dataclass
class _Side:
    """One side's multiplier-weighted atoms from a certificate."""

    coeffs: dict[str, Fraction]
    const: Fraction
    strict: bool
    rows: list[tuple[str, dict[str, Fraction], Fraction, str, Fraction]]
    # rows: (atom_id, oriented coeffs, oriented const, oriented rel, weight)


def _sum_side(cert: FarkasCertificate,
              atom_info: Mapping[str, AtomInfo], origin: str) -> _Side:
    total: dict[str, Fraction] = {}
    const = Fraction(0)
    strict = False
    rows = []
    for atom_id, mult in cert.multipliers.items():
        if mult == 0 or atom_info[atom_id].origin != origin:
            continue
        atom = atom_info[atom_id].atom
        coeffs, c, rel = oriented(atom)
        if atom.rel == "=":
            rel = "="
        rows.append((atom_id, coeffs, c, rel, mult))
        for var, coeff in coeffs.items():
            val = total.get(var, Fraction(0)) + mult * coeff
            if val:
                total[var] = val
            else:
                total.pop(var, None)
        const += mult * c
        if rel == "<" and mult > 0:
            strict = True
    return _Side(total, const, strict, rows)


def _decompose(side: _Side, local_vars: set[str]) -> Formula:
    """Conjunction of partial sums, each canceling the local variables.

    Rows over shared variables only form singleton groups; the remaining
    rows are grouped by connected components of shared local variables
    (each local variable occurs in exactly one component, so component
    sums cancel it just like the full sum does).
    """
    singletons = []
    rest = []
    for row in side.rows:
        if local_vars & set(row[1]):
            rest.append(row)
        else:
            singletons.append([row])
    groups = list(singletons)
    if rest:
        parent = list(range(len(rest)))

        def find(i):
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        var_owner: dict[str, int] = {}
        for i, row in enumerate(rest):
            for var in row[1]:
                if var not in local_vars:
                    continue
                if var in var_owner:
                    ri, rj = find(var_owner[var]), find(i)
                    if ri != rj:
                        parent[rj] = ri
                else:
                    var_owner[var] = i
        components: dict[int, list] = {}
        for i, row in enumerate(rest):
            components.setdefault(find(i), []).append(row)
        groups.extend(components[k] for k in sorted(components))
    parts = []
    for group in groups:
        coeffs: dict[str, Fraction] = {}
        const = Fraction(0)
        all_eq = True
        strict = False
        for _, row_coeffs, row_const, rel, mult in group:
            for var, coeff in row_coeffs.items():
                val = coeffs.get(var, Fraction(0)) + mult * coeff
                if val:
                    coeffs[var] = val
                else:
                    coeffs.pop(var, None)
            const += mult * row_const
            if rel != "=":
                all_eq = False
            if rel == "<" and mult > 0:
                strict = True
        if all_eq:
            rel = "="
        else:
            rel = "<" if strict else "<="
        parts.append(make_atom(coeffs, rel, const))
    return conj(parts)


def theory_itp(cert: FarkasCertificate,
               atom_info: Mapping[str, AtomInfo],
               theory: TheoryAlgo,
               a_vars: set[str], b_vars: set[str]) -> Formula:
    """Leaf interpolant of the requested strength from one certificate."""
    side_a = _sum_side(cert, atom_info, "A")
    side_b = _sum_side(cert, atom_info, "B")
    b_total = side_a.const + side_b.const

    def farkas() -> Formula:
        return make_atom(side_a.coeffs, "<" if side_a.strict else "<=",
                         side_a.const)

    def dual_farkas() -> Formula:
        # negate(P_B): flips both the sum and the strictness of the b side
        coeffs = {v: -c for v, c in side_b.coeffs.items()}
        return make_atom(coeffs, "<=" if side_b.strict else "<",
                         -side_b.const)

    kind = theory.kind
    if kind == "F":
        return farkas()
    if kind == "F'":
        return dual_farkas()
    if kind == "factor":
        q = theory.q
        if q == 0:
            return farkas()
        if q == 1:
            return dual_farkas()
        # strict only when needed: b == 0 with a non-strict b side forces
        # a strict atom (the a side is then strict by the contradiction)
        rel = "<" if (b_total == 0 and not side_b.strict) else "<="
        return make_atom(side_a.coeffs, rel, side_a.const - q * b_total)
    if kind == "DF":
        return _decompose(side_a, {v for r in side_a.rows for v in r[1]}
                          - b_vars)
    if kind == "DF'":
        dec = _decompose(side_b, {v for r in side_b.rows for v in r[1]}
                         - a_vars)
        return negate(dec)
    raise ValueError(f"unknown theory algorithm {kind!r}")


def combine(tree: ProofTree, result: SolveResult, algo: ItpAlgo,
            a_vars: set[str], b_vars: set[str],
            _swapped: bool = False) -> Formula:
    """Propositional combination of leaf interpolants over the proof tree.

    Mode M conjoins over b-part splits and disjoins over a-part splits.
    Mode M' is the dual: swap the roles of the parts, use the dual theory
    family, and negate the outcome.
    """
    if algo.propositional == "M'":
        inner = combine(tree, result, ItpAlgo(algo.theory.dual(), "M"),
                        b_vars, a_vars, _swapped=not _swapped)
        return negate(inner)

    atom_info = result.atom_info
    if _swapped:
        atom_info = {
            atom_id: AtomInfo(info.atom,
                              "B" if info.origin == "A" else "A", info.label)
            for atom_id, info in atom_info.items()}

    def role(origin: str) -> str:
        if not _swapped:
            return origin
        return "B" if origin == "A" else "A"

    def walk(node: ProofTree) -> Formula:
        if isinstance(node, Leaf):
            if node.false_label is not None:
                # the constant-false conjunct always sits in the original
                # a-part; under swapping it plays the b role
                return TRUE if _swapped else FALSE
            return theory_itp(node.certificate, atom_info,
                              algo.theory, a_vars, b_vars)
        children = [walk(c) for c in node.children]
        if role(node.origin) == "B":
            return conj(children)
        return disj(children)

    return walk(tree)


def interpolate_system(system: PartitionedSystem, algo: Union[ItpAlgo, str],
                       deadline: Optional[float] = None,
                       verify: bool = True
                       ) -> tuple[Formula, SolveResult]:
    """Solve the system and interpolate its refutation.

    Raises SatError (with the model) when the parts are jointly
    satisfiable.  With ``verify`` the Craig contract is machine-checked:
    vocabulary containment plus two unsatisfiability queries.
    """
    if isinstance(algo, str):
        algo = parse_preset(algo)
    result = solve(system, deadline=deadline)
    if result.is_sat:
        raise SatError(result.model)
    a_vars = variables(system.a_part)
    b_vars = variables(system.b_part)
    itp = combine(result.tree, result, algo, a_vars, b_vars)
    if verify:
        check_contract(system, itp, deadline=deadline)
    return itp, result


def interpolate(a_part: Formula, b_part: Formula,
                algo: Union[ItpAlgo, str],
                deadline: Optional[float] = None,
                verify: bool = True) -> Formula:
    """Craig interpolant for an unsatisfiable conjunction a AND b."""
    system = PartitionedSystem(a_part, b_part,
                               tuple(sorted(variables(a_part)
                                            | variables(b_part))),
                               frozenset(), "", None)
    itp, _ = interpolate_system(system, algo, deadline=deadline,
                                verify=verify)
    return itp


def check_contract(system: PartitionedSystem, itp: Formula,
                   deadline: Optional[float] = None) -> None:
    """Assert the Craig contract for an interpolant; raises on violation."""
    shared = variables(system.a_part) & variables(system.b_part)
    extra = variables(itp) - shared
    if extra:
        raise InterpolationError(
            f"interpolant mentions non-shared variables {sorted(extra)}")
    if check_formula(conj([system.a_part, negate(itp)]),
                     deadline=deadline).is_sat:
        raise InterpolationError("a_part does not imply the interpolant")
    if solve(system.with_a_part(itp), deadline=deadline).is_sat:
        raise InterpolationError(
            "interpolant is satisfiable with the b_part")
