"""Satisfiability of partitioned systems with disjunctions.

Disjunctions (ReLU phase choices and formula-level ors) are explored by
depth-first case splitting over an incremental exact simplex; an LP check
after every split assignment prunes infeasible subtrees.  An unsatisfiable
run yields a proof tree whose leaves carry Farkas certificates and whose
internal nodes record which disjunction was split; interpolants and
unsatisfiable cores are both read off this tree.

Split order is fixed and syntactic: b-part disjunctions first (the encoder
emits ReLU choices by layer then neuron), then a-part disjunctions, nested
ones depth-first.  Atoms are asserted in a canonical content order so that
runs over the same atom multiset produce identical certificates no matter
how the atoms are distributed between the two parts.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Optional, Sequence, Union

from .encoding import PartitionedSystem, plain_system
from .formula import (FALSE, TRUE, And, Atom, Formula, Or, Truth,
                      format_formula, top_conjuncts, variables)
from .simplex import (FarkasCertificate, Feasible, Infeasible, Simplex,
                      certify)


class SolveTimeout(Exception):
    """Raised when a solve exceeds its wall-clock deadline."""


class InvalidSystemError(ValueError):
    pass


@dataclass(frozen=True)
class Leaf:
    """Infeasible branch: certificate over the atoms active on the branch.

    ``certificate`` is None only for the degenerate constant-false a-part,
    in which case ``false_label`` names the offending conjunct.
    """

    certificate: Optional[FarkasCertificate]
    active_ids: tuple[str, ...]
    false_label: Optional[str] = None


@dataclass(frozen=True)
class Split:
    disjunction_id: str
    origin: str  # "A" or "B"
    children: tuple["ProofTree", ...]


ProofTree = Union[Leaf, Split]


@dataclass
class Stats:
    lp_calls: int = 0
    splits: int = 0
    elapsed: float = 0.0


@dataclass(frozen=True)
class AtomInfo:
    atom: Atom
    origin: str  # "A" or "B"
    label: Optional[str]


@dataclass
class SolveResult:
    status: str  # "sat" | "unsat"
    model: Optional[dict[str, Fraction]] = None
    tree: Optional[ProofTree] = None
    atom_info: dict[str, AtomInfo] = field(default_factory=dict)
    disj_label: dict[str, Optional[str]] = field(default_factory=dict)
    stats: Stats = field(default_factory=Stats)

    @property
    def is_sat(self) -> bool:
        return self.status == "sat"


@dataclass
class _Disjunction:
    disj_id: str
    origin: str
    label: Optional[str]
    children: tuple[Formula, ...]


class _Collector:
    def __init__(self):
        self.counter = 0
        self.atom_info: dict[str, AtomInfo] = {}
        self.disj_label: dict[str, Optional[str]] = {}

    def flatten(self, f: Formula, origin: str, label: Optional[str]
                ) -> tuple[list[tuple[str, Atom]], list[_Disjunction], bool]:
        """Split a formula into atoms and disjunctions to case-split on.

        Returns (atoms, disjunctions, is_false).
        """
        atoms: list[tuple[str, Atom]] = []
        disjs: list[_Disjunction] = []
        stack = [f]
        while stack:
            node = stack.pop()
            if isinstance(node, Truth):
                if not node.value:
                    return [], [], True
                continue
            if isinstance(node, Atom):
                atom_id = f"@{origin.lower()}{self.counter}"
                self.counter += 1
                self.atom_info[atom_id] = AtomInfo(node, origin, label)
                atoms.append((atom_id, node))
                continue
            if isinstance(node, And):
                stack.extend(reversed(node.children))
                continue
            if isinstance(node, Or):
                disj_id = f"@{origin.lower()}_or{self.counter}"
                self.counter += 1
                self.disj_label[disj_id] = label
                disjs.append(_Disjunction(disj_id, origin, label,
                                          node.children))
                continue
            raise InvalidSystemError(f"not a formula: {node!r}")
        return atoms, disjs, False

def _collect_atoms(f: Formula, into: list[Atom]) -> None:
    stack = [f]
    while stack:
        node = stack.pop()
        if isinstance(node, Atom):
            into.append(node)
        elif isinstance(node, (And, Or)):
            stack.extend(node.children)


def _atom_key(atom: Atom):
    return (atom.coeffs, atom.rel, atom.const)


def solve(system: PartitionedSystem,
          deadline: Optional[float] = None) -> SolveResult:
    """Decide a_part AND b_part; Unsat results carry a full proof tree."""
    start = time.monotonic()
    stats = Stats()
    collector = _Collector()

    a_atoms: list[tuple[str, Atom]] = []
    a_disjs: list[_Disjunction] = []
    for label, child in _labeled_conjuncts(system.a_part):
        atoms, disjs, is_false = collector.flatten(child, "A", label)
        if is_false:
            tree = Leaf(None, (), false_label=label)
            stats.elapsed = time.monotonic() - start
            return SolveResult("unsat", tree=tree,
                               atom_info=collector.atom_info,
                               disj_label=collector.disj_label, stats=stats)
        a_atoms.extend(atoms)
        a_disjs.extend(disjs)

    b_atoms, b_disjs, b_false = collector.flatten(system.b_part, "B", None)
    if b_false:
        raise InvalidSystemError("b_part is constant false")

    # Register every atom of both parts in one canonical batch so that the
    # variable creation order (and hence Bland pivoting) depends only on the
    # atom multiset, not on how atoms are distributed between the parts.
    solver = Simplex()
    all_atoms: list[Atom] = []
    _collect_atoms(system.a_part, all_atoms)
    _collect_atoms(system.b_part, all_atoms)
    for atom in sorted(all_atoms, key=_atom_key):
        solver.register(atom)

    top_atoms = sorted(a_atoms + b_atoms, key=lambda p: _atom_key(p[1]))
    active: list[str] = []
    for atom_id, atom in top_atoms:
        solver.assert_atom(atom_id, atom)
        active.append(atom_id)

    pending = b_disjs + a_disjs

    def dfs(pending: Sequence[_Disjunction]) -> Union[Leaf, Split, Feasible]:
        if deadline is not None and time.monotonic() > deadline:
            raise SolveTimeout()
        stats.lp_calls += 1
        outcome = solver.check()
        if isinstance(outcome, Infeasible):
            return Leaf(outcome.certificate, tuple(active))
        if not pending:
            return outcome
        disj = pending[0]
        rest = pending[1:]
        stats.splits += 1
        children: list[ProofTree] = []
        for branch in disj.children:
            atoms, nested, is_false = collector.flatten(
                branch, disj.origin, disj.label)
            if is_false:
                raise InvalidSystemError(
                    "constant false inside a disjunction; normalize first")
            solver.push()
            mark = len(active)
            for atom_id, atom in sorted(atoms, key=lambda p: _atom_key(p[1])):
                solver.assert_atom(atom_id, atom)
                active.append(atom_id)
            sub = dfs(list(nested) + list(rest))
            del active[mark:]
            solver.pop()
            if isinstance(sub, Feasible):
                return sub
            children.append(sub)
        return Split(disj.disj_id, disj.origin, tuple(children))

    outcome = dfs(pending)
    stats.elapsed = time.monotonic() - start
    if isinstance(outcome, Feasible):
        model = {v: val for v, val in outcome.model.items()
                 if v not in system.auxiliary}
        return SolveResult("sat", model=model,
                           atom_info=collector.atom_info,
                           disj_label=collector.disj_label, stats=stats)
    return SolveResult("unsat", tree=outcome,
                       atom_info=collector.atom_info,
                       disj_label=collector.disj_label, stats=stats)


def _labeled_conjuncts(f: Formula) -> list[tuple[Optional[str], Formula]]:
    pairs = top_conjuncts(f)
    out = []
    for index, (label, child) in enumerate(pairs):
        out.append((label if label is not None else f"a{index}", child))
    return out


def check_formula(f: Formula,
                  deadline: Optional[float] = None) -> SolveResult:
    """Plain satisfiability of a single formula."""
    return solve(plain_system(f), deadline=deadline)


def core_labels(tree: ProofTree, result: SolveResult) -> set[str]:
    """Labels of a-part conjuncts engaged by the proof.

    A conjunct is engaged when one of its atoms carries a nonzero Farkas
    multiplier in some leaf, or when the proof splits one of its
    disjunctions.  The returned conjuncts still conjoin with the b-part to
    an unsatisfiable formula.
    """
    labels: set[str] = set()

    def walk(node: ProofTree) -> None:
        if isinstance(node, Leaf):
            if node.false_label is not None:
                labels.add(node.false_label)
                return
            for atom_id, mult in node.certificate.multipliers.items():
                if mult == 0:
                    continue
                info = result.atom_info[atom_id]
                if info.origin == "A" and info.label is not None:
                    labels.add(info.label)
            return
        if node.origin == "A":
            label = result.disj_label.get(node.disjunction_id)
            if label is not None:
                labels.add(label)
        for child in node.children:
            walk(child)

    walk(tree)
    return labels


def replay_tree(tree: ProofTree, result: SolveResult) -> bool:
    """Re-check every leaf certificate against its active atoms."""
    if isinstance(tree, Leaf):
        if tree.false_label is not None:
            return tree.certificate is None
        atoms = {aid: result.atom_info[aid].atom for aid in tree.active_ids}
        return certify(tree.certificate, atoms)
    return all(replay_tree(child, result) for child in tree.children)
