"""Quantitative and geometric comparison of explanation regions.

Subset verdicts come from satisfiability: within the feature box, e1 is
contained in e2 exactly when e1 AND (not e2) has no point.  Sat models of
the two direction queries double as concrete witnesses, which makes every
"not comparable" verdict auditable.

Grids discretize a feature pair.  A projection cell is on when some full
point over the remaining features lands in the region (one solver call per
cell); a slice fixes the other features at a sample and only needs direct
evaluation.  Cells left undecided by a timeout are reported as unknown
("?"), never silently off.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Sequence

from .formula import (Atom, Formula, conj, disj, evaluate, make_atom,
                      negate, substitute, variables)
from .network import Point
from .search import SolveTimeout, check_formula
from .strategies import Explanation


class AnalysisError(ValueError):
    pass


RELATION_SUBSET = "⊂"      # strictly contained
RELATION_EQUAL = "="
RELATION_SUPERSET = "⊃"
RELATION_INCOMPARABLE = "NC"


@dataclass(frozen=True)
class ComparisonResult:
    relation: str
    only_in_first: Optional[dict[str, Fraction]] = None
    only_in_second: Optional[dict[str, Fraction]] = None


def compare(e1: Explanation, e2: Explanation, psi_d: Formula,
            slice_at: Optional[Mapping[str, Fraction]] = None,
            deadline: Optional[float] = None) -> ComparisonResult:
    """Set relation of two same-class regions within the feature box."""
    if e1.target_class != e2.target_class:
        raise AnalysisError(
            "comparing explanations of different classes "
            f"({e1.target_class!r} vs {e2.target_class!r})")
    f1, f2 = e1.formula, e2.formula
    box = psi_d
    if slice_at:
        f1 = substitute(f1, slice_at)
        f2 = substitute(f2, slice_at)
        box = substitute(psi_d, slice_at)
    in_2 = check_formula(conj([f1, box, negate(f2)]), deadline=deadline)
    in_1 = check_formula(conj([f2, box, negate(f1)]), deadline=deadline)
    if not in_2.is_sat and not in_1.is_sat:
        return ComparisonResult(RELATION_EQUAL)
    if not in_2.is_sat:
        return ComparisonResult(RELATION_SUBSET, only_in_second=in_1.model)
    if not in_1.is_sat:
        return ComparisonResult(RELATION_SUPERSET, only_in_first=in_2.model)
    return ComparisonResult(RELATION_INCOMPARABLE,
                            only_in_first=in_2.model,
                            only_in_second=in_1.model)


def relaxed_fraction(e: Explanation, sample: Point, psi_d: Formula,
                     feature_names: Sequence[str],
                     deadline: Optional[float] = None) -> Fraction:
    """Fraction of features the region does not pin to the sample value."""
    free = 0
    for name, value in zip(feature_names, sample):
        off_value = disj([make_atom({name: 1}, "<", value),
                          make_atom({name: 1}, ">", value)])
        query = conj([e.formula, psi_d, off_value])
        if check_formula(query, deadline=deadline).is_sat:
            free += 1
    return Fraction(free, len(feature_names))


def domain_bounds(psi_d: Formula) -> dict[str, tuple[Fraction, Fraction]]:
    """Per-variable box read back from a conjunction of bound atoms."""
    lows: dict[str, Fraction] = {}
    highs: dict[str, Fraction] = {}
    stack = [psi_d]
    while stack:
        node = stack.pop()
        if isinstance(node, Atom) and len(node.coeffs) == 1:
            var, coeff = node.coeffs[0]
            value = node.const / coeff
            rel = node.rel
            if coeff < 0:
                rel = {"<=": ">=", ">=": "<=", "<": ">", ">": "<"}.get(rel, rel)
            if rel in (">=", ">"):
                if var not in lows or value > lows[var]:
                    lows[var] = value
            elif rel in ("<=", "<"):
                if var not in highs or value < highs[var]:
                    highs[var] = value
        elif hasattr(node, "children"):
            stack.extend(node.children)
    out = {}
    for var in lows:
        if var in highs:
            out[var] = (lows[var], highs[var])
    return out


@dataclass
class Grid:
    x_feature: str
    y_feature: str
    mode: str  # "projection" | "slice"
    x_values: tuple[Fraction, ...]
    y_values: tuple[Fraction, ...]
    cells: list[list[Optional[bool]]]  # cells[i][j] for (x_values[i], y_values[j])
    fixed: dict[str, Fraction] = field(default_factory=dict)

    def cell(self, i: int, j: int) -> Optional[bool]:
        return self.cells[i][j]


def _axis_values(lo: Fraction, hi: Fraction, resolution: int
                 ) -> tuple[Fraction, ...]:
    if resolution < 2:
        raise AnalysisError("grid resolution must be at least 2")
    step = (hi - lo) / (resolution - 1)
    return tuple(lo + step * k for k in range(resolution))


def _grid_axes(psi_d: Formula, pair: Sequence[str], resolution: int):
    xa, ya = pair
    if xa == ya:
        raise AnalysisError("grid features must be distinct")
    bounds = domain_bounds(psi_d)
    for name in (xa, ya):
        if name not in bounds:
            raise AnalysisError(f"no domain bounds for feature {name!r}")
    return (_axis_values(*bounds[xa], resolution),
            _axis_values(*bounds[ya], resolution))


def project_grid(e: Explanation, psi_d: Formula, pair: Sequence[str],
                 resolution: int = 50,
                 deadline: Optional[float] = None) -> Grid:
    """Existential image of the region on a feature pair, one solve a cell."""
    xa, ya = pair
    xs, ys = _grid_axes(psi_d, pair, resolution)
    cells: list[list[Optional[bool]]] = [[None] * len(ys) for _ in xs]
    timed_out = False
    for i, u in enumerate(xs):
        for j, v in enumerate(ys):
            if timed_out:
                continue
            pinned = conj([e.formula, psi_d,
                           make_atom({xa: 1}, "=", u),
                           make_atom({ya: 1}, "=", v)])
            try:
                cells[i][j] = check_formula(pinned, deadline=deadline).is_sat
            except SolveTimeout:
                timed_out = True
    return Grid(xa, ya, "projection", xs, ys, cells)


def slice_grid(e: Explanation, psi_d: Formula, pair: Sequence[str],
               sample: Point, feature_names: Sequence[str],
               resolution: int = 50) -> Grid:
    """Region cut by the plane fixing all other features at the sample."""
    xa, ya = pair
    xs, ys = _grid_axes(psi_d, pair, resolution)
    fixed = {name: value for name, value in zip(feature_names, sample)
             if name not in (xa, ya)}
    sliced = substitute(e.formula, fixed)
    box = substitute(psi_d, fixed)
    cells: list[list[Optional[bool]]] = [[None] * len(ys) for _ in xs]
    for i, u in enumerate(xs):
        for j, v in enumerate(ys):
            point = {xa: u, ya: v}
            cells[i][j] = evaluate(sliced, point) and evaluate(box, point)
    return Grid(xa, ya, "slice", xs, ys, cells, fixed)


@dataclass(frozen=True)
class ReportRow:
    pipeline: str
    relaxed: Optional[Fraction]
    terms: Fraction
    time_s: float
    solver_calls: Fraction


def aggregate(explanations: Iterable[Explanation]) -> list[ReportRow]:
    """Per-pipeline averages of the four quality metrics."""
    groups: dict[str, list[Explanation]] = {}
    for e in explanations:
        groups.setdefault(e.pipeline, []).append(e)
    rows = []
    for pipeline in sorted(groups):
        batch = groups[pipeline]
        n = len(batch)
        with_relaxed = [e.relaxed for e in batch if e.relaxed is not None]
        relaxed = (sum(with_relaxed, Fraction(0)) / len(with_relaxed)
                   if with_relaxed else None)
        rows.append(ReportRow(
            pipeline,
            relaxed,
            Fraction(sum(e.terms for e in batch), n),
            sum(e.seconds for e in batch) / n,
            Fraction(sum(e.solver_calls for e in batch), n)))
    return rows
