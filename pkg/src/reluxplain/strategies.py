"""Explanation strategies and their pipeline composition.

Every strategy consumes and produces valid explanations: formulas over the
feature variables whose conjunction with the class system's background
formula is unsatisfiable, so every point they admit is guaranteed to
classify to the target class.  Stages compose left to right and each stage
only ever weakens (the input formula implies the output formula).

Pipeline descriptors are ';'-separated stages:

    G:<preset>          interpolate the current formula against the system
    R                   keep the unsat-core subset of top-level conjuncts
    Rmin                deletion-minimal core (irreducible)
    C:<preset>:<f,...>  partition the sample, interpolate the selected part
    A                   irreducible subset of sample equalities
    I:<attempts>        widen kept equalities into boxes by binary search

A and C start from a sample point; the others accept any explanation.
A stage that exceeds its time budget returns its input flagged as timed
out, so partial pipelines still yield valid output.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Optional, Sequence, Union

from .encoding import (PartitionedSystem, encode_sample, partition_sample)
from .formula import (TRUE, Atom, Formula, count_terms, labeled_conj,
                      make_atom, top_conjuncts, var_key, variables)
from .interpolation import interpolate_system, parse_preset
from .network import Point, classify
from .search import SolveTimeout, core_labels, solve


class StrategyError(ValueError):
    """Bad stage input: descriptor, sample, or formula shape."""


class InvalidExplanationError(RuntimeError):
    """A formula failed its validity check; carries the witness point."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


@dataclass
class StageMetrics:
    descriptor: str
    seconds: float = 0.0
    solver_calls: int = 0
    verify_calls: int = 0
    timed_out: bool = False


@dataclass
class Explanation:
    """A validity-checked formula plus how it was produced."""

    formula: Formula
    target_class: str
    sample: Optional[Point]
    stages: list[StageMetrics] = field(default_factory=list)
    relaxed: Optional[Fraction] = None

    @property
    def pipeline(self) -> str:
        return ";".join(s.descriptor for s in self.stages if s.descriptor)

    @property
    def terms(self) -> int:
        return count_terms(self.formula)

    @property
    def solver_calls(self) -> int:
        return sum(s.solver_calls for s in self.stages)

    @property
    def seconds(self) -> float:
        return sum(s.seconds for s in self.stages)

    @property
    def timed_out(self) -> bool:
        return any(s.timed_out for s in self.stages)

    def extended(self, formula: Formula, stage: StageMetrics) -> "Explanation":
        return Explanation(formula, self.target_class, self.sample,
                           self.stages + [stage], None)


def verify_explanation(formula: Formula, system: PartitionedSystem,
                       deadline: Optional[float] = None
                       ) -> tuple[bool, Optional[dict]]:
    """Definition check: no point of the formula reaches another class."""
    extra = variables(formula) - set(system.vocabulary)
    if extra:
        raise StrategyError(
            f"explanation mentions non-feature variables {sorted(extra)}")
    result = solve(system.with_a_part(formula), deadline=deadline)
    if result.is_sat:
        return False, result.model
    return True, None


def from_sample(point: Point, system: PartitionedSystem,
                deadline: Optional[float] = None,
                verify: bool = True) -> Explanation:
    """Wrap a sample point as the starting (all-features-fixed) explanation."""
    phi_s = encode_sample(point, system.vocabulary)
    stage = StageMetrics("")
    if verify:
        started = time.monotonic()
        ok, witness = verify_explanation(phi_s, system, deadline)
        stage.verify_calls = 1
        stage.seconds = time.monotonic() - started
        if not ok:
            raise InvalidExplanationError(
                f"sample is not classified to {system.target_class!r}",
                witness)
    return Explanation(phi_s, system.target_class, point, [stage])


def _require_sample_class(system: PartitionedSystem, point: Point) -> None:
    predicted = classify(system.network, point)
    if predicted != system.target_class:
        raise StrategyError(
            f"sample classifies to {predicted!r}, not "
            f"{system.target_class!r}")


def generalize(start: Explanation, system: PartitionedSystem, preset,
               deadline: Optional[float] = None) -> Explanation:
    """Interpolate the current explanation against the class system."""
    algo = parse_preset(preset) if isinstance(preset, str) else preset
    started = time.monotonic()
    itp, _ = interpolate_system(system.with_a_part(start.formula), algo,
                                deadline=deadline, verify=True)
    stage = StageMetrics(f"G:{preset}" if isinstance(preset, str) else "G",
                         seconds=time.monotonic() - started,
                         solver_calls=1, verify_calls=2)
    return start.extended(itp, stage)


def _labeled_pairs(formula: Formula) -> list[tuple[str, Formula]]:
    pairs = top_conjuncts(formula)
    if not pairs:
        raise StrategyError("cannot reduce the trivial explanation")
    return [(label if label is not None else f"c{i}", child)
            for i, (label, child) in enumerate(pairs)]


def reduce(e: Explanation, system: PartitionedSystem,
           deadline: Optional[float] = None) -> Explanation:
    """Keep the unsat-core subset of top-level conjuncts."""
    pairs = _labeled_pairs(e.formula)
    started = time.monotonic()
    labeled = labeled_conj(pairs)
    result = solve(system.with_a_part(labeled), deadline=deadline)
    if result.is_sat:
        raise InvalidExplanationError("input explanation is not valid",
                                      result.model)
    core = core_labels(result.tree, result)
    kept = [(label, child) for label, child in pairs if label in core]
    stage = StageMetrics("R", seconds=time.monotonic() - started,
                         solver_calls=1)
    return e.extended(labeled_conj(kept), stage)


def _traversal_key(order: Optional[Sequence[str]]):
    def key(label: str):
        if order is not None and label in order:
            return (0, list(order).index(label))
        return (1, var_key(label))
    return key


def reduce_min(e: Explanation, system: PartitionedSystem,
               order: Optional[Sequence[str]] = None,
               deadline: Optional[float] = None) -> Explanation:
    """Deletion-minimal core: no single conjunct can still be dropped."""
    pairs = _labeled_pairs(e.formula)
    started = time.monotonic()
    stage = StageMetrics("Rmin")
    kept = dict(pairs)
    try:
        for label in sorted(kept, key=_traversal_key(order)):
            candidate = {l: c for l, c in kept.items() if l != label}
            result = solve(
                system.with_a_part(labeled_conj(list(candidate.items()))),
                deadline=deadline)
            stage.solver_calls += 1
            if not result.is_sat:
                kept = candidate
    except SolveTimeout:
        stage.timed_out = True
        stage.seconds = time.monotonic() - started
        return e.extended(e.formula, stage)
    stage.seconds = time.monotonic() - started
    ordered = [(l, c) for l, c in pairs if l in kept]
    return e.extended(labeled_conj(ordered), stage)


def abductive(point: Point, system: PartitionedSystem,
              order: Optional[Sequence[str]] = None,
              deadline: Optional[float] = None) -> Explanation:
    """Irreducible subset of sample equalities, one solve per feature."""
    _require_sample_class(system, point)
    names = system.vocabulary
    started = time.monotonic()
    stage = StageMetrics("A")
    kept = {name: make_atom({name: 1}, "=", value)
            for name, value in zip(names, point)}
    traversal = sorted(names, key=_traversal_key(order))
    try:
        for name in traversal:
            candidate = {n: a for n, a in kept.items() if n != name}
            result = solve(
                system.with_a_part(labeled_conj(list(candidate.items()))),
                deadline=deadline)
            stage.solver_calls += 1
            if not result.is_sat:
                kept = candidate
    except SolveTimeout:
        stage.timed_out = True
        stage.seconds = time.monotonic() - started
        fallback = from_sample(point, system, verify=False)
        return fallback.extended(fallback.formula, stage)
    stage.seconds = time.monotonic() - started
    formula = labeled_conj([(n, kept[n]) for n in names if n in kept])
    out = Explanation(formula, system.target_class, point, [stage])
    return out


def capture(point: Point, selected: Sequence[str],
            system: PartitionedSystem, preset,
            deadline: Optional[float] = None) -> Explanation:
    """Interpolate only the selected features, keeping the rest fixed."""
    _require_sample_class(system, point)
    algo = parse_preset(preset) if isinstance(preset, str) else preset
    started = time.monotonic()
    phi_s = encode_sample(point, system.vocabulary)
    phi_a, phi_b = partition_sample(phi_s, selected)
    extended = system.with_b_extension(phi_b).with_a_part(phi_a)
    itp, _ = interpolate_system(extended, algo, deadline=deadline,
                                verify=True)
    itp_pairs = [(f"i{k}", child)
                 for k, (_, child) in enumerate(top_conjuncts(itp))]
    formula = labeled_conj(itp_pairs + _fixed_pairs(phi_b))
    descriptor = (f"C:{preset}:{','.join(selected)}"
                  if isinstance(preset, str) else "C")
    stage = StageMetrics(descriptor, seconds=time.monotonic() - started,
                         solver_calls=1, verify_calls=2)
    return Explanation(formula, system.target_class, point, [stage])


def _fixed_pairs(phi_b: Formula) -> list[tuple[str, Formula]]:
    if phi_b == TRUE:
        return []
    return [(label, child) for label, child in top_conjuncts(phi_b)]


def interval(a: Explanation, system: PartitionedSystem,
             attempts_per_bound: int = 8,
             order: Optional[Sequence[str]] = None,
             deadline: Optional[float] = None) -> Explanation:
    """Widen kept equalities into boxes by per-bound binary search.

    Lower bound before upper, features in traversal order; each bound gets
    at most ``attempts_per_bound`` solver queries, every attempt testing
    the midpoint of the last valid bound and the nearest known-invalid
    value (the domain limit until one is found).
    """
    domains = dict(zip(system.vocabulary, system.network.domains))
    boxes: dict[str, list[Fraction]] = {}
    for label, child in top_conjuncts(a.formula):
        fvars = variables(child)
        if not isinstance(child, Atom) or child.rel != "=" or len(fvars) != 1:
            raise StrategyError(
                "interval widening needs a conjunction of feature "
                "equalities")
        name = next(iter(fvars))
        value = child.const / child.coeff_map()[name]
        boxes[name] = [value, value]
    started = time.monotonic()
    stage = StageMetrics(f"I:{attempts_per_bound}")

    def box_formula(current: dict[str, list[Fraction]]) -> Formula:
        pairs = []
        for name in system.vocabulary:
            if name not in current:
                continue
            lo, hi = current[name]
            pairs.append((f"{name}_lo", make_atom({name: 1}, ">=", lo)))
            pairs.append((f"{name}_hi", make_atom({name: 1}, "<=", hi)))
        return labeled_conj(pairs)

    traversal = [n for n in sorted(boxes, key=_traversal_key(order))]
    try:
        for name in traversal:
            lo_limit, hi_limit = domains[name]
            for side, limit in ((0, lo_limit), (1, hi_limit)):
                invalid: Optional[Fraction] = None
                for _ in range(attempts_per_bound):
                    valid = boxes[name][side]
                    edge = limit if invalid is None else invalid
                    candidate = (valid + edge) / 2
                    if candidate == valid:
                        break
                    trial = {n: list(b) for n, b in boxes.items()}
                    trial[name][side] = candidate
                    result = solve(system.with_a_part(box_formula(trial)),
                                   deadline=deadline)
                    stage.solver_calls += 1
                    if not result.is_sat:
                        boxes[name][side] = candidate
                    else:
                        invalid = candidate
    except SolveTimeout:
        stage.timed_out = True
        stage.seconds = time.monotonic() - started
        return a.extended(a.formula, stage)
    stage.seconds = time.monotonic() - started
    return a.extended(box_formula(boxes), stage)


# ---------------------------------------------------------------------------
# Pipelines


@dataclass(frozen=True)
class Stage:
    kind: str
    preset: Optional[str] = None
    features: Optional[tuple[str, ...]] = None
    attempts: Optional[int] = None


def parse_pipeline(descriptor: str) -> list[Stage]:
    stages = []
    for raw in descriptor.split(";"):
        raw = raw.strip()
        if not raw:
            raise StrategyError(f"empty stage in pipeline {descriptor!r}")
        parts = raw.split(":")
        kind = parts[0]
        if kind == "G":
            if len(parts) == 2:
                preset = parts[1]
            elif len(parts) == 3 and parts[1] == "factor":
                preset = f"factor:{parts[2]}"
            else:
                raise StrategyError(f"bad stage {raw!r}; expected G:<preset>")
            parse_preset(preset)
            stages.append(Stage("G", preset=preset))
        elif kind == "C":
            if len(parts) == 4 and parts[1] == "factor":
                preset, feats = f"factor:{parts[2]}", parts[3]
            elif len(parts) == 3:
                preset, feats = parts[1], parts[2]
            else:
                raise StrategyError(
                    f"bad stage {raw!r}; expected C:<preset>:<features>")
            parse_preset(preset)
            features = tuple(f.strip() for f in feats.split(",") if f.strip())
            if not features:
                raise StrategyError(f"stage {raw!r} selects no features")
            stages.append(Stage("C", preset=preset, features=features))
        elif kind == "I":
            if len(parts) != 2 or not parts[1].isdigit():
                raise StrategyError(f"bad stage {raw!r}; expected I:<attempts>")
            stages.append(Stage("I", attempts=int(parts[1])))
        elif kind in ("R", "Rmin", "A"):
            if len(parts) != 1:
                raise StrategyError(f"stage {kind} takes no arguments")
            stages.append(Stage(kind))
        else:
            raise StrategyError(f"unknown stage {kind!r} in {descriptor!r}")
    if not stages:
        raise StrategyError("empty pipeline")
    for i, stage in enumerate(stages):
        if stage.kind in ("A", "C") and i != 0:
            raise StrategyError(
                f"stage {stage.kind} starts from a sample and must be first")
    return stages


def run_pipeline(descriptor: str, start: Union[Point, Explanation],
                 system: PartitionedSystem, *,
                 order: Optional[Sequence[str]] = None,
                 stage_timeout: Optional[float] = None) -> Explanation:
    """Apply a stage pipeline left to right, accumulating metrics."""
    stages = parse_pipeline(descriptor)

    def stage_deadline() -> Optional[float]:
        return (time.monotonic() + stage_timeout
                if stage_timeout is not None else None)

    current: Explanation
    first = stages[0]
    if isinstance(start, Explanation):
        if first.kind in ("A", "C"):
            raise StrategyError(
                f"stage {first.kind} needs a sample point, got an explanation")
        current = start
    else:
        point = start
        if first.kind in ("A", "C"):
            try:
                if first.kind == "A":
                    current = abductive(point, system, order=order,
                                        deadline=stage_deadline())
                else:
                    current = capture(point, first.features, system,
                                      first.preset,
                                      deadline=stage_deadline())
            except SolveTimeout:
                current = from_sample(point, system, verify=False)
                current.stages.append(StageMetrics(first.kind,
                                                   timed_out=True))
            stages = stages[1:]
        else:
            current = from_sample(point, system, deadline=stage_deadline())

    for stage in stages:
        deadline = stage_deadline()
        try:
            if stage.kind == "G":
                current = generalize(current, system, stage.preset,
                                     deadline=deadline)
            elif stage.kind == "R":
                current = reduce(current, system, deadline=deadline)
            elif stage.kind == "Rmin":
                current = reduce_min(current, system, order=order,
                                     deadline=deadline)
            elif stage.kind == "I":
                current = interval(current, system, stage.attempts,
                                   order=order, deadline=deadline)
            else:
                raise StrategyError(f"stage {stage.kind} cannot appear here")
        except SolveTimeout:
            marker = StageMetrics(stage.kind, timed_out=True)
            current = current.extended(current.formula, marker)
    return current
