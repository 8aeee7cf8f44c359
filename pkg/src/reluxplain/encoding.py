"""Constraint encodings of ReLU classifiers and samples.

The background formula for a class c says "the input is inside the feature
box, the network semantics hold, and the predicted class is NOT c".  A
candidate explanation is sound for c exactly when its conjunction with this
formula is unsatisfiable.

Per-neuron variables are named deterministically: y<k>_<i> for the layer-k
pre-activation of neuron i and x<k>_<i> for its ReLU output.  They never
leak into explanations because interpolation is restricted to the shared
(feature) vocabulary.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Iterable, Optional, Sequence

from .formula import (FALSE, TRUE, Formula, format_formula, labeled_conj,
                      conj, disj, make_atom, top_conjuncts, variables)
from .network import Network, NetworkError, Point


class EncodingError(ValueError):
    pass


def feature_names(count: int) -> tuple[str, ...]:
    return tuple(f"x{i}" for i in range(1, count + 1))


def domain_formula(net: Network) -> Formula:
    """Conjunction of per-feature box bounds L_i <= x_i <= U_i."""
    atoms = []
    for name, (lo, hi) in zip(net.feature_names, net.domains):
        atoms.append(make_atom({name: 1}, ">=", lo))
        atoms.append(make_atom({name: 1}, "<=", hi))
    return conj(atoms)


def build_psi(net: Network, class_name: str) -> Formula:
    """Network semantics + domain box + "classified to some other class".

    The last disjunction is tie-break exact: class j beats the target c when
    j < c and y_j >= y_c, or j > c and y_j > y_c, matching argmax with
    lowest-index tie-breaking.
    """
    if class_name not in net.class_names:
        raise EncodingError(f"unknown class {class_name!r}")
    target = net.class_names.index(class_name)
    parts: list[Formula] = []
    relus: list[Formula] = []
    last = len(net.layers) - 1
    prev_vars = list(net.feature_names)
    for k, layer in enumerate(net.layers):
        layer_no = k + 1
        out_vars = []
        for i in range(layer.size):
            y = f"y{layer_no}_{i + 1}"
            coeffs = {y: Fraction(1)}
            for j, src in enumerate(prev_vars):
                w = layer.weights[j][i]
                if w:
                    coeffs[src] = -w
            parts.append(make_atom(coeffs, "=", layer.biases[i]))
            if k != last:
                x = f"x{layer_no}_{i + 1}"
                inactive = conj([make_atom({y: 1}, "<=", 0),
                                 make_atom({x: 1}, "=", 0)])
                active = conj([make_atom({y: 1}, ">=", 0),
                               make_atom({x: 1, y: -1}, "=", 0)])
                relus.append(disj([inactive, active]))
                out_vars.append(x)
            else:
                out_vars.append(y)
        prev_vars = out_vars
    parts.extend(relus)
    parts.append(domain_formula(net))
    others = []
    for j, _ in enumerate(net.class_names):
        if j == target:
            continue
        rel = ">=" if j < target else ">"
        others.append(make_atom({prev_vars[j]: 1, prev_vars[target]: -1},
                                rel, 0))
    parts.append(disj(others))
    return conj(parts)


def encode_sample(point: Point, names: Sequence[str]) -> Formula:
    """Per-feature equality conjunction, labeled by feature name."""
    if len(point) == 0:
        raise EncodingError("cannot encode an empty point")
    if len(point) != len(names):
        raise EncodingError(
            f"point has {len(point)} values for {len(names)} features")
    return labeled_conj([(name, make_atom({name: 1}, "=", value))
                         for name, value in zip(names, point)])


def partition_sample(phi_s: Formula, selected: Iterable[str]
                     ) -> tuple[Formula, Formula]:
    """Split a per-feature conjunction into (selected, rest) parts."""
    selected = set(selected)
    if not selected:
        raise EncodingError("selected feature set is empty")
    known: set[str] = set()
    a_pairs, b_pairs = [], []
    for label, child in top_conjuncts(phi_s):
        fvars = variables(child)
        if len(fvars) != 1:
            raise EncodingError(
                f"conjunct {label or format_formula(child)} "
                "spans multiple features")
        var = next(iter(fvars))
        known.add(var)
        pair = (label or var, child)
        (a_pairs if var in selected else b_pairs).append(pair)
    unknown = selected - known
    if unknown:
        raise EncodingError(f"unknown features {sorted(unknown)}")
    return labeled_conj(a_pairs), labeled_conj(b_pairs)


@dataclass(frozen=True)
class PartitionedSystem:
    """Labeled assertion pair: a-part candidate against the class formula.

    The b-part is satisfiable on its own (checked lazily by the solver
    users, not at construction); the shared vocabulary is the feature
    variables whenever the a-part mentions only features.
    """

    a_part: Formula
    b_part: Formula
    vocabulary: tuple[str, ...]
    auxiliary: frozenset[str]
    target_class: str
    network: Optional[Network] = None

    def with_a_part(self, a_part: Formula) -> "PartitionedSystem":
        return replace(self, a_part=a_part)

    def with_b_extension(self, extra: Formula) -> "PartitionedSystem":
        """System whose b-part is extended with an extra conjunct."""
        return replace(self, b_part=conj([extra, self.b_part]))


def build_system(net: Network, class_name: str,
                 a_part: Formula = TRUE) -> PartitionedSystem:
    psi = build_psi(net, class_name)
    aux = frozenset(variables(psi) - set(net.feature_names))
    return PartitionedSystem(a_part, psi, net.feature_names, aux,
                             class_name, net)


def plain_system(f: Formula) -> PartitionedSystem:
    """Degenerate system for plain satisfiability checks of a formula."""
    return PartitionedSystem(f, TRUE, tuple(sorted(variables(f))),
                             frozenset(), "", None)
