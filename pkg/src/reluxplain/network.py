"""Feed-forward ReLU classifiers with exact rational parameters.

Networks are loaded from a small JSON format (see the README) where every
number may be written as an integer, a decimal string, or "p/q".  Decimal
literals become exact rationals straight from their text, so there is no
binary-float import path and downstream solver results stay sound.

Layer weights are stored with one row per input of the layer and one column
per neuron, matching ``y_i = sum_j x_j * w[j][i] + b[i]``.  Hidden layers
apply ReLU; the output layer is linear and the predicted class is the
argmax, ties broken toward the lowest class index.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence, Union

Point = tuple[Fraction, ...]


class NetworkError(ValueError):
    """Malformed network or dataset file, or shape mismatch."""


def _to_rational(value, where: str) -> Fraction:
    if isinstance(value, bool):
        raise NetworkError(f"{where}: expected a number, got {value!r}")
    if isinstance(value, (int, Fraction)):
        return Fraction(value)
    if isinstance(value, str):
        try:
            return Fraction(value)
        except (ValueError, ZeroDivisionError) as exc:
            raise NetworkError(f"{where}: bad rational literal {value!r}") from exc
    raise NetworkError(f"{where}: expected a number, got {type(value).__name__}")


def as_point(values: Sequence[Union[int, str, Fraction]]) -> Point:
    return tuple(_to_rational(v, "point") for v in values)


@dataclass(frozen=True)
class Layer:
    weights: tuple[tuple[Fraction, ...], ...]  # rows = inputs, cols = neurons
    biases: tuple[Fraction, ...]

    @property
    def size(self) -> int:
        return len(self.biases)


@dataclass(frozen=True)
class Network:
    layers: tuple[Layer, ...]
    input_count: int
    class_names: tuple[str, ...]
    domains: tuple[tuple[Fraction, Fraction], ...]

    @property
    def feature_names(self) -> tuple[str, ...]:
        return tuple(f"x{i}" for i in range(1, self.input_count + 1))


def make_network(layers: Sequence[Layer], input_count: int,
                 class_names: Sequence[str],
                 domains: Sequence[tuple[Fraction, Fraction]]) -> Network:
    if input_count < 1:
        raise NetworkError("input count must be at least 1")
    if len(class_names) < 2:
        raise NetworkError("a classifier needs at least 2 classes")
    if len(set(class_names)) != len(class_names):
        raise NetworkError("duplicate class names")
    if len(domains) != input_count:
        raise NetworkError(
            f"expected {input_count} domains, got {len(domains)}")
    for i, (lo, hi) in enumerate(domains, 1):
        if lo > hi:
            raise NetworkError(f"domain of feature {i} inverted: [{lo}, {hi}]")
    if not layers:
        raise NetworkError("network has no layers")
    prev = input_count
    for k, layer in enumerate(layers, 1):
        if len(layer.weights) != prev:
            raise NetworkError(
                f"layer {k}: weight matrix has {len(layer.weights)} rows, "
                f"expected {prev}")
        for row in layer.weights:
            if len(row) != layer.size:
                raise NetworkError(
                    f"layer {k}: ragged weight matrix "
                    f"(row of {len(row)} vs {layer.size} biases)")
        prev = layer.size
    if prev != len(class_names):
        raise NetworkError(
            f"last layer has {prev} neurons but there are "
            f"{len(class_names)} classes")
    return Network(tuple(layers), input_count, tuple(class_names), tuple(domains))


def network_from_dict(data: dict) -> Network:
    try:
        inputs = data["inputs"]
        raw_domains = data["domains"]
        classes = data["classes"]
        raw_layers = data["layers"]
    except (KeyError, TypeError) as exc:
        raise NetworkError(f"missing network field: {exc}") from exc
    if not isinstance(inputs, int):
        raise NetworkError("'inputs' must be an integer")
    domains = []
    for i, pair in enumerate(raw_domains, 1):
        if len(pair) != 2:
            raise NetworkError(f"domain of feature {i} is not a [L, U] pair")
        domains.append((_to_rational(pair[0], f"domain {i} lower"),
                        _to_rational(pair[1], f"domain {i} upper")))
    layers = []
    for k, raw in enumerate(raw_layers, 1):
        try:
            raw_w = raw["weights"]
        except (KeyError, TypeError) as exc:
            raise NetworkError(f"layer {k}: missing weights") from exc
        weights = tuple(
            tuple(_to_rational(w, f"layer {k} weights") for w in row)
            for row in raw_w)
        if not weights or not weights[0]:
            raise NetworkError(f"layer {k}: empty weight matrix")
        size = len(weights[0])
        raw_b = raw.get("biases")
        if raw_b is None:
            biases = tuple(Fraction(0) for _ in range(size))
        else:
            biases = tuple(_to_rational(b, f"layer {k} biases") for b in raw_b)
            if len(biases) != size:
                raise NetworkError(
                    f"layer {k}: {len(biases)} biases for {size} neurons")
        layers.append(Layer(weights, biases))
    return make_network(layers, inputs, [str(c) for c in classes], domains)


def load_network(path) -> Network:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(
                fh,
                parse_float=Fraction,
                parse_constant=lambda tok: (_ for _ in ()).throw(
                    NetworkError(f"non-finite number {tok!r} in network file")))
        except json.JSONDecodeError as exc:
            raise NetworkError(f"cannot parse network file: {exc}") from exc
    return network_from_dict(data)


def forward(net: Network, point: Sequence[Fraction]) -> tuple[Fraction, ...]:
    """Last-layer pre-activation vector, computed exactly."""
    if len(point) != net.input_count:
        raise NetworkError(
            f"point has {len(point)} values, network expects {net.input_count}")
    acts = [Fraction(v) for v in point]
    last = len(net.layers) - 1
    for k, layer in enumerate(net.layers):
        outs = []
        for i in range(layer.size):
            y = layer.biases[i]
            for j, x in enumerate(acts):
                if x:
                    y += x * layer.weights[j][i]
            if k != last and y < 0:
                y = Fraction(0)
            outs.append(y)
        acts = outs
    return tuple(acts)


def classify(net: Network, point: Sequence[Fraction]) -> str:
    """Predicted class; ties break toward the lowest class index."""
    outputs = forward(net, point)
    best = 0
    for i in range(1, len(outputs)):
        if outputs[i] > outputs[best]:
            best = i
    return net.class_names[best]


@dataclass(frozen=True)
class Dataset:
    points: tuple[Point, ...]
    labels: Optional[tuple[str, ...]]
    feature_names: tuple[str, ...]


def _is_rational_text(cell: str) -> bool:
    try:
        Fraction(cell)
        return True
    except (ValueError, ZeroDivisionError):
        return False


def load_dataset(path, net: Network) -> Dataset:
    """CSV with one point per row; optional header, optional label column."""
    m = net.input_count
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = [row for row in csv.reader(fh) if row and any(c.strip() for c in row)]
    if not rows:
        raise NetworkError("dataset file is empty")
    feature_names = net.feature_names
    first = [c.strip() for c in rows[0]]
    has_header = not all(_is_rational_text(c) for c in first[:m])
    if has_header:
        if len(first) not in (m, m + 1):
            raise NetworkError(
                f"header has {len(first)} columns, expected {m} or {m + 1}")
        feature_names = tuple(first[:m])
        rows = rows[1:]
    points: list[Point] = []
    labels: list[str] = []
    has_labels: Optional[bool] = None
    for lineno, row in enumerate(rows, 2 if has_header else 1):
        cells = [c.strip() for c in row]
        if len(cells) == m:
            row_has_label = False
        elif len(cells) == m + 1:
            row_has_label = True
        else:
            raise NetworkError(
                f"row {lineno}: {len(cells)} columns, expected {m} or {m + 1}")
        if has_labels is None:
            has_labels = row_has_label
        elif has_labels != row_has_label:
            raise NetworkError(f"row {lineno}: inconsistent column count")
        try:
            points.append(tuple(Fraction(c) for c in cells[:m]))
        except (ValueError, ZeroDivisionError) as exc:
            raise NetworkError(f"row {lineno}: bad number: {exc}") from exc
        if row_has_label:
            label = cells[m]
            if label not in net.class_names:
                raise NetworkError(f"row {lineno}: unknown label {label!r}")
            labels.append(label)
    return Dataset(tuple(points),
                   tuple(labels) if has_labels else None,
                   feature_names)
