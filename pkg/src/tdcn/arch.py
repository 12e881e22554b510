"""Layer and architecture value types.

An :class:`Architecture` is a strictly sequential feed-forward stack of
:class:`LayerSpec` records over a fixed ``(height, width, channels)`` input.
Everything here is immutable; the searches build new architectures rather
than editing old ones.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence


class LayerKind(str, enum.Enum):
    C2D = "C2D"
    BN = "BN"
    DO = "DO"
    MP = "MP"
    AP = "AP"
    DE = "DE"
    F = "F"

    @classmethod
    def parse(cls, text: str) -> "LayerKind":
        try:
            return cls(text)
        except ValueError:
            raise UnknownLayerError(text) from None


POOLING = (LayerKind.MP, LayerKind.AP)

# hyperparameter fields each kind carries, in canonical serialization order
_FIELDS = {
    LayerKind.C2D: ("filters", "kernel"),
    LayerKind.BN: (),
    LayerKind.DO: ("rate",),
    LayerKind.MP: ("pool",),
    LayerKind.AP: ("pool",),
    LayerKind.DE: ("units",),
    LayerKind.F: (),
}
_ALL_FIELDS = ("filters", "kernel", "units", "pool", "rate")


class ArchitectureError(ValueError):
    """Base class for malformed layers, documents and architectures."""


class UnknownLayerError(ArchitectureError):
    def __init__(self, name: str):
        super().__init__(f"unknown layer type {name!r}")
        self.name = name


class DocumentError(ArchitectureError):
    """A serialized architecture could not be parsed.

    ``where`` names the offending spot: ``line N col M`` for JSON syntax
    errors or a field path such as ``layers[2].kernel``.
    """

    def __init__(self, where: str, message: str):
        super().__init__(f"{where}: {message}")
        self.where = where


class InvalidArchitecture(ArchitectureError):
    def __init__(self, violations: Sequence["Violation"]):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations))


class ShapeError(ArchitectureError):
    def __init__(self, index: int, message: str):
        super().__init__(f"layer {index}: {message}")
        self.index = index


@dataclass(frozen=True)
class LayerSpec:
    kind: LayerKind
    filters: int | None = None
    kernel: int | None = None
    units: int | None = None
    pool: int | None = None
    rate: float | None = None

    def __post_init__(self):
        kind = LayerKind(self.kind)
        object.__setattr__(self, "kind", kind)
        wanted = _FIELDS[kind]
        for name in _ALL_FIELDS:
            value = getattr(self, name)
            if name in wanted and value is None:
                raise ArchitectureError(f"{kind.value} requires {name!r}")
            if name not in wanted and value is not None:
                raise ArchitectureError(f"{kind.value} does not take {name!r}")
        if kind is LayerKind.C2D:
            _check_int(self.filters, "filters", 1)
            _check_int(self.kernel, "kernel", 1)
            if self.kernel % 2 == 0:
                raise ArchitectureError(f"kernel must be odd, got {self.kernel}")
        elif kind is LayerKind.DE:
            _check_int(self.units, "units", 1)
        elif kind in POOLING:
            _check_int(self.pool, "pool", 2)
        elif kind is LayerKind.DO:
            if isinstance(self.rate, bool) or not isinstance(self.rate, (int, float)):
                raise ArchitectureError(f"rate must be a number, got {self.rate!r}")
            if not 0.0 < self.rate < 1.0:
                raise ArchitectureError(f"rate must lie in (0, 1), got {self.rate}")
            object.__setattr__(self, "rate", float(self.rate))

    # convenience constructors keep call sites short
    @classmethod
    def conv(cls, filters: int, kernel: int = 3) -> "LayerSpec":
        return cls(LayerKind.C2D, filters=filters, kernel=kernel)

    @classmethod
    def dense(cls, units: int) -> "LayerSpec":
        return cls(LayerKind.DE, units=units)

    @classmethod
    def maxpool(cls, pool: int = 2) -> "LayerSpec":
        return cls(LayerKind.MP, pool=pool)

    @classmethod
    def avgpool(cls, pool: int = 2) -> "LayerSpec":
        return cls(LayerKind.AP, pool=pool)

    @classmethod
    def dropout(cls, rate: float = 0.5) -> "LayerSpec":
        return cls(LayerKind.DO, rate=rate)

    @classmethod
    def batchnorm(cls) -> "LayerSpec":
        return cls(LayerKind.BN)

    @classmethod
    def flatten(cls) -> "LayerSpec":
        return cls(LayerKind.F)

    def to_dict(self) -> dict:
        out: dict = {"type": self.kind.value}
        for name in _FIELDS[self.kind]:
            out[name] = getattr(self, name)
        return out

    @classmethod
    def from_dict(cls, record: dict, where: str = "layer") -> "LayerSpec":
        if not isinstance(record, dict):
            raise DocumentError(where, "expected an object")
        if "type" not in record:
            raise DocumentError(where, "missing 'type'")
        kind = LayerKind.parse(record["type"])
        extra = set(record) - {"type"} - set(_FIELDS[kind])
        if extra:
            raise DocumentError(f"{where}.{sorted(extra)[0]}",
                                f"not a field of {kind.value}")
        kwargs = {}
        for name in _FIELDS[kind]:
            if name not in record:
                raise DocumentError(f"{where}.{name}", "missing")
            kwargs[name] = record[name]
        try:
            return cls(kind, **kwargs)
        except ArchitectureError as exc:
            raise DocumentError(where, str(exc)) from None

    def __str__(self) -> str:
        args = ",".join(f"{getattr(self, n)}" for n in _FIELDS[self.kind])
        return f"{self.kind.value}({args})" if args else self.kind.value


def _check_int(value, name: str, minimum: int) -> None:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ArchitectureError(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise ArchitectureError(f"{name} must be >= {minimum}, got {value}")


Shape = tuple  # (h, w, c) before flatten, (n,) after


@dataclass(frozen=True)
class Violation:
    rule: str
    index: int | None
    message: str

    def __str__(self) -> str:
        at = "" if self.index is None else f" at layer {self.index}"
        return f"{self.rule}{at}: {self.message}"


@dataclass(frozen=True)
class Architecture:
    input_shape: tuple[int, int, int]
    num_classes: int
    layers: tuple[LayerSpec, ...] = field(default_factory=tuple)

    def __post_init__(self):
        shape = tuple(int(v) for v in self.input_shape)
        if len(shape) != 3 or min(shape) < 1:
            raise ArchitectureError(f"input_shape must be (H, W, C) >= 1, got {self.input_shape}")
        object.__setattr__(self, "input_shape", shape)
        _check_int(self.num_classes, "num_classes", 1)
        object.__setattr__(self, "layers", tuple(self.layers))

    def __len__(self) -> int:
        return len(self.layers)

    def __str__(self) -> str:
        return " | ".join(str(layer) for layer in self.layers)

    def with_layers(self, layers: Iterable[LayerSpec]) -> "Architecture":
        return Architecture(self.input_shape, self.num_classes, tuple(layers))

    def to_dict(self) -> dict:
        return {
            "input_shape": list(self.input_shape),
            "num_classes": self.num_classes,
            "layers": [layer.to_dict() for layer in self.layers],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Architecture":
        if not isinstance(doc, dict):
            raise DocumentError("document", "expected a JSON object")
        for key in ("input_shape", "num_classes", "layers"):
            if key not in doc:
                raise DocumentError(key, "missing")
        shape = doc["input_shape"]
        if (not isinstance(shape, list) or len(shape) != 3
                or not all(isinstance(v, int) and not isinstance(v, bool) and v >= 1 for v in shape)):
            raise DocumentError("input_shape", "expected [H, W, C] positive integers")
        k = doc["num_classes"]
        if isinstance(k, bool) or not isinstance(k, int) or k < 1:
            raise DocumentError("num_classes", "expected a positive integer")
        if not isinstance(doc["layers"], list):
            raise DocumentError("layers", "expected an array")
        layers = tuple(LayerSpec.from_dict(rec, f"layers[{i}]")
                       for i, rec in enumerate(doc["layers"]))
        return cls(tuple(shape), k, layers)


def forward_shape(arch: Architecture) -> list[Shape]:
    """Output shape after every layer.

    Convolutions keep the spatial size ("same" padding, stride 1), pooling
    floors ``dim / pool`` with non-overlapping windows, ``F`` collapses the
    tensor to a vector and ``DE`` emits ``units`` values. Raises
    :class:`ShapeError` naming the first layer that cannot be applied.
    """
    h, w, c = arch.input_shape
    shape: Shape = (h, w, c)
    shapes: list[Shape] = []
    for i, layer in enumerate(arch.layers):
        kind = layer.kind
        spatial = len(shape) == 3
        if kind is LayerKind.C2D:
            if not spatial:
                raise ShapeError(i, "C2D needs a spatial input")
            shape = (shape[0], shape[1], layer.filters)
        elif kind in POOLING:
            if not spatial:
                raise ShapeError(i, f"{kind.value} needs a spatial input")
            ph, pw = shape[0] // layer.pool, shape[1] // layer.pool
            if ph < 1 or pw < 1:
                raise ShapeError(i, f"pool {layer.pool} on {shape[0]}x{shape[1]} leaves no pixels")
            shape = (ph, pw, shape[2])
        elif kind is LayerKind.F:
            if not spatial:
                raise ShapeError(i, "F on an already flat input")
            shape = (shape[0] * shape[1] * shape[2],)
        elif kind is LayerKind.DE:
            if spatial:
                raise ShapeError(i, "DE needs a flattened input")
            shape = (layer.units,)
        shapes.append(shape)
    return shapes


def validate(arch: Architecture, bounds: tuple[int, int] | None = None) -> list[Violation]:
    """Return every rule ``arch`` breaks; an empty list means valid.

    ``bounds`` optionally checks :func:`core_layer_count` against the
    ``(lower, upper)`` layer-count limits a search was configured with.
    """
    out: list[Violation] = []
    layers = arch.layers
    if not layers:
        return [Violation("non-empty", None, "architecture has no layers")]

    de_at = [i for i, l in enumerate(layers) if l.kind is LayerKind.DE]
    f_at = [i for i, l in enumerate(layers) if l.kind is LayerKind.F]

    if not de_at:
        out.append(Violation("at least one DE", None, "no DE layer"))
    if len(f_at) > 1:
        out.append(Violation("single F", f_at[1], "more than one F layer"))
    if de_at and (not f_at or f_at[0] > de_at[0]):
        out.append(Violation("F before first DE", de_at[0], "DE reached before any F"))
    if f_at:
        for i in range(f_at[0] + 1, len(layers)):
            kind = layers[i].kind
            if kind is LayerKind.C2D:
                out.append(Violation("no C2D after F", i, "C2D follows F"))
            elif kind in POOLING:
                out.append(Violation("no pooling after F", i, f"{kind.value} follows F"))

    if not out:
        try:
            shapes = forward_shape(arch)
        except ShapeError as exc:
            out.append(Violation("shape feasible", exc.index, str(exc)))
        else:
            if shapes[-1] != (arch.num_classes,):
                out.append(Violation("output width", len(layers) - 1,
                                     f"network emits {shapes[-1]}, expected ({arch.num_classes},)"))

    if bounds is not None:
        lo, hi = bounds
        n = core_layer_count(arch)
        if not lo <= n <= hi:
            out.append(Violation("layer bounds", None, f"{n} searched layers outside [{lo}, {hi}]"))
    return out


def is_valid(arch: Architecture, bounds: tuple[int, int] | None = None) -> bool:
    return not validate(arch, bounds)


def core_layer_count(arch: Architecture) -> int:
    """Searched layers: C2D, MP, AP and every DE except the terminal one.

    BN, DO and F are inserted by completion rules and the terminal DE is
    fixed by the class count, so neither counts against the layer bounds.
    """
    kinds = [l.kind for l in arch.layers]
    n = sum(k in (LayerKind.C2D, LayerKind.MP, LayerKind.AP, LayerKind.DE) for k in kinds)
    return n - (1 if LayerKind.DE in kinds else 0)


def param_count(arch: Architecture) -> int:
    """Trainable parameters; BN counts scale and shift only."""
    total = 0
    prev: Shape = arch.input_shape
    for layer, shape in zip(arch.layers, forward_shape(arch)):
        if layer.kind is LayerKind.C2D:
            k = layer.kernel
            total += k * k * prev[-1] * layer.filters + layer.filters
        elif layer.kind is LayerKind.DE:
            total += prev[0] * layer.units + layer.units
        elif layer.kind is LayerKind.BN:
            total += 2 * prev[-1]
        prev = shape
    return total


def serialize(arch: Architecture) -> str:
    """Canonical compact JSON; byte-identical for equal architectures."""
    return json.dumps(arch.to_dict(), separators=(",", ":"))


def deserialize(text: str, check: bool = True) -> Architecture:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DocumentError(f"line {exc.lineno} col {exc.colno}", exc.msg) from None
    arch = Architecture.from_dict(doc)
    if check:
        violations = validate(arch)
        if violations:
            raise InvalidArchitecture(violations)
    return arch


def parse_layers(text: str) -> list[LayerSpec]:
    """Parse a ``C2D(16,3) | BN | MP(2) | F | DE(5)`` style string."""
    out = []
    for token in (t.strip() for t in text.split("|")):
        if not token:
            continue
        name, _, rest = token.partition("(")
        kind = LayerKind.parse(name.strip())
        args = [a.strip() for a in rest.rstrip(")").split(",") if a.strip()]
        names = _FIELDS[kind]
        if len(args) != len(names):
            raise ArchitectureError(f"{token!r}: expected {len(names)} arguments")
        values = {n: (float(a) if n == "rate" else int(a)) for n, a in zip(names, args)}
        out.append(LayerSpec(kind, **values))
    return out
