"""CNN layer descriptions, their GEMM lowering, and the JSON workload format."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace
from importlib import resources

from .codec import BLOCK_SIZES
from .errors import BadGeometry, ParseError, ValidationError
from .tensor import output_size

KINDS = ("conv", "pointwise", "fc", "depthwise")
_REQUIRED = ("name", "kind", "h", "w", "cin", "cout")


@dataclass(frozen=True)
class LayerShape:
    name: str
    kind: str
    h: int
    w: int
    cin: int
    cout: int
    k: int = 1
    s: int = 1
    p: int = 0
    nnz: int = 8
    bz: int = 8
    act_sparsity: float = 0.5
    dbb_exempt: bool = False

    @property
    def out_h(self) -> int:
        return output_size(self.h, self.k, self.s, self.p)

    @property
    def out_w(self) -> int:
        return output_size(self.w, self.k, self.s, self.p)

    @property
    def dense(self) -> bool:
        """Runs without DBB weight compression."""
        return self.dbb_exempt or self.kind == "depthwise"


@dataclass(frozen=True)
class GemmShape:
    m: int
    k: int
    n: int
    groups: int = 1
    magnification: float = 1.0

    @property
    def macs(self) -> int:
        return self.m * self.k * self.n * self.groups

    @property
    def ops(self) -> int:
        return 2 * self.macs


@dataclass(frozen=True)
class WorkloadSpec:
    model: str
    layers: tuple[LayerShape, ...]
    default_bz: int = 8
    default_nnz: int = 3
    default_act_sparsity: float = 0.5

    @property
    def total_macs(self) -> int:
        return sum(layer_to_gemm(l).macs for l in self.layers)

    def with_layers(self, layers) -> "WorkloadSpec":
        return replace(self, layers=tuple(layers))


def validate_layer(layer: LayerShape, where: str = "layer") -> None:
    def bad(field, msg):
        raise ValidationError(f"{where}.{field}: {msg}")

    if layer.kind not in KINDS:
        bad("kind", f"{layer.kind!r} not in {KINDS}")
    for f in ("h", "w", "cin", "cout", "k", "s"):
        v = getattr(layer, f)
        if not isinstance(v, int) or isinstance(v, bool) or v < 1:
            bad(f, f"must be a positive integer, got {v!r}")
    if not isinstance(layer.p, int) or layer.p < 0:
        bad("p", f"must be a non-negative integer, got {layer.p!r}")
    if layer.k % 2 == 0:
        bad("k", f"kernel size must be odd, got {layer.k}")
    if layer.kind in ("pointwise", "fc") and layer.k != 1:
        bad("k", f"{layer.kind} layers use k=1")
    if layer.kind == "fc" and (layer.h, layer.w) != (1, 1):
        bad("h", "fc layers have h = w = 1")
    if layer.kind == "depthwise" and layer.cin != layer.cout:
        bad("cout", "depthwise layers keep the channel count")
    if layer.bz not in BLOCK_SIZES:
        bad("bz", f"must be one of {BLOCK_SIZES}")
    if not 1 <= layer.nnz <= layer.bz:
        bad("nnz", f"{layer.nnz} outside [1, {layer.bz}]")
    if not 0.0 <= layer.act_sparsity <= 1.0:
        bad("act_sparsity", f"{layer.act_sparsity} outside [0, 1]")
    if layer.out_h < 1 or layer.out_w < 1:
        bad("k", "empty output")


def layer_to_gemm(layer: LayerShape) -> GemmShape:
    try:
        validate_layer(layer, layer.name)
    except ValidationError as exc:
        raise BadGeometry(str(exc)) from None
    m = layer.out_h * layer.out_w
    mag = 3.0 if (layer.k == 3 and layer.s == 1) else 1.0
    if layer.kind == "depthwise":
        return GemmShape(m, layer.k * layer.k, 1, layer.cin, mag)
    return GemmShape(m, layer.k * layer.k * layer.cin, layer.cout, 1, mag)


# ---------------------------------------------------------------- json io


def _field(obj: dict, key: str, kind, where: str, default=None):
    if key not in obj:
        if default is None:
            raise ParseError("missing required field", field=f"{where}.{key}")
        return default
    v = obj[key]
    ok = isinstance(v, kind) and not (kind is not bool and isinstance(v, bool))
    if kind is float and isinstance(v, int) and not isinstance(v, bool):
        v, ok = float(v), True
    if not ok:
        raise ParseError(f"expected {kind.__name__}, got {type(v).__name__}", field=f"{where}.{key}")
    return v


def workload_from_dict(doc: dict) -> WorkloadSpec:
    if not isinstance(doc, dict):
        raise ParseError("top level must be an object")
    model = _field(doc, "model", str, "model")
    defaults = doc.get("defaults", {})
    if not isinstance(defaults, dict):
        raise ParseError("expected object", field="defaults")
    bz = _field(defaults, "bz", int, "defaults", 8)
    nnz = _field(defaults, "nnz", int, "defaults", bz)
    act = _field(defaults, "act_sparsity", float, "defaults", 0.0)
    raw_layers = doc.get("layers")
    if not isinstance(raw_layers, list):
        raise ParseError("expected a list", field="layers")
    if not raw_layers:
        raise ValidationError("workload has no layers")
    known = {f.name for f in fields(LayerShape)}
    layers = []
    for i, raw in enumerate(raw_layers):
        where = f"layers[{i}]"
        if not isinstance(raw, dict):
            raise ParseError("expected object", field=where)
        unknown = set(raw) - known
        if unknown:
            raise ParseError(f"unknown keys {sorted(unknown)}", field=where)
        for key in _REQUIRED:
            if key not in raw:
                raise ParseError("missing required field", field=f"{where}.{key}")
        layer = LayerShape(
            name=_field(raw, "name", str, where),
            kind=_field(raw, "kind", str, where),
            h=_field(raw, "h", int, where),
            w=_field(raw, "w", int, where),
            cin=_field(raw, "cin", int, where),
            cout=_field(raw, "cout", int, where),
            k=_field(raw, "k", int, where, 1),
            s=_field(raw, "s", int, where, 1),
            p=_field(raw, "p", int, where, 0),
            nnz=_field(raw, "nnz", int, where, nnz),
            bz=_field(raw, "bz", int, where, bz),
            act_sparsity=_field(raw, "act_sparsity", float, where, act),
            dbb_exempt=_field(raw, "dbb_exempt", bool, where, False),
        )
        validate_layer(layer, where)
        layers.append(layer)
    names = [l.name for l in layers]
    if len(set(names)) != len(names):
        raise ValidationError("layer names must be unique")
    return WorkloadSpec(model, tuple(layers), bz, nnz, act)


def workload_to_dict(spec: WorkloadSpec) -> dict:
    return {
        "model": spec.model,
        "defaults": {"bz": spec.default_bz, "nnz": spec.default_nnz, "act_sparsity": spec.default_act_sparsity},
        "layers": [asdict(l) for l in spec.layers],
    }


def loads_workload(text: str) -> WorkloadSpec:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno) from None
    return workload_from_dict(doc)


def dumps_workload(spec: WorkloadSpec) -> str:
    return json.dumps(workload_to_dict(spec), indent=2) + "\n"


def load_workload(path) -> WorkloadSpec:
    with open(path) as fh:
        return loads_workload(fh.read())


def bundled_workload(name: str = "resnet50") -> WorkloadSpec:
    """Load a workload shipped with the package, by name."""
    text = resources.files("vdbb.data").joinpath(f"{name}.json").read_text()
    return loads_workload(text)
