"""Layer-chain cost model.

A network is an ordered chain of layers, each carrying analytic compute
(multiply-accumulate) and memory-traffic attributes. Layers are addressed in
two coordinate systems:

* forward index ``id``: 0 = input-side layer, as stored in network files;
* backward index ``b = N - id``: 1 = output-side layer, the natural
  coordinate for backpropagation-chain costs. All scheduling math uses
  backward indices.

``strategy_cost`` is the ground-truth latency of a sparse update strategy and
is the oracle against which the scheduler is certified.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .errors import InputError

LAYER_KINDS = (
    "conv2d",
    "linear",
    "batchnorm",
    "layernorm",
    "activation",
    "pooling",
    "attention-projection",
    "feedforward",
)

PARAM_FREE_KINDS = frozenset({"activation", "pooling"})

DEFAULT_ELEMENT_WIDTH = 4  # bytes per stored element

# explicit costs must agree with hyperparam-derived ones to 0.1% relative
COST_CONSISTENCY_RTOL = 1e-3

_LAYER_FIELDS = frozenset(
    {"id", "kind", "has_params", "channels", "out_elements", "mac_count",
     "mem_traffic", "hyperparams"}
)
_NETWORK_FIELDS = frozenset({"name", "layers", "element_width"})


@dataclass(frozen=True)
class LayerSpec:
    """One layer of the chain, forward-indexed."""

    id: int
    kind: str
    has_params: bool
    channels: int
    out_elements: int
    mac_count: int = 0
    mem_traffic: int = 0
    hyperparams: dict | None = None

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise InputError(f"layer {self.id}: unknown kind {self.kind!r}")
        if self.channels < 1:
            raise InputError(f"layer {self.id}: channels must be >= 1")
        if self.out_elements < 1:
            raise InputError(f"layer {self.id}: out_elements must be >= 1")
        if self.kind in PARAM_FREE_KINDS and self.has_params:
            raise InputError(
                f"layer {self.id}: kind {self.kind!r} cannot carry parameters"
            )
        if self.mac_count < 0 or self.mem_traffic < 0:
            raise InputError(f"layer {self.id}: costs must be non-negative")


def _dims(hp: dict, layer_id: int, *names, **defaults) -> list:
    vals = []
    for name in names:
        if name in hp:
            v = hp[name]
        elif name in defaults:
            v = defaults[name]
        else:
            raise InputError(f"layer {layer_id}: hyperparams missing {name!r}")
        vals.append(v)
    return vals


def _kernel_dims(hp: dict, default=None) -> tuple[int, int]:
    k = hp.get("kernel", default)
    if k is None:
        raise InputError("hyperparams missing 'kernel'")
    if isinstance(k, (list, tuple)):
        kh, kw = k
    else:
        kh = kw = k
    return int(kh), int(kw)


def derive_costs(layer: LayerSpec, element_width: int = DEFAULT_ELEMENT_WIDTH):
    """Analytic (mac_count, mem_traffic) for one layer from its hyperparams.

    Memory traffic counts forward-pass weights read plus input read plus
    output written, at ``element_width`` bytes per element. Backward-pass
    traffic differs and is deliberately not modelled here.
    """
    hp = layer.hyperparams
    if hp is None:
        raise InputError(f"layer {layer.id}: no hyperparams to derive costs from")
    batch = int(hp.get("batch", 1))
    if batch < 1:
        raise InputError(f"layer {layer.id}: batch must be >= 1")
    kind = layer.kind

    if kind == "conv2d":
        cin, cout, h, w = (
            int(v) for v in _dims(hp, layer.id, "in_channels", "out_channels", "h_out", "w_out")
        )
        kh, kw = _kernel_dims(hp)
        h_in = int(hp.get("h_in", h))
        w_in = int(hp.get("w_in", w))
        if min(cin, cout, h, w, kh, kw, h_in, w_in) < 1:
            raise InputError(f"layer {layer.id}: dimensions must be positive")
        mac = kh * kw * cin * cout * h * w * batch
        weights = kh * kw * cin * cout
        activ = (cin * h_in * w_in + cout * h * w) * batch
    elif kind == "linear":
        fin, fout = (int(v) for v in _dims(hp, layer.id, "in_features", "out_features"))
        rows = batch * int(hp.get("tokens", 1))
        if min(fin, fout, rows) < 1:
            raise InputError(f"layer {layer.id}: dimensions must be positive")
        mac = rows * fin * fout
        weights = fin * fout
        activ = rows * (fin + fout)
    elif kind in ("batchnorm", "layernorm"):
        # scale + shift per output element
        mac = 2 * layer.out_elements * batch
        weights = 2 * layer.channels
        activ = 2 * layer.out_elements * batch
    elif kind == "activation":
        mac = layer.out_elements * batch
        weights = 0
        activ = 2 * layer.out_elements * batch
    elif kind == "pooling":
        kh, kw = _kernel_dims(hp, default=1)
        if min(kh, kw) < 1:
            raise InputError(f"layer {layer.id}: dimensions must be positive")
        window = kh * kw
        mac = window * layer.out_elements * batch
        weights = 0
        activ = (window + 1) * layer.out_elements * batch
    elif kind == "attention-projection":
        tokens, fin, fout = (
            int(v) for v in _dims(hp, layer.id, "tokens", "in_features", "out_features")
        )
        if min(tokens, fin, fout) < 1:
            raise InputError(f"layer {layer.id}: dimensions must be positive")
        mac = batch * tokens * fin * fout
        weights = fin * fout
        activ = batch * tokens * (fin + fout)
    elif kind == "feedforward":
        tokens, hidden, ffn = (
            int(v) for v in _dims(hp, layer.id, "tokens", "hidden_dim", "ffn_dim")
        )
        if min(tokens, hidden, ffn) < 1:
            raise InputError(f"layer {layer.id}: dimensions must be positive")
        mac = 2 * batch * tokens * hidden * ffn
        weights = 2 * hidden * ffn
        activ = batch * tokens * (2 * hidden + 2 * ffn)
    else:  # pragma: no cover - kinds validated in LayerSpec
        raise InputError(f"layer {layer.id}: unknown kind {kind!r}")

    return mac, (weights + activ) * element_width


@dataclass(frozen=True)
class Network:
    """Ordered layer chain. Layer ids must be contiguous 0..N-1."""

    name: str
    layers: tuple[LayerSpec, ...]
    element_width: int = DEFAULT_ELEMENT_WIDTH

    def __post_init__(self):
        if not self.layers:
            raise InputError("empty network")
        for pos, layer in enumerate(self.layers):
            if layer.id != pos:
                raise InputError(
                    f"layer ids must be contiguous 0..{len(self.layers) - 1}; "
                    f"found id {layer.id} at position {pos}"
                )
        if self.element_width < 1:
            raise InputError("element_width must be >= 1")

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    def backward_index(self, layer_id: int) -> int:
        return self.n_layers - layer_id

    def forward_id(self, b: int) -> int:
        return self.n_layers - b

    def layer_by_backward(self, b: int) -> LayerSpec:
        if not 1 <= b <= self.n_layers:
            raise InputError(f"backward index {b} out of range 1..{self.n_layers}")
        return self.layers[self.n_layers - b]

    def selectable_backward(self) -> tuple[int, ...]:
        """Backward indices of layers that may appear in an update strategy."""
        return tuple(
            b
            for b in range(1, self.n_layers + 1)
            if self.layer_by_backward(b).has_params
        )


@dataclass(frozen=True)
class UpdateStrategy:
    """Sparse layer selection, held as ascending backward indices."""

    n_layers: int
    selected: tuple[int, ...]

    def __post_init__(self):
        sel = tuple(sorted(set(int(b) for b in self.selected)))
        object.__setattr__(self, "selected", sel)
        if sel and not (1 <= sel[0] and sel[-1] <= self.n_layers):
            raise InputError(
                f"selected backward indices must lie in 1..{self.n_layers}"
            )

    @property
    def deepest(self) -> int:
        return self.selected[-1] if self.selected else 0

    @property
    def is_empty(self) -> bool:
        return not self.selected

    def to_vector(self) -> tuple[int, ...]:
        """0/1 vector indexed by backward index; slot 0 is padding."""
        vec = [0] * (self.n_layers + 1)
        for b in self.selected:
            vec[b] = 1
        return tuple(vec)

    def validate_against(self, network: Network) -> None:
        if self.n_layers != network.n_layers:
            raise InputError(
                f"strategy covers {self.n_layers} layers, network has "
                f"{network.n_layers}"
            )
        for b in self.selected:
            if not network.layer_by_backward(b).has_params:
                raise InputError(
                    f"backward index {b} is parameter-free and cannot be selected"
                )


@dataclass(frozen=True)
class StrategyCost:
    """Extra latency induced by an update strategy, in milliseconds."""

    t_backward: float
    t_reforward: float

    @property
    def t_total_extra(self) -> float:
        return self.t_backward + self.t_reforward


def strategy_cost(network: Network, strategy: UpdateStrategy, profile) -> StrategyCost:
    """Closed-form cost of a strategy under a latency profile.

    Backward time is the weight-gradient time of every selected layer plus
    the activation-gradient chain down to (but excluding) the deepest
    selection; reforward time re-executes every layer from the deepest
    selection to the output. ``profile`` is a ``latency.LatencyProfile`` (or
    anything exposing ``t_dw``, ``cum_dx`` and ``cum_re`` 1-based arrays).
    """
    n = network.n_layers
    if profile.n_layers != n:
        raise InputError(
            f"profile covers {profile.n_layers} layers, network has {n}"
        )
    strategy.validate_against(network)
    if strategy.is_empty:
        return StrategyCost(0.0, 0.0)
    d = strategy.deepest
    t_dw_sum = 0.0
    for b in strategy.selected:
        t_dw_sum += float(profile.t_dw[b])
    t_backward = t_dw_sum + float(profile.cum_dx[d - 1])
    t_reforward = float(profile.cum_re[d])
    return StrategyCost(t_backward, t_reforward)


def load_network(document: dict, lenient: bool = False) -> Network:
    """Build a Network from a parsed network document.

    Layers listed with hyperparams get their costs derived (and checked
    against explicit values when both are present); layers without
    hyperparams must carry explicit costs.
    """
    if not isinstance(document, dict):
        raise InputError("network document must be an object")
    if not lenient:
        unknown = set(document) - _NETWORK_FIELDS
        if unknown:
            raise InputError(f"unknown network fields: {sorted(unknown)}")
    raw_layers = document.get("layers")
    if not raw_layers:
        raise InputError("empty network")
    element_width = int(document.get("element_width", DEFAULT_ELEMENT_WIDTH))

    seen_ids = set()
    layers = []
    for raw in raw_layers:
        if not isinstance(raw, dict):
            raise InputError("layer entries must be objects")
        if not lenient:
            unknown = set(raw) - _LAYER_FIELDS
            if unknown:
                raise InputError(
                    f"layer {raw.get('id')}: unknown fields {sorted(unknown)}"
                )
        try:
            layer_id = int(raw["id"])
            kind = raw["kind"]
            has_params = bool(raw["has_params"])
            channels = int(raw["channels"])
            out_elements = int(raw["out_elements"])
        except KeyError as exc:
            raise InputError(f"layer entry missing field {exc.args[0]!r}") from None
        if layer_id in seen_ids:
            raise InputError(f"duplicate layer id {layer_id}")
        seen_ids.add(layer_id)

        hp = raw.get("hyperparams")
        explicit_mac = raw.get("mac_count")
        explicit_mem = raw.get("mem_traffic")
        probe = LayerSpec(
            id=layer_id,
            kind=kind,
            has_params=has_params,
            channels=channels,
            out_elements=out_elements,
            mac_count=int(explicit_mac or 0),
            mem_traffic=int(explicit_mem or 0),
            hyperparams=hp,
        )
        if hp is not None:
            mac, mem = derive_costs(probe, element_width)
            for name, explicit, derived in (
                ("mac_count", explicit_mac, mac),
                ("mem_traffic", explicit_mem, mem),
            ):
                if explicit is not None and not math.isclose(
                    explicit, derived, rel_tol=COST_CONSISTENCY_RTOL
                ):
                    raise InputError(
                        f"layer {layer_id}: {name} {explicit} disagrees with "
                        f"hyperparam-derived value {derived}"
                    )
            probe = LayerSpec(
                id=layer_id,
                kind=kind,
                has_params=has_params,
                channels=channels,
                out_elements=out_elements,
                mac_count=mac,
                mem_traffic=mem,
                hyperparams=hp,
            )
        elif explicit_mac is None or explicit_mem is None:
            raise InputError(
                f"layer {layer_id}: needs either explicit costs or hyperparams"
            )
        layers.append(probe)

    layers.sort(key=lambda l: l.id)
    return Network(
        name=str(document.get("name", "unnamed")),
        layers=tuple(layers),
        element_width=element_width,
    )


def load_network_file(path, lenient: bool = False) -> Network:
    with open(path) as fh:
        try:
            document = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: invalid JSON ({exc})") from None
    return load_network(document, lenient=lenient)
