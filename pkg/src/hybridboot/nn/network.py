"""Model assembly, forward/backward over the layer stack, checkpoints.

A Model is an ordered list of layer specs plus per-layer parameter and
velocity tensors. Corruption layers apply corrupt_minibatch in train mode
and are exact identities in eval mode; their realized masks are constants
for the backward pass, which routes swapped-coordinate gradients back to
the partner rows (the minibatch shift is a bijection).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from ..core import DOMAIN_CORRUPT, DOMAIN_INIT, Rng, as_tensor, rng_new
from ..corruptor import CorruptionSpec, corrupt_minibatch_recorded, route_gradient
from ..errors import (
    CheckpointFormatError,
    LayerShapeError,
    ShapeError,
    StaleActivationsError,
)
from . import layers as L

KINDS = ("dense", "conv2d", "relu", "flatten", "corruption", "softmax_output")


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    units: int = 0                      # dense
    filters: int = 0                    # conv2d
    kernel: tuple[int, int] = (3, 3)    # conv2d
    stride: int = 1
    pad: int = 0
    corruption: CorruptionSpec | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ShapeError(f"unknown layer kind {self.kind!r}")
        if self.kind == "corruption" and self.corruption is None:
            raise ShapeError("corruption layer needs a CorruptionSpec")


def dense(units): return LayerSpec("dense", units=units)
def conv2d(filters, kernel=(3, 3), stride=1, pad=0):
    return LayerSpec("conv2d", filters=filters, kernel=tuple(kernel), stride=stride, pad=pad)
def relu(): return LayerSpec("relu")
def flatten(): return LayerSpec("flatten")
def corruption(spec): return LayerSpec("corruption", corruption=spec)
def softmax_output(): return LayerSpec("softmax_output")


@dataclass
class Model:
    input_shape: tuple[int, ...]
    specs: list[LayerSpec]
    shapes: list[tuple[int, ...]]              # output shape per layer (no batch axis)
    params: list[dict[str, np.ndarray] | None]
    velocity: list[dict[str, np.ndarray] | None]
    corruption_ordinals: list[int | None] = field(default_factory=list)

    @property
    def class_count(self) -> int:
        return self.shapes[-1][0]

    def parameter_count(self) -> int:
        return sum(p[k].size for p in self.params if p for k in p)


def _infer_shape(index: int, spec: LayerSpec, in_shape: tuple[int, ...]) -> tuple[int, ...]:
    if spec.kind == "dense":
        if len(in_shape) != 1:
            raise LayerShapeError(index, f"dense needs a flat input, got {in_shape}")
        return (spec.units,)
    if spec.kind == "conv2d":
        if len(in_shape) != 3:
            raise LayerShapeError(index, f"conv2d needs CxHxW input, got {in_shape}")
        c, h, w = in_shape
        try:
            oh = L._conv_out_extent(h, spec.kernel[0], spec.stride, spec.pad)
            ow = L._conv_out_extent(w, spec.kernel[1], spec.stride, spec.pad)
        except ShapeError as exc:
            raise LayerShapeError(index, str(exc)) from exc
        return (spec.filters, oh, ow)
    if spec.kind == "flatten":
        return (int(np.prod(in_shape)),)
    if spec.kind == "softmax_output":
        if len(in_shape) != 1:
            raise LayerShapeError(index, f"softmax needs flat logits, got {in_shape}")
        return in_shape
    return in_shape  # relu, corruption preserve shape


def _init_params(spec: LayerSpec, in_shape, rng: Rng):
    """Fan-in-scaled uniform weights on +-sqrt(6/fan_in), zero biases."""
    if spec.kind == "dense":
        fan_in = in_shape[0]
        bound = np.sqrt(6.0 / fan_in)
        w = rng.generator.uniform(-bound, bound, size=(fan_in, spec.units))
        return {"w": w, "b": np.zeros(spec.units)}
    if spec.kind == "conv2d":
        c = in_shape[0]
        fan_in = c * spec.kernel[0] * spec.kernel[1]
        bound = np.sqrt(6.0 / fan_in)
        w = rng.generator.uniform(-bound, bound, size=(spec.filters, c, *spec.kernel))
        return {"w": w, "b": np.zeros(spec.filters)}
    return None


def build_model(input_shape, specs, rng: Rng | None = None, seed: int = 0) -> Model:
    """Validate shape composition, then allocate parameters and velocity.

    Exactly one softmax_output is required, in last position. Weight draws
    come from a dedicated per-layer stream so the init is reproducible
    regardless of how the model is later used.
    """
    if rng is None:
        rng = rng_new(seed, DOMAIN_INIT)
    specs = list(specs)
    if not specs or specs[-1].kind != "softmax_output":
        raise LayerShapeError(len(specs) - 1, "model must end with softmax_output")
    if sum(s.kind == "softmax_output" for s in specs) != 1:
        raise LayerShapeError(len(specs) - 1, "exactly one softmax_output allowed")

    shapes, params, velocity, ordinals = [], [], [], []
    cur = tuple(int(s) for s in input_shape)
    next_ordinal = 0
    for index, spec in enumerate(specs):
        cur = _infer_shape(index, spec, cur)
        shapes.append(cur)
        p = _init_params(spec, shapes[index - 1] if index else tuple(input_shape), rng.child(index))
        params.append(p)
        velocity.append(None if p is None else {k: np.zeros_like(v) for k, v in p.items()})
        if spec.kind == "corruption":
            ordinals.append(next_ordinal)
            next_ordinal += 1
        else:
            ordinals.append(None)
    return Model(
        input_shape=tuple(int(s) for s in input_shape),
        specs=specs, shapes=shapes, params=params, velocity=velocity,
        corruption_ordinals=ordinals,
    )


@dataclass
class ForwardResult:
    caches: list
    probs: np.ndarray
    logp: np.ndarray
    loss: float
    per_example_losses: np.ndarray
    records: dict[int, object]          # layer index -> CorruptionRecord
    batch_shape: tuple[int, ...]


def forward(model: Model, batch, labels, mode: str = "train", rng: Rng | None = None) -> ForwardResult:
    """Run the stack; returns activations caches, softmax probabilities and
    the mean cross-entropy. Corruption layers need ``rng`` in train mode."""
    if mode not in ("train", "eval"):
        raise ShapeError(f"mode must be 'train' or 'eval', got {mode!r}")
    x = as_tensor(batch)
    labels = np.asarray(labels, dtype=np.int64)
    if x.shape[0] != labels.shape[0]:
        raise ShapeError(f"batch of {x.shape[0]} examples vs {labels.shape[0]} labels")
    if x.shape[1:] != model.input_shape:
        raise LayerShapeError(0, f"input shape {x.shape[1:]} != model {model.input_shape}")

    caches = []
    records: dict[int, object] = {}
    for index, spec in enumerate(model.specs):
        p = model.params[index]
        if spec.kind == "dense":
            try:
                x, cache = L.dense_forward(x, p["w"], p["b"])
            except ShapeError as exc:
                raise LayerShapeError(index, str(exc)) from exc
        elif spec.kind == "conv2d":
            try:
                x, cache = L.conv2d_forward(x, p["w"], p["b"], spec.stride, spec.pad)
            except ShapeError as exc:
                raise LayerShapeError(index, str(exc)) from exc
        elif spec.kind == "relu":
            x, cache = L.relu_forward(x)
        elif spec.kind == "flatten":
            x, cache = L.flatten_forward(x)
        elif spec.kind == "corruption":
            if mode == "train":
                if rng is None:
                    raise ShapeError("train-mode forward needs an Rng for corruption")
                ordinal = model.corruption_ordinals[index]
                stream = rng.child(DOMAIN_CORRUPT, ordinal)
                x, rec = corrupt_minibatch_recorded(x, spec.corruption, stream, ordinal)
                records[index] = rec
            cache = None
        else:  # softmax_output
            probs, logp = L.softmax_probs(x)
            cache = None
        caches.append(cache)

    per_example = L.cross_entropy(logp, labels)
    return ForwardResult(
        caches=caches, probs=probs, logp=logp, loss=float(per_example.mean()),
        per_example_losses=per_example, records=records, batch_shape=x.shape,
    )


def backward(model: Model, fwd: ForwardResult, labels, dlogits=None):
    """Gradients of the mean loss for every parameter tensor.

    ``dlogits`` overrides the default (probs - onehot)/m seed, which the
    per-example grad-norm harness uses to isolate one example's loss.
    """
    labels = np.asarray(labels, dtype=np.int64)
    m = fwd.probs.shape[0]
    if labels.shape[0] != m or len(fwd.caches) != len(model.specs):
        raise StaleActivationsError("activations do not match this model/batch")
    if dlogits is None:
        dlogits = fwd.probs.copy()
        dlogits[np.arange(m), labels] -= 1.0
        dlogits /= m
    grads: list[dict[str, np.ndarray] | None] = [None] * len(model.specs)
    d = dlogits
    for index in range(len(model.specs) - 1, -1, -1):
        spec = model.specs[index]
        p = model.params[index]
        cache = fwd.caches[index]
        if spec.kind == "dense":
            if cache.shape[1] != p["w"].shape[0]:
                raise StaleActivationsError(f"layer {index} cache shape {cache.shape} is stale")
            d, dw, db = L.dense_backward(cache, p["w"], d)
            grads[index] = {"w": dw, "b": db}
        elif spec.kind == "conv2d":
            d, dw, db = L.conv2d_backward(cache, p["w"], d, spec.stride, spec.pad)
            grads[index] = {"w": dw, "b": db}
        elif spec.kind == "relu":
            d = L.relu_backward(cache, d)
        elif spec.kind == "flatten":
            d = L.flatten_backward(cache, d)
        elif spec.kind == "corruption":
            if index in fwd.records:
                d = route_gradient(fwd.records[index], d)
        # softmax_output consumed by the dlogits seed
    return grads


# ---------------------------------------------------------------------------
# Checkpoint format: magic "HBNN" | u32 version | u32 layer count |
# u32 input rank | u32*rank input extents | per layer: u8 kind code,
# kind extents, then raw little-endian float64 parameter blocks (w, b).
# Velocity is not serialized; a loaded model starts with zero velocity.
# ---------------------------------------------------------------------------

MAGIC = b"HBNN"
FORMAT_VERSION = 1
_KIND_CODES = {k: i + 1 for i, k in enumerate(KINDS)}
_CODE_KINDS = {v: k for k, v in _KIND_CODES.items()}
_SCHEME_CODES = {"dropout": 1, "hybrid": 2}
_STRUCT_CODES = {"elementwise": 1, "spatial_grid": 2, "channel": 3}


def save_model(model: Model, path) -> None:
    out = bytearray()
    out += MAGIC
    out += struct.pack("<II", FORMAT_VERSION, len(model.specs))
    out += struct.pack("<I", len(model.input_shape))
    out += struct.pack(f"<{len(model.input_shape)}I", *model.input_shape)
    for spec, params in zip(model.specs, model.params):
        out += struct.pack("<B", _KIND_CODES[spec.kind])
        if spec.kind == "dense":
            out += struct.pack("<I", spec.units)
        elif spec.kind == "conv2d":
            out += struct.pack("<5I", spec.filters, spec.kernel[0], spec.kernel[1],
                               spec.stride, spec.pad)
        elif spec.kind == "corruption":
            c = spec.corruption
            fixed = np.nan if c.fixed_p is None else c.fixed_p
            out += struct.pack("<BBddB", _SCHEME_CODES[c.scheme], _STRUCT_CODES[c.structure],
                               c.u, fixed, int(c.normalize))
        if params is not None:
            for key in ("w", "b"):
                out += params[key].astype("<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(bytes(out))


class _Reader:
    def __init__(self, blob):
        self.blob = blob
        self.offset = 0

    def take(self, fmt):
        size = struct.calcsize(fmt)
        if self.offset + size > len(self.blob):
            raise CheckpointFormatError("checkpoint truncated", offset=self.offset)
        vals = struct.unpack_from(fmt, self.blob, self.offset)
        self.offset += size
        return vals

    def array(self, shape):
        count = int(np.prod(shape))
        size = count * 8
        if self.offset + size > len(self.blob):
            raise CheckpointFormatError("parameter block truncated", offset=self.offset)
        arr = np.frombuffer(self.blob, dtype="<f8", count=count, offset=self.offset)
        self.offset += size
        return arr.reshape(shape).astype(np.float64)


def load_model(path) -> Model:
    with open(path, "rb") as fh:
        blob = fh.read()
    r = _Reader(blob)
    if bytes(r.take("<4s")[0]) != MAGIC:
        raise CheckpointFormatError("bad magic, not an HBNN checkpoint", offset=0)
    version, n_layers = r.take("<II")
    if version != FORMAT_VERSION:
        raise CheckpointFormatError(f"unsupported format version {version}", offset=4)
    (rank,) = r.take("<I")
    input_shape = tuple(r.take(f"<{rank}I"))

    specs = []
    raw_params = []
    cur = input_shape
    for index in range(n_layers):
        (code,) = r.take("<B")
        kind = _CODE_KINDS.get(code)
        if kind is None:
            raise CheckpointFormatError(f"unknown layer code {code}", offset=r.offset - 1)
        if kind == "dense":
            (units,) = r.take("<I")
            spec = dense(units)
        elif kind == "conv2d":
            filters, kh, kw, stride, pad = r.take("<5I")
            spec = conv2d(filters, (kh, kw), stride, pad)
        elif kind == "corruption":
            sc, st, u, fixed, norm = r.take("<BBddB")
            scheme = {v: k for k, v in _SCHEME_CODES.items()}[sc]
            structure = {v: k for k, v in _STRUCT_CODES.items()}[st]
            spec = corruption(CorruptionSpec(
                scheme=scheme, structure=structure, u=u,
                fixed_p=None if np.isnan(fixed) else float(fixed),
                normalize=bool(norm)))
        else:
            spec = LayerSpec(kind)
        in_shape = cur
        cur = _infer_shape(index, spec, cur)
        specs.append(spec)
        if kind == "dense":
            raw_params.append({"w": r.array((in_shape[0], spec.units)),
                               "b": r.array((spec.units,))})
        elif kind == "conv2d":
            raw_params.append({"w": r.array((spec.filters, in_shape[0], *spec.kernel)),
                               "b": r.array((spec.filters,))})
        else:
            raw_params.append(None)
    if r.offset != len(blob):
        raise CheckpointFormatError("trailing bytes after last layer", offset=r.offset)

    model = build_model(input_shape, specs, rng=rng_new(0, DOMAIN_INIT))
    model.params = raw_params
    model.velocity = [None if p is None else {k: np.zeros_like(v) for k, v in p.items()}
                      for p in raw_params]
    return model
