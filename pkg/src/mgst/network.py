"""Small VGG-style feature extractor with explicit forward and backward passes.

Feature maps are kept as (N_l, h_l, w_l) arrays; ``features[l].reshape(N_l, -1)``
is the N_l x M_l matrix used by the losses. Only ReLU outputs may be tapped.
"""

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .errors import FormatError, IndivisibleDims, IoError, ShapeMismatch
from .rng import Lcg64

CONV, RELU, AVGPOOL = "conv", "relu", "avgpool"
_KIND_CODES = {CONV: 0, RELU: 1, AVGPOOL: 2}
_CODE_KINDS = {v: k for k, v in _KIND_CODES.items()}

MAGIC = b"MGSTW001"
ATTN_MAGIC = b"ATTN0001"


@dataclass(frozen=True, eq=False)
class LayerSpec:
    kind: str
    weight: np.ndarray = None
    bias: np.ndarray = None

    def __post_init__(self):
        if self.kind not in _KIND_CODES:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.kind == CONV:
            if self.weight is None or self.bias is None:
                raise ValueError("conv layers need weight and bias")
            if self.weight.ndim != 4 or self.weight.shape[2:] != (3, 3):
                raise ShapeMismatch(f"conv weight must be [out, in, 3, 3], got {self.weight.shape}")
            if self.bias.shape != (self.weight.shape[0],):
                raise ShapeMismatch(f"conv bias must have {self.weight.shape[0]} entries, got {self.bias.shape}")
            if not (np.all(np.isfinite(self.weight)) and np.all(np.isfinite(self.bias))):
                raise ValueError("conv parameters must be finite")

    @property
    def in_channels(self):
        return self.weight.shape[1]

    @property
    def out_channels(self):
        return self.weight.shape[0]


def conv(weight, bias):
    return LayerSpec(CONV, np.asarray(weight, dtype=np.float64), np.asarray(bias, dtype=np.float64))


def relu():
    return LayerSpec(RELU)


def avgpool():
    return LayerSpec(AVGPOOL)


@dataclass(frozen=True, eq=False)
class NetworkSpec:
    layers: tuple
    style_layer_ids: frozenset
    content_layer_ids: frozenset

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "style_layer_ids", frozenset(int(i) for i in self.style_layer_ids))
        object.__setattr__(self, "content_layer_ids", frozenset(int(i) for i in self.content_layer_ids))
        channels = 3
        for idx, layer in enumerate(self.layers):
            if layer.kind == CONV:
                if layer.in_channels != channels:
                    raise ShapeMismatch(
                        f"layer {idx} expects {layer.in_channels} input channels, receives {channels}"
                    )
                channels = layer.out_channels
        taps = self.tap_ids
        if not taps:
            raise ValueError("network needs at least one style or content layer")
        for idx in taps:
            if not 0 <= idx < len(self.layers) or self.layers[idx].kind != RELU:
                raise ValueError(f"tap layer {idx} is not a relu layer")

    @property
    def tap_ids(self):
        return tuple(sorted(self.style_layer_ids | self.content_layer_ids))

    @property
    def n_pools(self):
        return sum(layer.kind == AVGPOOL for layer in self.layers)

    def pools_before(self, layer_id):
        return sum(layer.kind == AVGPOOL for layer in self.layers[:layer_id])

    def channels_at(self, layer_id):
        channels = 3
        for layer in self.layers[: layer_id + 1]:
            if layer.kind == CONV:
                channels = layer.out_channels
        return channels

    def check_dims(self, height, width):
        factor = 2 ** self.n_pools
        if height % factor or width % factor:
            raise IndivisibleDims(
                f"image {width}x{height} is not divisible by the pooling factor {factor}"
            )


DEFAULT_TOPOLOGY = (
    (CONV, 3, 16), (RELU,), (CONV, 16, 16), (RELU,), (AVGPOOL,),
    (CONV, 16, 32), (RELU,), (CONV, 32, 32), (RELU,), (AVGPOOL,),
    (CONV, 32, 64), (RELU,),
)
DEFAULT_STYLE_IDS = (1, 6, 11)
DEFAULT_CONTENT_IDS = (11,)


def default_network(seed=7):
    """Seeded He-scaled random filters in the default topology.

    Weights are uniform on [-sqrt(3) s, sqrt(3) s] with s = sqrt(2 / (9 in)),
    so their variance is 2 / (9 in); they are rounded to float32 so that the
    network survives a weights-file round trip unchanged. Biases are zero.
    """
    rng = Lcg64(seed)
    layers = []
    for entry in DEFAULT_TOPOLOGY:
        if entry[0] == CONV:
            _, cin, cout = entry
            scale = np.sqrt(2.0 / (cin * 9))
            draws = rng.centered(cout * cin * 9) * np.sqrt(3.0) * scale
            weight = draws.astype(np.float32).astype(np.float64).reshape(cout, cin, 3, 3)
            layers.append(conv(weight, np.zeros(cout)))
        elif entry[0] == RELU:
            layers.append(relu())
        else:
            layers.append(avgpool())
    return NetworkSpec(tuple(layers), DEFAULT_STYLE_IDS, DEFAULT_CONTENT_IDS)


def _to_chw(image):
    if image.ndim != 3 or image.shape[2] != 3:
        raise ShapeMismatch(f"expected an (H, W, 3) image, got {image.shape}")
    return np.ascontiguousarray(np.transpose(image, (2, 0, 1)), dtype=np.float64)


def _run(spec, image, keep):
    spec.check_dims(image.shape[0], image.shape[1])
    x = _to_chw(image)
    inputs = [] if keep else None
    taps = {}
    tap_set = set(spec.tap_ids)
    last = spec.tap_ids[-1]
    for idx, layer in enumerate(spec.layers[: last + 1]):
        if keep:
            inputs.append(x)
        if layer.kind == CONV:
            x = kernels.conv3x3_forward(x, layer.weight, layer.bias)
        elif layer.kind == RELU:
            x = np.maximum(x, 0.0)
        else:
            x = kernels.avgpool2_forward(x)
        if idx in tap_set:
            taps[idx] = x
    return taps, inputs


def forward(spec, image):
    """Feature maps at every tap layer, keyed by layer index."""
    taps, _ = _run(spec, image, keep=False)
    return taps


def relu_signature(spec, image):
    """Concatenated sign pattern of every ReLU input, as a flat bool array.

    Two images with different signatures lie on different linear pieces of
    the network, so a finite difference spanning them is not a derivative.
    """
    spec.check_dims(image.shape[0], image.shape[1])
    x = _to_chw(image)
    signs = []
    for layer in spec.layers[: spec.tap_ids[-1] + 1]:
        if layer.kind == CONV:
            x = kernels.conv3x3_forward(x, layer.weight, layer.bias)
        elif layer.kind == RELU:
            signs.append((x > 0.0).ravel())
            x = np.maximum(x, 0.0)
        else:
            x = kernels.avgpool2_forward(x)
    return np.concatenate(signs)


def backward(spec, image, grads):
    """Image gradient of sum_l <grads[l], F_l(image)>, shaped (H, W, 3)."""
    taps, inputs = _run(spec, image, keep=True)
    for idx, g in grads.items():
        if idx not in taps:
            raise ShapeMismatch(f"layer {idx} is not a tap layer")
        if g.size != taps[idx].size:
            raise ShapeMismatch(f"gradient for layer {idx} has {g.size} entries, features have {taps[idx].size}")
    grad = None
    for idx in range(len(inputs) - 1, -1, -1):
        if idx in grads:
            g = np.asarray(grads[idx], dtype=np.float64).reshape(taps[idx].shape)
            grad = g if grad is None else grad + g
        if grad is None:
            continue
        layer = spec.layers[idx]
        if layer.kind == CONV:
            grad = kernels.conv3x3_backward(grad, layer.weight)
        elif layer.kind == RELU:
            grad = np.where(inputs[idx] > 0.0, grad, 0.0)
        else:
            grad = kernels.avgpool2_backward(grad)
    if grad is None:
        return np.zeros(image.shape, dtype=np.float64)
    return np.ascontiguousarray(np.transpose(grad, (1, 2, 0)))


def downsample_mask(mask, spec):
    """Mean-pool each mask channel down to every tap layer's resolution.

    Returns ``{layer: (C, h_l, w_l)}``.
    """
    spec.check_dims(mask.shape[0], mask.shape[1])
    m = np.ascontiguousarray(np.transpose(mask, (2, 0, 1)), dtype=np.float64)
    out = {}
    pooled = 0
    for idx in spec.tap_ids:
        while pooled < spec.pools_before(idx):
            m = kernels.avgpool2_forward(m)
            pooled += 1
        out[idx] = m
    return out


def write_weights(spec, path, attention=None):
    """Write ``spec`` in MGST-W v1 format.

    ``attention`` is an optional list of (weight_vector, bias) pairs, one per
    tap layer in ascending layer order, stored in the ATTN0001 section.
    """
    chunks = [MAGIC, struct.pack("<I", len(spec.layers))]
    for layer in spec.layers:
        chunks.append(struct.pack("<B", _KIND_CODES[layer.kind]))
        if layer.kind == CONV:
            cout, cin = layer.weight.shape[:2]
            chunks.append(struct.pack("<4I", cin, cout, 3, 3))
            chunks.append(layer.weight.astype("<f4").tobytes())
            chunks.append(layer.bias.astype("<f4").tobytes())
    for ids in (spec.style_layer_ids, spec.content_layer_ids):
        ids = sorted(ids)
        chunks.append(struct.pack(f"<I{len(ids)}I", len(ids), *ids))
    if attention is not None:
        chunks.append(ATTN_MAGIC)
        for weight, bias in attention:
            weight = np.asarray(weight, dtype="<f4").ravel()
            chunks.append(struct.pack("<I", weight.size))
            chunks.append(weight.tobytes())
            chunks.append(struct.pack("<f", bias))
    try:
        Path(path).write_bytes(b"".join(chunks))
    except OSError as exc:
        raise IoError(f"{path}: cannot write weights ({exc})") from exc


class _Reader:
    def __init__(self, data, path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n):
        if self.pos + n > len(self.data):
            raise FormatError(f"{self.path}: truncated at byte {self.pos}")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u32(self):
        return struct.unpack("<I", self.take(4))[0]

    def f32s(self, n):
        return np.frombuffer(self.take(4 * n), dtype="<f4").astype(np.float64)

    def at_end(self):
        return self.pos == len(self.data)


def read_weights_file(path):
    """Parse an MGST-W v1 file into ``(spec, attention_or_None)``."""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise IoError(f"{path}: cannot read weights ({exc})") from exc
    r = _Reader(data, path)
    if r.take(8) != MAGIC:
        raise FormatError(f"{path}: bad magic, not an MGST-W v1 file")
    layers = []
    for _ in range(r.u32()):
        code = r.take(1)[0]
        if code not in _CODE_KINDS:
            raise FormatError(f"{path}: unknown layer kind code {code}")
        kind = _CODE_KINDS[code]
        if kind == CONV:
            cin, cout, kh, kw = (r.u32() for _ in range(4))
            if (kh, kw) != (3, 3):
                raise FormatError(f"{path}: only 3x3 kernels are supported, got {kh}x{kw}")
            weight = r.f32s(cout * cin * 9).reshape(cout, cin, 3, 3)
            bias = r.f32s(cout)
            if not (np.all(np.isfinite(weight)) and np.all(np.isfinite(bias))):
                raise FormatError(f"{path}: non-finite weight in layer {len(layers)}")
            layers.append(conv(weight, bias))
        else:
            layers.append(LayerSpec(kind))
    style = [r.u32() for _ in range(r.u32())]
    content = [r.u32() for _ in range(r.u32())]
    try:
        spec = NetworkSpec(tuple(layers), style, content)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    attention = None
    if not r.at_end():
        if r.take(8) != ATTN_MAGIC:
            raise FormatError(f"{path}: unexpected trailing data")
        attention = []
        for idx in spec.tap_ids:
            width = r.u32()
            if width != spec.channels_at(idx) + 1:
                raise FormatError(
                    f"{path}: attention input width {width} for layer {idx}, "
                    f"expected {spec.channels_at(idx) + 1}"
                )
            weight = r.f32s(width)
            bias = float(r.f32s(1)[0])
            if not (np.all(np.isfinite(weight)) and np.isfinite(bias)):
                raise FormatError(f"{path}: non-finite attention weight")
            attention.append((weight, bias))
        if not r.at_end():
            raise FormatError(f"{path}: unexpected trailing data")
    return spec, attention


def load_weights(path):
    return read_weights_file(path)[0]
