"""Attention maps and the full / attention / background feature streams.

An attention map ``att`` in [0, 1] is given per tap layer and per mask
channel; the background map is always ``1 - att`` so the pair sums to one at
every location.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeMismatch

PASSTHROUGH = "passthrough"
LEARNED = "learned"


def sigmoid(z):
    # split by sign so exp never overflows
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass(frozen=True, eq=False)
class AttentionSubnet:
    """Either the identity on downsampled masks, or a per-layer 1x1 conv + sigmoid.

    In learned mode ``params[l] = (weight, bias)`` where ``weight`` has one
    entry per feature channel followed by one for the mask value.
    """

    mode: str = PASSTHROUGH
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in (PASSTHROUGH, LEARNED):
            raise ValueError(f"unknown attention mode {self.mode!r}")
        if self.mode == LEARNED:
            for layer, (weight, bias) in self.params.items():
                if not (np.all(np.isfinite(weight)) and np.isfinite(bias)):
                    raise ValueError(f"attention weights for layer {layer} are not finite")

    @classmethod
    def learned(cls, spec, attention):
        """Build from the (weight, bias) list stored in a weights file."""
        if len(attention) != len(spec.tap_ids):
            raise ShapeMismatch(f"{len(attention)} attention entries for {len(spec.tap_ids)} tap layers")
        params = {
            idx: (np.asarray(w, dtype=np.float64), float(b))
            for idx, (w, b) in zip(spec.tap_ids, attention)
        }
        return cls(LEARNED, params)


def compute_attention(subnet, features, masks):
    """Attention maps ``{layer: (C, h, w)}`` from features and downsampled masks."""
    if set(features) != set(masks):
        raise ShapeMismatch("feature and mask pyramids cover different layers")
    att = {}
    for layer, f in features.items():
        m = masks[layer]
        if f.shape[1:] != m.shape[1:]:
            raise ShapeMismatch(f"layer {layer}: features {f.shape[1:]} vs mask {m.shape[1:]}")
        if subnet.mode == PASSTHROUGH:
            att[layer] = m
            continue
        weight, bias = subnet.params[layer]
        n = f.shape[0]
        if weight.shape != (n + 1,):
            raise ShapeMismatch(f"layer {layer}: attention weight needs {n + 1} entries, has {weight.shape}")
        shared = np.tensordot(weight[:n], f, axes=1)
        att[layer] = sigmoid(shared[None, :, :] + weight[n] * m + bias)
    return att


def background(att):
    return {layer: 1.0 - a for layer, a in att.items()}


@dataclass(frozen=True, eq=False)
class StreamSet:
    """Per-layer streams; ``attention[l]`` and ``bkgd[l]`` are (C, N, h, w)."""

    full: dict
    attention: dict
    bkgd: dict


def build_streams(features, att):
    if set(features) != set(att):
        raise ShapeMismatch("feature and attention pyramids cover different layers")
    attention, bkgd = {}, {}
    for layer, f in features.items():
        a = att[layer]
        if f.shape[1:] != a.shape[1:]:
            raise ShapeMismatch(f"layer {layer}: features {f.shape[1:]} vs attention {a.shape[1:]}")
        attention[layer] = f[None, :, :, :] * a[:, None, :, :]
        bkgd[layer] = f[None, :, :, :] * (1.0 - a)[:, None, :, :]
    return StreamSet(dict(features), attention, bkgd)
