"""Region-level content and style losses, smooth TV, and the total objective.

Per tap layer l with N filters over M positions and mask channel c:

    content, global   q_c = 1/(2NM) * sum (F[O] - F[I])**2
    content, local    1/(2NM) * sum ((F[O] - F[I]) * a_c[I])**2
    style, global     || G(F[O] * (1 - a_c[I])) - G(F[S] * (1 - a_c[S])) ||_F**2
    style, local      || G(F[O] * a_c[I])       - G(F[S] * a_c[S])       ||_F**2

with G(X) = X X^T / (2 N M) normalised by the image's own M. The global
content term is summed over the C mask channels literally, which multiplies
it by C; ``LossWeights.literal_channel_sum=False`` drops that factor.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from . import network
from .attention import AttentionSubnet, background, compute_attention
from .errors import ShapeMismatch


@dataclass(frozen=True)
class LossWeights:
    lambda_g: float = 1.0
    lambda_l: float = 1.0
    alpha: float = 1e2
    beta: float = 1e4
    theta: float = 1e-3
    literal_channel_sum: bool = True

    def __post_init__(self):
        for name in ("lambda_g", "lambda_l", "alpha", "beta", "theta"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and non-negative, got {value}")


def masked_gram(features, mask):
    """Unnormalised Gram of ``features`` (N x M) weighted by ``mask`` (length M)."""
    features = np.asarray(features, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64).ravel()
    if features.ndim != 2 or mask.shape[0] != features.shape[1]:
        raise ShapeMismatch(f"mask of length {mask.shape[0]} for features of shape {features.shape}")
    x = features * mask[None, :]
    return x @ x.T


def _norm(n, m):
    return 1.0 / (2.0 * n * m)


def content_loss(f_out, f_in, att_in, weights):
    """Content terms for one layer.

    ``f_out``, ``f_in`` are (N, h, w); ``att_in`` is (C, h, w). Returns
    ``(gc, lc, grad)`` with per-channel term arrays and dloss/dF[O] of
    ``lambda_g * sum(gc) + lambda_l * sum(lc)``.
    """
    if f_out.shape != f_in.shape or f_out.shape[1:] != att_in.shape[1:]:
        raise ShapeMismatch(f"content shapes {f_out.shape}, {f_in.shape}, {att_in.shape}")
    n = f_out.shape[0]
    m = f_out.shape[1] * f_out.shape[2]
    c = att_in.shape[0]
    k = _norm(n, m)
    diff = f_out - f_in
    q = k * float(np.sum(diff * diff))
    if weights.literal_channel_sum:
        gc = np.full(c, q)
        gc_scale = c
    else:
        gc = np.full(c, q / c)
        gc_scale = 1
    a2 = att_in * att_in
    # same reduction as q, so a region of all ones reproduces the global term bit for bit
    lc = np.array([k * float(np.sum((diff * a[None]) ** 2)) for a in att_in])
    grad = (weights.lambda_g * gc_scale * 2.0 * k) * diff
    grad += (weights.lambda_l * 2.0 * k) * diff * a2.sum(axis=0)[None]
    return gc, lc, grad


def _region_gram(f, a):
    # f: (N, h, w), a: (h, w) -> (normalised Gram, weighted features as N x M)
    n = f.shape[0]
    x = (f * a[None]).reshape(n, -1)
    return (x @ x.T) * _norm(n, x.shape[1]), x


def style_targets(f_style, att_style):
    """Normalised background and attention Grams of the style image, each (C, N, N)."""
    bk = np.stack([_region_gram(f_style, 1.0 - a)[0] for a in att_style])
    at = np.stack([_region_gram(f_style, a)[0] for a in att_style])
    return bk, at


def style_loss(f_out, att_in, targets, weights):
    """Style terms for one layer against precomputed ``style_targets``.

    Returns ``(gs, ls, grad)`` with per-channel arrays and dloss/dF[O] of
    ``lambda_g * sum(gs) + lambda_l * sum(ls)``.
    """
    bk_targets, at_targets = targets
    n = f_out.shape[0]
    if bk_targets.shape[1] != n:
        raise ShapeMismatch(f"style features have {bk_targets.shape[1]} filters, output has {n}")
    if bk_targets.shape[0] != att_in.shape[0]:
        raise ShapeMismatch(f"style mask has {bk_targets.shape[0]} channels, content mask {att_in.shape[0]}")
    if f_out.shape[1:] != att_in.shape[1:]:
        raise ShapeMismatch(f"style shapes {f_out.shape}, {att_in.shape}")
    m = f_out.shape[1] * f_out.shape[2]
    c = att_in.shape[0]
    gs = np.zeros(c)
    ls = np.zeros(c)
    grad = np.zeros_like(f_out)
    for ch in range(c):
        for region, target, lam, out in (
            (1.0 - att_in[ch], bk_targets[ch], weights.lambda_g, gs),
            (att_in[ch], at_targets[ch], weights.lambda_l, ls),
        ):
            g, x = _region_gram(f_out, region)
            d = g - target
            out[ch] = float(np.sum(d * d))
            if lam:
                gx = (d @ x) * (2.0 / (n * m))
                grad += lam * gx.reshape(f_out.shape) * region[None]
    return gs, ls, grad


def tv_loss(image):
    """Squared-difference total variation over rows and columns, with gradient."""
    image = np.asarray(image, dtype=np.float64)
    dx = image[:, 1:] - image[:, :-1]
    dy = image[1:, :] - image[:-1, :]
    value = float(np.sum(dx * dx) + np.sum(dy * dy))
    grad = np.zeros_like(image)
    grad[:, 1:] += 2.0 * dx
    grad[:, :-1] -= 2.0 * dx
    grad[1:, :] += 2.0 * dy
    grad[:-1, :] -= 2.0 * dy
    return value, grad


@dataclass
class LayerTerms:
    gc: np.ndarray
    lc: np.ndarray
    gs: np.ndarray
    ls: np.ndarray


@dataclass
class LossReport:
    layers: dict
    content_ids: tuple
    style_ids: tuple
    tv: float
    total: float
    weights: LossWeights = field(repr=False)

    @property
    def content(self):
        w = self.weights
        return sum(w.lambda_g * self.layers[l].gc.sum() + w.lambda_l * self.layers[l].lc.sum()
                   for l in self.content_ids)

    @property
    def style(self):
        w = self.weights
        return sum(w.lambda_g * self.layers[l].gs.sum() + w.lambda_l * self.layers[l].ls.sum()
                   for l in self.style_ids)

    def recompute_total(self):
        w = self.weights
        return w.alpha * self.content + w.beta * self.style + w.theta * self.tv

    def columns(self):
        cols = []
        for l in self.content_ids:
            cols += [f"gc_l{l}", f"lc_l{l}"]
        for l in self.style_ids:
            cols += [f"gs_l{l}", f"ls_l{l}"]
        return cols + ["tv", "total"]

    def row(self):
        values = []
        for l in self.content_ids:
            values += [self.layers[l].gc.sum(), self.layers[l].lc.sum()]
        for l in self.style_ids:
            values += [self.layers[l].gs.sum(), self.layers[l].ls.sum()]
        return values + [self.tv, self.total]


class Objective:
    """L_total + theta * TV for a fixed content pair and style pair.

    Content features, attention maps and style Grams are computed once; each
    call evaluates the output image and returns ``(LossReport, gradient)``.
    """

    def __init__(self, pair_in, pair_style, spec, subnet=None, weights=None, tv_sign=1.0):
        self.spec = spec
        self.subnet = subnet if subnet is not None else AttentionSubnet()
        self.weights = weights if weights is not None else LossWeights()
        self.shape = pair_in.image.shape
        # debug hook: -1 corrupts the TV gradient so gradient checks can be shown to fail
        self.tv_sign = tv_sign
        if pair_in.mask.shape[2] != pair_style.mask.shape[2]:
            raise ShapeMismatch(
                f"content mask has {pair_in.mask.shape[2]} channels, style mask {pair_style.mask.shape[2]}"
            )
        self.content_ids = tuple(sorted(spec.content_layer_ids))
        self.style_ids = tuple(sorted(spec.style_layer_ids))
        self.n_regions = pair_in.mask.shape[2]

        feats_in = network.forward(spec, pair_in.image)
        self.feats_in = feats_in
        self.att_in = compute_attention(self.subnet, feats_in, network.downsample_mask(pair_in.mask, spec))
        feats_style = network.forward(spec, pair_style.image)
        att_style = compute_attention(self.subnet, feats_style, network.downsample_mask(pair_style.mask, spec))
        self.att_style = att_style
        self.targets = {l: style_targets(feats_style[l], att_style[l]) for l in self.style_ids}

    @property
    def att_bkgd_in(self):
        return background(self.att_in)

    def evaluate(self, image):
        if image.shape != self.shape:
            raise ShapeMismatch(f"output image {image.shape} vs content image {self.shape}")
        w = self.weights
        feats = network.forward(self.spec, image)
        zeros = np.zeros(self.n_regions)
        terms = {l: LayerTerms(zeros, zeros, zeros, zeros) for l in self.spec.tap_ids}
        feat_grads = {}
        for l in self.content_ids:
            gc, lc, g = content_loss(feats[l], self.feats_in[l], self.att_in[l], w)
            terms[l].gc, terms[l].lc = gc, lc
            feat_grads[l] = w.alpha * g
        for l in self.style_ids:
            gs, ls, g = style_loss(feats[l], self.att_in[l], self.targets[l], w)
            terms[l].gs, terms[l].ls = gs, ls
            feat_grads[l] = feat_grads.get(l, 0.0) + w.beta * g
        tv, tv_grad = tv_loss(image)
        report = LossReport(terms, self.content_ids, self.style_ids, tv, 0.0, w)
        report.total = float(report.recompute_total())
        grad = network.backward(self.spec, image, feat_grads)
        grad += (self.tv_sign * w.theta) * tv_grad
        return report, grad

    __call__ = evaluate


def total_objective(image, pair_in, pair_style, spec, subnet=None, weights=None):
    return Objective(pair_in, pair_style, spec, subnet, weights).evaluate(image)


def write_loss_csv(reports, path, iterations=None):
    """One row per report: iteration index, per-layer terms, TV, total."""
    if iterations is None:
        iterations = range(len(reports))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if reports:
            writer.writerow(["iter"] + reports[0].columns())
        for it, report in zip(iterations, reports):
            writer.writerow([it] + [repr(float(v)) for v in report.row()])
