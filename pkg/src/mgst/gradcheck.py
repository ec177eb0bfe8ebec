"""Finite-difference verification of the total objective's pixel gradient."""

from dataclasses import dataclass, replace

import numpy as np

from . import network
from .fixtures import random_instance
from .loss import LossWeights, Objective

FAMILIES = ("total", "content", "style", "tv")


def relative_error(analytic, numeric):
    """max |analytic - numeric| scaled by the larger of the two inf-norms."""
    scale = max(float(np.max(np.abs(analytic))), float(np.max(np.abs(numeric))))
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(analytic - numeric))) / scale


def _family_weights(weights, family):
    if family == "content":
        return replace(weights, beta=0.0, theta=0.0)
    if family == "style":
        return replace(weights, alpha=0.0, theta=0.0)
    if family == "tv":
        return replace(weights, alpha=0.0, beta=0.0)
    return weights


def _family_values(report):
    w = report.weights
    content = w.alpha * report.content
    style = w.beta * report.style
    tv = w.theta * report.tv
    return {"total": report.total, "content": content, "style": style, "tv": tv}


@dataclass
class GradcheckResult:
    errors: dict
    seed: int
    size: int
    # coordinates whose difference stencil crosses a ReLU kink
    skipped: int = 0

    @property
    def max_error(self):
        return max(self.errors.values())


def check_objective(objective_factory, image, h=1e-2, spec=None):
    """Compare analytic and central-difference gradients for each loss family.

    ``objective_factory(family)`` returns an Objective whose weights keep
    only that family. The total objective supplies every finite-difference
    value; each family's analytic gradient comes from its own evaluation.

    With ``spec`` given, coordinates whose stencil [x - h, x + h] changes the
    sign of some ReLU input are left out: the objective is not
    differentiable across them. Returns ``(errors, n_skipped)``.
    """
    full = objective_factory("total")
    numeric = {f: np.zeros_like(image) for f in FAMILIES}
    keep = np.ones(image.shape, dtype=bool)
    for idx in np.ndindex(image.shape):
        plus = image.copy()
        plus[idx] += h
        minus = image.copy()
        minus[idx] -= h
        if spec is not None and not np.array_equal(
            network.relu_signature(spec, plus), network.relu_signature(spec, minus)
        ):
            keep[idx] = False
            continue
        hi = _family_values(full(plus)[0])
        lo = _family_values(full(minus)[0])
        for f in FAMILIES:
            numeric[f][idx] = (hi[f] - lo[f]) / (2.0 * h)
    errors = {}
    for f in FAMILIES:
        analytic = objective_factory(f)(image)[1]
        errors[f] = relative_error(analytic[keep], numeric[f][keep]) if keep.any() else 0.0
    return errors, int((~keep).sum())


def gradcheck(seed=1, size=16, weights=None, net_seed=7, spec=None, subnet=None, h=1e-2,
              corrupt_tv=False):
    """Gradient check on one random instance of side ``size``.

    ``corrupt_tv`` flips the sign of the analytic TV gradient, which the
    check must detect.
    """
    weights = weights or LossWeights()
    spec = spec or network.default_network(net_seed)
    pair_in, pair_style, image = random_instance(size, seed)
    tv_sign = -1.0 if corrupt_tv else 1.0

    def factory(family):
        return Objective(pair_in, pair_style, spec, subnet, _family_weights(weights, family), tv_sign=tv_sign)

    errors, skipped = check_objective(factory, image, h, spec)
    return GradcheckResult(errors, seed, size, skipped)
