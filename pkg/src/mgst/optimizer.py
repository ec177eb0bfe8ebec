"""Projected L-BFGS over a box, and the purification driver built on it.

Every trial point is clipped into the box before it is evaluated, and a step
is accepted only when the clipped point passes an Armijo test. Coordinates
held at a bound by a gradient pointing outward are frozen when the search
direction is built.
"""

import csv
import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import LineSearchFailed, NonFiniteLoss
from .image_io import PIXEL_MAX, PIXEL_MIN, init_white_noise
from .loss import Objective

CONVERGED = "converged"
MAX_ITERATIONS = "max-iterations"
STALLED = "stalled"


@dataclass(frozen=True)
class OptimizerConfig:
    max_iterations: int = 500
    history_size: int = 10
    armijo: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 20
    rel_decrease_tol: float = 1e-7
    rel_decrease_window: int = 10
    grad_tol: float = 1e-8
    # first steepest-descent step moves no coordinate further than this
    initial_step: float = 10.0
    curvature_eps: float = 1e-10
    seed: int = 0
    warm_start: bool = False

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.history_size < 1:
            raise ValueError("history_size must be at least 1")
        if not 0 < self.backtrack < 1:
            raise ValueError("backtrack factor must lie in (0, 1)")


@dataclass
class IterationRecord:
    iteration: int
    loss: float
    grad_norm: float
    step: float
    wall_ms: float


@dataclass
class OptimizerTrace:
    records: list = field(default_factory=list)
    status: str = MAX_ITERATIONS
    reports: list = field(default_factory=list)

    @property
    def losses(self):
        return np.array([r.loss for r in self.records])

    @property
    def iterations(self):
        """Accepted iterations, not counting the starting point."""
        return len(self.records) - 1

    def write_csv(self, path, timing=False):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            header = ["iter", "loss", "grad_inf", "step"]
            if timing:
                header.append("wall_ms")
            writer.writerow(header)
            for r in self.records:
                row = [r.iteration, repr(float(r.loss)), repr(float(r.grad_norm)), repr(float(r.step))]
                if timing:
                    row.append(f"{r.wall_ms:.3f}")
                writer.writerow(row)


def lbfgs_direction(s_hist, y_hist, grad):
    """Two-loop recursion: approximate -H^{-1} grad from curvature pairs.

    Pairs are ordered oldest first. With no history this is ``-grad``.
    """
    q = grad.copy()
    if not s_hist:
        return -q
    rhos = [1.0 / float(np.dot(y, s)) for s, y in zip(s_hist, y_hist)]
    alphas = []
    for s, y, rho in zip(reversed(s_hist), reversed(y_hist), reversed(rhos)):
        a = rho * float(np.dot(s, q))
        alphas.append(a)
        q -= a * y
    s, y = s_hist[-1], y_hist[-1]
    q *= float(np.dot(s, y)) / float(np.dot(y, y))
    for s, y, rho, a in zip(s_hist, y_hist, rhos, reversed(alphas)):
        b = rho * float(np.dot(y, q))
        q += (a - b) * s
    return -q


def _free_mask(x, grad, lower, upper):
    at_lower = (x <= lower) & (grad > 0)
    at_upper = (x >= upper) & (grad < 0)
    return ~(at_lower | at_upper)


def project_and_accept(fun, x, fx, grad, direction, lower, upper, config, step=1.0):
    """Backtracking Armijo search along the projected path ``clip(x + t d)``.

    Returns ``(x_new, f_new, payload, t)``; ``payload`` is whatever ``fun``
    returned beyond the value. Raises LineSearchFailed when no step length
    within the backtracking budget decreases the objective enough.
    """
    t = step
    for _ in range(config.max_backtracks + 1):
        candidate = np.clip(x + t * direction, lower, upper)
        f_new, payload = fun(candidate)
        if f_new <= fx + config.armijo * float(np.dot(grad, candidate - x)):
            return candidate, f_new, payload, t
        t *= config.backtrack
    raise LineSearchFailed(f"no Armijo step found after {config.max_backtracks} backtracks")


def minimize_box(fun, x0, lower, upper, config=None, callback=None):
    """Minimise ``fun`` over the box [lower, upper] with projected L-BFGS.

    ``fun(x)`` returns ``(value, grad, extra)``. Returns
    ``(x, OptimizerTrace, extras)`` where ``extras`` lists the ``extra``
    of the start point and of every accepted iterate.
    """
    config = config or OptimizerConfig()
    shape = np.shape(x0)
    x = np.clip(np.asarray(x0, dtype=np.float64).ravel(), lower, upper)
    lower = np.broadcast_to(np.asarray(lower, dtype=np.float64), x.shape).ravel()
    upper = np.broadcast_to(np.asarray(upper, dtype=np.float64), x.shape).ravel()

    trace = OptimizerTrace()

    def evaluate(point):
        value, grad, extra = fun(point.reshape(shape))
        value = float(value)
        grad = np.asarray(grad, dtype=np.float64).ravel()
        if not (np.isfinite(value) and np.all(np.isfinite(grad))):
            last = trace.records[-1].iteration if trace.records else None
            raise NonFiniteLoss(f"objective is not finite (last good iteration: {last})", last)
        return value, (grad, extra)

    t0 = time.perf_counter()
    fx, (grad, extra) = evaluate(x)
    extras = [extra]

    def projected_norm(point, g):
        return float(np.max(np.abs(np.where(_free_mask(point, g, lower, upper), g, 0.0)), initial=0.0))

    gnorm = projected_norm(x, grad)
    trace.records.append(IterationRecord(0, fx, gnorm, 0.0, (time.perf_counter() - t0) * 1e3))
    s_hist = deque(maxlen=config.history_size)
    y_hist = deque(maxlen=config.history_size)

    if gnorm < config.grad_tol:
        trace.status = CONVERGED
        return x.reshape(shape), trace, extras

    for k in range(1, config.max_iterations + 1):
        free = _free_mask(x, grad, lower, upper)
        g_free = np.where(free, grad, 0.0)
        d = lbfgs_direction(list(s_hist), list(y_hist), g_free)
        d[~free] = 0.0
        step = 1.0
        if not s_hist:
            step = min(1.0, config.initial_step / max(gnorm, 1e-300))
        if float(np.dot(d, grad)) >= 0.0:
            d = -g_free
            s_hist.clear()
            y_hist.clear()
            step = min(1.0, config.initial_step / max(gnorm, 1e-300))
        try:
            x_new, f_new, (g_new, extra), t = project_and_accept(
                evaluate, x, fx, grad, d, lower, upper, config, step
            )
        except LineSearchFailed:
            candidate = np.clip(x - 1e-3 * grad, lower, upper)
            f_new, (g_new, extra) = evaluate(candidate)
            if not f_new < fx:
                trace.status = STALLED
                break
            x_new, t = candidate, 1e-3
        s = x_new - x
        y = g_new - grad
        if float(np.dot(s, y)) > config.curvature_eps:
            s_hist.append(s)
            y_hist.append(y)
        x, fx, grad = x_new, f_new, g_new
        gnorm = projected_norm(x, grad)
        trace.records.append(IterationRecord(k, fx, gnorm, t, (time.perf_counter() - t0) * 1e3))
        extras.append(extra)
        if callback is not None:
            callback(trace.records[-1])
        if gnorm < config.grad_tol:
            trace.status = CONVERGED
            break
        w = config.rel_decrease_window
        if k >= w:
            before = trace.records[-1 - w].loss
            if before - fx <= config.rel_decrease_tol * max(abs(before), 1e-300):
                trace.status = CONVERGED
                break
    else:
        trace.status = MAX_ITERATIONS
    return x.reshape(shape), trace, extras


def purify(pair_in, pair_style, spec, subnet=None, weights=None, config=None, callback=None,
           objective=None):
    """Synthesize an image with the content of ``pair_in`` and the style of ``pair_style``.

    Starts from seeded white noise (or from the content image with
    ``config.warm_start``) and returns ``(image, trace)``; ``trace.reports``
    holds the LossReport of the start point and of every accepted iterate.
    """
    config = config or OptimizerConfig()
    if objective is None:
        objective = Objective(pair_in, pair_style, spec, subnet, weights)
    h, w = pair_in.height, pair_in.width
    if config.warm_start:
        x0 = pair_in.image.copy()
    else:
        x0 = init_white_noise(h, w, config.seed)

    def fun(image):
        report, grad = objective(image)
        return report.total, grad, report

    x, trace, reports = minimize_box(fun, x0, PIXEL_MIN, PIXEL_MAX, config, callback)
    trace.reports = reports
    return x, trace
