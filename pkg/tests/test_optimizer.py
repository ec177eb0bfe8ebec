import numpy as np
import pytest

from mgst.errors import NonFiniteLoss
from mgst.fixtures import random_instance
from mgst.loss import LossWeights
from mgst.optimizer import (
    CONVERGED,
    MAX_ITERATIONS,
    STALLED,
    OptimizerConfig,
    lbfgs_direction,
    minimize_box,
    project_and_accept,
    purify,
)


def _quadratic(a, c):
    def fun(x):
        d = x - c
        return 0.5 * d @ a @ d, a @ d, None
    return fun


def _spd(rng, n):
    q = rng.normal(size=(n, n))
    return q @ q.T + n * np.eye(n)


def test_direction_empty_history(rng):
    g = rng.normal(size=7)
    np.testing.assert_array_equal(lbfgs_direction([], [], g), -g)


def test_direction_matches_dense_bfgs(rng):
    n = 6
    a = _spd(rng, n)
    s_hist = [rng.normal(size=n) for _ in range(4)]
    y_hist = [a @ s for s in s_hist]
    g = rng.normal(size=n)
    s_last, y_last = s_hist[-1], y_hist[-1]
    h = (s_last @ y_last) / (y_last @ y_last) * np.eye(n)
    for s, y in zip(s_hist, y_hist):
        rho = 1.0 / (y @ s)
        left = np.eye(n) - rho * np.outer(s, y)
        h = left @ h @ left.T + rho * np.outer(s, s)
    np.testing.assert_allclose(lbfgs_direction(s_hist, y_hist, g), -h @ g, rtol=1e-10, atol=1e-12)


def test_direction_is_descent(rng):
    n = 10
    a = _spd(rng, n)
    s_hist = [rng.normal(size=n) for _ in range(5)]
    y_hist = [a @ s for s in s_hist]
    g = rng.normal(size=n)
    assert lbfgs_direction(s_hist, y_hist, g) @ g < 0


def test_quadratic_interior_minimum(rng):
    n = 20
    a = _spd(rng, n)
    c = rng.uniform(50, 200, n)
    x, trace, _ = minimize_box(_quadratic(a, c), np.full(n, 128.0), 0.0, 255.0,
                               OptimizerConfig(max_iterations=50))
    assert np.max(np.abs(x - c)) <= 1e-6
    assert trace.iterations <= 50


def test_quadratic_minimum_outside_box(rng):
    n = 12
    a = np.diag(rng.uniform(1, 5, n))
    c = rng.uniform(-100, 355, n)
    x, trace, _ = minimize_box(_quadratic(a, c), np.full(n, 128.0), 0.0, 255.0,
                               OptimizerConfig(max_iterations=200))
    # separable, so the constrained minimiser is the projection of c
    np.testing.assert_allclose(x, np.clip(c, 0, 255), atol=1e-6)
    assert trace.status == CONVERGED


def test_projection_clamps_trial_point():
    def fun(x):
        return float(-(x @ x)), None

    x = np.array([250.0])
    grad = np.array([-500.0])
    x_new, f_new, _, t = project_and_accept(fun, x, -62500.0, grad, np.array([50.0]), 0.0, 255.0,
                                            OptimizerConfig(), 1.0)
    assert x_new[0] == 255.0 and t == 1.0


def test_iterates_stay_in_box_and_monotone(rng):
    n = 30
    a = _spd(rng, n)
    c = rng.uniform(-300, 600, n)
    seen = []

    def fun(x):
        seen.append(x.copy())
        return _quadratic(a, c)(x)

    x, trace, _ = minimize_box(fun, rng.uniform(0, 255, n), 0.0, 255.0,
                               OptimizerConfig(max_iterations=100))
    for point in seen:
        assert point.min() >= 0.0 and point.max() <= 255.0
    assert np.all(np.diff(trace.losses) <= 0)


def test_first_step_capped(rng):
    c = np.full(4, 1e6)

    def fun(x):
        return float(np.sum((x - c) ** 2)), 2 * (x - c), None

    x0 = np.full(4, 1.0)
    x, trace, _ = minimize_box(fun, x0, -np.inf, np.inf, OptimizerConfig(max_iterations=1))
    assert np.max(np.abs(x - x0)) <= 10.0 + 1e-9


def test_nonfinite_raises_with_last_iteration():
    calls = {"n": 0}

    def fun(x):
        calls["n"] += 1
        if calls["n"] > 3:
            return np.nan, np.zeros_like(x), None
        w = np.arange(1.0, x.size + 1) ** 3
        return float(np.sum(w * (x - 200) ** 2)), 2 * w * (x - 200), None

    with pytest.raises(NonFiniteLoss) as info:
        minimize_box(fun, np.zeros(3), 0.0, 255.0, OptimizerConfig(max_iterations=10))
    assert info.value.last_good_iteration is not None
    assert info.value.last_good_iteration >= 0


def test_stalled_when_no_decrease():
    # gradient lies: it never points downhill, so every trial point is worse
    def fun(x):
        return float(np.sum((x - 100.0) ** 2)), -2 * (x - 100.0), None

    _, trace, _ = minimize_box(fun, np.full(3, 50.0), 0.0, 255.0, OptimizerConfig(max_iterations=5))
    assert trace.status == STALLED
    assert trace.iterations == 0


def test_max_iterations_status(rng):
    a = _spd(rng, 40) * np.linspace(1, 1e4, 40)
    a = 0.5 * (a + a.T)
    _, trace, _ = minimize_box(_quadratic(a, rng.uniform(0, 255, 40)), np.zeros(40), 0.0, 255.0,
                               OptimizerConfig(max_iterations=2))
    assert trace.status == MAX_ITERATIONS
    assert trace.iterations == 2


def test_config_validation():
    with pytest.raises(ValueError):
        OptimizerConfig(max_iterations=0)
    with pytest.raises(ValueError):
        OptimizerConfig(history_size=0)
    with pytest.raises(ValueError):
        OptimizerConfig(backtrack=1.0)


def test_warm_start_at_fixed_point(spec, toy):
    content, _ = toy
    image, trace = purify(content, content, spec, weights=LossWeights(theta=0.0),
                          config=OptimizerConfig(warm_start=True, max_iterations=5))
    assert trace.status == CONVERGED
    assert trace.iterations == 0
    assert trace.losses[0] == 0.0
    np.testing.assert_array_equal(image, content.image)


def test_purify_deterministic(spec):
    content, style, _ = random_instance(16, 11)
    cfg = OptimizerConfig(max_iterations=15, seed=3)
    a, ta = purify(content, style, spec, config=cfg)
    b, tb = purify(content, style, spec, config=cfg)
    assert a.tobytes() == b.tobytes()
    np.testing.assert_array_equal(ta.losses, tb.losses)


def test_purify_trace_reports_and_csv(spec, tmp_path):
    content, style, _ = random_instance(16, 12)
    seen = []
    image, trace = purify(content, style, spec, config=OptimizerConfig(max_iterations=8),
                          callback=seen.append)
    assert len(trace.reports) == len(trace.records)
    assert [r.iteration for r in seen] == list(range(1, trace.iterations + 1))
    for rec, rep in zip(trace.records, trace.reports):
        assert rec.loss == rep.total
    assert image.min() >= 0 and image.max() <= 255
    trace.write_csv(tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "iter,loss,grad_inf,step"
    assert len(lines) == trace.iterations + 2
    trace.write_csv(tmp_path / "t2.csv", timing=True)
    assert (tmp_path / "t2.csv").read_text().splitlines()[0].endswith(",wall_ms")
