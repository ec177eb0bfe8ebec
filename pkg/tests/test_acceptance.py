"""The ten acceptance criteria, one test each.

Every test appends a PASS/FAIL line to ``conftest.ACCEPTANCE_LINES``; the lines
are printed in an "acceptance criteria" section at the end of the pytest run
and also to stdout (visible with ``-s``). Runtime limits are asserted where a
criterion states one.
"""

import time
from contextlib import contextmanager

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from mgst import cli, kernels
from mgst.attention import LEARNED, AttentionSubnet, background, compute_attention
from mgst.benchmark import run_benchmark
from mgst.fixtures import toy_pairs
from mgst.gradcheck import gradcheck
from mgst.loss import LossWeights, content_loss, masked_gram, style_loss, style_targets, total_objective, tv_loss
from mgst.metrics import preserve_check
from mgst.optimizer import OptimizerConfig, minimize_box, purify

# repo-frozen regression values for criterion 6 (toy fixture seed 2019, net seed 7,
# noise seed 0); the two kernel backends agree on L(200) to about 0.3%
TOY_L0 = 1022443107924.6217
TOY_L200 = 348653444.49791336


@contextmanager
def criterion(number, title):
    info = {}
    t0 = time.perf_counter()
    ok = False
    try:
        yield info
        ok = True
    finally:
        elapsed = time.perf_counter() - t0
        detail = info.get("detail", "")
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {title}  [{elapsed:.2f} s] {detail}".rstrip()
        ACCEPTANCE_LINES.append(line)
        print(line)


def test_c01_partition_of_unity():
    with criterion(1, "partition of unity") as info:
        t0 = time.perf_counter()
        worst_pass, worst_learned = 0.0, 0.0
        for seed in range(100):
            rng = np.random.default_rng(seed)
            n, c, h, w = rng.integers(1, 9), rng.integers(1, 4), rng.integers(2, 9), rng.integers(2, 9)
            feats = {1: rng.uniform(0, 10, (n, h, w))}
            masks = {1: rng.dirichlet(np.ones(c + 1), size=(h, w))[..., :c].transpose(2, 0, 1)}
            for mode in ("passthrough", LEARNED):
                if mode == LEARNED:
                    subnet = AttentionSubnet(LEARNED, {1: (rng.normal(size=n + 1), float(rng.normal()))})
                else:
                    subnet = AttentionSubnet()
                att = compute_attention(subnet, feats, masks)
                err = float(np.max(np.abs(att[1] + background(att)[1] - 1.0)))
                if mode == LEARNED:
                    worst_learned = max(worst_learned, err)
                else:
                    worst_pass = max(worst_pass, err)
        elapsed = time.perf_counter() - t0
        info["detail"] = f"passthrough max err {worst_pass:g}, learned {worst_learned:.1e}"
        assert worst_pass == 0.0
        assert worst_learned <= 1e-6
        assert elapsed < 1.0


@pytest.mark.slow
def test_c02_gradient_oracle(spec):
    with criterion(2, "gradient oracle, 10 instances 16x16, h=1e-2") as info:
        t0 = time.perf_counter()
        worst, skipped = 0.0, 0
        for seed in range(1, 11):
            result = gradcheck(seed, 16, spec=spec, h=1e-2)
            worst = max(worst, result.max_error)
            skipped += result.skipped
        elapsed = time.perf_counter() - t0
        info["detail"] = f"max rel err {worst:.2e}, kink-crossing coords skipped {skipped}"
        assert worst <= 1e-4
        assert elapsed < 120.0


def test_c03_zero_loss_fixed_points(spec, toy):
    with criterion(3, "zero-loss fixed points") as info:
        content, style = toy
        # O = I: content family is exactly zero
        rep_c, _ = total_objective(content.image, content, style, spec)
        c_zero = sum(float(t.gc.sum() + t.lc.sum()) for k, t in rep_c.layers.items() if k in rep_c.content_ids)
        # O = S with equal masks: style family vanishes
        same_masks = type(style)(style.image, content.mask)
        rep_s, _ = total_objective(style.image, content, same_masks, spec)
        style_rel = rep_s.style / max(rep_c.style, 1e-300)
        # both families zero: only TV remains
        rep_t, _ = total_objective(content.image, content, content, spec)
        tv = LossWeights().theta * tv_loss(content.image)[0]
        info["detail"] = f"content {c_zero:g}, style rel {style_rel:.1e}, total/theta*tv - 1 = {rep_t.total / tv - 1:.1e}"
        assert c_zero == 0.0
        assert style_rel <= 1e-9
        assert rep_t.total == pytest.approx(tv, rel=1e-9)


def _triple_loop_gram(f, mask):
    n, m = f.shape
    z = [[f[i, j] * mask[j] for j in range(m)] for i in range(n)]
    g = np.zeros((n, n))
    for a in range(n):
        for b in range(n):
            acc = 0.0
            for j in range(m):
                acc += z[a][j] * z[b][j]
            g[a, b] = acc
    return g


def test_c04_masked_gram_brute_force():
    with criterion(4, "masked Gram vs triple loop, 50 instances") as info:
        worst = 0.0
        for seed in range(50):
            rng = np.random.default_rng(1000 + seed)
            n, m = int(rng.integers(1, 9)), int(rng.integers(1, 37))
            f = rng.normal(size=(n, m)) * 5
            mask = (rng.uniform(size=m) > 0.5).astype(float)
            worst = max(worst, float(np.max(np.abs(masked_gram(f, mask) - _triple_loop_gram(f, mask)))))
        info["detail"] = f"max abs diff {worst:.1e}"
        assert worst <= 1e-10


def test_c05_classic_limit():
    with criterion(5, "classic limit, att = 1 and C = 1") as info:
        rng = np.random.default_rng(5)
        w = LossWeights()
        n, h, wd = 6, 5, 7
        f_out, f_in, f_style = rng.normal(size=(3, n, h, wd))
        ones = np.ones((1, h, wd))
        gc, lc, _ = content_loss(f_out, f_in, ones, w)
        _, ls, _ = style_loss(f_out, ones, style_targets(f_style, ones), w)
        # classic unmasked Gram loss: sum((G_O - G_S)^2) / (4 N^2 M^2)
        m = h * wd
        fo, fs = f_out.reshape(n, m), f_style.reshape(n, m)
        classic = np.sum((fo @ fo.T - fs @ fs.T) ** 2) / (4 * n**2 * m**2)
        info["detail"] = f"lc - gc = {lc[0] - gc[0]:.1e}, ls/classic - 1 = {ls[0] / classic - 1:.1e}"
        assert lc[0] == gc[0]
        assert ls[0] == pytest.approx(classic, rel=1e-9)


@pytest.mark.slow
def test_c06_optimization_descent(spec):
    with criterion(6, "descent on 32x32 toy fixture, 200 iterations") as info:
        t0 = time.perf_counter()
        content, style = toy_pairs(32)
        image, trace = purify(content, style, spec, config=OptimizerConfig(max_iterations=200))
        elapsed = time.perf_counter() - t0
        losses = trace.losses
        ratio = losses[-1] / losses[0]
        info["detail"] = (f"L0 {losses[0]:.6e}, L{trace.iterations} {losses[-1]:.6e}, ratio {ratio:.2e}, "
                          f"backend {kernels.get_backend()}")
        assert trace.iterations == 200
        assert np.all(np.diff(losses) <= 0)
        assert ratio <= 0.1
        assert image.min() >= 0.0 and image.max() <= 255.0
        assert losses[0] == pytest.approx(TOY_L0, rel=1e-12)
        assert losses[-1] == pytest.approx(TOY_L200, rel=0.01)
        assert elapsed < 300.0


def test_c07_projected_quadratic():
    with criterion(7, "projected quadratic, minimiser outside the box") as info:
        rng = np.random.default_rng(7)
        n = 64
        c = rng.uniform(-200, 455, n)
        x, trace, _ = minimize_box(lambda x: (0.5 * np.sum((x - c) ** 2), x - c, None),
                                   rng.uniform(0, 255, n), 0.0, 255.0, OptimizerConfig(max_iterations=50))
        err = float(np.max(np.abs(x - np.clip(c, 0, 255))))
        info["detail"] = f"inf-error {err:.1e} after {trace.iterations} iterations"
        assert err <= 1e-6
        assert trace.iterations <= 50


def test_c08_determinism(tmp_path):
    with criterion(8, "byte-identical purify runs") as info:
        d = cli.write_fixture(tmp_path / "toy", 32)
        pair = ["--content", str(d / "content.png"), "--content-mask", str(d / "content_mask.png"),
                "--style", str(d / "style.png"), "--style-mask", str(d / "style_mask.png")]
        blobs = []
        for name in ("run1", "run2"):
            out = tmp_path / f"{name}.png"
            assert cli.main(["purify", *pair, "--out", str(out), "--iters", "30"]) == 0
            blobs.append(tuple((tmp_path / f"{name}{ext}").read_bytes()
                               for ext in (".png", ".trace.csv", ".losses.csv")))
        info["detail"] = f"{sum(len(b) for b in blobs[0])} bytes compared"
        assert blobs[0] == blobs[1]


@pytest.mark.slow
def test_c09_preserve_check(spec):
    with criterion(9, "pupil centre shift on toy fixture, eye width 64 px") as info:
        content, style = toy_pairs(32)
        image, trace = purify(content, style, spec, config=OptimizerConfig(max_iterations=500))
        result = preserve_check(content, image, eye_width=64)
        info["detail"] = f"shift {result.shift:.3f} px after {trace.iterations} iterations"
        assert result.shift <= 2.0


@pytest.mark.slow
def test_c10_benchmark(spec):
    with criterion(10, "benchmark over 64, 128, 256") as info:
        table = run_benchmark([64, 128, 256], 2, spec, AttentionSubnet(), LossWeights(),
                              OptimizerConfig(max_iterations=3), backends=[kernels.get_backend()])
        csv_rows = table.to_csv().splitlines()
        assert csv_rows[0] == "method,metric,64x64,128x128,256x256"
        per_iter = [table.cells[(kernels.get_backend(), "s_per_iter_mean")][r] for r in table.resolutions]
        info["detail"] = "s/iter " + ", ".join(f"{t:.3f}" for t in per_iter)
        assert all(t > 0 for t in per_iter)
        assert per_iter[0] < per_iter[1] < per_iter[2]
