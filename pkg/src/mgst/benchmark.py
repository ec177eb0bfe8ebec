"""Timing of purification runs across resolutions and kernel backends.

The table has one row per (backend, statistic) and one column per
resolution, mirroring a methods-by-resolutions speed table.
"""

import csv
import io
import statistics
import time
from dataclasses import dataclass, field, replace

import numpy as np
from PIL import Image

from . import kernels
from .fixtures import toy_pairs
from .image_io import RgbMaskPair
from .optimizer import OptimizerConfig, purify

METRICS = ("s_per_iter_mean", "s_per_iter_std", "s_per_run_mean", "s_per_run_std")


def resize_pair(pair, size):
    img = Image.fromarray(np.rint(pair.image).astype(np.uint8)).resize((size, size), Image.BILINEAR)
    channels = [
        np.asarray(Image.fromarray(np.rint(pair.mask[..., c] * 255).astype(np.uint8)).resize(
            (size, size), Image.NEAREST), dtype=np.float64) / 255.0
        for c in range(pair.mask.shape[2])
    ]
    return RgbMaskPair(np.asarray(img, dtype=np.float64), np.stack(channels, axis=-1))


@dataclass
class BenchmarkTable:
    resolutions: list
    # (backend, metric) -> {resolution: seconds}
    cells: dict = field(default_factory=dict)
    iterations: int = 0

    @property
    def backends(self):
        return sorted({b for b, _ in self.cells}, key=lambda b: (b != "cython", b))

    def rows(self):
        out = []
        for backend in self.backends:
            for metric in METRICS:
                values = self.cells[(backend, metric)]
                out.append([f"mgst[{backend}]", metric] + [values[r] for r in self.resolutions])
        if {"cython", "numpy"} <= set(self.backends):
            c = self.cells[("cython", "s_per_iter_mean")]
            n = self.cells[("numpy", "s_per_iter_mean")]
            out.append(["cython vs numpy", "speedup"] + [n[r] / c[r] for r in self.resolutions])
        return out

    def header(self):
        return ["method", "metric"] + [f"{r}x{r}" for r in self.resolutions]

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.header())
        for row in self.rows():
            writer.writerow(row[:2] + [f"{v:.6g}" for v in row[2:]])
        return buf.getvalue()

    def to_text(self):
        cells = [self.header()]
        for row in self.rows():
            fmt = "{:.2f}x" if row[1] == "speedup" else "{:.4g}s"
            cells.append(row[:2] + [fmt.format(v) for v in row[2:]])
        widths = [max(len(r[i]) for r in cells) for i in range(len(cells[0]))]
        lines = []
        for k, row in enumerate(cells):
            lines.append("  ".join(c.ljust(w) if i < 2 else c.rjust(w) for i, (c, w) in enumerate(zip(row, widths))))
            if k == 0:
                lines.append("  ".join("-" * w for w in widths))
        return "\n".join(lines)


def run_benchmark(resolutions, repetitions, spec, subnet=None, weights=None, config=None,
                  backends=None, pairs=None, log=None):
    """Time ``repetitions`` purify runs per resolution and backend, serially.

    Convergence tests are disabled so every run performs the configured
    number of iterations. ``pairs`` (content, style) are resized to each
    resolution; the synthetic toy pairs are used when omitted.
    """
    if repetitions < 1:
        raise ValueError("repetitions must be at least 1")
    if not resolutions:
        raise ValueError("need at least one resolution")
    factor = 2 ** spec.n_pools
    for r in resolutions:
        if r % factor:
            raise ValueError(f"resolution {r} is not divisible by {factor}")
    config = replace(config or OptimizerConfig(max_iterations=10), rel_decrease_tol=0.0, grad_tol=0.0)
    backends = backends or kernels.available_backends()
    table = BenchmarkTable(list(resolutions), iterations=config.max_iterations)
    for backend in backends:
        per_iter = {r: [] for r in resolutions}
        per_run = {r: [] for r in resolutions}
        with kernels.using_backend(backend):
            for r in resolutions:
                if pairs is None:
                    content, style = toy_pairs(r)
                else:
                    content, style = (resize_pair(p, r) for p in pairs)
                for _ in range(repetitions):
                    t0 = time.perf_counter()
                    _, trace = purify(content, style, spec, subnet, weights, config)
                    elapsed = time.perf_counter() - t0
                    per_run[r].append(elapsed)
                    per_iter[r].append(elapsed / max(trace.iterations, 1))
                if log is not None:
                    log(f"{backend} {r}x{r}: {statistics.fmean(per_iter[r]):.4g} s/iter")
        for name, samples in (("s_per_iter", per_iter), ("s_per_run", per_run)):
            table.cells[(backend, f"{name}_mean")] = {r: statistics.fmean(v) for r, v in samples.items()}
            table.cells[(backend, f"{name}_std")] = {
                r: statistics.stdev(v) if len(v) > 1 else 0.0 for r, v in samples.items()
            }
    return table
