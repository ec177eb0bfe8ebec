"""Command-line interface: ``mgst <verb> [options]``.

Option values come from, in increasing priority: built-in defaults, a TOML
file given with ``--config`` (keys are option names, with dashes or
underscores), and the command line.
"""

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import __version__, image_io, kernels, network
from .attention import AttentionSubnet
from .benchmark import run_benchmark
from .errors import MgstError, NonFiniteLoss
from .fixtures import toy_pairs
from .gradcheck import gradcheck
from .loss import LossWeights, write_loss_csv
from .metrics import preserve_check
from .optimizer import STALLED, OptimizerConfig, purify

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_STALLED = 3

DEFAULT_NET_SEED = 7


def _channel_map(text):
    try:
        return image_io.parse_channel_map(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _add_model_options(p):
    g = p.add_argument_group("model and loss")
    g.add_argument("--weights", help="MGST-W weights file (fallback: $MGST_WEIGHTS, then --net-seed)")
    g.add_argument("--net-seed", type=int, default=DEFAULT_NET_SEED,
                   help="seed of the default random-filter network (default: %(default)s)")
    g.add_argument("--attention", choices=["passthrough", "learned"], default="passthrough",
                   help="attention maps from masks directly, or from the weights file's "
                        "ATTN0001 section (default: %(default)s)")
    d = LossWeights()
    g.add_argument("--alpha", type=float, default=d.alpha, help="content layer weight (default: %(default)s)")
    g.add_argument("--beta", type=float, default=d.beta, help="style layer weight (default: %(default)s)")
    g.add_argument("--lambda-g", type=float, default=d.lambda_g, help="global term weight (default: %(default)s)")
    g.add_argument("--lambda-l", type=float, default=d.lambda_l, help="local term weight (default: %(default)s)")
    g.add_argument("--theta", type=float, default=d.theta, help="TV weight (default: %(default)s)")
    g.add_argument("--no-channel-factor", action="store_true",
                   help="count the global content term once instead of once per mask channel")


def _add_optim_options(p, iters=500):
    g = p.add_argument_group("optimisation")
    d = OptimizerConfig()
    g.add_argument("--iters", type=int, default=iters, help="maximum L-BFGS iterations (default: %(default)s)")
    g.add_argument("--history", type=int, default=d.history_size, help="L-BFGS history size (default: %(default)s)")
    g.add_argument("--seed", type=int, default=d.seed, help="white-noise seed (default: %(default)s)")
    g.add_argument("--warm-start", action="store_true", help="start from the content image instead of noise")
    g.add_argument("--channel-map", type=_channel_map, default=None, metavar="LABEL=IDX[,...]",
                   help="mask label to channel; 'none' drops a label (default: 0=none,1=0,255=0)")
    g.add_argument("--threads", type=int, default=1, help="concurrent jobs in batch mode (default: %(default)s)")


def _add_pair_options(p, required=True):
    p.add_argument("--content", required=required, help="content (real) image PNG")
    p.add_argument("--content-mask", required=required, help="content label mask PNG")
    p.add_argument("--style", required=required, help="style (synthetic) image PNG")
    p.add_argument("--style-mask", required=required, help="style label mask PNG")


def build_parser():
    parser = argparse.ArgumentParser(prog="mgst", description="Mask-guided style transfer for purifying real images.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True
    subparsers = {}

    p = sub.add_parser("purify", help="purify one content image toward a style image")
    p.add_argument("--config", help="TOML file of option defaults")
    _add_pair_options(p)
    p.add_argument("--out", required=True, help="output PNG")
    p.add_argument("--trace", help="optimizer trace CSV (default: <out>.trace.csv)")
    p.add_argument("--losses", help="per-iteration loss report CSV (default: <out>.losses.csv)")
    p.add_argument("--trace-timing", action="store_true", help="add wall-clock ms to the trace (not reproducible)")
    _add_model_options(p)
    _add_optim_options(p)
    subparsers["purify"] = p

    p = sub.add_parser("batch", help="purify every line of a manifest")
    p.add_argument("--config", help="TOML file of option defaults")
    p.add_argument("manifest", help="file with 'content content_mask style style_mask output' per line")
    _add_model_options(p)
    _add_optim_options(p)
    subparsers["batch"] = p

    p = sub.add_parser("benchmark", help="time purification across resolutions")
    p.add_argument("--config", help="TOML file of option defaults")
    _add_pair_options(p, required=False)
    p.add_argument("--resolutions", type=_int_list, default=[64, 128, 256], help="default: 64,128,256")
    p.add_argument("--reps", type=int, default=3, help="repetitions per resolution (default: %(default)s)")
    p.add_argument("--backend", choices=["all"] + kernels.available_backends(), default="all",
                   help="kernel backend(s) to time (default: %(default)s)")
    p.add_argument("--csv", help="write the table as CSV here")
    _add_model_options(p)
    _add_optim_options(p, iters=10)
    subparsers["benchmark"] = p

    p = sub.add_parser("gradcheck", help="finite-difference check of the objective gradient")
    p.add_argument("--seed", type=int, default=1, help="first instance seed (default: %(default)s)")
    p.add_argument("--instances", type=int, default=1, help="number of random instances (default: %(default)s)")
    p.add_argument("--size", type=int, default=16, help="instance side in pixels, at most 32 (default: %(default)s)")
    p.add_argument("--tol", type=float, default=1e-4, help="relative error tolerance (default: %(default)s)")
    p.add_argument("--step", type=float, default=1e-2, help="difference step on the 0..255 scale (default: %(default)s)")
    p.add_argument("--corrupt-tv", action="store_true", help="debug: negate the TV gradient")
    _add_model_options(p)
    subparsers["gradcheck"] = p

    p = sub.add_parser("preserve-check", help="pupil-centre shift between a real and a purified image")
    p.add_argument("--content", required=True, help="real image PNG")
    p.add_argument("--content-mask", required=True, help="label mask PNG of the real image")
    p.add_argument("--purified", required=True, help="purified image PNG")
    p.add_argument("--channel", type=int, default=0, help="mask channel holding the pupil (default: %(default)s)")
    p.add_argument("--eye-width", type=float, help="reference eye width in pixels (default: image width)")
    p.add_argument("--channel-map", type=_channel_map, default=None, metavar="LABEL=IDX[,...]")
    subparsers["preserve-check"] = p

    p = sub.add_parser("make-weights", help="write the default network as an MGST-W file")
    p.add_argument("--net-seed", type=int, default=DEFAULT_NET_SEED, help="default: %(default)s")
    p.add_argument("--out", required=True, help="weights file to write")
    subparsers["make-weights"] = p

    p = sub.add_parser("make-fixture", help="write the synthetic toy content/style pairs as PNGs")
    p.add_argument("--size", type=int, default=32, help="side in pixels, a multiple of 4 (default: %(default)s)")
    p.add_argument("--out-dir", required=True, help="directory for the four PNGs")
    subparsers["make-fixture"] = p

    return parser, subparsers


def _load_config(path, subparser):
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise MgstError(f"{path}: cannot read config ({exc})") from exc
    except tomllib.TOMLDecodeError as exc:
        raise MgstError(f"{path}: invalid TOML ({exc})") from exc
    known = {a.dest: a for a in subparser._actions}
    defaults = {}
    for key, value in data.items():
        dest = key.replace("-", "_")
        if dest not in known or dest in ("help", "config"):
            raise MgstError(f"{path}: unknown option {key!r}")
        action = known[dest]
        if isinstance(value, str) and action.type is not None:
            value = action.type(value)
        defaults[dest] = value
    return defaults


def parse_args(argv=None):
    parser, subparsers = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        sub = subparsers[args.command]
        sub.set_defaults(**_load_config(args.config, sub))
        args = parser.parse_args(argv)
    return args


def _spec_and_subnet(args):
    path = args.weights or os.environ.get("MGST_WEIGHTS")
    if path:
        spec, attention = network.read_weights_file(path)
    else:
        spec, attention = network.default_network(args.net_seed), None
    if args.attention == "learned":
        if attention is None:
            raise MgstError("--attention learned needs a weights file with an ATTN0001 section")
        return spec, AttentionSubnet.learned(spec, attention)
    return spec, AttentionSubnet()


def _loss_weights(args):
    return LossWeights(
        lambda_g=args.lambda_g, lambda_l=args.lambda_l, alpha=args.alpha, beta=args.beta,
        theta=args.theta, literal_channel_sum=not args.no_channel_factor,
    )


def _optimizer_config(args):
    return OptimizerConfig(max_iterations=args.iters, history_size=args.history, seed=args.seed,
                           warm_start=args.warm_start)


def _run_one(content, content_mask, style, style_mask, out, spec, subnet, weights, config,
             channel_map, trace_path=None, losses_path=None, timing=False):
    pair_in = image_io.load_rgb_mask_pair(content, content_mask, channel_map)
    pair_style = image_io.load_rgb_mask_pair(style, style_mask, channel_map)
    image, trace = purify(pair_in, pair_style, spec, subnet, weights, config)
    out = Path(out)
    image_io.save_image(image, out)
    trace.write_csv(trace_path or out.with_suffix(".trace.csv"), timing=timing)
    write_loss_csv(trace.reports, losses_path or out.with_suffix(".losses.csv"),
                   [r.iteration for r in trace.records])
    return trace


def cmd_purify(args):
    spec, subnet = _spec_and_subnet(args)
    trace = _run_one(args.content, args.content_mask, args.style, args.style_mask, args.out,
                     spec, subnet, _loss_weights(args), _optimizer_config(args), args.channel_map,
                     args.trace, args.losses, args.trace_timing)
    first, last = trace.records[0], trace.records[-1]
    print(f"{trace.status}: {trace.iterations} iterations, loss {first.loss:.6g} -> {last.loss:.6g}")
    print(f"wrote {args.out}")
    return EXIT_STALLED if trace.status == STALLED else EXIT_OK


def _read_manifest(path):
    jobs = []
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise MgstError(f"{path}: cannot read manifest ({exc})") from exc
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != 5:
            raise MgstError(f"{path}:{lineno}: expected 5 fields, found {len(fields)}")
        jobs.append((lineno, fields))
    return jobs


def cmd_batch(args):
    spec, subnet = _spec_and_subnet(args)
    weights, config = _loss_weights(args), _optimizer_config(args)
    jobs = _read_manifest(args.manifest)

    def work(job):
        lineno, fields = job
        try:
            trace = _run_one(*fields, spec, subnet, weights, config, args.channel_map)
            return lineno, fields[4], trace.status, f"{trace.records[-1].loss:.6g}"
        except (MgstError, OSError, ValueError) as exc:
            return lineno, fields[4], "error", str(exc)

    with ThreadPoolExecutor(max_workers=max(1, args.threads)) as pool:
        results = list(pool.map(work, jobs))
    width = max([len(r[1]) for r in results] + [6])
    print(f"{'line':>4}  {'output'.ljust(width)}  {'status':<14}  detail")
    for lineno, out, status, detail in results:
        print(f"{lineno:>4}  {out.ljust(width)}  {status:<14}  {detail}")
    failed = sum(r[2] == "error" for r in results)
    print(f"{len(results) - failed}/{len(results)} succeeded")
    return EXIT_ERROR if failed else EXIT_OK


def cmd_benchmark(args):
    if args.reps < 1:
        raise UsageError("--reps must be at least 1")
    spec, subnet = _spec_and_subnet(args)
    given = [args.content, args.content_mask, args.style, args.style_mask]
    pairs = None
    if any(given):
        if not all(given):
            raise UsageError("--content, --content-mask, --style and --style-mask go together")
        pairs = (image_io.load_rgb_mask_pair(args.content, args.content_mask, args.channel_map),
                 image_io.load_rgb_mask_pair(args.style, args.style_mask, args.channel_map))
    backends = None if args.backend == "all" else [args.backend]
    try:
        table = run_benchmark(args.resolutions, args.reps, spec, subnet, _loss_weights(args),
                              _optimizer_config(args), backends, pairs,
                              log=lambda m: print(m, file=sys.stderr))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    print(f"seconds, {table.iterations} L-BFGS iterations per run, {args.reps} runs per cell")
    print(table.to_text())
    if args.csv:
        Path(args.csv).write_text(table.to_csv())
    return EXIT_OK


def cmd_gradcheck(args):
    if args.size > 32:
        raise UsageError("--size must be at most 32")
    spec, subnet = _spec_and_subnet(args)
    weights = _loss_weights(args)
    worst = 0.0
    for seed in range(args.seed, args.seed + args.instances):
        result = gradcheck(seed, args.size, weights, spec=spec, subnet=subnet, h=args.step,
                           corrupt_tv=args.corrupt_tv)
        parts = "  ".join(f"{k}={v:.3e}" for k, v in result.errors.items())
        print(f"seed {seed}: {parts}  (kink-crossing coordinates skipped: {result.skipped})")
        worst = max(worst, result.max_error)
    ok = worst <= args.tol
    print(f"max relative error {worst:.3e} {'<=' if ok else '>'} tolerance {args.tol:g}: {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_ERROR


def cmd_preserve_check(args):
    pair = image_io.load_rgb_mask_pair(args.content, args.content_mask, args.channel_map)
    after = image_io.load_image(args.purified)
    result = preserve_check(pair, after, args.channel, args.eye_width)
    bx, by = result.center_before
    ax, ay = result.center_after
    print(f"center before: ({bx:.3f}, {by:.3f})")
    print(f"center after:  ({ax:.3f}, {ay:.3f})")
    print(f"shift: {result.shift:.3f} px ({result.normalized_shift:.4f} of eye width {result.eye_width:g} px)")
    return EXIT_OK


def cmd_make_weights(args):
    network.write_weights(network.default_network(args.net_seed), args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def write_fixture(out_dir, size=32):
    """Write content.png, content_mask.png, style.png, style_mask.png (labels 0/255)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, pair in zip(("content", "style"), toy_pairs(size)):
        image_io.save_image(pair.image, out_dir / f"{name}.png")
        image_io.save_labels(pair.mask[..., 0] * 255, out_dir / f"{name}_mask.png")
    return out_dir


def cmd_make_fixture(args):
    if args.size % 4 or args.size < 8:
        raise UsageError("--size must be a multiple of 4 and at least 8")
    print(f"wrote toy pairs to {write_fixture(args.out_dir, args.size)}")
    return EXIT_OK


class UsageError(MgstError):
    pass


COMMANDS = {
    "purify": cmd_purify,
    "batch": cmd_batch,
    "benchmark": cmd_benchmark,
    "gradcheck": cmd_gradcheck,
    "preserve-check": cmd_preserve_check,
    "make-weights": cmd_make_weights,
    "make-fixture": cmd_make_fixture,
}


def main(argv=None):
    try:
        args = parse_args(argv)
    except MgstError as exc:
        print(f"mgst: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"mgst {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NonFiniteLoss as exc:
        print(f"mgst {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (MgstError, OSError, ValueError) as exc:
        print(f"mgst {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
