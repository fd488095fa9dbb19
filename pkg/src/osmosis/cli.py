"""Command-line frontend.

Every subcommand writes its output raster (plus scaling sidecar when needed)
and a metrics CSV, prints the elapsed wall time, and exits 0. Failures print
one line ``error code=<n> type=<Exception> message=<text>`` on stderr and
exit with the code listed in ``EXIT_CODES``.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

from . import __version__
from .applications import (
    FusionSpec,
    TqrCalibration,
    false_color,
    fuse_multimodal,
    light_balance,
    local_otsu_preprocess,
    tqr_calibrate,
)
from .bench import bench, fit_exponent, write_bench, write_step_times
from .discretization import canonical_drift
from .errors import (
    CalibrationError,
    ConfigError,
    ConvergenceError,
    ExplicitStabilityError,
    InvalidImageError,
    OsmosisError,
    PartitionError,
    ShapeMismatchError,
    SingularSystemError,
    TilingError,
    UnsupportedFormatError,
)
from .grid import Image, Rect, ensure_positive
from .io import MetricsRecorder, load_image, load_partition, load_tiling, save_image, write_metrics
from .solvers import SCHEMES, SolverConfig, evolve
from .tridiag import set_threads

log = logging.getLogger("osmosis")

#: exit status per failure type; argparse usage errors exit with 2
EXIT_CODES = {
    cls.__name__: cls.exit_code
    for cls in (
        InvalidImageError, ShapeMismatchError, TilingError, PartitionError, ConfigError,
        ExplicitStabilityError, ConvergenceError, SingularSystemError, UnsupportedFormatError,
        CalibrationError,
    )
} | {"FileNotFoundError": 13, "OSError": 14}


def _rect(text: str) -> Rect:
    try:
        x, y, w, h = (int(p) for p in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected x,y,width,height, got {text!r}") from None
    return Rect(x, y, w, h)


def _int_list(text: str) -> list[int]:
    try:
        return [int(p) for p in text.split(",") if p]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _positive(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not value > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return value


def _add_solver_args(p: argparse.ArgumentParser, scheme: bool = True) -> None:
    g = p.add_argument_group("solver")
    if scheme:
        g.add_argument("--scheme", choices=SCHEMES, default="aos")
    g.add_argument("--tau", type=_positive, default=1e3, help="time step (default 1e3)")
    g.add_argument("--T", dest="T", type=_positive, default=1e5, help="stopping time (default 1e5)")
    g.add_argument("--tol", type=_positive, default=1e-10, help="implicit solver relative residual")
    g.add_argument("--max-iter", type=int, default=2000, help="implicit solver iteration cap")
    g.add_argument("--epsilon", type=_positive, default=None, help="positivity floor (default: 1 count or 1/255)")


def _add_output_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", required=True, type=Path, help="output raster (.png, .pgm, .ppm)")
    p.add_argument("--bit-depth", type=int, choices=(8, 16), default=None)
    p.add_argument("--metrics", type=Path, default=None, help="metrics CSV (default <out>.metrics.csv)")
    p.add_argument("--figure", type=Path, default=None, help="also render a PNG figure of the run")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="osmosis", description="Linear image osmosis filtering toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--threads", type=int, default=None, help="worker threads (env OSMOSIS_THREADS)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("balance", help="light balance of a tiled mosaic")
    p.add_argument("--input", required=True, type=Path)
    p.add_argument("--tiles", required=True, type=Path, help="tiling JSON document")
    _add_solver_args(p)
    _add_output_args(p)

    p = sub.add_parser("tqr", help="TQR reflectance calibration")
    p.add_argument("--input", required=True, type=Path)
    p.add_argument("--target", required=True, type=_rect, help="target rectangle x,y,width,height")
    p.add_argument("--r-ref", required=True, type=_positive, help="known target reflectance in (0, 1]")
    _add_output_args(p)

    p = sub.add_parser("falsecolor", help="IR-R-G false-color composite")
    p.add_argument("--ir", required=True, type=Path)
    p.add_argument("--red", required=True, type=Path, help="visible red band (or RGB image)")
    p.add_argument("--green", type=Path, default=None, help="visible green band; omit when --red is RGB")
    p.add_argument("--tiles", type=Path, default=None, help="light-balance the IR band on these tiles first")
    _add_solver_args(p)
    _add_output_args(p)

    p = sub.add_parser("fuse", help="multi-modal fusion onto the visible image")
    p.add_argument("--visible", required=True, type=Path)
    p.add_argument("--modality", required=True, type=Path, help="second modality revealing the text")
    p.add_argument("--partition", required=True, type=Path, help="partition JSON or label raster")
    p.add_argument("--window", type=int, default=31, help="local Otsu window (odd)")
    p.add_argument("--no-preprocess", action="store_true", help="skip local Otsu preprocessing")
    _add_solver_args(p)
    _add_output_args(p)

    p = sub.add_parser("evolve", help="plain osmosis evolution towards a reference")
    p.add_argument("--input", required=True, type=Path)
    p.add_argument("--reference", type=Path, default=None, help="drift source image (default: input)")
    _add_solver_args(p)
    _add_output_args(p)

    p = sub.add_parser("bench", help="timing sweep of the integrators")
    p.add_argument("--sizes", type=_int_list, default=[128, 256, 512])
    p.add_argument("--iters", type=int, default=100)
    p.add_argument("--schemes", type=lambda s: s.split(","), default=["aos"])
    p.add_argument("--tau", type=_positive, default=1e3)
    p.add_argument("--tol", type=_positive, default=1e-8)
    p.add_argument("--out", type=Path, default=Path("bench.csv"))
    p.add_argument("--steps-out", type=Path, default=None, help="per-step timings CSV")
    p.add_argument("--figure", type=Path, default=None)
    return parser


def _config(args) -> SolverConfig:
    return SolverConfig(getattr(args, "scheme", "aos"), args.tau, args.T, args.tol, args.max_iter)


def _finish(args, before: Image, result: Image, recorder: MetricsRecorder | None) -> None:
    side = save_image(result, args.out, args.bit_depth)
    print(f"output: {args.out}")
    if side is not None:
        print(f"sidecar: {side}")
    metrics = args.metrics or args.out.with_name(args.out.name + ".metrics.csv")
    rows = recorder.sorted_rows() if recorder is not None else []
    write_metrics(rows, metrics)
    print(f"metrics: {metrics}")
    if args.figure is not None:
        from .report import plot_before_after, plot_metrics

        plot_before_after(before, result, args.figure)
        print(f"figure: {args.figure}")
        if rows:
            conv = args.figure.with_name(args.figure.stem + "_metrics" + args.figure.suffix)
            plot_metrics(rows, conv)
            print(f"figure: {conv}")


def _run_balance(args, workers: int) -> None:
    mosaic = load_image(args.input)
    tiling = load_tiling(args.tiles)
    if (tiling.width, tiling.height) != (mosaic.width, mosaic.height):
        raise TilingError(
            f"tiling canvas {tiling.width}x{tiling.height} does not match image {mosaic.width}x{mosaic.height}"
        )
    cfg = _config(args)
    rec = MetricsRecorder()
    rec.start(mosaic.channels)
    out = light_balance(mosaic, tiling.tiles, cfg, eps=args.epsilon, observer=rec, workers=workers)
    print(f"steps: {cfg.n_steps} ({cfg.scheme})")
    _finish(args, mosaic, out, rec)


def _run_tqr(args, workers: int) -> None:
    raw = load_image(args.input)
    out = tqr_calibrate(raw, TqrCalibration(args.target, args.r_ref))
    print(f"u_ref: {out.meta['u_ref']}  exceeds_unity: {out.meta['exceeds_unity']}")
    _finish(args, raw, out, None)


def _single(img: Image, c: int) -> Image:
    return img.with_data(img.data[c : c + 1])


def _run_falsecolor(args, workers: int) -> None:
    ir = load_image(args.ir)
    red = load_image(args.red)
    if args.green is None:
        if red.channels != 3:
            raise ShapeMismatchError("--green is required unless --red is an RGB image")
        red, green = _single(red, 0), _single(red, 1)
    else:
        green = load_image(args.green)
    if ir.channels != 1:
        ir = ir.with_data(ir.data.mean(axis=0, keepdims=True))
    rec = None
    if args.tiles is not None:
        tiling = load_tiling(args.tiles)
        cfg = _config(args)
        rec = MetricsRecorder()
        rec.start(1)
        ir = light_balance(ir, tiling.tiles, cfg, eps=args.epsilon, observer=rec)
        print(f"steps: {cfg.n_steps} ({cfg.scheme})")
    out = false_color(ir, red, green)
    _finish(args, out, out, rec)


def _run_fuse(args, workers: int) -> None:
    v1 = ensure_positive(load_image(args.visible), args.epsilon)
    v2 = load_image(args.modality)
    spec = FusionSpec(load_partition(args.partition), window=args.window)
    v2 = ensure_positive(v2, args.epsilon) if args.no_preprocess else local_otsu_preprocess(v2, spec, args.epsilon)
    cfg = _config(args)
    rec = MetricsRecorder()
    rec.start(v1.channels)
    out = fuse_multimodal(v1, v2, spec, cfg, observer=rec, workers=workers)
    print(f"steps: {cfg.n_steps} ({cfg.scheme})")
    _finish(args, v1, out, rec)


def _run_evolve(args, workers: int) -> None:
    f = ensure_positive(load_image(args.input), args.epsilon)
    ref = f if args.reference is None else ensure_positive(load_image(args.reference), args.epsilon)
    if ref.data.shape != f.data.shape:
        raise ShapeMismatchError(f"reference {ref.data.shape} does not match input {f.data.shape}")
    cfg = _config(args)
    rec = MetricsRecorder()
    rec.start(f.channels)
    channels = []
    for c in range(f.channels):
        d = canonical_drift(ref.channel(c), h=f.h)
        channels.append(evolve(f.channel(c), d, cfg, lambda k, m, s, c=c: rec(c, k, m, s)))
    out = f.with_data(channels)
    print(f"steps: {cfg.n_steps} ({cfg.scheme})")
    _finish(args, f, out, rec)


def _run_bench(args, workers: int) -> None:
    rows, steps = bench(args.sizes, args.iters, args.schemes, tau=args.tau, tol=args.tol)
    write_bench(rows, args.out)
    print(f"bench: {args.out}")
    if args.steps_out is not None:
        write_step_times(steps, args.steps_out)
        print(f"steps: {args.steps_out}")
    for scheme in args.schemes:
        rs = [r for r in rows if r.scheme == scheme]
        for r in rs:
            print(
                f"{scheme:9s} {r.size:5d}x{r.size:<5d} factor {r.factor_ms:9.2f} ms  "
                f"step {r.mean_step_ms:9.3f} ms  total {r.total_ms / 1e3:8.3f} s  "
                f"{r.ns_per_pixel_iter:7.2f} ns/px/iter"
            )
        if len(rs) > 1:
            print(f"{scheme}: scaling exponent {fit_exponent([r.pixels for r in rs], [r.total_ms for r in rs]):.3f}")
    if args.figure is not None:
        from .report import plot_scaling

        plot_scaling(rows, args.figure)
        print(f"figure: {args.figure}")


COMMANDS = {
    "balance": _run_balance,
    "tqr": _run_tqr,
    "falsecolor": _run_falsecolor,
    "fuse": _run_fuse,
    "evolve": _run_evolve,
    "bench": _run_bench,
}


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, OsmosisError):
        return exc.exit_code
    if isinstance(exc, FileNotFoundError):
        return EXIT_CODES["FileNotFoundError"]
    return EXIT_CODES["OSError"]


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    start = time.perf_counter()
    try:
        workers = set_threads(args.threads)
        COMMANDS[args.command](args, workers)
    except (OsmosisError, OSError) as exc:
        message = " ".join(str(exc).split())
        print(f"error code={_exit_code(exc)} type={type(exc).__name__} message={message}", file=sys.stderr)
        return _exit_code(exc)
    print(f"elapsed: {time.perf_counter() - start:.3f} s")
    return 0


if __name__ == "__main__":
    sys.exit(main())
