"""``boxvis`` command line: compute, oracle, eval and bench subcommands.

Data goes to stdout (or ``--output``); diagnostics, tables and slopes go to
stderr. Exit codes: 0 success, 1 bad input or flags, 2 I/O failure,
3 too few oracle hits for an estimate.
"""
import argparse
from concurrent.futures import ProcessPoolExecutor
import logging
import multiprocessing
from pathlib import Path
import sys

from . import _accel
from .bench import (MIN_REPS, SceneGenConfig, fit_slopes, run_scaling_bench,
                    write_bench_csv)
from .errors import InsufficientHits, OriginInsideBox, ParseError
from .ingest import (VISIBILITY_FORMAT, FrameConfig, format_visibility, format_visibility_row,
                     parse_prediction_visibilities, read_kitti_labels, rows_by_frame,
                     visibility_rows)
from .metrics import (IouKind, MatchConfig, format_ae_rows, format_ae_table,
                      match_true_positives, random_baseline, summarize)
from .oracle import OracleConfig, estimate_solid_angle, estimate_visibility
from .scene import Scene
from .visibility import Backend, visibility_all

log = logging.getLogger("boxvis")

EXIT_OK, EXIT_INPUT, EXIT_IO, EXIT_STATS = 0, 1, 2, 3
ORACLE_FORMAT = "boxvis-oracle/1"
ORACLE_COLUMNS = ("box_id", "quantity", "mean", "std_error", "samples_hit", "samples_total")
# eval compares at the precision the interchange format carries
VISIBILITY_DECIMALS = 6


class InputError(Exception):
    """Bad flags or inputs detected by the CLI itself."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return v


def _seed(text):
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be in [0, 2**64)")
    return v


def _int_list(text):
    try:
        out = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not out or min(out) < 1:
        raise argparse.ArgumentTypeError("box counts must be positive")
    return out


def _common(p, backend=True):
    p.add_argument("--seed", type=_seed, default=0, help="seed for sampling (default 0)")
    p.add_argument("--frame", choices=["kitti-camera", "ego"], default="kitti-camera",
                   help="coordinate convention of label files")
    p.add_argument("--mc-samples", type=_positive_int, default=1_000_000,
                   help="rays per box for the Monte-Carlo backend and the oracle")
    p.add_argument("--threads", type=_positive_int, default=1,
                   help="worker threads for compiled kernels")
    if backend:
        p.add_argument("--backend", choices=["naive", "pruned", "mc"], default="pruned")


def build_parser():
    parser = _Parser(prog="boxvis", description="Visibility of 3D boxes seen from the origin.")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("compute", help="visibility rows for KITTI label files")
    p.add_argument("input", type=Path, help="label file or directory of *.txt files")
    out = p.add_mutually_exclusive_group()
    out.add_argument("--output", "-o", type=Path, help="write all frames here (default stdout)")
    out.add_argument("--output-dir", type=Path, help="write one <frame>.csv per input file")
    p.add_argument("--jobs", "-j", type=_positive_int, default=1,
                   help="frames processed in parallel worker processes")
    _common(p)

    p = sub.add_parser("oracle", help="Monte-Carlo estimate for one box")
    p.add_argument("input", type=Path, help="label file")
    p.add_argument("box_id", type=int, help="box id (0-based line index in the file)")
    p.add_argument("--quantity", choices=["visibility", "solid-angle"], default="visibility")
    p.add_argument("--output", "-o", type=Path)
    _common(p, backend=False)

    p = sub.add_parser("eval", help="absolute error of predicted visibilities")
    p.add_argument("pred", type=Path, help="interchange file/dir, or 16-field KITTI with "
                                           "--random-baseline")
    p.add_argument("gt", type=Path, help="ground-truth KITTI label file or directory")
    p.add_argument("--random-baseline", action="store_true",
                   help="replace predicted visibilities with seeded uniform draws")
    p.add_argument("--iou-threshold", type=float, default=0.25)
    p.add_argument("--iou-kind", choices=[k.value for k in IouKind], default="bev")
    p.add_argument("--output", "-o", type=Path)
    _common(p)

    p = sub.add_parser("bench", help="runtime against box count")
    p.add_argument("--n-list", type=_int_list, default=[100, 200, 400, 800, 1600])
    p.add_argument("--backends", default="naive,pruned",
                   help="comma-separated subset of naive,pruned")
    p.add_argument("--reps", type=int, default=MIN_REPS)
    p.add_argument("--scenes-per-n", type=_positive_int, default=1)
    p.add_argument("--fixed-extent", action="store_true",
                   help="keep the area fixed instead of growing it with sqrt(n)")
    p.add_argument("--parallel", action="store_true", help="use the threaded kernel")
    p.add_argument("--csv", type=Path, help="write records here (default stdout)")
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--threads", type=_positive_int, default=1)
    return parser


def _backend(args):
    if args.backend == "mc":
        return Backend.monte_carlo(args.mc_samples, args.seed)
    return Backend(args.backend, parallel=args.threads > 1)


def _read_bytes(path):
    try:
        return path.read_bytes()
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc.strerror or exc}") from exc


def _label_files(path):
    if path.is_dir():
        files = sorted(path.glob("*.txt"))
        if not files:
            raise InputError(f"no *.txt label files in {path}")
        return files
    if not path.exists():
        raise OSError(f"{path} does not exist")
    return [path]


def _read_scene(path, args):
    return read_kitti_labels(_read_bytes(path), FrameConfig(args.frame), frame_id=path.stem,
                             source=str(path))


def _load_scene(path, args):
    scene, diags = _read_scene(path, args)
    for d in diags:
        log.warning("%s", d)
    return scene


def _compute_frame(path, args):
    """(frame id, rows text, diagnostics); runs in worker processes too."""
    _accel.set_num_threads(args.threads)
    scene, diags = _read_scene(path, args)
    rows = visibility_rows(scene, visibility_all(scene, _backend(args)))
    return path.stem, "".join(format_visibility_row(r) + "\n" for r in rows), diags


def _open_out(path):
    if path is None:
        return sys.stdout
    return open(path, "w", encoding="utf-8", newline="\n")


def cmd_compute(args):
    files = _label_files(args.input)
    if args.jobs > 1 and len(files) > 1:
        # spawn: forked children would inherit the parent's kernel thread pool
        ctx = multiprocessing.get_context("spawn")
        with ProcessPoolExecutor(min(args.jobs, len(files)), mp_context=ctx) as pool:
            results = list(pool.map(_compute_frame, files, [args] * len(files)))
    else:
        results = [_compute_frame(f, args) for f in files]
    for _, _, diags in results:
        for d in diags:
            log.warning("%s", d)
    header = format_visibility([], header=True)
    if args.output_dir is not None:
        args.output_dir.mkdir(parents=True, exist_ok=True)
        for frame_id, body, _ in results:
            (args.output_dir / f"{frame_id}.csv").write_text(header + body, encoding="utf-8")
        return EXIT_OK
    fh = _open_out(args.output)
    try:
        fh.write(header)
        for _, body, _ in results:
            fh.write(body)
    finally:
        if fh is not sys.stdout:
            fh.close()
    return EXIT_OK


def cmd_oracle(args):
    _accel.set_num_threads(args.threads)
    scene = _load_scene(_label_files(args.input)[0], args)
    try:
        i = scene.index_of(args.box_id)
    except KeyError:
        known = ", ".join(str(b.id) for b in scene.boxes) or "none"
        raise InputError(f"no box with id {args.box_id} in {args.input} (ids: {known})")
    cfg = OracleConfig(args.mc_samples, args.seed)
    try:
        if args.quantity == "visibility":
            est = estimate_visibility(scene, i, cfg)
        else:
            est = estimate_solid_angle(scene.boxes[i], cfg)
    except OriginInsideBox as exc:
        raise InputError(str(exc))
    fh = _open_out(args.output)
    try:
        fh.write(f"#{ORACLE_FORMAT}:" + ",".join(ORACLE_COLUMNS) + "\n")
        fh.write(f"{args.box_id},{args.quantity},{est.mean:.9f},{est.std_error:.9f},"
                 f"{est.samples_hit},{est.samples_total}\n")
    finally:
        if fh is not sys.stdout:
            fh.close()
    return EXIT_OK


def _is_interchange(data):
    for line in data.splitlines():
        if line.strip():
            return line.startswith(b"#boxvis-visibility/")
    return False


def _pred_frames(path, args):
    """{frame_id: (Scene, {box_id: v_pred or None})}."""
    frames = {}
    files = sorted(path.glob("*")) if path.is_dir() else [path]
    if path.is_dir():
        files = [f for f in files if f.suffix in (".csv", ".txt")]
    if not files:
        raise InputError(f"no prediction files in {path}")
    for f in files:
        data = _read_bytes(f)
        if _is_interchange(data):
            for frame_id, rows in rows_by_frame(parse_prediction_visibilities(data, str(f))).items():
                scene = Scene(tuple(r.box() for r in rows), frame_id)
                frames[frame_id] = (scene, {r.box_id: r.visibility for r in rows})
        else:
            if not args.random_baseline:
                raise InputError(f"{f}: KITTI predictions carry no visibility; use the "
                                 f"{VISIBILITY_FORMAT} format or --random-baseline")
            scene = _load_scene(f, args)
            frames[f.stem] = (scene, {b.id: 0.0 for b in scene.boxes})
    return frames


def cmd_eval(args):
    _accel.set_num_threads(args.threads)
    cfg = MatchConfig(args.iou_threshold, args.iou_kind)
    preds = _pred_frames(args.pred, args)
    gts = [_load_scene(f, args) for f in _label_files(args.gt)]
    if len(gts) == 1 and len(preds) == 1:
        pairs_of_frames = [(next(iter(preds.values())), gts[0])]
    else:
        pairs_of_frames = []
        for gt in gts:
            if gt.frame_id not in preds:
                log.warning("no predictions for frame %s", gt.frame_id)
                continue
            pairs_of_frames.append((preds[gt.frame_id], gt))
    backend = _backend(args)
    pairs = []
    for (pred_scene, v_pred), gt in pairs_of_frames:
        v_algo = {r.box_id: (None if r.visibility is None
                             else round(r.visibility, VISIBILITY_DECIMALS))
                  for r in visibility_all(gt, backend)}
        pairs.extend(match_true_positives(pred_scene, gt, v_pred, v_algo, cfg))
    if args.random_baseline:
        pairs = random_baseline(pairs, args.seed)
    summary = summarize(pairs)
    sys.stderr.write(format_ae_table(summary))
    fh = _open_out(args.output)
    try:
        fh.write(format_ae_rows(summary))
    finally:
        if fh is not sys.stdout:
            fh.close()
    return EXIT_OK


def cmd_bench(args):
    if args.reps < MIN_REPS:
        raise InputError(f"--reps must be at least {MIN_REPS}, got {args.reps}")
    names = [b.strip() for b in args.backends.split(",") if b.strip()]
    bad = [b for b in names if b not in ("naive", "pruned")]
    if bad or not names:
        raise InputError(f"--backends takes naive and/or pruned, got {args.backends!r}")
    if args.n_list != sorted(args.n_list):
        raise InputError("--n-list must be ascending")
    _accel.set_num_threads(args.threads)
    backends = [Backend(b, parallel=args.parallel) for b in names]
    records = run_scaling_bench(backends, args.n_list, SceneGenConfig(seed=args.seed),
                                args.reps, scale_extent=not args.fixed_extent,
                                scenes_per_n=args.scenes_per_n)
    fh = _open_out(args.csv)
    try:
        write_bench_csv(records, fh)
    finally:
        if fh is not sys.stdout:
            fh.close()
    for name, slope in fit_slopes(records).items():
        sys.stderr.write(f"slope {name} {slope:.3f}\n")
    return EXIT_OK


COMMANDS = {"compute": cmd_compute, "oracle": cmd_oracle, "eval": cmd_eval,
            "bench": cmd_bench}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except (ParseError, InputError, ValueError) as exc:
        sys.stderr.write(f"boxvis {args.command}: error: {exc}\n")
        return EXIT_INPUT
    except InsufficientHits as exc:
        sys.stderr.write(f"boxvis {args.command}: {exc}\n")
        return EXIT_STATS
    except OSError as exc:
        sys.stderr.write(f"boxvis {args.command}: I/O error: {exc}\n")
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
