"""Command-line surface: train-toy, register, eval-metrics, mds, spectrum, report.

Every command is deterministic given its config: all randomness flows from
declared seeds, outputs are written atomically, and rows are ordered by
pair id regardless of completion order.  Exit codes: 0 success, 1
usage/config error, 2 data error, 3 numerical failure.

Environment: ALIGNKIT_OUTPUT_DIR overrides the default output directory,
ALIGNKIT_THREADS the number of worker threads for independent pairs.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import fields
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .contrastive import EmbeddingSet
from .embedding import collapse_metrics, dissimilarity_matrix, mds_fit, sv_spectrum
from .errors import DataError, NumericalError
from .fileio import fmt, load_matrix, load_pgm, save_matrix, save_pgm, write_csv, atomic_write_text
from .image import Image
from .metrics import SsimConfig, alpha_amd, frechet_distance, image_correlation, image_mse, image_ssim
from .registration import (
    RansacConfig,
    RigidTransform,
    register_pair,
    registration_error,
    registration_success_rate,
    synthesize_test_pair,
)
from .report import median_and_mean, write_report
from .sift import SiftConfig
from .svgplot import scatter_svg, spectrum_svg
from .toytrain import SyntheticPairDataset, TwinEncoderParams, forward, run_training

ENV_OUTPUT_DIR = "ALIGNKIT_OUTPUT_DIR"
ENV_THREADS = "ALIGNKIT_THREADS"

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3


def _thread_count() -> int:
    raw = os.environ.get(ENV_THREADS, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{ENV_THREADS} must be an integer, got {raw!r}") from None
    return max(n, 1)


def _resolve_output_dir(flag_value, default="out") -> Path:
    if flag_value:
        out = Path(flag_value)
    else:
        out = Path(os.environ.get(ENV_OUTPUT_DIR) or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _map_pairs(worker, items):
    threads = _thread_count()
    if threads == 1:
        return [worker(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(worker, items))


def _load_image(path: Path) -> Image:
    img = load_pgm(path)
    mask_path = path.with_suffix(".mask.pgm")
    if mask_path.exists():
        mask = load_pgm(mask_path).intensities >= 0.5
        return Image(img.intensities, mask)
    return img


def _image_files(directory: Path) -> list[Path]:
    if not directory.is_dir():
        raise DataError(f"{directory}: not a directory")
    files = sorted(
        p for p in directory.iterdir() if p.suffix == ".pgm" and not p.name.endswith(".mask.pgm")
    )
    if not files:
        raise DataError(f"{directory}: no .pgm images found")
    return files


# ---------------------------------------------------------------------------
# train-toy


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    for f in fields(ExperimentConfig):
        if f.name == "output_dir":
            continue
        kind = {"int": int, "float": float, "str": str}[
            f.type if isinstance(f.type, str) else f.type.__name__
        ]
        parser.add_argument(f"--{f.name.replace('_', '-')}", type=kind, default=None,
                            dest=f.name)


def _resolved_config(args) -> ExperimentConfig:
    if args.config:
        cfg = ExperimentConfig.from_file(args.config)
    else:
        cfg = ExperimentConfig()
    for f in fields(ExperimentConfig):
        value = getattr(args, f.name, None)
        if value is not None:
            setattr(cfg, f.name, value)
    cfg.validate()
    return cfg


def cmd_train_toy(args) -> int:
    cfg = _resolved_config(args)
    out = _resolve_output_dir(args.output_dir, cfg.output_dir)
    dataset = SyntheticPairDataset.generate(
        n=cfg.n_samples,
        input_dim=cfg.input_dim,
        latent_dim=cfg.latent_dim,
        seed=cfg.seed,
        noise_sigma=cfg.noise_sigma,
    )

    # same draw order as run_training, so the emitted initial embeddings
    # match the parameters the trace starts from
    rng = np.random.default_rng(cfg.seed)
    params0 = TwinEncoderParams.init(cfg.input_dim, cfg.bn_dim, cfg.out_dim, rng)
    initial = {}
    for modality, inputs in (("A", dataset.inputs_a), ("B", dataset.inputs_b)):
        bn, fin = forward(params0, inputs, modality)
        initial[("bn", modality)] = bn.data
        initial[("final", modality)] = fin.data

    trace = run_training(
        dataset,
        cfg.schedule_spec(),
        cfg.loss_final(),
        cfg.loss_bn(),
        cfg.optimizer(),
        bn_dim=cfg.bn_dim,
        out_dim=cfg.out_dim,
    )

    write_csv(
        out / "trace.csv",
        ("epoch", "iteration", "active_terms", "loss"),
        [(r.epoch, r.iteration, "+".join(r.active_terms), r.loss) for r in trace.records],
    )
    for (level, modality), data in initial.items():
        save_matrix(out / f"emb_init_{modality}_{level}.mtx", data)
    trained = {
        ("bn", "A"): trace.bn_a,
        ("bn", "B"): trace.bn_b,
        ("final", "A"): trace.final_a,
        ("final", "B"): trace.final_b,
    }
    for (level, modality), emb in trained.items():
        save_matrix(out / f"emb_trained_{modality}_{level}.mtx", emb.data)
    echo = {k: v for k, v in cfg.to_dict().items() if k != "output_dir"}
    atomic_write_text(
        out / "config.json", json.dumps(echo, indent=2, sort_keys=True) + "\n"
    )
    print(f"train-toy: {len(trace.records)} steps, final loss {trace.records[-1].loss:.6g}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# register


def _sift_config(args) -> SiftConfig:
    return SiftConfig(
        octave_min_size=args.octave_min_size,
        octave_max_size=args.octave_max_size,
        steps_per_octave=args.steps_per_octave,
        initial_sigma=args.initial_sigma,
        contrast_threshold=args.contrast_threshold,
        edge_threshold=args.edge_threshold,
        ratio_test_threshold=args.ratio_test_threshold,
        refine_extrema=args.refine_extrema,
    )


def _ransac_config(args) -> RansacConfig:
    return RansacConfig(
        iterations=args.ransac_iterations,
        inlier_threshold_px=args.inlier_threshold_px,
        min_inliers=args.min_inliers,
        seed=args.ransac_seed,
    )


def _threshold_px(args, reference: Image) -> float:
    if args.rsr_threshold_percent is not None:
        return args.rsr_threshold_percent / 100.0 * max(reference.width, reference.height)
    return args.rsr_threshold_px


def cmd_register(args) -> int:
    sift_cfg = _sift_config(args)
    ransac_cfg = _ransac_config(args)

    if args.source:
        source = _load_image(Path(args.source))
        pairs = []
        for pid in range(args.pairs):
            moving, truth = synthesize_test_pair(
                source, args.max_rotation_deg, args.max_translation_px, args.seed + pid
            )
            pairs.append((pid, source, moving, truth))
    else:
        if not args.fixed_dir or not args.moving_dir:
            raise ValueError("register needs either --source or --fixed-dir/--moving-dir")
        fixed_files = _image_files(Path(args.fixed_dir))
        moving_files = _image_files(Path(args.moving_dir))
        if len(fixed_files) != len(moving_files):
            raise DataError(
                f"pair count mismatch: {len(fixed_files)} fixed vs {len(moving_files)} moving"
            )
        truths = {}
        if args.truth:
            raw = json.loads(Path(args.truth).read_text(encoding="utf-8"))
            for key, rec in raw.items():
                truths[int(key)] = RigidTransform.from_record(
                    rec["ground_truth"] if "ground_truth" in rec else rec
                )
        pairs = []
        for pid, (fp, mp) in enumerate(zip(fixed_files, moving_files)):
            try:
                fixed = _load_image(fp)
                moving = _load_image(mp)
            except (DataError, OSError):
                pairs.append((pid, None, None, truths.get(pid)))
                continue
            pairs.append((pid, fixed, moving, truths.get(pid)))

    reference = next((p[1] for p in pairs if p[1] is not None), None)
    if reference is None:
        raise DataError("no readable image pairs")
    threshold = _threshold_px(args, reference)

    def worker(pair):
        pid, fixed, moving, truth = pair
        if fixed is None:
            err = math.inf if truth is not None else None
            return pid, None, None, truth, err, "unreadable"
        transform, diag = register_pair(fixed, moving, sift_cfg, ransac_cfg)
        if truth is not None:
            err = (
                registration_error(transform, truth, fixed.width, fixed.height)
                if transform
                else math.inf
            )
        else:
            err = None
        return pid, transform, diag, truth, err, diag.failure_stage or ""

    results = sorted(_map_pairs(worker, pairs), key=lambda r: r[0])
    out = _resolve_output_dir(args.output_dir)

    if args.dump_pairs and args.source:
        dump = Path(args.dump_pairs)
        dump.mkdir(parents=True, exist_ok=True)
        save_pgm(dump / "fixed.pgm", source)
        for pid, _, moving, _ in pairs:
            save_pgm(dump / f"moving_{pid:03d}.pgm", moving)
            save_pgm(
                dump / f"moving_{pid:03d}.mask.pgm",
                Image(moving.valid_mask().astype(float)),
            )

    rows = []
    transforms = {}
    errors = []
    have_truth = True
    for pid, transform, diag, truth, err, note in results:
        if err is not None:
            errors.append(err)
        else:
            have_truth = False
        success = "" if err is None else str(err < threshold)
        rows.append(
            (
                pid,
                "" if err is None else fmt(err),
                success,
                0 if diag is None else diag.inliers,
                0 if diag is None else diag.matches,
                note,
            )
        )
        transforms[str(pid)] = {
            "estimated": transform.to_record() if transform else None,
            "ground_truth": truth.to_record() if truth else None,
        }

    write_csv(
        out / "results.csv",
        ("pair_id", "error_px", "success", "inliers", "matches", "note"),
        rows,
    )
    atomic_write_text(
        out / "transforms.json", json.dumps(transforms, indent=2, sort_keys=True) + "\n"
    )

    summary = {"n_pairs": len(results), "threshold_px": threshold}
    if have_truth and errors:
        finite = sorted(errors)
        mid = len(finite) // 2
        summary["rsr"] = registration_success_rate(errors, threshold)
        summary["median_error_px"] = (
            finite[mid] if len(finite) % 2 else 0.5 * (finite[mid - 1] + finite[mid])
        )
    atomic_write_text(
        out / "summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n"
    )
    write_csv(
        out / "summary.csv",
        ("n_pairs", "rsr", "threshold_px", "median_error_px"),
        [
            (
                summary["n_pairs"],
                fmt(summary["rsr"]) if "rsr" in summary else "",
                fmt(threshold),
                fmt(summary["median_error_px"]) if "median_error_px" in summary else "",
            )
        ],
    )
    if "rsr" in summary:
        print(f"register: {len(results)} pairs, RSR {summary['rsr']:.2f}% at {threshold:g} px")
    else:
        print(f"register: {len(results)} pairs (no ground truth, RSR not computed)")
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval-metrics

ALL_METRICS = ("mse", "correlation", "ssim", "alpha_amd")


def cmd_eval_metrics(args) -> int:
    files_a = _image_files(Path(args.dir_a))
    files_b = _image_files(Path(args.dir_b))
    if len(files_a) != len(files_b):
        raise DataError(f"pair count mismatch: {len(files_a)} vs {len(files_b)}")
    selected = [m.strip() for m in args.metrics.split(",") if m.strip()]
    unknown = set(selected) - set(ALL_METRICS)
    if unknown:
        raise ValueError(f"unknown metrics: {', '.join(sorted(unknown))}")

    ssim_cfg = SsimConfig(args.ssim_window_size, args.ssim_sigma, args.ssim_dynamic_range)

    reg_errors = {}
    reg_success = {}
    rsr = None
    if args.registration_csv:
        from .fileio import read_csv

        header, reg_rows, _ = read_csv(args.registration_csv)
        idx = {name: header.index(name) for name in ("pair_id", "error_px", "success")}
        for row in reg_rows:
            pid = int(row[idx["pair_id"]])
            if row[idx["error_px"]]:
                reg_errors[pid] = float(row[idx["error_px"]])
                reg_success[pid] = row[idx["success"]]
        sibling = Path(args.registration_csv).parent / "summary.json"
        if sibling.exists():
            rsr = json.loads(sibling.read_text(encoding="utf-8")).get("rsr")

    def worker(item):
        pid, (fa, fb) = item
        try:
            a = _load_image(fa)
            b = _load_image(fb)
            values = {}
            if "mse" in selected:
                values["mse"] = image_mse(a, b)
            if "correlation" in selected:
                values["correlation"] = image_correlation(a, b)
            if "ssim" in selected:
                values["ssim"] = image_ssim(a, b, ssim_cfg)
            if "alpha_amd" in selected:
                values["alpha_amd"] = alpha_amd(a, b, args.alpha_amd_alpha, args.alpha_amd_levels)
            return pid, values, ""
        except (DataError, ValueError, OSError) as exc:
            return pid, {}, str(exc)

    results = sorted(
        _map_pairs(worker, list(enumerate(zip(files_a, files_b)))), key=lambda r: r[0]
    )

    frechet = None
    if args.features_a and args.features_b:
        frechet = frechet_distance(load_matrix(args.features_a), load_matrix(args.features_b))

    out = _resolve_output_dir(args.output_dir)
    per_pair = []
    rows = []
    for pid, values, note in results:
        entry = {"pair_id": pid, **{m: values.get(m) for m in selected}}
        entry["registration_error"] = reg_errors.get(pid)
        entry["success"] = reg_success.get(pid)
        if note:
            entry["note"] = note
        per_pair.append(entry)
        rows.append(
            (
                pid,
                *("" if values.get(m) is None else fmt(values[m]) for m in selected),
                "" if pid not in reg_errors else fmt(reg_errors[pid]),
                reg_success.get(pid, ""),
                note,
            )
        )

    write_csv(
        out / "metrics.csv",
        ("pair_id", *selected, "registration_error", "success", "note"),
        rows,
    )

    medians = {}
    means = {}
    for name in selected:
        values = [v[name] for _, v, _ in results if name in v]
        if values:
            medians[name], means[name] = median_and_mean(values)
    agg_rows = [(name, fmt(medians[name]), fmt(means[name])) for name in medians]
    write_csv(out / "aggregates.csv", ("metric", "median", "mean"), agg_rows)

    payload = {
        "per_pair": per_pair,
        "medians": medians,
        "means": means,
        "frechet_distance": frechet,
        "rsr": rsr,
    }
    atomic_write_text(
        out / "metrics.json", json.dumps(payload, indent=2, sort_keys=True) + "\n"
    )
    print(f"eval-metrics: {len(results)} pairs, metrics {', '.join(selected)}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# mds / spectrum


def cmd_mds(args) -> int:
    emb_a = load_matrix(args.input)
    set_b = load_matrix(args.input_b) if args.input_b else None
    if set_b is not None:
        delta, labels = dissimilarity_matrix(
            EmbeddingSet("final", "A", emb_a), EmbeddingSet("final", "B", set_b), args.metric
        )
    else:
        delta, labels = dissimilarity_matrix(emb_a, metric=args.metric)
    solution = mds_fit(delta, max_iters=args.max_iters, tol=args.tol, seed=args.seed,
                       init=args.init)
    out = _resolve_output_dir(args.output_dir)
    name = f"mds_{args.tag}" if args.tag else "mds"
    write_csv(
        out / f"{name}.csv",
        ("x", "y", "modality", "pair_id"),
        [
            (fmt(solution.points[i, 0]), fmt(solution.points[i, 1]),
             labels.modality[i], labels.pair_id[i])
            for i in range(delta.shape[0])
        ],
        metadata=(
            f"final_stress={fmt(solution.final_stress)}",
            f"iterations_used={solution.iterations_used}",
        ),
    )
    if args.svg:
        scatter_svg(out / f"{name}.svg", solution.points, labels.modality, labels.pair_id,
                    title=f"metric MDS ({args.metric})")
    print(f"mds: stress {solution.final_stress:.3e} after {solution.iterations_used} iterations")
    return EXIT_OK


def cmd_spectrum(args) -> int:
    emb = load_matrix(args.input)
    spectrum = sv_spectrum(emb)
    stats = collapse_metrics(spectrum, args.epsilon_rel)
    out = _resolve_output_dir(args.output_dir)
    name = f"spectrum_{args.tag}" if args.tag else "spectrum"
    write_csv(
        out / f"{name}.csv",
        ("index", "value"),
        [(i, fmt(v)) for i, v in enumerate(spectrum.values)],
        metadata=(
            f"collapsed_dims={stats['collapsed_dims']}",
            f"effective_rank={fmt(stats['effective_rank'])}",
        ),
    )
    if args.svg:
        spectrum_svg(out / f"{name}.svg", spectrum.values)
    print(
        f"spectrum: {spectrum.values.size} values, collapsed {stats['collapsed_dims']}, "
        f"effective rank {stats['effective_rank']:.3f}"
    )
    return EXIT_OK


def cmd_report(args) -> int:
    out = _resolve_output_dir(args.output_dir)
    report = write_report(out, args.run_dir)
    print(f"report: {len(report['runs'])} runs, pcc table "
          f"{'written' if report['pcc'] else 'not available'}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="alignkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-toy", help="train twin encoders on synthetic paired data")
    p.add_argument("--config", help="JSON experiment config")
    p.add_argument("--output-dir")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train_toy)

    p = sub.add_parser("register", help="feature-based rigid registration benchmark")
    p.add_argument("--source", help="source PGM; pairs are synthesized from it")
    p.add_argument("--pairs", type=int, default=10)
    p.add_argument("--max-rotation-deg", type=float, default=30.0)
    p.add_argument("--max-translation-px", type=float, default=100.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fixed-dir")
    p.add_argument("--moving-dir")
    p.add_argument("--truth", help="JSON ground-truth transforms keyed by pair id")
    p.add_argument("--dump-pairs", help="directory to write synthesized pairs to")
    p.add_argument("--octave-min-size", type=int, default=128)
    p.add_argument("--octave-max-size", type=int, default=1024)
    p.add_argument("--steps-per-octave", type=int, default=3)
    p.add_argument("--initial-sigma", type=float, default=1.6)
    p.add_argument("--contrast-threshold", type=float, default=0.03)
    p.add_argument("--edge-threshold", type=float, default=10.0)
    p.add_argument("--ratio-test-threshold", type=float, default=0.8)
    p.add_argument("--refine-extrema", action="store_true")
    p.add_argument("--ransac-iterations", type=int, default=1000)
    p.add_argument("--inlier-threshold-px", type=float, default=5.0)
    p.add_argument("--min-inliers", type=int, default=4)
    p.add_argument("--ransac-seed", type=int, default=0)
    p.add_argument("--rsr-threshold-px", type=float, default=100.0)
    p.add_argument("--rsr-threshold-percent", type=float)
    p.add_argument("--output-dir")
    p.set_defaults(func=cmd_register)

    p = sub.add_parser("eval-metrics", help="image similarity metrics over aligned pairs")
    p.add_argument("--dir-a", required=True)
    p.add_argument("--dir-b", required=True)
    p.add_argument("--metrics", default=",".join(ALL_METRICS))
    p.add_argument("--ssim-window-size", type=int, default=11)
    p.add_argument("--ssim-sigma", type=float, default=1.5)
    p.add_argument("--ssim-dynamic-range", type=float, default=1.0)
    p.add_argument("--alpha-amd-alpha", type=float, default=None)
    p.add_argument("--alpha-amd-levels", type=int, default=8)
    p.add_argument("--features-a", help="MTX feature file for the Frechet distance")
    p.add_argument("--features-b")
    p.add_argument("--registration-csv", help="results.csv to merge by pair_id")
    p.add_argument("--output-dir")
    p.set_defaults(func=cmd_eval_metrics)

    p = sub.add_parser("mds", help="metric MDS embedding of stored embeddings")
    p.add_argument("--input", required=True, help="MTX embedding matrix (modality A)")
    p.add_argument("--input-b", help="optional MTX embedding matrix (modality B)")
    p.add_argument("--metric", choices=("mse", "euclidean"), default="mse")
    p.add_argument("--max-iters", type=int, default=2000)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--init", choices=("classical", "random"), default="classical")
    p.add_argument("--tag", help="suffix for output file names")
    p.add_argument("--svg", action="store_true")
    p.add_argument("--output-dir")
    p.set_defaults(func=cmd_mds)

    p = sub.add_parser("spectrum", help="singular-value spectrum of embedding covariance")
    p.add_argument("--input", required=True, help="MTX embedding matrix")
    p.add_argument("--epsilon-rel", type=float, default=1e-6)
    p.add_argument("--tag", help="suffix for output file names")
    p.add_argument("--svg", action="store_true")
    p.add_argument("--output-dir")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("report", help="summarize run directories, correlate metrics with RSR")
    p.add_argument("--run-dir", action="append", required=True)
    p.add_argument("--output-dir")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        return args.func(args)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
