"""Command-line entry point: ``shortcut-stereo <subcommand> [options]``.

Every run writes ``config.json`` (all effective parameters) next to its
outputs. Augmentation options are resolved as built-in defaults, then the
``--config`` key-value file, then ``--set key=value`` flags.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict
from pathlib import Path

from . import __version__
from .analyze import CONDITIONS, dataset_report, histogram_svg
from .augment import AugmentConfig, build_training_sample
from .datagen import TEXTURES, SceneSpec, generate_manifest_set
from .io import (ManifestError, format_manifest, load_sample, read_manifest, read_pfm_disparity, write_image,
                 write_mask_png, write_pfm_disparity)
from .matcher import EXPERIMENT_TEXTURE_RANGE, METHODS, MatchConfig, match, shortcut_susceptibility_experiment
from .metrics import d1_rate, eval_csv

OUT_ENV = "SHORTCUT_STEREO_OUT"


class CLIError(Exception):
    pass


def _default_out() -> str:
    return os.environ.get(OUT_ENV, "out")


def _pair(text: str) -> tuple[float, float]:
    parts = [p for p in text.replace(" ", "").split(",") if p]
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected 'lo,hi', got {text!r}")
    return float(parts[0]), float(parts[1])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="shortcut-stereo",
                                     description="Stereo shortcut-removal augmentation and diagnostics toolkit.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, manifest=True):
        if manifest:
            p.add_argument("--manifest", required=True, help="sample manifest CSV")
        p.add_argument("--out", default=None, help=f"output directory (default ${OUT_ENV} or ./out)")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--jobs", type=int, default=1, help="worker threads across manifest rows")
        p.add_argument("--strict", action="store_true", help="exit non-zero if any row fails")

    def augment_opts(p):
        p.add_argument("--config", help="flat 'key = value' augmentation config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override one augmentation option (repeatable)")

    p = sub.add_parser("gen", help="generate synthetic random-dot stereo samples")
    common(p, manifest=False)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--width", type=int, default=512)
    p.add_argument("--height", type=int, default=256)
    p.add_argument("--texture", choices=TEXTURES, default="random_rgb")
    p.add_argument("--texture-range", type=_pair, default=(0.0, 1.0), metavar="LO,HI")
    p.add_argument("--background-disparity", type=int, default=0,
                   help="with --fixed-layout: disparity of the single background plane")
    p.add_argument("--fixed-layout", action="store_true",
                   help="background plane only; by default every sample gets random foreground layers")
    p.add_argument("--image-format", choices=("png8", "ppm"), default="png8")

    p = sub.add_parser("augment", help="crop, ACA, ARP and normalize every manifest sample")
    common(p)
    augment_opts(p)

    p = sub.add_parser("analyze", help="colour discrepancy between ground-truth correspondences")
    common(p)
    augment_opts(p)
    p.add_argument("--condition", choices=CONDITIONS, default="raw")
    p.add_argument("--bins", type=int, default=64)
    p.add_argument("--upper", type=float, default=64.0, help="top histogram edge (0-255 scale)")
    p.add_argument("--label", default="pooled")
    p.add_argument("--svg", action="store_true", help="also write the pooled histogram as SVG")

    p = sub.add_parser("match", help="run a classical matcher over a manifest")
    common(p)
    p.add_argument("--method", choices=METHODS, default="sad_rgb")
    p.add_argument("--max-disparity", type=int, default=192)
    p.add_argument("--window-radius", type=int, default=3)

    p = sub.add_parser("eval", help="D1 / EPE of predictions against manifest ground truth")
    common(p)
    p.add_argument("--pred-dir", required=True, help="directory of sample_NNNNN.pfm predictions")
    p.add_argument("--threshold", type=float, required=True, help="outlier threshold in px (3 KITTI, 2 Middlebury, 1 ETH3D)")
    p.add_argument("--kitti-rule", action="store_true", help="also require error > 5%% of ground truth")
    p.add_argument("--noc", action="store_true", help="exclude occluded pixels where a mask is available")

    p = sub.add_parser("susceptibility", help="clean vs. ACA matcher accuracy on generated pairs")
    common(p, manifest=False)
    augment_opts(p)
    p.add_argument("--n", type=int, default=20)
    p.add_argument("--width", type=int, default=512)
    p.add_argument("--height", type=int, default=256)
    p.add_argument("--texture-range", type=_pair, default=EXPERIMENT_TEXTURE_RANGE, metavar="LO,HI")
    p.add_argument("--max-disparity", type=int, default=192)
    p.add_argument("--window-radius", type=int, default=3)
    p.add_argument("--threshold", type=float, default=3.0)
    p.add_argument("--save-predictions", action="store_true")
    return parser


# ------------------------------------------------------------------ helpers

def _augment_config(args) -> AugmentConfig:
    cfg = AugmentConfig()
    if getattr(args, "config", None):
        try:
            cfg = AugmentConfig.from_text(Path(args.config).read_text(), cfg)
        except OSError as exc:
            raise CLIError(f"cannot read config {args.config}: {exc}") from exc
    overrides = {}
    for item in getattr(args, "set", []):
        if "=" not in item:
            raise CLIError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    overrides.setdefault("master_seed", str(args.seed))
    try:
        return cfg.updated(overrides)
    except (KeyError, ValueError) as exc:
        raise CLIError(f"bad augmentation option: {exc}") from exc


def _load_manifest(path: str):
    try:
        return read_manifest(path)
    except (OSError, ManifestError, UnicodeDecodeError) as exc:
        raise CLIError(f"cannot read manifest {path}: {exc}") from exc


def _prepare_out(args) -> Path:
    out = Path(args.out or _default_out())
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CLIError(f"cannot create output directory {out}: {exc}") from exc
    return out


def _echo_config(out: Path, args, **extra) -> None:
    params = {k: v for k, v in vars(args).items() if k not in ("out", "verbose", "jobs")}
    params.update(extra)
    _write(out / "config.json", json.dumps(params, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(obj):
    if isinstance(obj, Path):
        return str(obj)
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"not serializable: {type(obj)}")


def _write(path: Path, data) -> None:
    try:
        if isinstance(data, bytes):
            path.write_bytes(data)
        else:
            path.write_text(data)
    except OSError as exc:
        raise CLIError(f"cannot write {path}: {exc}") from exc


def _ordered_map(fn, items, jobs):
    if jobs <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _finish(out: Path, failures, strict: bool) -> int:
    if not failures:
        return 0
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["row", "error"])
    writer.writerows(sorted(failures))
    _write(out / "failures.csv", buf.getvalue())
    for _, msg in sorted(failures):
        print(f"warning: {msg}", file=sys.stderr)
    return 1 if strict else 0


# --------------------------------------------------------------- subcommands

def cmd_gen(args) -> int:
    out = _prepare_out(args)
    if args.n < 0:
        raise CLIError("--n must be >= 0")
    template = SceneSpec(args.width, args.height, args.background_disparity, (), args.texture, 0,
                         tuple(args.texture_range))
    try:
        template.validate()
    except ValueError as exc:
        raise CLIError(str(exc)) from exc
    _echo_config(out, args)
    manifest = generate_manifest_set(args.n, template, args.seed, out, randomize_layers=not args.fixed_layout,
                                     image_format=args.image_format)
    print(f"wrote {len(manifest)} samples and manifest.csv to {out}")
    return _finish(out, manifest.errors, args.strict)


def cmd_augment(args) -> int:
    manifest = _load_manifest(args.manifest)
    cfg = _augment_config(args)
    out = _prepare_out(args)
    _echo_config(out, args, augment_config=asdict(cfg))
    _write(out / "augment.cfg", cfg.to_text())
    failures = list(manifest.errors)

    def work(row):
        try:
            aug = build_training_sample(load_sample(row), cfg, row.index)
        except (OSError, ValueError) as exc:
            return row, None, f"row {row.index}: {exc}"
        stem = f"sample_{row.index:05d}"
        files = {
            "left": (f"{stem}_left.png", write_image(aug.left_raw)),
            "right": (f"{stem}_right.png", write_image(aug.right_raw)),
            "disparity": (f"{stem}_disp.pfm", write_pfm_disparity(aug.disparity)),
        }
        if aug.occlusion is not None:
            files["occlusion"] = (f"{stem}_occ.png", write_mask_png(aug.occlusion))
        for name, payload in files.values():
            _write(out / name, payload)
        return row, (aug.record, {k: n for k, (n, _) in files.items()}), None

    records, rows = [], []
    for row, result, err in _ordered_map(work, list(manifest.rows), args.jobs):
        if err:
            failures.append((row.index, err))
            continue
        record, names = result
        records.append(record.to_json())
        rows.append(dict(names, format="pfm"))
    _write(out / "provenance.jsonl", "".join(line + "\n" for line in records))
    _write(out / "manifest.csv", format_manifest(rows))
    print(f"augmented {len(records)} samples into {out}")
    return _finish(out, failures, args.strict)


def cmd_analyze(args) -> int:
    manifest = _load_manifest(args.manifest)
    cfg = _augment_config(args)
    out = _prepare_out(args)
    _echo_config(out, args, augment_config=asdict(cfg))
    report = dataset_report(manifest, args.condition, cfg, args.seed, args.bins, args.upper, args.label, args.jobs)
    _write(out / "report.csv", report.csv)
    hist = report.pooled.histogram
    _write(out / "histogram.csv", "bin_lo,bin_hi,count\n" + "".join(
        f"{lo:g},{hi:g},{c}\n" for lo, hi, c in zip(hist.bin_edges[:-1], hist.bin_edges[1:], hist.counts)))
    if args.svg:
        _write(out / "histogram.svg", histogram_svg(hist, f"{args.label} ({args.condition})"))
    p = report.pooled
    if p.empty:
        print(f"no valid pixels; report written to {out / 'report.csv'}")
    else:
        print(f"{args.condition}: n_valid={p.n_valid} p50={p.percentiles[50]:.3g} p99={p.percentiles[99]:.3g} "
              f"(see {out / 'report.csv'})")
    return _finish(out, report.failures, args.strict)


def cmd_match(args) -> int:
    manifest = _load_manifest(args.manifest)
    try:
        cfg = MatchConfig(args.max_disparity, args.window_radius, args.method)
    except ValueError as exc:
        raise CLIError(str(exc)) from exc
    out = _prepare_out(args)
    _echo_config(out, args)
    failures = list(manifest.errors)

    def work(row):
        try:
            sample = load_sample(row)
            pred = match(sample.left, sample.right, cfg)
        except (OSError, ValueError) as exc:
            return row, f"row {row.index}: {exc}"
        _write(out / f"sample_{row.index:05d}.pfm", write_pfm_disparity(pred))
        return row, None

    written = 0
    for row, err in _ordered_map(work, list(manifest.rows), args.jobs):
        if err:
            failures.append((row.index, err))
        else:
            written += 1
    print(f"wrote {written} {args.method} predictions to {out}")
    return _finish(out, failures, args.strict)


def cmd_eval(args) -> int:
    manifest = _load_manifest(args.manifest)
    out = _prepare_out(args)
    _echo_config(out, args)
    pred_dir = Path(args.pred_dir)
    failures = list(manifest.errors)

    def work(row):
        try:
            sample = load_sample(row)
            pred = read_pfm_disparity((pred_dir / f"sample_{row.index:05d}.pfm").read_bytes())
            mask = ~sample.occlusion if args.noc and sample.occlusion is not None else None
            return row, d1_rate(pred, sample.disparity, args.threshold, mask, args.kitti_rule), None
        except (OSError, ValueError) as exc:
            return row, None, f"row {row.index}: {exc}"

    rows = []
    for row, result, err in _ordered_map(work, list(manifest.rows), args.jobs):
        if err:
            failures.append((row.index, err))
        else:
            rows.append((f"sample_{row.index:05d}", result))
    _write(out / "eval.csv", eval_csv(rows))
    print(f"evaluated {len(rows)} samples at {args.threshold:g} px; results in {out / 'eval.csv'}")
    return _finish(out, failures, args.strict)


def cmd_susceptibility(args) -> int:
    aca_cfg = _augment_config(args)
    try:
        cfg = MatchConfig(args.max_disparity, args.window_radius)
    except ValueError as exc:
        raise CLIError(str(exc)) from exc
    out = _prepare_out(args)
    _echo_config(out, args, augment_config=asdict(aca_cfg))
    result = shortcut_susceptibility_experiment(args.seed, cfg, aca_cfg, args.n, args.width, args.height,
                                                args.threshold, keep_predictions=args.save_predictions,
                                                texture_range=tuple(args.texture_range))
    _write(out / "susceptibility.csv", result.csv())
    if args.save_predictions:
        for (i, cond, method), pred in sorted(result.predictions.items()):
            _write(out / f"sample_{i:05d}_{cond}_{method}.pfm", write_pfm_disparity(pred))
    deg = result.degradation
    print(f"D1 degradation sad_rgb={deg['sad_rgb']:.2f} census={deg['census']:.2f} "
          f"(see {out / 'susceptibility.csv'})")
    if not result.ordering_holds:
        print("warning: sad_rgb did not degrade more than census", file=sys.stderr)
        return 1 if args.strict else 0
    return 0


COMMANDS = {
    "gen": cmd_gen,
    "augment": cmd_augment,
    "analyze": cmd_analyze,
    "match": cmd_match,
    "eval": cmd_eval,
    "susceptibility": cmd_susceptibility,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except CLIError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
