"""Command-line interface: simulate | ingest | features | train | eval | predict.

Exit codes: 0 success, 1 runtime failure, 2 config error, 3 refusal to
overwrite existing outputs without --force. Every command takes an optional
key=value config file (--config) plus repeatable --set overrides; SLC_THREADS
caps the worker pool used for feature extraction. Commands that write into a
directory hold a lock file there so concurrent runs cannot interleave.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import replace
from pathlib import Path

import numpy as np

from .audio_io import read_wav
from .config import load_config, registry_help
from .dataset import CLASS_NAMES, Manifest, ingest_sloclas, read_manifest, write_manifest
from .errors import ConfigError, SlcError, ValidationError
from .features import extract_segments, write_features
from .metrics import evaluate
from .network import load_checkpoint
from .simulate import synthesize_dataset
from .training import train, write_metrics_log

LOCK_NAME = ".slc.lock"

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2
EXIT_REFUSED = 3


class LockHeldError(SlcError):
    """Another process holds the output-directory lock."""


@contextmanager
def output_lock(directory: Path):
    """Single-instance guard per output directory via an exclusive lock file."""
    directory.mkdir(parents=True, exist_ok=True)
    lock_path = directory / LOCK_NAME
    try:
        fd = os.open(lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise LockHeldError(
            f"{lock_path} exists: another run is writing here "
            f"(remove the file if that run crashed)"
        ) from None
    try:
        os.write(fd, f"{os.getpid()}\n".encode())
        os.close(fd)
        yield
    finally:
        try:
            lock_path.unlink()
        except FileNotFoundError:
            pass


def _refuse(path: Path, force: bool, what: str) -> bool:
    """True when an existing output blocks the command (exit 3 path)."""
    if path.exists() and not force:
        print(f"refusing to overwrite existing {what}: {path} (use --force)", file=sys.stderr)
        return True
    return False


def _materialize(config) -> None:
    """Build every derived config view once so bad values fail as config errors."""
    try:
        config.sim_config()
        config.gcc_spec()
        config.mfcc_spec()
        config.endpoint_spec()
        config.train_config().validate()
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc


def _worker_count() -> int:
    raw = os.environ.get("SLC_THREADS")
    if raw is None:
        return min(os.cpu_count() or 1, 8)
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"SLC_THREADS must be an integer, got {raw!r}") from None
    if value < 1:
        raise ConfigError(f"SLC_THREADS must be at least 1, got {value}")
    return value


def _class_names_for(model) -> list[str]:
    if model.num_classes == len(CLASS_NAMES):
        return list(CLASS_NAMES)
    return [f"class_{i}" for i in range(model.num_classes)]


# ----------------------------------------------------------------------
# subcommands
# ----------------------------------------------------------------------


def cmd_simulate(args, config) -> int:
    out_dir = Path(args.out_dir)
    if _refuse(out_dir / "manifest.csv", args.force, "dataset manifest"):
        return EXIT_REFUSED
    with output_lock(out_dir):
        manifest = synthesize_dataset(config.sim_config(), out_dir)
    print(f"wrote {len(manifest)} clips and manifest.csv to {out_dir}")
    return EXIT_OK


def cmd_ingest(args, config) -> int:
    out_path = Path(args.out)
    if _refuse(out_path, args.force, "manifest"):
        return EXIT_REFUSED
    ratios = (config.train_ratio, config.val_ratio, config.test_ratio)
    manifest, skipped = ingest_sloclas(Path(args.root), split_ratios=ratios, seed=config.seed)
    # Manifest paths resolve relative to the manifest file, which may live
    # outside the scanned tree; rebase them onto the output directory.
    out_dir = out_path.resolve().parent
    rebased = [
        replace(row, wav_path=os.path.relpath((manifest.root / row.wav_path).resolve(), out_dir))
        for row in manifest.rows
    ]
    manifest = Manifest(rows=rebased, root=out_dir)
    write_manifest(manifest, out_path)
    print(f"ingested {len(manifest)} clips ({skipped} files skipped) -> {out_path}")
    return EXIT_OK


def _extract_one(manifest: Manifest, row, out_dir: Path, gcc_spec, mfcc_spec, hop_ms):
    clip = read_wav(manifest.wav_path(row))
    segments = extract_segments(clip, gcc_spec, mfcc_spec, segment_hop_ms=hop_ms)
    matrix = np.stack([seg.fused for seg in segments])
    write_features(out_dir / f"{row.id}.slcf", matrix)
    return matrix.shape[0]


def cmd_features(args, config) -> int:
    manifest = read_manifest(Path(args.manifest), check_paths=False)
    out_dir = Path(args.out_dir)
    if not args.force and out_dir.is_dir() and any(out_dir.glob("*.slcf")):
        print(
            f"refusing to overwrite existing feature files in {out_dir} (use --force)",
            file=sys.stderr,
        )
        return EXIT_REFUSED

    missing = [row.id for row in manifest if not manifest.wav_path(row).is_file()]
    if missing:
        print(f"missing WAV files for {len(missing)} samples:", file=sys.stderr)
        for sample_id in missing:
            print(f"  {sample_id}", file=sys.stderr)
        return EXIT_RUNTIME

    gcc_spec = config.gcc_spec()
    mfcc_spec = config.mfcc_spec()
    with output_lock(out_dir):
        jobs = [(row, out_dir) for row in manifest]
        with ThreadPoolExecutor(max_workers=_worker_count()) as pool:
            futures = [
                pool.submit(
                    _extract_one, manifest, row, out_dir, gcc_spec, mfcc_spec, config.segment_hop_ms
                )
                for row, out_dir in jobs
            ]
            total_segments = 0
            for row, future in zip(manifest, futures):
                try:
                    total_segments += future.result()
                except SlcError as exc:
                    print(f"feature extraction failed for {row.id}: {exc}", file=sys.stderr)
                    return EXIT_RUNTIME
    print(f"extracted {total_segments} segments for {len(manifest)} samples -> {out_dir}")
    return EXIT_OK


def cmd_train(args, config) -> int:
    out_model = Path(args.out_model)
    if _refuse(out_model, args.force, "checkpoint"):
        return EXIT_REFUSED
    manifest = read_manifest(Path(args.manifest), check_paths=False)
    log_path = Path(args.log) if args.log else out_model.with_suffix(".metrics.csv")
    train_config = config.train_config()

    def show(stats):
        def cell(v):
            return "NA" if v is None else f"{v:.2f}"

        print(
            f"epoch {stats.epoch:3d}/{train_config.epochs}  "
            f"loss {stats.train_loss:.5f}  mae {cell(stats.mae_deg)}  "
            f"acc_theta {cell(stats.acc_theta_pct)}  acc_event {cell(stats.acc_event_pct)}"
        )

    out_model.parent.mkdir(parents=True, exist_ok=True)
    with output_lock(out_model.parent):
        model, stats = train(
            manifest,
            Path(args.features_dir),
            train_config,
            progress=show if not args.quiet else None,
        )
        model.save_checkpoint(out_model)
        write_metrics_log(log_path, stats)
    print(f"saved checkpoint to {out_model} and metrics log to {log_path}")
    return EXIT_OK


def cmd_eval(args, config) -> int:
    model = load_checkpoint(Path(args.model))
    manifest = read_manifest(Path(args.manifest), check_paths=False)
    report = evaluate(model, manifest, args.split, Path(args.features_dir), config.eta_deg)
    print(report.render_table(), end="")
    if args.json:
        json_path = Path(args.json)
        if _refuse(json_path, args.force, "report"):
            return EXIT_REFUSED
        json_path.write_text(report.to_json() + "\n", encoding="utf-8")
        print(f"wrote JSON report to {json_path}")
    else:
        print(report.to_json())
    return EXIT_OK


def cmd_predict(args, config) -> int:
    model = load_checkpoint(Path(args.model))
    clip = read_wav(Path(args.wav))
    segments = extract_segments(
        clip, config.gcc_spec(), config.mfcc_spec(), segment_hop_ms=config.segment_hop_ms
    )
    matrix = np.stack([seg.fused for seg in segments])
    doa_posterior, class_probs = model.predict_sample(matrix)

    names = _class_names_for(model)
    doa_deg = int(np.argmax(doa_posterior)) + 1
    order = np.argsort(class_probs)[::-1]
    top = order[: min(3, len(order))]
    print(f"doa_deg: {doa_deg}")
    print(f"class: {names[top[0]]}")
    print("top3: " + "  ".join(f"{names[i]} {class_probs[i]:.4f}" for i in top))
    if args.posterior:
        post_path = Path(args.posterior)
        if _refuse(post_path, args.force, "posterior file"):
            return EXIT_REFUSED
        post_path.write_bytes(doa_posterior.astype("<f4").tobytes())
        print(f"wrote 360-bin posterior to {post_path}")
    return EXIT_OK


# ----------------------------------------------------------------------
# parser / entry point
# ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="slc",
        description="Sound source localization and classification pipeline.",
    )
    parser.add_argument(
        "--help-config", action="store_true", help="list every config key and exit"
    )
    sub = parser.add_subparsers(dest="command")

    def common(p):
        p.add_argument("--config", help="key=value config file")
        p.add_argument(
            "--set",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="override one config key (repeatable)",
        )
        p.add_argument("--force", action="store_true", help="overwrite existing outputs")

    p = sub.add_parser("simulate", help="synthesize a labeled 4-channel dataset")
    common(p)
    p.add_argument("out_dir")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("ingest", help="build a manifest from a recorded corpus tree")
    common(p)
    p.add_argument("root")
    p.add_argument("--out", required=True, help="manifest CSV to write")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("features", help="extract fused features for every manifest row")
    common(p)
    p.add_argument("manifest")
    p.add_argument("out_dir")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("train", help="train the multitask network")
    common(p)
    p.add_argument("manifest")
    p.add_argument("features_dir")
    p.add_argument("out_model")
    p.add_argument("--log", help="metrics CSV path (default: <out_model>.metrics.csv)")
    p.add_argument("--quiet", action="store_true", help="suppress per-epoch output")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a trained model on one split")
    common(p)
    p.add_argument("model")
    p.add_argument("manifest")
    p.add_argument("features_dir")
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.add_argument("--json", help="write the JSON report here instead of stdout")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="run one 4-channel WAV through a trained model")
    common(p)
    p.add_argument("model")
    p.add_argument("wav")
    p.add_argument("--posterior", help="write the 360-bin posterior as little-endian f32")
    p.set_defaults(func=cmd_predict)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.help_config:
        print(registry_help(), end="")
        return EXIT_OK
    if not getattr(args, "command", None):
        parser.print_help()
        return EXIT_CONFIG
    try:
        config = load_config(args.config, args.set)
        _materialize(config)
        return args.func(args, config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SlcError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
