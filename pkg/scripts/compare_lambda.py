#!/usr/bin/env python3
"""Multitask vs single-task comparison over matched seeds.

Trains one model per (seed, lambda) pair on a shared synthetic corpus and
tabulates the final test-split metrics, showing whether joint DoA training
helps or hurts event classification (and vice versa).

Example (small corpus, quick):
    python3 scripts/compare_lambda.py out/lambda_sweep \
        --samples-per-class 4 --doa-count 24 --doa-step 15 \
        --epochs 10 --seeds 0,1,2 --lams 0.99,0.0
"""

from __future__ import annotations

import argparse
import csv
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from slc.audio_io import read_wav
from slc.features import extract_segments, write_features
from slc.simulate import SimConfig, synthesize_dataset
from slc.training import TrainConfig, train


def extract_all(manifest, features_dir: Path) -> None:
    features_dir.mkdir(parents=True, exist_ok=True)
    for row in manifest.rows:
        segments = extract_segments(read_wav(manifest.wav_path(row)))
        write_features(features_dir / f"{row.id}.slcf", np.stack([s.fused for s in segments]))


def fmt(value) -> str:
    return "-" if value is None else f"{value:.2f}"


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("out_dir", type=Path, help="sweep output directory")
    parser.add_argument("--samples-per-class", type=int, default=20)
    parser.add_argument("--doa-count", type=int, default=72)
    parser.add_argument("--doa-step", type=int, default=5)
    parser.add_argument("--epochs", type=int, default=25)
    parser.add_argument("--hidden", type=int, default=512)
    parser.add_argument("--seeds", default="0,1,2", help="comma-separated training seeds")
    parser.add_argument("--lams", default="0.99,0.0", help="comma-separated lambda values")
    parser.add_argument("--corpus-seed", type=int, default=0)
    args = parser.parse_args(argv)

    seeds = [int(s) for s in args.seeds.split(",")]
    lams = [float(s) for s in args.lams.split(",")]

    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    sim = SimConfig(
        samples_per_class=args.samples_per_class,
        doa_count=args.doa_count,
        doa_step=args.doa_step,
        seed=args.corpus_seed,
    )
    t0 = time.perf_counter()
    manifest = synthesize_dataset(sim, out / "data")
    extract_all(manifest, out / "features")
    print(f"corpus of {len(manifest.rows)} clips ready in {time.perf_counter() - t0:.1f} s")

    results = []
    for seed in seeds:
        for lam in lams:
            config = TrainConfig(epochs=args.epochs, lam=lam, hidden=args.hidden, seed=seed)
            t0 = time.perf_counter()
            _, stats = train(manifest, out / "features", config)
            final = stats[-1]
            results.append(
                {
                    "seed": seed,
                    "lam": lam,
                    "train_loss": final.train_loss,
                    "mae_deg": final.mae_deg,
                    "acc_theta_pct": final.acc_theta_pct,
                    "acc_event_pct": final.acc_event_pct,
                }
            )
            print(
                f"seed {seed} lam {lam:4.2f}: loss {final.train_loss:.5f}  "
                f"mae {fmt(final.mae_deg)}  acc_theta {fmt(final.acc_theta_pct)}  "
                f"acc_event {fmt(final.acc_event_pct)}  "
                f"({time.perf_counter() - t0:.1f} s)"
            )

    csv_path = out / "lambda_sweep.csv"
    with csv_path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(results[0].keys()))
        writer.writeheader()
        writer.writerows(results)

    print(f"\n{'seed':>4}  {'lam':>4}  {'mae':>7}  {'acc_theta':>9}  {'acc_event':>9}")
    for r in results:
        print(
            f"{r['seed']:>4}  {r['lam']:>4.2f}  {fmt(r['mae_deg']):>7}  "
            f"{fmt(r['acc_theta_pct']):>9}  {fmt(r['acc_event_pct']):>9}"
        )
    for seed in seeds:
        by_lam = {r["lam"]: r for r in results if r["seed"] == seed}
        if 0.99 in by_lam and 0.0 in by_lam:
            mt, st = by_lam[0.99]["acc_event_pct"], by_lam[0.0]["acc_event_pct"]
            if mt is not None and st is not None:
                print(f"seed {seed}: multitask acc_event - single-task = {mt - st:+.2f} pp")
    print(f"wrote {csv_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
