"""Shared fixtures: one small synthetic corpus reused by training/eval/CLI tests."""

from __future__ import annotations

import numpy as np
import pytest

from slc.audio_io import read_wav
from slc.features import extract_segments, write_features
from slc.simulate import SimConfig, synthesize_dataset

TINY_CLASSES = ("bells", "bottles", "buzzer")


def tiny_sim_config(**overrides) -> SimConfig:
    """3 classes x 12 DoAs x 10 clips; every stratum splits 8/1/1."""
    kwargs = dict(
        class_names=TINY_CLASSES,
        samples_per_class=10,
        doa_start=1,
        doa_step=30,
        doa_count=12,
        seed=0,
    )
    kwargs.update(overrides)
    return SimConfig(**kwargs)


def extract_corpus_features(manifest, features_dir):
    features_dir.mkdir(parents=True, exist_ok=True)
    for row in manifest.rows:
        clip = read_wav(manifest.wav_path(row))
        segments = extract_segments(clip)
        write_features(
            features_dir / f"{row.id}.slcf",
            np.stack([seg.fused for seg in segments]),
        )


@pytest.fixture(scope="session")
def tiny_corpus(tmp_path_factory):
    """(manifest, features_dir) for the 360-clip corpus; treat as read-only."""
    root = tmp_path_factory.mktemp("tiny_corpus")
    manifest = synthesize_dataset(tiny_sim_config(), root / "data")
    features_dir = root / "features"
    extract_corpus_features(manifest, features_dir)
    return manifest, features_dir
