"""Seeded minibatch training for the multitask network.

Loads per-sample feature files once, runs Adam over shuffled minibatches,
and scores the test split after every epoch. All randomness (shuffling,
dropout masks, initialization) derives from the config seed, so two runs
with identical inputs produce bit-identical checkpoints and logs.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .coding import DEFAULT_SIGMA_DEG, decode_doa, encode_doa
from .dataset import Manifest
from .errors import IngestionError, ValidationError
from .features import FUSED_DIM, read_features
from .metrics import DEFAULT_ETA_DEG, acc_event, acc_theta, mae
from .network import AdamState, SLCNet

METRICS_LOG_HEADER = "epoch,train_loss,mae,acc_theta,acc_event"


@dataclass
class TrainConfig:
    """Optimization hyperparameters; defaults mirror the reference setup."""

    epochs: int = 50
    batch_size: int = 32
    learning_rate: float = 0.001
    lam: float = 0.99
    seed: int = 0
    sigma_deg: float = DEFAULT_SIGMA_DEG
    hidden: int = 512
    dropout: float = 0.2
    eta_deg: float = DEFAULT_ETA_DEG

    def validate(self) -> None:
        if self.epochs <= 0:
            raise ValidationError(f"epochs must be positive, got {self.epochs}")
        if self.batch_size <= 0:
            raise ValidationError(f"batch_size must be positive, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ValidationError(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0.0 <= self.lam <= 1.0:
            raise ValidationError(f"lambda must be in [0, 1], got {self.lam}")
        if self.sigma_deg <= 0:
            raise ValidationError(f"sigma_deg must be positive, got {self.sigma_deg}")
        if self.hidden <= 0:
            raise ValidationError(f"hidden must be positive, got {self.hidden}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValidationError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.eta_deg < 0:
            raise ValidationError(f"eta_deg must be non-negative, got {self.eta_deg}")


@dataclass
class EpochStats:
    """Per-epoch record; metrics a lambda endpoint makes meaningless are None."""

    epoch: int
    train_loss: float
    mae_deg: float | None
    acc_theta_pct: float | None
    acc_event_pct: float | None


@dataclass
class _SplitData:
    segments: list[np.ndarray]
    doa_deg: np.ndarray
    doa_codes: np.ndarray
    class_ids: np.ndarray

    def __len__(self) -> int:
        return len(self.segments)


def load_split_features(
    manifest: Manifest, features_dir, split: str, sigma_deg: float = DEFAULT_SIGMA_DEG
) -> _SplitData:
    """Read every sample's stored features and build training targets."""
    features_dir = Path(features_dir)
    rows = manifest.split(split)
    segments = []
    for row in rows:
        path = features_dir / f"{row.id}.slcf"
        if not path.is_file():
            raise IngestionError(f"missing feature file for sample {row.id}: {path}")
        segments.append(read_features(path).astype(np.float64))
    doa_deg = np.array([row.doa_deg for row in rows], dtype=np.float64)
    codes = (
        np.stack([encode_doa(row.doa_deg, sigma_deg) for row in rows])
        if rows
        else np.zeros((0, 360))
    )
    class_ids = np.array([row.class_id for row in rows], dtype=np.intp)
    return _SplitData(segments, doa_deg, codes, class_ids)


def _gather(data: _SplitData, idx: np.ndarray):
    """Minibatch view; single-segment samples collapse to one stacked matrix."""
    mats = [data.segments[i] for i in idx]
    if all(m.shape[0] == 1 for m in mats):
        batch = np.concatenate(mats, axis=0)
    else:
        batch = mats
    return batch, data.doa_codes[idx], data.class_ids[idx]


def _score_split(model: SLCNet, data: _SplitData, lam: float, eta_deg: float):
    """Test-split metrics after an epoch; respects the lambda endpoints."""
    if len(data) == 0:
        return None, None, None
    pred_doa = np.empty(len(data))
    pred_cls = np.empty(len(data), dtype=np.intp)
    chunk = 512
    for start in range(0, len(data), chunk):
        mats = data.segments[start : start + chunk]
        if all(m.shape[0] == 1 for m in mats):
            batch = np.concatenate(mats, axis=0)
        else:
            batch = mats
        doa_post, class_probs = model.forward(batch, train=False)
        for j in range(doa_post.shape[0]):
            pred_doa[start + j] = decode_doa(doa_post[j])
        pred_cls[start : start + doa_post.shape[0]] = class_probs.argmax(axis=1)
    mae_deg = acc_t = acc_e = None
    if lam > 0.0:
        mae_deg = mae(data.doa_deg, pred_doa)
        acc_t = acc_theta(data.doa_deg, pred_doa, eta_deg)
    if lam < 1.0:
        acc_e = acc_event(data.class_ids, pred_cls)
    return mae_deg, acc_t, acc_e


def train(
    manifest: Manifest,
    features_dir,
    config: TrainConfig,
    progress: Callable[[EpochStats], None] | None = None,
) -> tuple[SLCNet, list[EpochStats]]:
    """Train on the manifest's train split; returns the model and epoch log."""
    config.validate()
    train_data = load_split_features(manifest, features_dir, "train", config.sigma_deg)
    if len(train_data) == 0:
        raise ValidationError("train split has no samples")
    test_data = load_split_features(manifest, features_dir, "test", config.sigma_deg)

    dims = {m.shape[1] for m in train_data.segments}
    if len(dims) != 1:
        raise ValidationError(f"inconsistent feature dims across samples: {sorted(dims)}")
    (input_dim,) = dims
    if input_dim != FUSED_DIM:
        raise ValidationError(f"expected {FUSED_DIM}-dim fused features, got {input_dim}")

    num_classes = int(train_data.class_ids.max()) + 1
    if len(test_data):
        num_classes = max(num_classes, int(test_data.class_ids.max()) + 1)

    model = SLCNet(
        input_dim=input_dim,
        hidden=config.hidden,
        num_classes=num_classes,
        dropout=config.dropout,
        seed=config.seed,
    )
    adam = AdamState()
    n = len(train_data)
    stats: list[EpochStats] = []
    for epoch in range(1, config.epochs + 1):
        rng = np.random.default_rng([config.seed, epoch])
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            batch, codes, cls = _gather(train_data, idx)
            loss, grads = model.backward_batch(batch, codes, cls, config.lam, rng=rng)
            adam.step(model.params, grads, config.learning_rate)
            losses.append(loss)
        mae_deg, acc_t, acc_e = _score_split(model, test_data, config.lam, config.eta_deg)
        record = EpochStats(epoch, float(np.mean(losses)), mae_deg, acc_t, acc_e)
        stats.append(record)
        if progress is not None:
            progress(record)
    return model, stats


def write_metrics_log(path, stats: list[EpochStats]) -> None:
    """CSV epoch log; inapplicable or unavailable metrics appear as NA."""

    def cell(value) -> str:
        return "NA" if value is None else repr(float(value))

    lines = [METRICS_LOG_HEADER]
    for s in stats:
        lines.append(
            f"{s.epoch},{cell(s.train_loss)},{cell(s.mae_deg)},"
            f"{cell(s.acc_theta_pct)},{cell(s.acc_event_pct)}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
