"""Localization and classification metrics plus split evaluation.

MAE and ACC_theta use circular angular distance (1..360 wraps), ACC_event is
plain top-1 accuracy. evaluate() runs a trained model over one manifest
split's stored features and assembles an EvalReport that serializes to JSON
deterministically and renders as an aligned text table.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .coding import circular_distance_deg, decode_doa
from .dataset import Manifest
from .errors import IngestionError, ValidationError
from .features import read_features
from .network import SLCNet

DEFAULT_ETA_DEG = 5.0
_EVAL_CHUNK = 256


def _paired(truths, preds):
    truths = np.asarray(truths, dtype=np.float64)
    preds = np.asarray(preds, dtype=np.float64)
    if truths.shape != preds.shape or truths.ndim != 1:
        raise ValidationError(f"mismatched metric inputs: {truths.shape} vs {preds.shape}")
    if truths.size == 0:
        raise ValidationError("metrics need at least one sample")
    return truths, preds


def mae(truth_deg, pred_deg) -> float:
    """Mean absolute angular error in degrees (circular)."""
    truths, preds = _paired(truth_deg, pred_deg)
    return float(np.mean(circular_distance_deg(truths, preds)))


def acc_theta(truth_deg, pred_deg, eta_deg: float = DEFAULT_ETA_DEG) -> float:
    """Percentage of predictions within eta degrees of the truth (circular)."""
    if eta_deg < 0:
        raise ValidationError(f"eta must be non-negative, got {eta_deg}")
    truths, preds = _paired(truth_deg, pred_deg)
    return float(100.0 * np.mean(circular_distance_deg(truths, preds) <= eta_deg))


def acc_event(truth_ids, pred_ids) -> float:
    """Percentage of exactly correct class predictions."""
    truths, preds = _paired(truth_ids, pred_ids)
    return float(100.0 * np.mean(truths == preds))


def confusion_matrix(truth_ids, pred_ids, num_classes: int) -> np.ndarray:
    """Counts with rows = truth class, columns = predicted class."""
    truths = np.asarray(truth_ids, dtype=np.intp)
    preds = np.asarray(pred_ids, dtype=np.intp)
    if truths.shape != preds.shape or truths.ndim != 1:
        raise ValidationError(f"mismatched metric inputs: {truths.shape} vs {preds.shape}")
    for arr, label in ((truths, "truth"), (preds, "prediction")):
        if arr.size and (arr.min() < 0 or arr.max() >= num_classes):
            raise ValidationError(f"{label} ids fall outside 0..{num_classes - 1}")
    mat = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(mat, (truths, preds), 1)
    return mat


def per_class_accuracy(confusion: np.ndarray) -> list[float | None]:
    """Diagonal / row-sum percentages; classes without samples map to None."""
    confusion = np.asarray(confusion)
    support = confusion.sum(axis=1)
    out: list[float | None] = []
    for i in range(confusion.shape[0]):
        if support[i] == 0:
            out.append(None)
        else:
            out.append(float(100.0 * confusion[i, i] / support[i]))
    return out


@dataclass
class EvalReport:
    """Aggregate metrics for one split; round-trips through JSON exactly."""

    mae_deg: float
    acc_theta_pct: float
    acc_event_pct: float
    eta_deg: float
    num_samples: int
    confusion: list[list[int]] = field(default_factory=list)
    per_class: dict[str, float | None] = field(default_factory=dict)

    def to_json(self) -> str:
        payload = {
            "mae_deg": self.mae_deg,
            "acc_theta_pct": self.acc_theta_pct,
            "acc_event_pct": self.acc_event_pct,
            "eta_deg": self.eta_deg,
            "num_samples": self.num_samples,
            "confusion": self.confusion,
            "per_class": self.per_class,
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        data = json.loads(text)
        try:
            return cls(
                mae_deg=float(data["mae_deg"]),
                acc_theta_pct=float(data["acc_theta_pct"]),
                acc_event_pct=float(data["acc_event_pct"]),
                eta_deg=float(data["eta_deg"]),
                num_samples=int(data["num_samples"]),
                confusion=[[int(v) for v in row] for row in data["confusion"]],
                per_class={
                    str(k): (None if v is None else float(v)) for k, v in data["per_class"].items()
                },
            )
        except KeyError as exc:
            raise ValidationError(f"report JSON missing field {exc}") from exc

    def render_table(self) -> str:
        """Aligned two-column summary plus a per-class accuracy block."""
        rows = [
            ("MAE (deg)", f"{self.mae_deg:.2f}"),
            (f"ACC_theta @ {self.eta_deg:g} deg (%)", f"{self.acc_theta_pct:.2f}"),
            ("ACC_event (%)", f"{self.acc_event_pct:.2f}"),
            ("samples", str(self.num_samples)),
        ]
        for name in self.per_class:
            value = self.per_class[name]
            rows.append((f"  {name}", "-" if value is None else f"{value:.2f}"))
        label_w = max(len(label) for label, _ in rows)
        value_w = max(len(value) for _, value in rows)
        lines = ["metric".ljust(label_w) + "  " + "value".rjust(value_w)]
        lines.append("-" * (label_w + 2 + value_w))
        for label, value in rows:
            lines.append(label.ljust(label_w) + "  " + value.rjust(value_w))
        return "\n".join(lines) + "\n"


def evaluate(
    model: SLCNet,
    manifest: Manifest,
    split: str,
    features_dir,
    eta_deg: float = DEFAULT_ETA_DEG,
) -> EvalReport:
    """Score one split end to end from stored per-sample feature files."""
    rows = manifest.split(split)
    if not rows:
        raise ValidationError(f"split {split!r} has no samples")
    features_dir = Path(features_dir)

    max_id = max(row.class_id for row in rows)
    if max_id >= model.num_classes:
        raise ValidationError(
            f"manifest uses class id {max_id} but the model has {model.num_classes} classes"
        )
    id_to_name: dict[int, str] = {}
    for row in rows:
        known = id_to_name.setdefault(row.class_id, row.class_name)
        if known != row.class_name:
            raise ValidationError(
                f"class id {row.class_id} maps to both {known!r} and {row.class_name!r}"
            )

    truth_doa = np.array([row.doa_deg for row in rows], dtype=np.float64)
    truth_cls = np.array([row.class_id for row in rows], dtype=np.intp)
    pred_doa = np.empty(len(rows), dtype=np.float64)
    pred_cls = np.empty(len(rows), dtype=np.intp)

    for chunk_start in range(0, len(rows), _EVAL_CHUNK):
        chunk = rows[chunk_start : chunk_start + _EVAL_CHUNK]
        batches = []
        for row in chunk:
            feat_path = features_dir / f"{row.id}.slcf"
            if not feat_path.is_file():
                raise IngestionError(f"missing feature file for sample {row.id}: {feat_path}")
            batches.append(read_features(feat_path).astype(np.float64))
        doa_post, class_probs = model.forward(batches, train=False)
        for j in range(len(chunk)):
            pred_doa[chunk_start + j] = decode_doa(doa_post[j])
        pred_cls[chunk_start : chunk_start + len(chunk)] = class_probs.argmax(axis=1)

    confusion = confusion_matrix(truth_cls, pred_cls, model.num_classes)
    per_class_vals = per_class_accuracy(confusion)
    per_class = {
        id_to_name.get(i, f"class_{i}"): per_class_vals[i] for i in range(model.num_classes)
    }
    return EvalReport(
        mae_deg=mae(truth_doa, pred_doa),
        acc_theta_pct=acc_theta(truth_doa, pred_doa, eta_deg),
        acc_event_pct=acc_event(truth_cls, pred_cls),
        eta_deg=float(eta_deg),
        num_samples=len(rows),
        confusion=confusion.tolist(),
        per_class=per_class,
    )
