"""Target encodings: Gaussian likelihood DoA vectors and one-hot event labels.

Azimuth convention: index i of a 360-dim vector corresponds to theta = i + 1
degrees, matching the 1..360 corpus grid. Angular distances are circular, so
targets near 1/360 wrap around instead of getting clipped tails.
"""

from __future__ import annotations

import numpy as np

from .errors import ValidationError

NUM_DOA = 360
DEFAULT_SIGMA_DEG = 8.0

_GRID = np.arange(1, NUM_DOA + 1, dtype=np.float64)


def circular_distance_deg(a, b):
    """Shortest angular distance |a - b| on a 360 degree circle."""
    d = np.abs(np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)) % 360.0
    return np.minimum(d, 360.0 - d)


def encode_doa(truth_deg: int, sigma_deg: float = DEFAULT_SIGMA_DEG) -> np.ndarray:
    """Gaussian likelihood code over azimuth: exp(-d(theta, truth)^2 / sigma^2).

    The returned 360-vector peaks at exactly 1.0 at the ground-truth index.
    """
    if not 1 <= int(truth_deg) <= NUM_DOA or int(truth_deg) != truth_deg:
        raise ValidationError(f"truth_deg must be an integer in [1, 360], got {truth_deg!r}")
    if sigma_deg <= 0:
        raise ValidationError(f"sigma_deg must be positive, got {sigma_deg}")
    d = circular_distance_deg(_GRID, float(truth_deg))
    return np.exp(-(d * d) / (sigma_deg * sigma_deg))


def decode_doa(posterior: np.ndarray) -> int:
    """Azimuth (degrees) of the maximal posterior element; ties pick the smallest index."""
    posterior = np.asarray(posterior, dtype=np.float64)
    if posterior.shape != (NUM_DOA,):
        raise ValidationError(f"posterior must have shape (360,), got {posterior.shape}")
    if not np.isfinite(posterior).all():
        raise ValidationError("posterior contains non-finite values")
    return int(np.argmax(posterior)) + 1


def encode_event(class_id: int, num_classes: int) -> np.ndarray:
    """One-hot vector of length num_classes with a 1 at class_id."""
    if num_classes <= 0:
        raise ValidationError(f"num_classes must be positive, got {num_classes}")
    if not 0 <= class_id < num_classes:
        raise ValidationError(f"class_id {class_id} out of range [0, {num_classes})")
    code = np.zeros(num_classes, dtype=np.float64)
    code[class_id] = 1.0
    return code
