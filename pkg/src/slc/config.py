"""Run configuration: documented key registry, key=value files, overrides.

One flat namespace covers simulation, feature extraction, training, and
evaluation. Files hold `key = value` lines with '#' comments; command-line
overrides use the same syntax. Any key outside the registry is rejected so
typos fail loudly instead of silently using a default.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

from .coding import DEFAULT_SIGMA_DEG
from .dataset import CLASS_NAMES, DEFAULT_SPLIT_RATIOS, EndpointSpec
from .errors import ConfigError
from .features import GccSpec, MfccSpec
from .simulate import (
    DEFAULT_DISTANCE_M,
    DEFAULT_SQUARE_SIDE_M,
    SPEED_OF_SOUND_MPS,
    ArrayGeometry,
    SimConfig,
)
from .training import TrainConfig


@dataclass
class RunConfig:
    """Every tunable in the pipeline, with its default."""

    # simulation
    classes: tuple[str, ...] = tuple(CLASS_NAMES)
    samples_per_class: int = 20
    doa_start: int = 1
    doa_step: int = 5
    doa_count: int = 72
    snr_db: float | None = None
    seed: int = 0
    geometry_side_m: float = DEFAULT_SQUARE_SIDE_M
    distance_m: float = DEFAULT_DISTANCE_M
    speed_of_sound_mps: float = SPEED_OF_SOUND_MPS
    sample_rate_hz: int = 48000
    clip_ms: float = 170.0
    train_ratio: float = DEFAULT_SPLIT_RATIOS[0]
    val_ratio: float = DEFAULT_SPLIT_RATIOS[1]
    test_ratio: float = DEFAULT_SPLIT_RATIOS[2]
    # features
    segment_ms: float = 170.0
    segment_hop_ms: float = 85.0
    lag_max: int = 25
    frame_ms: float = 20.0
    frame_overlap: float = 0.5
    num_ceps: int = 13
    num_mel_filters: int = 26
    preemphasis: float = 0.97
    frames_per_segment: int = 8
    # endpointing
    energy_win_ms: float = 10.0
    threshold_ratio: float = 4.0
    min_event_ms: float = 50.0
    hangover_ms: float = 30.0
    # training / evaluation
    epochs: int = 50
    batch_size: int = 32
    learning_rate: float = 0.001
    lam: float = 0.99
    sigma_deg: float = DEFAULT_SIGMA_DEG
    hidden: int = 512
    dropout: float = 0.2
    eta_deg: float = 5.0

    # ------------------------------------------------------------------
    # views onto module-level config objects
    # ------------------------------------------------------------------

    def sim_config(self) -> SimConfig:
        geometry = ArrayGeometry.square(self.geometry_side_m, self.speed_of_sound_mps)
        return SimConfig(
            class_names=tuple(self.classes),
            samples_per_class=self.samples_per_class,
            doa_start=self.doa_start,
            doa_step=self.doa_step,
            doa_count=self.doa_count,
            snr_db=self.snr_db,
            seed=self.seed,
            geometry=geometry,
            distance_m=self.distance_m,
            sample_rate_hz=self.sample_rate_hz,
            clip_ms=self.clip_ms,
            split_ratios=(self.train_ratio, self.val_ratio, self.test_ratio),
        )

    def gcc_spec(self) -> GccSpec:
        return GccSpec(segment_len_ms=self.segment_ms, lag_max=self.lag_max)

    def mfcc_spec(self) -> MfccSpec:
        return MfccSpec(
            frame_ms=self.frame_ms,
            overlap=self.frame_overlap,
            num_ceps=self.num_ceps,
            num_mel_filters=self.num_mel_filters,
            preemphasis=self.preemphasis,
            frames_per_segment=self.frames_per_segment,
        )

    def endpoint_spec(self) -> EndpointSpec:
        return EndpointSpec(
            energy_win_ms=self.energy_win_ms,
            threshold_ratio=self.threshold_ratio,
            min_event_ms=self.min_event_ms,
            hangover_ms=self.hangover_ms,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            lam=self.lam,
            seed=self.seed,
            sigma_deg=self.sigma_deg,
            hidden=self.hidden,
            dropout=self.dropout,
            eta_deg=self.eta_deg,
        )


def _parse_optional_float(value: str) -> float | None:
    if value.lower() in ("none", "off", ""):
        return None
    return float(value)


def _parse_classes(value: str) -> tuple[str, ...]:
    names = tuple(part.strip() for part in value.split(",") if part.strip())
    if not names:
        raise ConfigError("classes must name at least one class")
    return names


_PARSERS = {
    "classes": _parse_classes,
    "snr_db": _parse_optional_float,
}

_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}

# key -> one-line description, rendered by `slc --help-config` and the README
KEY_REGISTRY: dict[str, str] = {
    "classes": "comma-separated event class names to simulate",
    "samples_per_class": "clips per (class, DoA) cell",
    "doa_start": "first DoA grid angle in degrees (1..360)",
    "doa_step": "grid spacing in degrees",
    "doa_count": "number of grid angles",
    "snr_db": "mix diffuse noise at this SNR in dB, or 'none' for clean",
    "seed": "master seed for simulation and training",
    "geometry_side_m": "side length of the square microphone array in meters",
    "distance_m": "source distance from the array center in meters",
    "speed_of_sound_mps": "propagation speed in m/s",
    "sample_rate_hz": "simulation sample rate",
    "clip_ms": "simulated clip duration in milliseconds",
    "train_ratio": "fraction of each (class, DoA) cell assigned to train",
    "val_ratio": "fraction assigned to val",
    "test_ratio": "fraction assigned to test",
    "segment_ms": "analysis segment length in milliseconds",
    "segment_hop_ms": "hop between segments in milliseconds",
    "lag_max": "maximum GCC-PHAT lag in samples (51 lags total)",
    "frame_ms": "MFCC frame length in milliseconds",
    "frame_overlap": "MFCC frame overlap fraction",
    "num_ceps": "cepstral coefficients per frame",
    "num_mel_filters": "triangular mel filters",
    "preemphasis": "pre-emphasis coefficient",
    "frames_per_segment": "MFCC frames kept per segment",
    "energy_win_ms": "endpointing energy window in milliseconds",
    "threshold_ratio": "endpointing threshold as a multiple of the noise floor",
    "min_event_ms": "shortest event kept by endpointing, milliseconds",
    "hangover_ms": "gaps shorter than this merge adjacent events, milliseconds",
    "epochs": "training epochs",
    "batch_size": "minibatch size",
    "learning_rate": "Adam learning rate",
    "lam": "multitask weight: lam*MSE + (1-lam)*CE",
    "sigma_deg": "width of the Gaussian DoA target bump in degrees",
    "hidden": "hidden layer width",
    "dropout": "dropout rate in the embedding layers",
    "eta_deg": "angular tolerance for ACC_theta in degrees",
}

assert set(KEY_REGISTRY) == set(_FIELD_TYPES), "registry must cover exactly the RunConfig fields"


def _convert(key: str, raw: str):
    if key in _PARSERS:
        return _PARSERS[key](raw)
    ftype = _FIELD_TYPES[key]
    try:
        if ftype == "int":
            return int(raw)
        if ftype == "float":
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"invalid value for {key!r}: {raw!r} ({exc})") from exc
    raise ConfigError(f"no parser for config key {key!r}")


def parse_assignment(line: str) -> tuple[str, str]:
    """Split one `key = value` assignment, stripping trailing comments."""
    body = line.split("#", 1)[0].strip()
    if "=" not in body:
        raise ConfigError(f"expected key=value, got {line.strip()!r}")
    key, _, value = body.partition("=")
    return key.strip(), value.strip()


def apply_assignments(config: RunConfig, assignments) -> RunConfig:
    """Validate keys against the registry and set the parsed values."""
    for key, raw in assignments:
        if key not in KEY_REGISTRY:
            raise ConfigError(f"unknown config key {key!r}")
        setattr(config, key, _convert(key, raw))
    return config


def load_config(path=None, overrides=()) -> RunConfig:
    """Build a RunConfig from an optional file plus key=value overrides."""
    config = RunConfig()
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        pairs = []
        for line in path.read_text(encoding="utf-8").splitlines():
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            pairs.append(parse_assignment(line))
        apply_assignments(config, pairs)
    apply_assignments(config, (parse_assignment(text) for text in overrides))
    return config


def registry_help() -> str:
    """Human-readable table of every config key, its default, and meaning."""
    defaults = RunConfig()
    lines = []
    width = max(len(k) for k in KEY_REGISTRY)
    for key in KEY_REGISTRY:
        value = getattr(defaults, key)
        if key == "classes":
            value = ",".join(value)
        lines.append(f"{key.ljust(width)}  default={value!r:<12}  {KEY_REGISTRY[key]}")
    return "\n".join(lines) + "\n"
