"""Free-field simulation of the 4-mic recording geometry.

A mono source at azimuth theta and fixed distance is propagated to each
microphone with its exact fractional delay (frequency-domain phase shift)
and 1/distance attenuation. Ten parameterized waveform families stand in
for the corpus sound classes so the classifier has a learnable task, and
SNR-controlled noise mixing supports robustness experiments.

Azimuths follow the math convention: theta degrees counterclockwise from
the +x axis, with the array centered at the origin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .audio_io import AudioClip, write_wav
from .dataset import (
    CLASS_IDS,
    CLASS_NAMES,
    DEFAULT_SPLIT_RATIOS,
    Manifest,
    ManifestRow,
    assign_splits,
    write_manifest,
)
from .errors import DegenerateInputError, GeometryError, ValidationError

SPEED_OF_SOUND_MPS = 343.0
DEFAULT_SQUARE_SIDE_M = 0.064
DEFAULT_DISTANCE_M = 1.5
DEFAULT_LAG_BUDGET = 25

SOURCE_RMS = 0.1
PEAK_CEILING = 0.5


@dataclass
class ArrayGeometry:
    """Planar positions of the 4 microphones plus the propagation speed."""

    mic_positions: np.ndarray
    speed_of_sound_mps: float = SPEED_OF_SOUND_MPS

    def __post_init__(self):
        self.mic_positions = np.asarray(self.mic_positions, dtype=np.float64)
        if self.mic_positions.shape != (4, 2):
            raise ValidationError(
                f"expected 4 (x, y) mic positions, got shape {self.mic_positions.shape}"
            )
        if self.speed_of_sound_mps <= 0:
            raise ValidationError("speed_of_sound_mps must be positive")

    @classmethod
    def square(cls, side_m: float = DEFAULT_SQUARE_SIDE_M, speed_of_sound_mps: float = SPEED_OF_SOUND_MPS):
        h = side_m / 2.0
        corners = [(h, h), (-h, h), (-h, -h), (h, -h)]
        return cls(mic_positions=np.array(corners), speed_of_sound_mps=speed_of_sound_mps)

    @property
    def aperture_m(self) -> float:
        diffs = self.mic_positions[:, None, :] - self.mic_positions[None, :, :]
        return float(np.sqrt((diffs**2).sum(-1)).max())

    def max_tdoa_samples(self, sample_rate_hz: int) -> float:
        return self.aperture_m * sample_rate_hz / self.speed_of_sound_mps

    def check_lag_budget(self, sample_rate_hz: int, lag_budget: int = DEFAULT_LAG_BUDGET):
        worst = self.max_tdoa_samples(sample_rate_hz)
        if worst > lag_budget:
            raise GeometryError(
                f"array aperture implies TDOAs up to {worst:.2f} samples, "
                f"beyond the correlator lag range of {lag_budget}"
            )


@dataclass
class SourcePlacement:
    """Source azimuth (integer degrees, 1..360) and distance from the array center."""

    azimuth_deg: int
    distance_m: float = DEFAULT_DISTANCE_M

    def __post_init__(self):
        if not 1 <= int(self.azimuth_deg) <= 360 or int(self.azimuth_deg) != self.azimuth_deg:
            raise ValidationError(f"azimuth_deg must be an integer in [1, 360], got {self.azimuth_deg}")
        if self.distance_m <= 0:
            raise ValidationError("distance_m must be positive")

    def position(self) -> np.ndarray:
        rad = math.radians(float(self.azimuth_deg))
        return self.distance_m * np.array([math.cos(rad), math.sin(rad)])


def mic_distances(placement: SourcePlacement, geometry: ArrayGeometry) -> np.ndarray:
    """Source-to-microphone distance for each of the 4 channels, in meters."""
    deltas = geometry.mic_positions - placement.position()[None, :]
    return np.sqrt((deltas**2).sum(axis=1))


def pair_tdoa_samples(placement, geometry, sample_rate_hz: int, pair: tuple[int, int]) -> float:
    """Exact fractional TDOA (second mic minus first) in samples."""
    d = mic_distances(placement, geometry)
    a, b = pair
    return (d[b] - d[a]) * sample_rate_hz / geometry.speed_of_sound_mps


def propagate(
    source: np.ndarray,
    placement: SourcePlacement,
    geometry: ArrayGeometry,
    sample_rate_hz: int,
    lag_budget: int = DEFAULT_LAG_BUDGET,
) -> AudioClip:
    """Delay-and-attenuate a mono source onto the 4 channels.

    Channel m is the source delayed by dist_m / c seconds (exact fractional
    delay via FFT phase rotation) and scaled by 1 / dist_m. Output length
    equals the input length; energy arriving past the capture window is lost.
    """
    source = np.asarray(source, dtype=np.float64)
    if source.ndim != 1 or source.size == 0:
        raise ValidationError("source must be a non-empty 1-D signal")
    geometry.check_lag_budget(sample_rate_hz, lag_budget)

    dists = mic_distances(placement, geometry)
    delays = dists * sample_rate_hz / geometry.speed_of_sound_mps
    n = source.size
    needed = n + int(math.ceil(delays.max())) + 1
    fft_len = 1 << (needed - 1).bit_length()
    spectrum = np.fft.rfft(source, n=fft_len)
    k = np.arange(spectrum.size)
    channels = np.empty((4, n))
    for m in range(4):
        phase = np.exp(-2j * np.pi * k * delays[m] / fft_len)
        channels[m] = np.fft.irfft(spectrum * phase, n=fft_len)[:n] / dists[m]
    return AudioClip(samples=channels, sample_rate_hz=sample_rate_hz)


def mix_noise(clean: AudioClip, noise: AudioClip, snr_db: float) -> AudioClip:
    """Add noise scaled so the clean-to-noise total-energy ratio is snr_db."""
    if clean.num_channels != noise.num_channels:
        raise ValidationError("clean and noise must have the same channel count")
    if clean.sample_rate_hz != noise.sample_rate_hz:
        raise ValidationError("clean and noise must share a sample rate")
    need = clean.num_samples
    noise_mat = noise.samples
    if noise_mat.shape[1] < need:
        reps = -(-need // noise_mat.shape[1])
        noise_mat = np.tile(noise_mat, (1, reps))
    noise_mat = noise_mat[:, :need]

    e_clean = float((clean.samples**2).sum())
    e_noise = float((noise_mat**2).sum())
    if e_clean <= 0.0:
        raise DegenerateInputError("clean signal has zero energy; SNR undefined")
    if e_noise <= 0.0:
        raise DegenerateInputError("noise signal has zero energy; cannot scale")
    scale = math.sqrt(e_clean / (e_noise * 10.0 ** (snr_db / 10.0)))
    return AudioClip(samples=clean.samples + scale * noise_mat, sample_rate_hz=clean.sample_rate_hz)


# ---------------------------------------------------------------------------
# synthetic event families
# ---------------------------------------------------------------------------


def _normalize(x: np.ndarray) -> np.ndarray:
    rms = math.sqrt(float(np.mean(x * x)))
    if rms > 0:
        x = x * (SOURCE_RMS / rms)
    peak = float(np.abs(x).max())
    if peak > PEAK_CEILING:
        x = x * (PEAK_CEILING / peak)
    return x

def _attack_noise(rng, n, fs, dur_ms=10.0, level=0.3):
    # short broadband onset transient; keeps GCC informative for tonal classes
    k = min(n, int(fs * dur_ms / 1000.0))
    out = np.zeros(n)
    out[:k] = level * rng.standard_normal(k) * np.exp(-np.arange(k) / (0.3 * k + 1))
    return out

def _tone(t, freq, phase=0.0):
    return np.sin(2 * np.pi * freq * t + phase)


def _synth_bells(rng, t, fs):
    f0 = rng.uniform(400.0, 600.0)
    partials = [(1.0, 1.0, 0.060), (2.76, 0.6, 0.045), (5.40, 0.35, 0.030)]
    x = np.zeros_like(t)
    for ratio, amp, tau in partials:
        x += amp * _tone(t, f0 * ratio, rng.uniform(0, 2 * np.pi)) * np.exp(-t / tau)
    return x + _attack_noise(rng, t.size, fs, 6.0, 0.5)

def _synth_bottles(rng, t, fs):
    f0 = rng.uniform(180.0, 280.0)
    body = _tone(t, f0, rng.uniform(0, 2 * np.pi)) * np.exp(-t / rng.uniform(0.06, 0.10))
    breath = 0.25 * rng.standard_normal(t.size) * np.exp(-t / 0.05)
    return body + breath

def _synth_buzzer(rng, t, fs):
    f0 = rng.uniform(380.0, 460.0)
    x = np.zeros_like(t)
    for k in (1, 3, 5, 7):
        x += _tone(t, k * f0, rng.uniform(0, 2 * np.pi)) / k
    rattle = 1.0 + 0.3 * _tone(t, rng.uniform(90.0, 110.0))
    return x * rattle + _attack_noise(rng, t.size, fs, 4.0, 0.2)

def _synth_cymbals(rng, t, fs):
    noise = rng.standard_normal(t.size)
    bright = np.diff(noise, prepend=noise[0])  # first difference boosts highs
    return bright * np.exp(-t / rng.uniform(0.10, 0.16))

def _synth_horn(rng, t, fs):
    f0 = rng.uniform(300.0, 400.0)
    vibrato = 1.0 + 0.01 * _tone(t, 5.0)
    x = np.zeros_like(t)
    for k in range(1, 7):
        x += _tone(t * vibrato, k * f0, rng.uniform(0, 2 * np.pi)) / k
    ramp = np.clip(t / 0.02, 0.0, 1.0)
    return x * ramp + _attack_noise(rng, t.size, fs, 8.0, 0.15)

def _synth_metal(rng, t, fs):
    f0 = rng.uniform(1800.0, 2600.0)
    x = np.zeros_like(t)
    for ratio, amp in ((1.0, 1.0), (1.63, 0.7), (2.39, 0.5)):
        x += amp * _tone(t, f0 * ratio, rng.uniform(0, 2 * np.pi))
    return x * np.exp(-t / rng.uniform(0.020, 0.040)) + _attack_noise(rng, t.size, fs, 3.0, 0.6)

def _synth_particle(rng, t, fs):
    x = np.zeros(t.size)
    for _ in range(rng.integers(20, 40)):
        start = rng.integers(0, max(1, t.size - 150))
        width = rng.integers(40, 150)
        x[start : start + width] += rng.uniform(0.3, 1.0) * rng.standard_normal(
            min(width, t.size - start)
        )
    return x

def _synth_phone(rng, t, fs):
    jit = rng.uniform(0.95, 1.05)
    x = _tone(t, 697.0 * jit, rng.uniform(0, 2 * np.pi)) + _tone(t, 1209.0 * jit, rng.uniform(0, 2 * np.pi))
    return x + _attack_noise(rng, t.size, fs, 5.0, 0.2)

def _synth_ring(rng, t, fs):
    carrier = _tone(t, rng.uniform(950.0, 1050.0), rng.uniform(0, 2 * np.pi))
    am = 1.0 + 0.8 * _tone(t, rng.uniform(18.0, 22.0))
    return carrier * am + _attack_noise(rng, t.size, fs, 5.0, 0.2)

def _synth_whistle(rng, t, fs):
    f_start = rng.uniform(1400.0, 1700.0)
    f_end = rng.uniform(2300.0, 2700.0)
    dur = t[-1] if t[-1] > 0 else 1.0
    # linear chirp: phase integral of f_start -> f_end
    phase = 2 * np.pi * (f_start * t + (f_end - f_start) * t * t / (2 * dur))
    x = np.sin(phase + rng.uniform(0, 2 * np.pi))
    ramp = np.clip(t / 0.015, 0.0, 1.0) * np.clip((dur - t) / 0.015, 0.0, 1.0)
    return x * ramp + _attack_noise(rng, t.size, fs, 6.0, 0.15)


_SYNTHESIZERS = {
    "bells": _synth_bells,
    "bottles": _synth_bottles,
    "buzzer": _synth_buzzer,
    "cymbals": _synth_cymbals,
    "horn": _synth_horn,
    "metal": _synth_metal,
    "particle": _synth_particle,
    "phone": _synth_phone,
    "ring": _synth_ring,
    "whistle": _synth_whistle,
}


def synth_event(class_name: str, rng: np.random.Generator, num_samples: int, sample_rate_hz: int) -> np.ndarray:
    """One seeded mono exemplar of a synthetic event class, RMS-normalized."""
    if class_name not in _SYNTHESIZERS:
        raise ValidationError(f"no synthesizer for class {class_name!r}")
    t = np.arange(num_samples) / sample_rate_hz
    return _normalize(_SYNTHESIZERS[class_name](rng, t, sample_rate_hz))


# ---------------------------------------------------------------------------
# dataset synthesis
# ---------------------------------------------------------------------------


@dataclass
class SimConfig:
    """Parameters of a synthetic corpus emulating the recorded layout."""

    class_names: tuple[str, ...] = CLASS_NAMES
    samples_per_class: int = 20
    doa_start: int = 1
    doa_step: int = 5
    doa_count: int = 72
    snr_db: float | None = None
    seed: int = 0
    geometry: ArrayGeometry = field(default_factory=ArrayGeometry.square)
    distance_m: float = DEFAULT_DISTANCE_M
    sample_rate_hz: int = 48000
    clip_ms: float = 170.0
    split_ratios: tuple[float, float, float] = DEFAULT_SPLIT_RATIOS

    def __post_init__(self):
        if not self.class_names:
            raise ValidationError("class list is empty")
        unknown = [c for c in self.class_names if c not in CLASS_IDS]
        if unknown:
            raise ValidationError(f"unknown class name(s): {unknown}")
        if self.samples_per_class <= 0 or self.doa_count <= 0 or self.doa_step <= 0:
            raise ValidationError("samples_per_class, doa_count, doa_step must be positive")
        if self.clip_ms <= 0 or self.sample_rate_hz <= 0:
            raise ValidationError("clip_ms and sample_rate_hz must be positive")

    def doa_grid(self) -> list[int]:
        return [((self.doa_start + k * self.doa_step - 1) % 360) + 1 for k in range(self.doa_count)]


def synthesize_dataset(config: SimConfig, out_dir) -> Manifest:
    """Generate per-sample 4-channel WAVs plus a manifest; deterministic per seed."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    config.geometry.check_lag_budget(config.sample_rate_hz)

    clip_len = int(round(config.clip_ms * config.sample_rate_hz / 1000.0))
    rows = []
    for class_name in config.class_names:
        class_id = CLASS_IDS[class_name]
        for doa in config.doa_grid():
            sub = out_dir / f"doa_{doa:03d}"
            sub.mkdir(exist_ok=True)
            placement = SourcePlacement(azimuth_deg=doa, distance_m=config.distance_m)
            for k in range(config.samples_per_class):
                rng = np.random.default_rng([config.seed, class_id, doa, k])
                source = synth_event(class_name, rng, clip_len, config.sample_rate_hz)
                clip = propagate(source, placement, config.geometry, config.sample_rate_hz)
                noise_class = None
                if config.snr_db is not None:
                    noise = AudioClip(
                        samples=rng.standard_normal((4, clip_len)),
                        sample_rate_hz=config.sample_rate_hz,
                    )
                    clip = mix_noise(clip, noise, config.snr_db)
                    noise_class = "white"
                sample_id = f"{class_name}_{doa:03d}_{k:04d}"
                rel = f"doa_{doa:03d}/{sample_id}.wav"
                write_wav(clip, out_dir / rel, bit_depth="16")
                rows.append(
                    ManifestRow(
                        id=sample_id,
                        wav_path=rel,
                        class_id=class_id,
                        class_name=class_name,
                        doa_deg=doa,
                        split="train",
                        snr_db=config.snr_db,
                        noise_class=noise_class,
                    )
                )

    manifest = Manifest(rows=assign_splits(rows, config.split_ratios, config.seed), root=out_dir)
    manifest.validate_ids()
    write_manifest(manifest, out_dir / "manifest.csv")
    return manifest
