"""Acoustic front end: GCC-PHAT per mic pair fused with MFCCs per segment.

Each 170 ms analysis segment yields a 618-dim vector: 6 pairs x 51 delay
lags of phase-transform cross-correlation (306 dims) concatenated with 8
frames x 39 MFCC+delta+delta-delta coefficients (312 dims) computed on the
channel-averaged mono signal over the identical sample span.

Lag sign convention: positive lag means the pair's second channel lags the
first. The whitened cross-spectrum is scaled by 1/fft_len so a perfectly
coherent pair peaks at exactly 1.0.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio_io import AudioClip, FrameSpec, frame_signal
from .errors import DegenerateInputError, FormatError, ValidationError

PHAT_EPS = 1e-12
LOG_FLOOR = 1e-20

# fixed pair ordering over the 4 channels: (1,2),(1,3),(1,4),(2,3),(2,4),(3,4)
MIC_PAIRS = ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))

FEATURE_MAGIC = b"SLCF"
FEATURE_VERSION = 1
FUSED_DIM = 618


@dataclass
class GccSpec:
    """Correlator settings: segment span, lag range, FFT length."""

    segment_len_ms: float = 170.0
    lag_max: int = 25
    fft_len: int | None = None  # next power of two >= segment length when None

    def __post_init__(self):
        if self.segment_len_ms <= 0 or self.lag_max <= 0:
            raise ValidationError("segment_len_ms and lag_max must be positive")

    @property
    def num_lags(self) -> int:
        return 2 * self.lag_max + 1

    def segment_len_samples(self, sample_rate_hz: int) -> int:
        return int(round(self.segment_len_ms * sample_rate_hz / 1000.0))

    def resolve_fft_len(self, segment_len: int) -> int:
        if self.fft_len is not None:
            if self.fft_len < segment_len:
                raise ValidationError(
                    f"fft_len {self.fft_len} shorter than segment ({segment_len} samples)"
                )
            return self.fft_len
        return 1 << (segment_len - 1).bit_length()


@dataclass
class MfccSpec:
    """Cepstral settings. Defaults give 13 static + delta + delta-delta = 39 per frame."""

    frame_ms: float = 20.0
    overlap: float = 0.5
    num_ceps: int = 13
    num_mel_filters: int = 26
    preemphasis: float = 0.97
    frames_per_segment: int = 8
    delta_radius: int = 2

    def __post_init__(self):
        if not 0 <= self.overlap < 1:
            raise ValidationError(f"overlap must be in [0, 1), got {self.overlap}")
        if self.num_ceps <= 0 or self.num_mel_filters < self.num_ceps:
            raise ValidationError("need num_mel_filters >= num_ceps > 0")
        if self.frames_per_segment <= 0:
            raise ValidationError("frames_per_segment must be positive")

    @property
    def dims_per_frame(self) -> int:
        return 3 * self.num_ceps

    @property
    def segment_dim(self) -> int:
        return self.frames_per_segment * self.dims_per_frame

    def frame_spec(self, sample_rate_hz: int) -> FrameSpec:
        frame_len = int(round(self.frame_ms * sample_rate_hz / 1000.0))
        hop = int(round(frame_len * (1.0 - self.overlap)))
        return FrameSpec(frame_len_samples=frame_len, hop_samples=hop, window="rectangular")


@dataclass
class SegmentFeatures:
    """Per-segment feature triple; fused is always gcc ++ mfcc."""

    gcc: np.ndarray
    mfcc: np.ndarray
    fused: np.ndarray = field(init=False)

    def __post_init__(self):
        self.gcc = np.asarray(self.gcc, dtype=np.float64)
        self.mfcc = np.asarray(self.mfcc, dtype=np.float64)
        self.fused = np.concatenate([self.gcc, self.mfcc])
        if not np.isfinite(self.fused).all():
            raise ValidationError("segment features contain non-finite values")


def phat_whiten(cross_spectrum: np.ndarray, eps: float = PHAT_EPS) -> np.ndarray:
    """Normalize each cross-spectrum bin to unit magnitude; near-silent bins go to zero."""
    mag = np.abs(cross_spectrum)
    out = np.zeros_like(cross_spectrum)
    keep = mag >= eps
    out[keep] = cross_spectrum[keep] / mag[keep]
    return out


def _gcc_from_spectra(spec_a: np.ndarray, spec_b: np.ndarray, fft_len: int, lag_max: int) -> np.ndarray:
    # cross-spectrum of (b, a) so that a positive lag marks channel b lagging a
    whitened = phat_whiten(spec_b * np.conj(spec_a))
    cc = np.fft.irfft(whitened, n=fft_len)
    return np.concatenate([cc[-lag_max:], cc[: lag_max + 1]])


def gcc_phat(ch_a: np.ndarray, ch_b: np.ndarray, spec: GccSpec | None = None) -> np.ndarray:
    """Phase-transform cross-correlation of two channels over lags [-lag_max, lag_max].

    Element j corresponds to lag j - lag_max; values lie in [-1, 1] and a
    coherent pair peaks at 1.0 at its delay.
    """
    spec = spec or GccSpec()
    ch_a = np.asarray(ch_a, dtype=np.float64)
    ch_b = np.asarray(ch_b, dtype=np.float64)
    if ch_a.shape != ch_b.shape or ch_a.ndim != 1 or ch_a.shape[0] < 2:
        raise ValidationError("gcc_phat expects two equal-length 1-D signals of >= 2 samples")
    if not ch_a.any() and not ch_b.any():
        raise DegenerateInputError("gcc_phat inputs are both all-zero")
    fft_len = spec.resolve_fft_len(ch_a.shape[0])
    spec_a = np.fft.rfft(ch_a, n=fft_len)
    spec_b = np.fft.rfft(ch_b, n=fft_len)
    return _gcc_from_spectra(spec_a, spec_b, fft_len, spec.lag_max)


def mel_from_hz(hz):
    return 2595.0 * np.log10(1.0 + np.asarray(hz, dtype=np.float64) / 700.0)


def hz_from_mel(mel):
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(num_filters: int, fft_len: int, sample_rate_hz: int) -> np.ndarray:
    """Triangular mel filters from 0 Hz to Nyquist, [num_filters x fft_len//2+1]."""
    max_mel = mel_from_hz(sample_rate_hz / 2.0)
    mel_points = np.linspace(0.0, max_mel, num_filters + 2)
    bins = np.floor((fft_len + 1) * hz_from_mel(mel_points) / sample_rate_hz).astype(int)
    bank = np.zeros((num_filters, fft_len // 2 + 1))
    for j in range(num_filters):
        left, center, right = bins[j], bins[j + 1], bins[j + 2]
        for i in range(left, center):
            bank[j, i] = (i - left) / max(center - left, 1)
        for i in range(center, right):
            bank[j, i] = (right - i) / max(right - center, 1)
    return bank


def mel_filter_centers_hz(num_filters: int, sample_rate_hz: int) -> np.ndarray:
    max_mel = mel_from_hz(sample_rate_hz / 2.0)
    return hz_from_mel(np.linspace(0.0, max_mel, num_filters + 2)[1:-1])


def _dct_matrix(num_ceps: int, num_filters: int) -> np.ndarray:
    # orthonormal DCT-II, rows = cepstral index
    n = np.arange(num_filters)
    k = np.arange(num_ceps)[:, None]
    mat = np.sqrt(2.0 / num_filters) * np.cos(np.pi * k * (2 * n + 1) / (2.0 * num_filters))
    mat[0] /= np.sqrt(2.0)
    return mat


def delta_regression(track: np.ndarray, radius: int = 2) -> np.ndarray:
    """Temporal regression slope over +-radius frames with edge replication."""
    if track.ndim != 2:
        raise ValidationError("delta_regression expects [frames x coefficients]")
    padded = np.pad(track, ((radius, radius), (0, 0)), mode="edge")
    denom = 2.0 * sum(n * n for n in range(1, radius + 1))
    out = np.zeros_like(track)
    for n in range(1, radius + 1):
        out += n * (padded[radius + n : radius + n + track.shape[0]] - padded[radius - n : radius - n + track.shape[0]])
    return out / denom


def mfcc_frames(mono: np.ndarray, sample_rate_hz: int, spec: MfccSpec) -> np.ndarray:
    """Static 13-dim cepstra for every full frame, [num_frames x num_ceps]."""
    frames = frame_signal(mono, spec.frame_spec(sample_rate_hz))
    # per-frame pre-emphasis keeps frames independent of each other
    emphasized = np.empty_like(frames)
    emphasized[:, 0] = frames[:, 0]
    emphasized[:, 1:] = frames[:, 1:] - spec.preemphasis * frames[:, :-1]
    frame_len = frames.shape[1]
    fft_len = 1 << (frame_len - 1).bit_length()
    windowed = emphasized * np.hamming(frame_len)[None, :]
    power = np.abs(np.fft.rfft(windowed, n=fft_len, axis=1)) ** 2 / fft_len
    bank = mel_filterbank(spec.num_mel_filters, fft_len, sample_rate_hz)
    energies = np.log(np.maximum(power @ bank.T, LOG_FLOOR))
    return energies @ _dct_matrix(spec.num_ceps, spec.num_mel_filters).T


def mfcc_segment(mono: np.ndarray, sample_rate_hz: int, spec: MfccSpec | None = None) -> np.ndarray:
    """312-dim MFCC block for one segment: 8 selected frames x (13 + delta + delta-delta).

    Deltas are regressed over the full frame track before frame selection;
    frames are picked at a uniform stride from index 0 so a 170 ms segment
    (16 overlapping 20 ms frames) uses frames 0, 2, ..., 14.
    """
    spec = spec or MfccSpec()
    mono = np.asarray(mono, dtype=np.float64)
    static = mfcc_frames(mono, sample_rate_hz, spec)
    num_frames = static.shape[0]
    if num_frames < spec.frames_per_segment:
        raise ValidationError(
            f"segment yields {num_frames} frames, need {spec.frames_per_segment}"
        )
    d1 = delta_regression(static, spec.delta_radius)
    d2 = delta_regression(d1, spec.delta_radius)
    full = np.hstack([static, d1, d2])
    stride = max(1, num_frames // spec.frames_per_segment)
    selected = full[np.arange(spec.frames_per_segment) * stride]
    return selected.reshape(-1)


def extract_segments(
    clip: AudioClip,
    gcc_spec: GccSpec | None = None,
    mfcc_spec: MfccSpec | None = None,
    segment_hop_ms: float = 85.0,
) -> list[SegmentFeatures]:
    """Fused 618-dim features for every 170 ms window of a 4-channel clip.

    Clips shorter than one segment are zero-padded so isolated short events
    still produce a single feature vector.
    """
    gcc_spec = gcc_spec or GccSpec()
    mfcc_spec = mfcc_spec or MfccSpec()
    if clip.num_channels != 4:
        raise ValidationError(f"expected a 4-channel clip, got {clip.num_channels} channels")
    if segment_hop_ms <= 0:
        raise ValidationError("segment_hop_ms must be positive")

    seg_len = gcc_spec.segment_len_samples(clip.sample_rate_hz)
    hop = int(round(segment_hop_ms * clip.sample_rate_hz / 1000.0))
    samples = clip.samples
    if samples.shape[1] < seg_len:
        samples = np.pad(samples, ((0, 0), (0, seg_len - samples.shape[1])))
    num_segments = (samples.shape[1] - seg_len) // hop + 1
    fft_len = gcc_spec.resolve_fft_len(seg_len)

    out = []
    for s in range(num_segments):
        start = s * hop
        window = samples[:, start : start + seg_len]
        spectra = np.fft.rfft(window, n=fft_len, axis=1)
        gcc = np.concatenate(
            [_gcc_from_spectra(spectra[a], spectra[b], fft_len, gcc_spec.lag_max) for a, b in MIC_PAIRS]
        )
        mfcc = mfcc_segment(window.mean(axis=0), clip.sample_rate_hz, mfcc_spec)
        out.append(SegmentFeatures(gcc=gcc, mfcc=mfcc))
    return out


def write_features(path, segments: np.ndarray) -> None:
    """Write a [num_segments x dim] float matrix in the binary feature format."""
    matrix = np.ascontiguousarray(np.asarray(segments, dtype=np.float32))
    if matrix.ndim != 2:
        raise ValidationError("feature matrix must be 2-D")
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<III", FEATURE_VERSION, matrix.shape[0], matrix.shape[1]))
        fh.write(matrix.astype("<f4").tobytes())


def read_features(path) -> np.ndarray:
    """Read a feature file back into a [num_segments x dim] float32 matrix."""
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(16)
        if len(head) < 16 or head[:4] != FEATURE_MAGIC:
            raise FormatError(f"{path}: not a feature file")
        version, num_segments, dim = struct.unpack("<III", head[4:16])
        if version != FEATURE_VERSION:
            raise FormatError(f"{path}: unsupported feature version {version}")
        payload = fh.read()
    expected = num_segments * dim * 4
    if len(payload) != expected:
        raise FormatError(f"{path}: payload is {len(payload)} bytes, header implies {expected}")
    return np.frombuffer(payload, dtype="<f4").reshape(num_segments, dim).copy()
