"""Multichannel WAV reading/writing plus framing and windowing primitives.

Only little-endian RIFF/WAVE PCM is handled: 16- or 32-bit integer and
32-bit IEEE float, 1 to 8 channels. Samples live in memory as float64
matrices scaled to [-1, 1] by the format's full-scale value (32768 for
16-bit, 2**31 for 32-bit int).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, UnsupportedFormatError, ValidationError

INT16_FULL_SCALE = 32768.0
INT32_FULL_SCALE = 2147483648.0
MAX_CHANNELS = 8

WINDOW_KINDS = ("rectangular", "hamming", "hann")


@dataclass
class AudioClip:
    """A [channels x num_samples] sample matrix with its sample rate."""

    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        self.samples = np.atleast_2d(np.asarray(self.samples, dtype=np.float64))
        if self.samples.ndim != 2:
            raise ValidationError("samples must be a [channels x num_samples] matrix")
        if int(self.sample_rate_hz) <= 0:
            raise ValidationError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        self.sample_rate_hz = int(self.sample_rate_hz)
        if not np.isfinite(self.samples).all():
            raise ValidationError("samples contain NaN or Inf")

    @property
    def num_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def num_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration_s(self) -> float:
        return self.num_samples / self.sample_rate_hz

    def channel_mean(self) -> np.ndarray:
        """Average across channels into a single mono signal."""
        return self.samples.mean(axis=0)


@dataclass
class FrameSpec:
    """Short-time analysis grid: frame length, hop, and window shape."""

    frame_len_samples: int
    hop_samples: int
    window: str = "rectangular"

    def __post_init__(self):
        if self.frame_len_samples <= 0 or self.hop_samples <= 0:
            raise ValidationError("frame length and hop must be positive")
        if self.hop_samples > self.frame_len_samples:
            raise ValidationError(
                f"hop ({self.hop_samples}) must not exceed frame length ({self.frame_len_samples})"
            )
        if self.window not in WINDOW_KINDS:
            raise ValidationError(f"unknown window {self.window!r}, expected one of {WINDOW_KINDS}")


def window_coefficients(kind: str, length: int) -> np.ndarray:
    if kind == "rectangular":
        return np.ones(length)
    if kind == "hamming":
        return np.hamming(length)
    if kind == "hann":
        return np.hanning(length)
    raise ValidationError(f"unknown window {kind!r}")


def _read_exact(fh, count: int, what: str) -> bytes:
    data = fh.read(count)
    if len(data) != count:
        raise FormatError(f"truncated WAV: expected {count} bytes for {what}, got {len(data)}")
    return data


def read_wav(path) -> AudioClip:
    """Read a PCM WAV file into an AudioClip normalized to [-1, 1].

    Raises FormatError for malformed files and UnsupportedFormatError for
    encodings outside 16/32-bit int and 32-bit float, or more than 8 channels.
    """
    path = Path(path)
    with open(path, "rb") as fh:
        riff = fh.read(12)
        if len(riff) < 12 or riff[:4] != b"RIFF" or riff[8:12] != b"WAVE":
            raise FormatError(f"{path}: not a RIFF/WAVE file")

        fmt = None
        data = None
        while True:
            header = fh.read(8)
            if len(header) == 0:
                break
            if len(header) < 8:
                raise FormatError(f"{path}: truncated chunk header")
            chunk_id, chunk_size = struct.unpack("<4sI", header)
            if chunk_id == b"fmt ":
                if chunk_size < 16:
                    raise FormatError(f"{path}: fmt chunk too short ({chunk_size} bytes)")
                fmt = struct.unpack("<HHIIHH", _read_exact(fh, 16, "fmt chunk"))
                if chunk_size > 16:
                    fh.seek(chunk_size - 16, 1)
            elif chunk_id == b"data":
                data = _read_exact(fh, chunk_size, "data chunk")
                if chunk_size % 2 == 1:
                    fh.seek(1, 1)
            else:
                # skip ancillary chunks (LIST, fact, ...)
                fh.seek(chunk_size + chunk_size % 2, 1)

    if fmt is None:
        raise FormatError(f"{path}: missing fmt chunk")
    if data is None:
        raise FormatError(f"{path}: missing data chunk")

    audio_format, channels, rate, _byte_rate, block_align, bits = fmt
    if channels < 1 or channels > MAX_CHANNELS:
        raise UnsupportedFormatError(f"{path}: {channels} channels (supported: 1-{MAX_CHANNELS})")
    if audio_format == 1 and bits == 16:
        dtype, scale = np.dtype("<i2"), INT16_FULL_SCALE
    elif audio_format == 1 and bits == 32:
        dtype, scale = np.dtype("<i4"), INT32_FULL_SCALE
    elif audio_format == 3 and bits == 32:
        dtype, scale = np.dtype("<f4"), 1.0
    else:
        raise UnsupportedFormatError(
            f"{path}: format tag {audio_format} with {bits} bits is not supported"
        )

    frame_size = channels * dtype.itemsize
    if block_align not in (0, frame_size):
        raise FormatError(f"{path}: block align {block_align} != {frame_size}")
    if len(data) % frame_size != 0:
        raise FormatError(f"{path}: data chunk size {len(data)} not a whole number of frames")

    interleaved = np.frombuffer(data, dtype=dtype)
    samples = interleaved.reshape(-1, channels).T.astype(np.float64) / scale
    return AudioClip(samples=samples, sample_rate_hz=rate)


def write_wav(clip: AudioClip, path, bit_depth: str = "16") -> None:
    """Write an AudioClip as 16-bit PCM ("16") or 32-bit float ("32f") WAV."""
    if bit_depth not in ("16", "32f"):
        raise ValidationError(f"bit_depth must be '16' or '32f', got {bit_depth!r}")
    if not np.isfinite(clip.samples).all():
        raise ValidationError("clip contains non-finite samples")

    if bit_depth == "16":
        quantized = np.round(clip.samples * INT16_FULL_SCALE)
        payload = np.clip(quantized, -32768, 32767).astype("<i2")
        audio_format, bits = 1, 16
    else:
        payload = clip.samples.astype("<f4")
        audio_format, bits = 3, 32

    channels = clip.num_channels
    frame_size = channels * payload.dtype.itemsize
    raw = payload.T.reshape(-1).tobytes()

    with open(path, "wb") as fh:
        fh.write(b"RIFF")
        fh.write(struct.pack("<I", 36 + len(raw)))
        fh.write(b"WAVE")
        fh.write(b"fmt ")
        fh.write(
            struct.pack(
                "<IHHIIHH",
                16,
                audio_format,
                channels,
                clip.sample_rate_hz,
                clip.sample_rate_hz * frame_size,
                frame_size,
                bits,
            )
        )
        fh.write(b"data")
        fh.write(struct.pack("<I", len(raw)))
        fh.write(raw)


def frame_signal(channel: np.ndarray, spec: FrameSpec) -> np.ndarray:
    """Slice a 1-D signal into a [num_frames x frame_len] windowed matrix.

    Frame i starts at i*hop; a trailing partial frame is dropped.
    """
    channel = np.asarray(channel, dtype=np.float64)
    if channel.ndim != 1:
        raise ValidationError("frame_signal expects a 1-D signal")
    n = channel.shape[0]
    if n < spec.frame_len_samples:
        raise ValidationError(
            f"signal of {n} samples is shorter than one frame ({spec.frame_len_samples})"
        )
    num_frames = (n - spec.frame_len_samples) // spec.hop_samples + 1
    offsets = np.arange(num_frames) * spec.hop_samples
    idx = offsets[:, None] + np.arange(spec.frame_len_samples)[None, :]
    frames = channel[idx]
    return frames * window_coefficients(spec.window, spec.frame_len_samples)[None, :]
