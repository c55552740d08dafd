"""Manifests, corpus ingestion, and energy-based event endpointing.

A manifest is a CSV (UTF-8, LF) with header
    id,wav_path,class_id,class_name,doa_deg,split,snr_db,noise_class
whose wav paths are relative to the manifest's own directory so a corpus
tree can be relocated wholesale.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .audio_io import AudioClip
from .errors import FormatError, IngestionError, ValidationError

CLASS_NAMES = (
    "bells",
    "bottles",
    "buzzer",
    "cymbals",
    "horn",
    "metal",
    "particle",
    "phone",
    "ring",
    "whistle",
)
CLASS_IDS = {name: i for i, name in enumerate(CLASS_NAMES)}

SPLITS = ("train", "val", "test")
MANIFEST_HEADER = ["id", "wav_path", "class_id", "class_name", "doa_deg", "split", "snr_db", "noise_class"]

DEFAULT_SPLIT_RATIOS = (0.8, 0.1, 0.1)

# windows quieter than this mean-square level count as digital silence
SILENCE_FLOOR = 1e-9


@dataclass(frozen=True)
class ManifestRow:
    id: str
    wav_path: str
    class_id: int
    class_name: str
    doa_deg: int
    split: str
    snr_db: float | None = None
    noise_class: str | None = None

    def __post_init__(self):
        if self.class_name not in CLASS_IDS:
            raise ValidationError(f"unknown class_name {self.class_name!r}")
        if CLASS_IDS[self.class_name] != self.class_id:
            raise ValidationError(
                f"class_id {self.class_id} does not match {self.class_name!r} "
                f"(expected {CLASS_IDS[self.class_name]})"
            )
        if not 1 <= self.doa_deg <= 360:
            raise ValidationError(f"doa_deg must be in [1, 360], got {self.doa_deg}")
        if self.split not in SPLITS:
            raise ValidationError(f"split must be one of {SPLITS}, got {self.split!r}")


@dataclass
class Manifest:
    rows: list[ManifestRow]
    root: Path
    schema_version: int = 1

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def split(self, name: str) -> list[ManifestRow]:
        if name not in SPLITS:
            raise ValidationError(f"unknown split {name!r}")
        return [r for r in self.rows if r.split == name]

    def wav_path(self, row: ManifestRow) -> Path:
        return self.root / row.wav_path

    def validate_ids(self):
        seen = set()
        for row in self.rows:
            if row.id in seen:
                raise ValidationError(f"duplicate sample id {row.id!r}")
            seen.add(row.id)


@dataclass
class EndpointSpec:
    """Energy endpointer settings (window, threshold multiple, duration filters)."""

    energy_win_ms: float = 10.0
    threshold_ratio: float = 4.0
    min_event_ms: float = 50.0
    hangover_ms: float = 30.0

    def __post_init__(self):
        for name in ("energy_win_ms", "threshold_ratio", "min_event_ms", "hangover_ms"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be positive")


def assign_splits(
    rows: list[ManifestRow],
    ratios: tuple[float, float, float] = DEFAULT_SPLIT_RATIOS,
    seed: int = 0,
) -> list[ManifestRow]:
    """Stratified train/val/test assignment within each (class, DoA) stratum.

    Deterministic for a given seed regardless of row order; proportions are
    met within one sample per stratum.
    """
    if abs(sum(ratios) - 1.0) > 1e-9 or any(r < 0 for r in ratios):
        raise ValidationError(f"split ratios must be non-negative and sum to 1, got {ratios}")
    strata: dict[tuple[int, int], list[ManifestRow]] = {}
    for row in rows:
        strata.setdefault((row.class_id, row.doa_deg), []).append(row)

    out = []
    for (class_id, doa), members in strata.items():
        members = sorted(members, key=lambda r: r.id)
        rng = np.random.default_rng([seed, class_id, doa])
        order = rng.permutation(len(members))
        n = len(members)
        n_train = int(round(n * ratios[0]))
        n_val = int(round(n * ratios[1]))
        n_train = min(n_train, n)
        n_val = min(n_val, n - n_train)
        for pos, idx in enumerate(order):
            split = "train" if pos < n_train else ("val" if pos < n_train + n_val else "test")
            out.append(replace(members[idx], split=split))
    return sorted(out, key=lambda r: r.id)


def write_manifest(manifest: Manifest, path) -> None:
    path = Path(path)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(MANIFEST_HEADER)
    for row in manifest.rows:
        writer.writerow(
            [
                row.id,
                row.wav_path,
                row.class_id,
                row.class_name,
                row.doa_deg,
                row.split,
                "" if row.snr_db is None else repr(float(row.snr_db)),
                "" if row.noise_class is None else row.noise_class,
            ]
        )
    path.write_text(buf.getvalue(), encoding="utf-8", newline="")


def read_manifest(path, check_paths: bool = True) -> Manifest:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise IngestionError(f"cannot read manifest {path}: {exc}") from exc
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise FormatError(f"{path}: empty manifest") from None
    if header != MANIFEST_HEADER:
        missing = [c for c in MANIFEST_HEADER if c not in header]
        extra = [c for c in header if c not in MANIFEST_HEADER]
        detail = f"missing column(s) {missing}" if missing else f"unexpected column(s) {extra}"
        raise FormatError(f"{path}: bad manifest header: {detail}")

    rows = []
    for lineno, rec in enumerate(reader, start=2):
        if not rec:
            continue
        if len(rec) != len(MANIFEST_HEADER):
            raise FormatError(f"{path}:{lineno}: expected {len(MANIFEST_HEADER)} fields, got {len(rec)}")
        try:
            rows.append(
                ManifestRow(
                    id=rec[0],
                    wav_path=rec[1],
                    class_id=int(rec[2]),
                    class_name=rec[3],
                    doa_deg=int(rec[4]),
                    split=rec[5],
                    snr_db=float(rec[6]) if rec[6] else None,
                    noise_class=rec[7] or None,
                )
            )
        except (ValueError, ValidationError) as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from exc

    manifest = Manifest(rows=rows, root=path.parent)
    manifest.validate_ids()
    if check_paths:
        missing = [r.id for r in rows if not manifest.wav_path(r).exists()]
        if missing:
            raise IngestionError(
                f"{path}: {len(missing)} wav file(s) missing, first: {missing[:5]}"
            )
    return manifest


def _parse_doa_dirname(name: str) -> int | None:
    digits = "".join(ch for ch in name if ch.isdigit())
    if not digits:
        return None
    doa = int(digits)
    return doa if 1 <= doa <= 360 else None


def _parse_class_filename(name: str) -> str | None:
    stem = name.lower()
    for cls in CLASS_NAMES:
        if cls in stem:
            return cls
    return None


def ingest_sloclas(
    root,
    split_ratios: tuple[float, float, float] = DEFAULT_SPLIT_RATIOS,
    seed: int = 0,
) -> tuple[Manifest, int]:
    """Scan a released corpus tree (per-DoA subdirectories of per-sample WAVs).

    The layout adapter is intentionally thin: the DoA is the integer embedded
    in each subdirectory name and the class is the class-name token in each
    file name. Unparseable entries are skipped and counted; the skip count is
    returned alongside the manifest.
    """
    root = Path(root)
    if not root.is_dir():
        raise IngestionError(f"{root} is not a directory")

    rows = []
    skipped = 0
    for sub in sorted(p for p in root.iterdir() if p.is_dir()):
        doa = _parse_doa_dirname(sub.name)
        if doa is None:
            skipped += 1
            continue
        for wav in sorted(sub.glob("*.wav")):
            cls = _parse_class_filename(wav.name)
            if cls is None:
                skipped += 1
                continue
            rows.append(
                ManifestRow(
                    id=f"{cls}_{doa:03d}_{wav.stem}",
                    wav_path=str(wav.relative_to(root)),
                    class_id=CLASS_IDS[cls],
                    class_name=cls,
                    doa_deg=doa,
                    split="train",
                )
            )
    if not rows:
        raise IngestionError(f"{root}: no ingestible samples found ({skipped} entries skipped)")
    manifest = Manifest(rows=assign_splits(rows, split_ratios, seed), root=root)
    manifest.validate_ids()
    return manifest, skipped


def segment_by_energy(clip: AudioClip, spec: EndpointSpec | None = None) -> list[tuple[int, int]]:
    """Detect event intervals [(start_sample, end_sample), ...] from short-time energy.

    The channel-mean signal is scanned in non-overlapping windows; a window is
    active when its mean-square energy exceeds threshold_ratio times the noise
    floor (5th percentile of window energies). Clips with no quiet background
    (floor within threshold_ratio of the peak) are treated as wholly active as
    long as they rise above digital silence. Gaps shorter than hangover_ms are
    bridged, then events shorter than min_event_ms are dropped.
    """
    spec = spec or EndpointSpec()
    mono = clip.channel_mean()
    if mono.size == 0:
        raise ValidationError("cannot segment an empty clip")
    win = max(1, int(round(spec.energy_win_ms * clip.sample_rate_hz / 1000.0)))
    num_win = (mono.size + win - 1) // win
    energies = np.empty(num_win)
    for i in range(num_win):
        chunk = mono[i * win : (i + 1) * win]
        energies[i] = float(np.mean(chunk * chunk))

    floor = float(np.percentile(energies, 5.0))
    peak = float(energies.max())
    if peak <= SILENCE_FLOOR:
        return []
    if floor <= SILENCE_FLOOR:
        threshold = max(spec.threshold_ratio * floor, SILENCE_FLOOR)
    elif peak < spec.threshold_ratio * floor:
        # no quiet background in the clip: everything audible is one event
        threshold = SILENCE_FLOOR
    else:
        threshold = spec.threshold_ratio * floor
    active = energies > threshold

    # window runs -> sample intervals
    intervals = []
    start = None
    for i, flag in enumerate(active):
        if flag and start is None:
            start = i
        elif not flag and start is not None:
            intervals.append((start, i))
            start = None
    if start is not None:
        intervals.append((start, num_win))

    hang_win = int(np.ceil(spec.hangover_ms / spec.energy_win_ms))
    merged: list[list[int]] = []
    for lo, hi in intervals:
        if merged and lo - merged[-1][1] < hang_win:
            merged[-1][1] = hi
        else:
            merged.append([lo, hi])

    min_len = spec.min_event_ms * clip.sample_rate_hz / 1000.0
    out = []
    for lo, hi in merged:
        s, e = lo * win, min(hi * win, mono.size)
        if e - s >= min_len:
            out.append((s, e))
    return out
