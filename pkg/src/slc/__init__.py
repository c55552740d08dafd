"""Sound source localization and classification from 4-channel audio.

The pipeline simulates (or ingests) a labeled multichannel corpus, extracts
fused GCC-PHAT + MFCC features per 170 ms segment, and trains a multitask
dense network that regresses a 360-bin DoA likelihood code and classifies
the sound event, entirely in numpy with analytic gradients.
"""

from .audio_io import AudioClip, FrameSpec, frame_signal, read_wav, write_wav
from .coding import (
    DEFAULT_SIGMA_DEG,
    NUM_DOA,
    circular_distance_deg,
    decode_doa,
    encode_doa,
    encode_event,
)
from .config import KEY_REGISTRY, RunConfig, load_config
from .dataset import (
    CLASS_NAMES,
    EndpointSpec,
    Manifest,
    ManifestRow,
    assign_splits,
    ingest_sloclas,
    read_manifest,
    segment_by_energy,
    write_manifest,
)
from .errors import (
    ConfigError,
    DegenerateInputError,
    FormatError,
    GeometryError,
    IngestionError,
    SlcError,
    UnsupportedFormatError,
    ValidationError,
)
from .features import (
    FUSED_DIM,
    GccSpec,
    MfccSpec,
    SegmentFeatures,
    extract_segments,
    gcc_phat,
    mel_filterbank,
    mfcc_segment,
    read_features,
    write_features,
)
from .metrics import EvalReport, acc_event, acc_theta, confusion_matrix, evaluate, mae
from .network import (
    AdamState,
    SLCNet,
    adam_step,
    ce_loss,
    combined_loss,
    load_checkpoint,
    mse_loss,
)
from .simulate import (
    ArrayGeometry,
    SimConfig,
    SourcePlacement,
    mix_noise,
    pair_tdoa_samples,
    propagate,
    synth_event,
    synthesize_dataset,
)
from .training import EpochStats, TrainConfig, train, write_metrics_log

__version__ = "0.1.0"

__all__ = [
    "AudioClip",
    "FrameSpec",
    "frame_signal",
    "read_wav",
    "write_wav",
    "DEFAULT_SIGMA_DEG",
    "NUM_DOA",
    "circular_distance_deg",
    "decode_doa",
    "encode_doa",
    "encode_event",
    "KEY_REGISTRY",
    "RunConfig",
    "load_config",
    "CLASS_NAMES",
    "EndpointSpec",
    "Manifest",
    "ManifestRow",
    "assign_splits",
    "ingest_sloclas",
    "read_manifest",
    "segment_by_energy",
    "write_manifest",
    "ConfigError",
    "DegenerateInputError",
    "FormatError",
    "GeometryError",
    "IngestionError",
    "SlcError",
    "UnsupportedFormatError",
    "ValidationError",
    "FUSED_DIM",
    "GccSpec",
    "MfccSpec",
    "SegmentFeatures",
    "extract_segments",
    "gcc_phat",
    "mel_filterbank",
    "mfcc_segment",
    "read_features",
    "write_features",
    "EvalReport",
    "acc_event",
    "acc_theta",
    "confusion_matrix",
    "evaluate",
    "mae",
    "AdamState",
    "SLCNet",
    "adam_step",
    "ce_loss",
    "combined_loss",
    "load_checkpoint",
    "mse_loss",
    "ArrayGeometry",
    "SimConfig",
    "SourcePlacement",
    "mix_noise",
    "pair_tdoa_samples",
    "propagate",
    "synth_event",
    "synthesize_dataset",
    "EpochStats",
    "TrainConfig",
    "train",
    "write_metrics_log",
    "__version__",
]
