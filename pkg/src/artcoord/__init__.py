"""Articulatory coordination features and dilated CNN classifiers.

The pipeline goes: recordings (audio or precomputed multichannel feature
tracks) -> per-channel normalization -> fixed-window segmentation ->
channel-delay correlation matrices -> dilated-CNN binary classifier,
trained with class-weighted cross entropy and early stopping.
"""

from .audio import AudioClip, decode_wav, read_wav
from .correlation import (
    ChannelDelayCorrelationMatrix,
    NormStats,
    apply_norm,
    build_acf,
    correlation_vector,
    delayed_correlation,
    fit_norm_stats,
)
from .corpus import SampleSet, build_sample_set, load_sample_set, split_sample_set
from .dataset import (
    ClassWeights,
    ClinicalScore,
    Database,
    DatasetSplit,
    Label,
    RecordingRecord,
    Scale,
    SeverityLevel,
    assign_label,
    class_weights,
    label_records,
    make_split,
    read_manifest,
    score_to_severity,
    write_manifest,
)
from .features import (
    FeatureTrack,
    Segment,
    assemble_tv8,
    load_tv_track,
    normalize_channels,
    segment_track,
)
from .glottal import estimate_glottal_tracks
from .metrics import EvaluationReport, auc_roc, evaluate, f1_per_class, score_samples
from .mfcc import compute_mfcc
from .models import (
    EarlyStopping,
    ModelConfig,
    TrainReport,
    best_config,
    build_fused,
    build_model,
    build_single_tower,
    grid_configs,
    grid_search,
    model_from_checkpoint,
    model_to_checkpoint,
    train,
)
from .synth import SynthSpec, generate, write_corpus

__version__ = "0.1.0"
