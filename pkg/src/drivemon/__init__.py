"""Distracted-driving recognition pipeline over precomputed embedding banks."""

from .classify import (
    Prediction,
    ProbeParams,
    load_probe_params,
    pool_clip,
    probe_predict,
    save_probe_params,
    softmax,
    zero_shot_predict,
)
from .embedstore import (
    CameraView,
    DatasetView,
    EmbeddingBank,
    ManifestRow,
    PromptSet,
    build_dataset_view,
    filter_view,
    load_manifest,
    load_prompt_set,
    read_embedding_bank,
    save_prompt_set,
    write_embedding_bank,
    write_manifest,
)
from .errors import (
    BankFormatError,
    ConfigError,
    DataError,
    DrivemonError,
    LineSearchError,
    ManifestError,
    NonFiniteError,
    TrainError,
)
from .evalharness import (
    ClassRemap,
    ExperimentConfig,
    ExperimentReport,
    FoldPlan,
    leave_drivers_out,
    parse_experiment_config,
    reduce_training_by_drivers,
    remap_classes,
    run_experiment,
    split_drivers_kfold,
)
from .metrics import (
    ConfusionMatrix,
    FoldMetrics,
    aggregate_folds,
    compute_fold_metrics,
    confusion_matrix,
    per_class_f1,
    top1_accuracy,
)
from .sampling import (
    CLIP_LEN,
    ClipWindow,
    EventSeq,
    assemble_clip,
    clip_stream,
    segment_events,
    subsample_fps,
)
from .temporal import (
    EventPrediction,
    ProbTrace,
    majority_vote,
    moving_average,
    predict_event,
    write_trace_csv,
)
from .train import (
    Objective,
    TrainConfig,
    fit_clip_head,
    fit_probe,
    lbfgs_minimize,
    objective_from_arrays,
    probe_objective,
)

__version__ = "0.1.0"
