"""Real-time facial animation control in implicit keypoint space.

Audio features drive autoregressive expression offsets; lip rows are
refined by a small MLP; lip-sync and emotion deformations are composed onto
pose-transformed identity keypoints and steered per frame by a control
schedule (amplitude scaling, phoneme style edits, per-region emotion,
Kalman smoothing).
"""

from .core import (
    DEFAULT_N_KP,
    DEFAULT_REGIONS,
    Deformation,
    DeformationKind,
    KeypointSet,
    RegionMask,
    RigidPose,
    apply_deformations,
    compose_keypoints,
    decompose_keypoints,
    default_regions,
    mask_deformation,
    project_2d,
)
from .errors import (
    ConfigError,
    DimensionError,
    FacemotionError,
    FormatError,
    InvalidPoseError,
    MaskError,
    PipelineError,
    ScheduleError,
    TrainingError,
    VersionError,
    WeightsError,
)
from .lipsync import (
    PhonemeVector,
    ScaleConfig,
    build_phoneme_vector,
    lip_sync_deformation,
    scale_deformation,
    scale_factor,
    style_edit,
)
from .emotion import (
    ConditionSource,
    EmotionCondition,
    EmotionMode,
    EmotionSpec,
    compose_regions,
    condition_from_embedding,
    condition_from_label,
    pure_emotion_deformation,
    scale_emotion,
)
from .models import (
    DEFAULT_CATEGORIES,
    AudioFeatureSequence,
    ModelDims,
    ModelWeights,
    NoiseSpec,
    StyleCode,
    combined_predict,
    init_weights,
    load_weights,
    predict_expressions,
    predict_window,
    recompose_with_prediction,
    refine_lips,
    save_weights,
)
from .losses import (
    LossWeights,
    grad_check,
    loss_cls,
    loss_exp,
    loss_kp,
    loss_rec,
    loss_refine,
    loss_reg,
    loss_sync,
    loss_vel,
)
from .losses import (
    SYNC_FRAMES,
    LinearEmbedding,
    SyncWindow,
    default_sync_providers,
)
from .pipeline import (
    DEFAULT_OVERLAP,
    DEFAULT_WINDOW,
    FRAME_RATE,
    BaseStreams,
    BenchReport,
    BenchSizes,
    ControlLoop,
    ControlSchedule,
    KalmanParams,
    KalmanStream,
    LipScale,
    PhonemeEdit,
    PoseTemplate,
    Trajectory,
    bench_frame,
    blend_windows,
    builtin_pose_templates,
    default_bench_schedule,
    kalman_smooth,
    precompute_base,
    resolve_poses,
    retarget,
    run_inference,
)
from .training import (
    AdamConfig,
    SyntheticDataset,
    make_synthetic_dataset,
    pack_refiner,
    refiner_loss_fn,
    train_refiner,
    unpack_refiner,
    write_loss_trace,
)
from .io import (
    read_audio_features,
    read_identity,
    read_phonemes,
    read_trajectory,
    read_weights,
    write_audio_features,
    write_identity,
    write_phonemes,
    write_trajectory,
    write_weights,
)
from .config import (
    Seeds,
    SessionConfig,
    config_from_obj,
    config_schema,
    config_to_obj,
    load_config,
    load_schedule,
    schedule_from_obj,
    schedule_schema,
    schedule_to_obj,
)

__version__ = "0.1.0"
