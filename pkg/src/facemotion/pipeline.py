"""End-to-end inference: windowed prediction, per-frame control, smoothing.

The driver is split so batch runs, the streaming service, and the benchmark
share one code path:

  * BaseStreams holds the schedule-independent streams (poses, blended
    expression predictions, refined lips). Rows are filled lazily, so the
    same object serves fully precomputed batch runs and frame-by-frame
    streaming.
  * ControlLoop applies one frame of control algebra per step: compose K_ori,
    derive and scale the lip deformation, apply phoneme edits, add emotion
    rows, optionally Kalman-smooth the summed deformation, and emit
    K_d = K_ori + D_l + D_e. Schedules swap atomically between steps.

Windows of autoregressive predictions are joined with a linear crossfade
over a fixed overlap; the summed deformation is smoothed by a per-coordinate
constant-position Kalman filter, never the identity geometry.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .core import (
    Deformation,
    DeformationKind,
    KeypointSet,
    RegionMask,
    RigidPose,
    compose_keypoints,
    default_regions,
    lip_region_fallback,
    validate_regions,
)
from .emotion import EmotionMode, EmotionSpec, condition_from_label
from .errors import (
    DimensionError,
    FacemotionError,
    InvalidPoseError,
    PipelineError,
    ScheduleError,
)
from .lipsync import PhonemeVector, ScaleConfig, lip_sync_deformation, scale_factor, style_edit
from .models import (
    AudioFeatureSequence,
    ModelDims,
    ModelWeights,
    NoiseSpec,
    StyleCode,
    init_weights,
    predict_window,
    refine_lips,
)

FRAME_RATE = 25
DEFAULT_WINDOW = 50
DEFAULT_OVERLAP = 10


@dataclass(frozen=True)
class Trajectory:
    """A driven keypoint sequence at 25 fps, optionally with per-frame poses."""

    frames: tuple
    poses: tuple | None = None

    def __post_init__(self):
        frames = tuple(self.frames)
        if not frames:
            raise DimensionError("trajectory must have at least one frame")
        n_kp = None
        for t, f in enumerate(frames):
            if not isinstance(f, KeypointSet):
                raise DimensionError(f"trajectory frame {t} is not a KeypointSet")
            if n_kp is None:
                n_kp = f.n_kp
            elif f.n_kp != n_kp:
                raise DimensionError(
                    f"trajectory frame {t} has {f.n_kp} keypoints, expected {n_kp}"
                )
        object.__setattr__(self, "frames", frames)
        if self.poses is not None:
            poses = tuple(self.poses)
            if len(poses) != len(frames):
                raise DimensionError(
                    f"{len(poses)} poses for {len(frames)} frames"
                )
            for t, p in enumerate(poses):
                if not isinstance(p, RigidPose):
                    raise InvalidPoseError(f"trajectory pose {t} is not a RigidPose")
            object.__setattr__(self, "poses", poses)

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def n_kp(self) -> int:
        return self.frames[0].n_kp

    def coords_array(self) -> np.ndarray:
        return np.stack([f.coords for f in self.frames])

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Trajectory)
            and self.frames == other.frames
            and self.poses == other.poses
        )


@dataclass(frozen=True)
class PoseTemplate:
    """A named pose sequence, repeated cyclically when shorter than the audio."""

    name: str
    poses: tuple

    def __post_init__(self):
        poses = tuple(self.poses)
        if not poses:
            raise InvalidPoseError(f"pose template '{self.name}' is empty")
        for t, p in enumerate(poses):
            if not isinstance(p, RigidPose):
                raise InvalidPoseError(f"template '{self.name}' entry {t} is not a RigidPose")
        object.__setattr__(self, "poses", poses)

    def pose_at(self, t: int) -> RigidPose:
        return self.poses[t % len(self.poses)]

    @staticmethod
    def static(name: str = "static", pose: RigidPose | None = None) -> "PoseTemplate":
        return PoseTemplate(name, (pose if pose is not None else RigidPose.identity(),))


@dataclass(frozen=True)
class KalmanParams:
    """Per-coordinate constant-position filter: process q, measurement r."""

    q: float = 1e-4
    r: float = 1e-2

    def __post_init__(self):
        if not (np.isfinite(self.q) and self.q >= 0):
            raise DimensionError(f"kalman q must be >= 0, got {self.q}")
        if not (np.isfinite(self.r) and self.r > 0):
            raise DimensionError(f"kalman r must be > 0, got {self.r}")


@dataclass(frozen=True)
class LipScale:
    """How to scale the lip deformation: not at all, by audio amplitude, or
    by a fixed factor."""

    mode: str = "off"
    config: ScaleConfig | None = None
    factor: float | None = None

    def __post_init__(self):
        if self.mode == "off":
            if self.config is not None or self.factor is not None:
                raise ScheduleError("lip scale 'off' takes no parameters")
        elif self.mode == "amplitude":
            if self.config is None or self.factor is not None:
                raise ScheduleError("lip scale 'amplitude' needs a ScaleConfig only")
        elif self.mode == "fixed":
            if self.factor is None or self.config is not None:
                raise ScheduleError("lip scale 'fixed' needs a factor only")
            if not (np.isfinite(self.factor) and self.factor >= 0):
                raise ScheduleError(f"fixed lip scale must be >= 0, got {self.factor}")
        else:
            raise ScheduleError(f"unknown lip scale mode {self.mode!r}")

    @staticmethod
    def off() -> "LipScale":
        return LipScale("off")

    @staticmethod
    def amplitude(config: ScaleConfig | None = None) -> "LipScale":
        return LipScale("amplitude", config=config if config is not None else ScaleConfig())

    @staticmethod
    def fixed(factor: float) -> "LipScale":
        return LipScale("fixed", factor=factor)


@dataclass(frozen=True)
class PhonemeEdit:
    """Scale the lip deformation along a named phoneme direction by lam over
    the half-open frame range [start, stop)."""

    name: str
    lam: float
    start: int
    stop: int

    def __post_init__(self):
        if not np.isfinite(self.lam):
            raise ScheduleError(f"edit '{self.name}': lambda must be finite, got {self.lam}")
        if not (0 <= self.start <= self.stop):
            raise ScheduleError(
                f"edit '{self.name}': bad frame range [{self.start}, {self.stop})"
            )

    def active_at(self, t: int) -> bool:
        return self.start <= t < self.stop


@dataclass(frozen=True)
class ControlSchedule:
    """The complete per-session control state, swapped atomically per frame."""

    lip_scale: LipScale = LipScale.off()
    phoneme_edits: tuple = ()
    emotion: EmotionSpec = field(default_factory=EmotionSpec.neutral)
    kalman: KalmanParams | None = None

    def __post_init__(self):
        object.__setattr__(self, "phoneme_edits", tuple(self.phoneme_edits))
        for e in self.phoneme_edits:
            if not isinstance(e, PhonemeEdit):
                raise ScheduleError("phoneme_edits entries must be PhonemeEdit")

    @staticmethod
    def neutral() -> "ControlSchedule":
        """Controls that leave the natural output untouched."""
        return ControlSchedule(lip_scale=LipScale.fixed(1.0))


def _merge_window(buffer: np.ndarray, start: int, new: np.ndarray, overlap: int) -> None:
    """Write `new` into buffer at `start`, crossfading the first `overlap`
    rows against what is already there: frame j of the overlap becomes
    (1 - a_j) * old + a_j * new with a_j = (j + 1) / (overlap + 1)."""
    if overlap:
        alpha = (np.arange(overlap, dtype=np.float64) + 1.0) / (overlap + 1.0)
        alpha = alpha.reshape((overlap,) + (1,) * (buffer.ndim - 1))
        buffer[start : start + overlap] = (
            (1.0 - alpha) * buffer[start : start + overlap] + alpha * new[:overlap]
        )
    buffer[start + overlap : start + new.shape[0]] = new[overlap:]


def blend_windows(windows, overlap: int) -> np.ndarray:
    """Join prediction windows with a linear crossfade over `overlap` frames.

    Equal-length windows of W frames produce n * W - (n - 1) * overlap frames.
    """
    arrs = [np.asarray(w, dtype=np.float64) for w in windows]
    if not arrs:
        raise DimensionError("blend_windows needs at least one window")
    if overlap < 0:
        raise DimensionError(f"overlap must be >= 0, got {overlap}")
    trailing = arrs[0].shape[1:]
    for i, a in enumerate(arrs):
        if a.ndim < 1 or a.shape[1:] != trailing:
            raise DimensionError(f"window {i} shape {a.shape} does not match the first window")
        if overlap >= a.shape[0]:
            raise DimensionError(
                f"overlap {overlap} must be smaller than window length {a.shape[0]}"
            )
    total = sum(a.shape[0] for a in arrs) - (len(arrs) - 1) * overlap
    out = np.empty((total,) + trailing)
    out[: arrs[0].shape[0]] = arrs[0]
    start = 0
    for prev, a in zip(arrs, arrs[1:]):
        start += prev.shape[0] - overlap
        _merge_window(out, start, a, overlap)
    return out


class KalmanStream:
    """Stateful scalar Kalman recursion, broadcast over coordinates.

    Constant-position model: the first measurement initialises the state
    (x0 = z0, P0 = r); afterwards P <- P + q, K = P / (P + r),
    x <- x + K (z - x), P <- (1 - K) P.
    """

    def __init__(self, params: KalmanParams):
        self.params = params
        self.x: np.ndarray | None = None
        self.p_var: float = params.r

    def step(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        if self.x is None:
            self.x = np.array(z)
            self.p_var = self.params.r
        else:
            if z.shape != self.x.shape:
                raise DimensionError(
                    f"measurement shape {z.shape} does not match state {self.x.shape}"
                )
            self.p_var += self.params.q
            gain = self.p_var / (self.p_var + self.params.r)
            self.x = self.x + gain * (z - self.x)
            self.p_var = (1.0 - gain) * self.p_var
        return np.array(self.x)


def kalman_smooth(seq, params: KalmanParams) -> list:
    """Smooth a deformation sequence per coordinate; kinds are preserved."""
    seq = list(seq)
    if not seq:
        raise DimensionError("kalman_smooth needs a nonempty sequence")
    stream = KalmanStream(params)
    out = []
    for t, d in enumerate(seq):
        try:
            out.append(Deformation(stream.step(d.offsets), d.kind))
        except FacemotionError as exc:
            raise PipelineError(f"frame {t}: {exc}") from exc
    return out


def _window_starts(n_frames: int, window: int, overlap: int) -> tuple:
    if window < 1:
        raise DimensionError(f"window must be >= 1, got {window}")
    if not 0 <= overlap < window:
        raise DimensionError(f"need 0 <= overlap < window, got overlap={overlap}, window={window}")
    starts = [0]
    step = window - overlap
    while starts[-1] + window < n_frames:
        starts.append(starts[-1] + step)
    return tuple(starts)


def resolve_poses(pose_source, n_frames: int) -> tuple:
    """One pose per frame from a Trajectory's pose track or a cyclic template."""
    if isinstance(pose_source, PoseTemplate):
        return tuple(pose_source.pose_at(t) for t in range(n_frames))
    if isinstance(pose_source, Trajectory):
        if pose_source.poses is None:
            raise InvalidPoseError("trajectory pose source carries no poses")
        if len(pose_source.poses) < n_frames:
            raise InvalidPoseError(
                f"pose source has {len(pose_source.poses)} poses for {n_frames} frames"
            )
        return tuple(pose_source.poses[:n_frames])
    if isinstance(pose_source, RigidPose):
        return (pose_source,) * n_frames
    raise InvalidPoseError("pose source must be a PoseTemplate, a Trajectory with poses, or a RigidPose")


@dataclass
class BaseStreams:
    """Schedule-independent per-session streams, filled lazily.

    `ensure_frame(t)` predicts and crossfades every window starting at or
    before t and refines lips through frame t; on a fully filled object it is
    a no-op, so batch and streaming drivers share the arithmetic exactly.
    """

    identity: KeypointSet
    poses: tuple
    audio: AudioFeatureSequence
    weights: ModelWeights
    style: StyleCode
    noise: NoiseSpec
    lip_mask: RegionMask
    regions: dict
    window: int
    overlap: int
    delta_pred: np.ndarray = field(init=False)
    k_refine: np.ndarray = field(init=False)
    window_starts: tuple = field(init=False)
    _filled_windows: int = field(init=False, default=0)
    _refined_until: int = field(init=False, default=0)
    _cpred_cache: dict = field(init=False, default_factory=dict)
    _zero_delta: Deformation = field(init=False)

    def __post_init__(self):
        n = len(self.audio)
        if n < 1:
            raise DimensionError("audio sequence is empty")
        if len(self.poses) != n:
            raise DimensionError(f"{len(self.poses)} poses for {n} audio frames")
        if self.identity.n_kp != self.weights.dims.n_kp:
            raise DimensionError(
                f"identity has {self.identity.n_kp} keypoints, weights expect {self.weights.dims.n_kp}"
            )
        validate_regions(self.regions, self.identity.n_kp)
        self.window_starts = _window_starts(n, self.window, self.overlap)
        self.delta_pred = np.zeros((n, self.identity.n_kp, 3))
        self.k_refine = np.zeros((n, self.identity.n_kp, 3))
        self._zero_delta = Deformation.zeros(self.identity.n_kp)

    @property
    def n_frames(self) -> int:
        return len(self.audio)

    @property
    def n_kp(self) -> int:
        return self.identity.n_kp

    def k_ori_at(self, t: int) -> KeypointSet:
        return compose_keypoints(self.identity, self.poses[t], self._zero_delta)

    def _fill_window(self, k: int) -> None:
        start = self.window_starts[k]
        end = min(start + self.window, self.n_frames)
        pred = predict_window(
            self.audio.embeddings[start:end],
            self.weights,
            style_index=self.style.index,
            network="predictor",
        )
        if k == 0:
            self.delta_pred[start:end] = pred
        else:
            _merge_window(self.delta_pred, start, pred, self.overlap)
        self._filled_windows = k + 1

    def _fill_refine(self, t: int) -> None:
        try:
            refined = refine_lips(
                self.audio.embeddings[t],
                self.k_ori_at(t),
                Deformation(self.delta_pred[t]),
                self.noise,
                self.weights,
                self.lip_mask,
                pose=self.poses[t],
            )
        except FacemotionError as exc:
            raise PipelineError(f"frame {t}: {exc}") from exc
        self.k_refine[t] = refined.coords
        self._refined_until = t + 1

    def ensure_frame(self, t: int) -> None:
        while (
            self._filled_windows < len(self.window_starts)
            and self.window_starts[self._filled_windows] <= t
        ):
            self._fill_window(self._filled_windows)
        while self._refined_until <= t:
            self._fill_refine(self._refined_until)

    # -- emotion prediction cache ------------------------------------------

    def _blended_cpred(self, cond: np.ndarray | None) -> np.ndarray:
        key = b"zero" if cond is None else cond.tobytes()
        if key not in self._cpred_cache:
            out = np.zeros((self.n_frames, self.n_kp, 3))
            for k, start in enumerate(self.window_starts):
                end = min(start + self.window, self.n_frames)
                pred = predict_window(
                    self.audio.embeddings[start:end],
                    self.weights,
                    condition=cond,
                    network="cpred",
                )
                if k == 0:
                    out[start:end] = pred
                else:
                    _merge_window(out, start, pred, self.overlap)
            self._cpred_cache[key] = out
        return self._cpred_cache[key]

    def emotion_base(self, cond: np.ndarray | None) -> np.ndarray:
        """Unit-intensity emotion stream: conditioned minus neutral prediction.

        A zero condition is the neutral condition, so its stream is exactly
        zero and is returned without running the predictor.
        """
        if cond is None or not np.any(cond):
            return np.zeros((self.n_frames, self.n_kp, 3))
        return self._blended_cpred(np.asarray(cond, dtype=np.float64)) - self._blended_cpred(None)


def precompute_base(
    identity: KeypointSet,
    pose_source,
    audio: AudioFeatureSequence,
    style: StyleCode,
    weights: ModelWeights,
    *,
    noise: NoiseSpec = NoiseSpec(),
    regions: dict | None = None,
    window: int | None = None,
    overlap: int = DEFAULT_OVERLAP,
    lazy: bool = False,
) -> BaseStreams:
    """Build the schedule-independent streams for one session."""
    if regions is None:
        regions = (
            default_regions(identity.n_kp)
            if identity.n_kp == weights.dims.n_kp == 21
            else lip_region_fallback(identity.n_kp, weights.dims.lip_count)
        )
    if "lips" not in regions:
        raise DimensionError("session regions must include a 'lips' mask")
    base = BaseStreams(
        identity=identity,
        poses=resolve_poses(pose_source, len(audio)),
        audio=audio,
        weights=weights,
        style=style,
        noise=noise,
        lip_mask=regions["lips"],
        regions=regions,
        window=window if window is not None else weights.dims.max_window,
        overlap=overlap,
    )
    if not lazy:
        base.ensure_frame(base.n_frames - 1)
    return base


class ControlLoop:
    """Per-frame control algebra over a BaseStreams object.

    Frames must be produced in order. The schedule may be replaced between
    steps and applies from the next frame; the Kalman stream keeps its state
    across swaps unless the Kalman parameters themselves change.
    """

    def __init__(self, base: BaseStreams, schedule: ControlSchedule, phonemes: dict | None = None):
        self.base = base
        self.phonemes = dict(phonemes) if phonemes else {}
        self.next_t = 0
        self._kalman: KalmanStream | None = None
        self.schedule: ControlSchedule | None = None
        self.set_schedule(schedule)

    def set_schedule(self, schedule: ControlSchedule) -> None:
        base = self.base
        n = base.n_frames

        ls = schedule.lip_scale
        if ls.mode == "off":
            factors = np.ones(n)
        elif ls.mode == "fixed":
            factors = np.full(n, float(ls.factor))
        else:
            cfg = ls.config.resolve(base.audio.rms)
            factors = np.array([scale_factor(r, cfg) for r in base.audio.rms])

        edits = []
        for e in schedule.phoneme_edits:
            if e.stop > n:
                raise ScheduleError(
                    f"edit '{e.name}' range [{e.start}, {e.stop}) exceeds {n} frames"
                )
            vec = self.phonemes.get(e.name)
            if vec is None:
                raise ScheduleError(f"unknown phoneme vector '{e.name}'")
            if not isinstance(vec, PhonemeVector):
                raise ScheduleError(f"phoneme entry '{e.name}' is not a PhonemeVector")
            if vec.direction.size != len(base.lip_mask) * 3:
                raise ScheduleError(
                    f"phoneme '{e.name}' direction length {vec.direction.size} does not "
                    f"match the lip mask ({len(base.lip_mask) * 3})"
                )
            edits.append((e, vec))

        emo_seq = self._emotion_sequence(schedule.emotion)

        if schedule.kalman is None:
            self._kalman = None
        elif self._kalman is None or self._kalman.params != schedule.kalman:
            self._kalman = KalmanStream(schedule.kalman)

        self.schedule = schedule
        self._factors = factors
        self._edits = edits
        self._emo_seq = emo_seq

    def _emotion_sequence(self, spec: EmotionSpec) -> np.ndarray:
        base = self.base
        spec.validate_categories(base.weights.categories)
        table = base.weights.emotion_condition_table()
        out = np.zeros((base.n_frames, base.n_kp, 3))
        if spec.mode is EmotionMode.GLOBAL:
            cat, intensity = spec.global_emotion
            if intensity != 0:
                cond = condition_from_label(cat, table)
                out = intensity * base.emotion_base(cond.vector)
            return out
        for name, (cat, intensity) in spec.regional.items():
            mask = base.regions.get(name)
            if mask is None:
                raise ScheduleError(f"region '{name}' is not a session region")
            if intensity == 0:
                continue
            cond = condition_from_label(cat, table)
            idx = mask.index_array()
            out[:, idx, :] = intensity * base.emotion_base(cond.vector)[:, idx, :]
        return out

    def step(self, t: int) -> KeypointSet:
        if t != self.next_t:
            raise PipelineError(f"frames must be produced in order: expected {self.next_t}, got {t}")
        if t >= self.base.n_frames:
            raise PipelineError(f"frame {t} beyond the {self.base.n_frames}-frame session")
        try:
            k_d = self._frame(t)
        except PipelineError:
            raise
        except FacemotionError as exc:
            raise PipelineError(f"frame {t}: {exc}") from exc
        self.next_t = t + 1
        return k_d

    def _frame(self, t: int) -> KeypointSet:
        base = self.base
        base.ensure_frame(t)
        k_ori = base.k_ori_at(t)
        d_l = lip_sync_deformation(KeypointSet(base.k_refine[t]), k_ori, base.lip_mask)
        offsets = d_l.offsets * self._factors[t]
        if self._edits:
            d = Deformation(offsets, DeformationKind.LIP_SYNC)
            for edit, vec in self._edits:
                if edit.active_at(t):
                    d = style_edit(d, vec, edit.lam, base.lip_mask)
            offsets = d.offsets
        total = offsets + self._emo_seq[t]
        if self._kalman is not None:
            total = self._kalman.step(total)
        return KeypointSet(k_ori.coords + total)


def run_inference(
    identity: KeypointSet,
    pose_source,
    audio: AudioFeatureSequence,
    style: StyleCode,
    schedule: ControlSchedule,
    weights: ModelWeights,
    *,
    noise: NoiseSpec = NoiseSpec(),
    phonemes: dict | None = None,
    regions: dict | None = None,
    window: int | None = None,
    overlap: int = DEFAULT_OVERLAP,
    frame_hook=None,
) -> Trajectory:
    """Drive a full session and return the trajectory of driven keypoints.

    Deterministic given inputs, weights, and seeds. `frame_hook(t, k_d)` is
    called after each frame is produced.
    """
    base = precompute_base(
        identity, pose_source, audio, style, weights,
        noise=noise, regions=regions, window=window, overlap=overlap,
    )
    loop = ControlLoop(base, schedule, phonemes)
    frames = []
    for t in range(base.n_frames):
        k_d = loop.step(t)
        if frame_hook is not None:
            frame_hook(t, k_d)
        frames.append(k_d)
    return Trajectory(tuple(frames), base.poses)


def retarget(driving, new_identity: KeypointSet) -> Trajectory:
    """Replay a (pose, deformation) stream onto a different identity."""
    driving = list(driving)
    if not driving:
        raise DimensionError("retarget needs a nonempty driving sequence")
    frames = []
    poses = []
    for t, item in enumerate(driving):
        try:
            pose, delta = item
        except (TypeError, ValueError) as exc:
            raise DimensionError(f"driving frame {t} is not a (pose, deformation) pair") from exc
        if not isinstance(pose, RigidPose):
            raise InvalidPoseError(f"driving frame {t} pose is not a RigidPose")
        if not isinstance(delta, Deformation):
            raise DimensionError(f"driving frame {t} deformation is not a Deformation")
        frames.append(compose_keypoints(new_identity, pose, delta))
        poses.append(pose)
    return Trajectory(tuple(frames), tuple(poses))


def _rot_x(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, s], [0.0, -s, c]])


def _rot_y(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, -s], [0.0, 1.0, 0.0], [s, 0.0, c]])


def builtin_pose_templates(period: int = 50, amplitude: float = 0.08) -> dict:
    """Deterministic head-motion templates: static, nod (pitch), sway (yaw)."""
    angles = amplitude * np.sin(2.0 * np.pi * np.arange(period) / period)
    zero = np.zeros(3)
    return {
        "static": PoseTemplate.static(),
        "nod": PoseTemplate("nod", tuple(RigidPose(_rot_x(a), zero) for a in angles)),
        "sway": PoseTemplate("sway", tuple(RigidPose(_rot_y(a), zero) for a in angles)),
    }


# ---------------------------------------------------------------------------
# Frame-budget benchmark.

@dataclass(frozen=True)
class BenchSizes:
    """How much work the benchmark times."""

    n_frames: int = 240
    warmup: int = 25
    seed: int = 0
    dims: ModelDims = field(default_factory=ModelDims)

    def __post_init__(self):
        if self.n_frames < 0 or self.warmup < 0:
            raise DimensionError("benchmark sizes must be >= 0")


@dataclass(frozen=True)
class StageTiming:
    stage: str
    median_ms: float
    p95_ms: float
    n_samples: int


@dataclass(frozen=True)
class BenchReport:
    rows: tuple

    def to_text(self) -> str:
        lines = [f"{'stage':<12} {'median_ms':>10} {'p95_ms':>10} {'n':>6}"]
        for r in self.rows:
            lines.append(f"{r.stage:<12} {r.median_ms:>10.4f} {r.p95_ms:>10.4f} {r.n_samples:>6}")
        return "\n".join(lines) + "\n"


def default_bench_schedule() -> ControlSchedule:
    """Exercises amplitude scaling, a global emotion, and the Kalman filter."""
    return ControlSchedule(
        lip_scale=LipScale.amplitude(),
        emotion=EmotionSpec(EmotionMode.GLOBAL, ("happy", 1.0), None),
        kalman=KalmanParams(),
    )


def _bench_inputs(sizes: BenchSizes):
    dims = sizes.dims
    rng = np.random.default_rng(sizes.seed)
    identity = KeypointSet(rng.uniform(-0.5, 0.5, size=(dims.n_kp, 3)))
    audio = AudioFeatureSequence(
        rng.standard_normal((sizes.n_frames, dims.d_audio)),
        rng.uniform(0.01, 1.0, size=sizes.n_frames),
    )
    weights = init_weights(sizes.seed, dims)
    regions = (
        default_regions(dims.n_kp)
        if dims.n_kp == 21
        else lip_region_fallback(dims.n_kp, dims.lip_count)
    )
    return identity, audio, weights, regions


def _stage_times(loop: ControlLoop, n_frames: int, warmup: int) -> list:
    times = []
    for t in range(n_frames):
        t0 = time.perf_counter()
        loop.step(t)
        times.append((time.perf_counter() - t0) * 1e3)
    return times[min(warmup, max(n_frames - 1, 0)):]


def bench_frame(
    schedule: ControlSchedule | None = None, sizes: BenchSizes = BenchSizes()
) -> BenchReport:
    """Per-frame latency of the control path and of full inference.

    The control stage steps a fully precomputed session, so each sample is
    compose + lip controls + emotion rows + Kalman only. The full stage steps
    a lazy session, so window prediction lands on window-start frames and lip
    refinement on every frame. Medians and p95s are reported in milliseconds.
    """
    if schedule is None:
        schedule = default_bench_schedule()
    if sizes.n_frames == 0:
        return BenchReport(())
    identity, audio, weights, regions = _bench_inputs(sizes)
    style = StyleCode(0, weights.dims.n_styles)

    rows = []
    for stage, lazy in (("control", False), ("full", True)):
        base = precompute_base(
            identity, PoseTemplate.static(), audio, style, weights,
            regions=regions, lazy=lazy,
        )
        loop = ControlLoop(base, schedule)
        samples = _stage_times(loop, sizes.n_frames, sizes.warmup)
        rows.append(
            StageTiming(
                stage=stage,
                median_ms=float(np.median(samples)),
                p95_ms=float(np.percentile(samples, 95)),
                n_samples=len(samples),
            )
        )
    return BenchReport(tuple(rows))
