"""Emotion controls.

Pure emotional deformation is isolated by subtracting a neutral-conditioned
combined prediction from an emotion-conditioned one over the same audio:

    D_e[t] = emo[t] - neutral[t]

Intensity scales D_e linearly; complex expressions assemble region-specific
emotion fields into one deformation using disjoint region masks.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .core import Deformation, DeformationKind, RegionMask, validate_regions
from .errors import DimensionError, MaskError, ScheduleError


class ConditionSource(enum.Enum):
    LABEL = "label"
    PRECOMPUTED_AUDIO = "precomputed_audio"
    PRECOMPUTED_TEXT = "precomputed_text"
    IMAGE = "image"
    VIDEO = "video"


@dataclass(frozen=True)
class EmotionCondition:
    """A condition embedding handed to the combined predictor."""

    vector: np.ndarray
    source: ConditionSource = ConditionSource.LABEL

    def __post_init__(self):
        v = np.asarray(self.vector, dtype=np.float64)
        if v.ndim != 1:
            raise DimensionError(f"condition vector must be 1-D, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise DimensionError("condition vector contains non-finite values")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "vector", v)


class EmotionMode(enum.Enum):
    GLOBAL = "global"
    REGIONAL = "regional"


@dataclass(frozen=True)
class EmotionSpec:
    """What emotion to apply: one global (category, intensity) pair, or one
    pair per facial region."""

    mode: EmotionMode = EmotionMode.GLOBAL
    global_emotion: tuple | None = ("neutral", 0.0)
    regional: dict | None = None

    def __post_init__(self):
        if self.mode is EmotionMode.GLOBAL:
            if self.global_emotion is None or self.regional is not None:
                raise ScheduleError("global mode needs global_emotion and no regional map")
            cat, intensity = self.global_emotion
            _check_intensity(cat, intensity)
        else:
            if self.regional is None or self.global_emotion is not None:
                raise ScheduleError("regional mode needs a regional map and no global pair")
            for region, (cat, intensity) in self.regional.items():
                _check_intensity(cat, intensity, region)
            object.__setattr__(self, "regional", dict(self.regional))

    @staticmethod
    def neutral() -> "EmotionSpec":
        return EmotionSpec(EmotionMode.GLOBAL, ("neutral", 0.0), None)

    def validate_categories(self, categories) -> None:
        known = set(categories)
        if self.mode is EmotionMode.GLOBAL:
            pairs = [self.global_emotion]
        else:
            pairs = list(self.regional.values())
        for cat, _ in pairs:
            if cat not in known:
                raise ScheduleError(f"unknown emotion category '{cat}'")


def _check_intensity(cat: str, intensity, region: str | None = None) -> None:
    where = f" for region '{region}'" if region else ""
    if not isinstance(cat, str) or not cat:
        raise ScheduleError(f"emotion category{where} must be a non-empty string")
    if not (np.isfinite(intensity) and intensity >= 0):
        raise ScheduleError(f"emotion intensity{where} must be >= 0, got {intensity}")


def condition_from_label(category: str, table: dict) -> EmotionCondition:
    """Look a category up in the label table; 'neutral' is the zero vector."""
    if category not in table:
        raise ScheduleError(f"unknown emotion category '{category}'")
    vec = np.asarray(table[category], dtype=np.float64)
    if category == "neutral" and np.any(vec != 0):
        raise ScheduleError("the reserved 'neutral' row must be the zero vector")
    return EmotionCondition(vec, ConditionSource.LABEL)


def condition_from_embedding(vec, source: ConditionSource) -> EmotionCondition:
    """Wrap a precomputed embedding (from an external classifier) verbatim."""
    return EmotionCondition(np.asarray(vec, dtype=np.float64), source)


def pure_emotion_deformation(emo_seq, neutral_seq) -> list:
    """Per-frame subtraction D_e[t] = emo[t] - neutral[t].

    Both sequences must come from the combined predictor on the same audio
    and weights; only the condition may differ.
    """
    emo_seq = list(emo_seq)
    neutral_seq = list(neutral_seq)
    if len(emo_seq) != len(neutral_seq):
        raise DimensionError(
            f"sequence lengths differ: {len(emo_seq)} vs {len(neutral_seq)}"
        )
    out = []
    for t, (e, n) in enumerate(zip(emo_seq, neutral_seq)):
        if e.offsets.shape != n.offsets.shape:
            raise DimensionError(
                f"frame {t}: shapes {e.offsets.shape} vs {n.offsets.shape} disagree"
            )
        out.append(Deformation(e.offsets - n.offsets, DeformationKind.EMOTION))
    return out


def scale_emotion(d: Deformation, intensity: float) -> Deformation:
    """Scale an emotion deformation by a non-negative intensity."""
    if d.kind is not DeformationKind.EMOTION:
        raise DimensionError(f"scale_emotion expects kind emotion, got {d.kind.value}")
    if not (np.isfinite(intensity) and intensity >= 0):
        raise DimensionError(f"intensity must be >= 0, got {intensity}")
    return Deformation(d.offsets * intensity, d.kind)


def compose_regions(parts: dict, regions: dict, n_kp: int | None = None) -> Deformation:
    """Assemble one deformation from per-region emotion fields.

    Row i of the output comes from the part whose region mask contains i;
    rows covered by no region are zero. Masks must be pairwise disjoint.
    An empty parts map yields the zero deformation (n_kp required then).
    """
    if not parts:
        if n_kp is None:
            raise DimensionError("compose_regions with no parts needs an explicit n_kp")
        return Deformation(np.zeros((n_kp, 3)), DeformationKind.EMOTION)
    for name in parts:
        if name not in regions:
            raise MaskError(f"part '{name}' has no region mask")
    if n_kp is None:
        n_kp = next(iter(parts.values())).n_kp
    validate_regions({name: regions[name] for name in parts}, n_kp)
    out = np.zeros((n_kp, 3))
    for name, part in parts.items():
        if part.n_kp != n_kp:
            raise DimensionError(f"part '{name}' has {part.n_kp} rows, expected {n_kp}")
        idx = regions[name].index_array()
        out[idx] = part.offsets[idx]
    return Deformation(out, DeformationKind.EMOTION)
