"""Session configuration and control-schedule JSON codecs.

Both documents are validated against published JSON schemas with unknown
keys rejected, then lifted into the typed objects the engine consumes.
Schedule parsing supports partial documents: absent fields keep the values
of a base schedule, which is how mid-stream control updates merge.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields

import jsonschema

from .core import DEFAULT_N_KP, DEFAULT_REGIONS, RegionMask, validate_regions
from .emotion import EmotionMode, EmotionSpec
from .errors import ConfigError, FacemotionError
from .lipsync import ScaleConfig
from .losses import LossWeights
from .models import DEFAULT_CATEGORIES, ModelDims
from .pipeline import (
    DEFAULT_OVERLAP,
    ControlSchedule,
    KalmanParams,
    LipScale,
    PhonemeEdit,
)

CONFIG_VERSION = 1

_NUM = {"type": "number"}
_NONNEG = {"type": "number", "minimum": 0}
_INT_POS = {"type": "integer", "minimum": 1}
_INT_NONNEG = {"type": "integer", "minimum": 0}


def config_schema() -> dict:
    """Schema for the session config document; unknown keys are rejected."""
    return {
        "type": "object",
        "additionalProperties": False,
        "properties": {
            "version": {"const": CONFIG_VERSION},
            "n_kp": _INT_POS,
            "regions": {
                "type": "object",
                "minProperties": 1,
                "additionalProperties": {"type": "array", "items": _INT_NONNEG},
            },
            "dims": {
                "type": "object",
                "additionalProperties": False,
                "properties": {
                    "n_kp": _INT_POS,
                    "d_audio": _INT_POS,
                    "d_model": _INT_POS,
                    "n_layers": _INT_POS,
                    "n_heads": _INT_POS,
                    "ff_hidden": _INT_POS,
                    "refiner_hidden": _INT_POS,
                    "n_styles": _INT_POS,
                    "cond_dim": _INT_POS,
                    "lip_count": _INT_POS,
                    "max_window": _INT_POS,
                    "noise_sigma": _NONNEG,
                },
            },
            "scale": {
                "type": "object",
                "additionalProperties": False,
                "properties": {
                    "f_min": _NONNEG,
                    "f_max": _NONNEG,
                    "rms_ref": {
                        "oneOf": [{"const": "auto"}, {"type": "number", "exclusiveMinimum": 0}]
                    },
                },
            },
            "kalman": {
                "type": "object",
                "additionalProperties": False,
                "properties": {"q": _NONNEG, "r": {"type": "number", "exclusiveMinimum": 0}},
            },
            "loss_weights": {
                "type": "object",
                "additionalProperties": False,
                "properties": {
                    "lambda_rec": _NONNEG,
                    "lambda_kp": _NONNEG,
                    "lambda_reg": _NONNEG,
                },
            },
            "categories": {"type": "array", "items": {"type": "string"}, "minItems": 1},
            "seeds": {
                "type": "object",
                "additionalProperties": False,
                "properties": {
                    "weights": _INT_NONNEG,
                    "noise": _INT_NONNEG,
                    "data": _INT_NONNEG,
                },
            },
            "window": {"oneOf": [{"type": "null"}, _INT_POS]},
            "overlap": _INT_NONNEG,
        },
    }


@dataclass(frozen=True)
class Seeds:
    weights: int = 0
    noise: int = 0
    data: int = 1234


@dataclass(frozen=True)
class SessionConfig:
    """Typed view of the config document with defaults filled in."""

    n_kp: int = DEFAULT_N_KP
    regions: dict = field(default_factory=lambda: {k: tuple(v) for k, v in DEFAULT_REGIONS.items()})
    dims: ModelDims = field(default_factory=ModelDims)
    scale: ScaleConfig = field(default_factory=ScaleConfig)
    kalman: KalmanParams = field(default_factory=KalmanParams)
    loss_weights: LossWeights = field(default_factory=LossWeights)
    categories: tuple = DEFAULT_CATEGORIES
    seeds: Seeds = field(default_factory=Seeds)
    window: int | None = None
    overlap: int = DEFAULT_OVERLAP

    def __post_init__(self):
        object.__setattr__(self, "regions", {k: tuple(v) for k, v in self.regions.items()})
        object.__setattr__(self, "categories", tuple(self.categories))
        if self.dims.n_kp != self.n_kp:
            raise ConfigError(
                f"config: dims.n_kp={self.dims.n_kp} disagrees with n_kp={self.n_kp}"
            )
        if "lips" not in self.regions:
            raise ConfigError("config: regions must include 'lips'")
        if len(self.regions["lips"]) != self.dims.lip_count:
            raise ConfigError(
                f"config: lips region has {len(self.regions['lips'])} indices, "
                f"dims.lip_count is {self.dims.lip_count}"
            )
        try:
            validate_regions(self.region_masks(), self.n_kp)
        except FacemotionError as exc:
            raise ConfigError(f"config: {exc}") from exc
        if "neutral" not in self.categories:
            raise ConfigError("config: categories must include 'neutral'")

    def region_masks(self) -> dict:
        return {name: RegionMask(name, idx) for name, idx in self.regions.items()}


def _validate(obj, schema: dict, what: str) -> None:
    try:
        jsonschema.validate(obj, schema)
    except jsonschema.ValidationError as exc:
        path = "".join(f"[{p!r}]" for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{what}: {path}: {exc.message}") from exc


def config_from_obj(obj: dict) -> SessionConfig:
    _validate(obj, config_schema(), "config")
    kw: dict = {}
    if "n_kp" in obj:
        kw["n_kp"] = obj["n_kp"]
    if "regions" in obj:
        kw["regions"] = {k: tuple(v) for k, v in obj["regions"].items()}
    dims_obj = dict(obj.get("dims", {}))
    dims_obj.setdefault("n_kp", kw.get("n_kp", DEFAULT_N_KP))
    try:
        kw["dims"] = ModelDims(**dims_obj)
        if "scale" in obj:
            kw["scale"] = ScaleConfig(**obj["scale"])
        if "kalman" in obj:
            kw["kalman"] = KalmanParams(**obj["kalman"])
        if "loss_weights" in obj:
            kw["loss_weights"] = LossWeights(**obj["loss_weights"])
        if "categories" in obj:
            kw["categories"] = tuple(obj["categories"])
        if "seeds" in obj:
            kw["seeds"] = Seeds(**obj["seeds"])
        if "window" in obj:
            kw["window"] = obj["window"]
        if "overlap" in obj:
            kw["overlap"] = obj["overlap"]
        return SessionConfig(**kw)
    except ConfigError:
        raise
    except FacemotionError as exc:
        raise ConfigError(f"config: {exc}") from exc


def config_to_obj(cfg: SessionConfig) -> dict:
    return {
        "version": CONFIG_VERSION,
        "n_kp": cfg.n_kp,
        "regions": {k: list(v) for k, v in cfg.regions.items()},
        "dims": {f.name: getattr(cfg.dims, f.name) for f in fields(ModelDims)},
        "scale": {"f_min": cfg.scale.f_min, "f_max": cfg.scale.f_max, "rms_ref": cfg.scale.rms_ref},
        "kalman": {"q": cfg.kalman.q, "r": cfg.kalman.r},
        "loss_weights": {
            "lambda_rec": cfg.loss_weights.lambda_rec,
            "lambda_kp": cfg.loss_weights.lambda_kp,
            "lambda_reg": cfg.loss_weights.lambda_reg,
        },
        "categories": list(cfg.categories),
        "seeds": {"weights": cfg.seeds.weights, "noise": cfg.seeds.noise, "data": cfg.seeds.data},
        "window": cfg.window,
        "overlap": cfg.overlap,
    }


def load_config(path: str | None) -> SessionConfig:
    """Read a config file; None means all defaults."""
    if path is None:
        return SessionConfig()
    with open(path, "r", encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path}: invalid JSON: {exc}") from exc
    return config_from_obj(obj)


# -- control schedules ------------------------------------------------------

def schedule_schema() -> dict:
    """Schema for (possibly partial) control schedule documents."""
    emotion_pair = {
        "type": "object",
        "additionalProperties": False,
        "properties": {"category": {"type": "string"}, "intensity": _NONNEG},
        "required": ["category", "intensity"],
    }
    return {
        "type": "object",
        "additionalProperties": False,
        "properties": {
            "lip_scale": {
                "oneOf": [
                    {
                        "type": "object",
                        "additionalProperties": False,
                        "properties": {"mode": {"const": "off"}},
                        "required": ["mode"],
                    },
                    {
                        "type": "object",
                        "additionalProperties": False,
                        "properties": {"mode": {"const": "fixed"}, "factor": _NONNEG},
                        "required": ["mode", "factor"],
                    },
                    {
                        "type": "object",
                        "additionalProperties": False,
                        "properties": {
                            "mode": {"const": "amplitude"},
                            "f_min": _NONNEG,
                            "f_max": _NONNEG,
                            "rms_ref": {
                                "oneOf": [
                                    {"const": "auto"},
                                    {"type": "number", "exclusiveMinimum": 0},
                                ]
                            },
                        },
                        "required": ["mode"],
                    },
                ]
            },
            "phoneme_edits": {
                "type": "array",
                "items": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "name": {"type": "string", "minLength": 1},
                        "lambda": _NUM,
                        "start": _INT_NONNEG,
                        "stop": _INT_NONNEG,
                    },
                    "required": ["name", "lambda", "start", "stop"],
                },
            },
            "emotion": {
                "oneOf": [
                    {
                        "type": "object",
                        "additionalProperties": False,
                        "properties": {
                            "mode": {"const": "global"},
                            "category": {"type": "string"},
                            "intensity": _NONNEG,
                        },
                        "required": ["mode", "category", "intensity"],
                    },
                    {
                        "type": "object",
                        "additionalProperties": False,
                        "properties": {
                            "mode": {"const": "regional"},
                            "regions": {
                                "type": "object",
                                "additionalProperties": emotion_pair,
                            },
                        },
                        "required": ["mode", "regions"],
                    },
                ]
            },
            "kalman": {
                "oneOf": [
                    {"type": "null"},
                    {
                        "type": "object",
                        "additionalProperties": False,
                        "properties": {
                            "q": _NONNEG,
                            "r": {"type": "number", "exclusiveMinimum": 0},
                        },
                    },
                ]
            },
        },
    }


def _lip_scale_from_obj(obj: dict) -> LipScale:
    mode = obj["mode"]
    if mode == "off":
        return LipScale.off()
    if mode == "fixed":
        return LipScale.fixed(obj["factor"])
    cfg = ScaleConfig(
        f_min=obj.get("f_min", 0.25),
        f_max=obj.get("f_max", 2.0),
        rms_ref=obj.get("rms_ref", "auto"),
    )
    return LipScale.amplitude(cfg)


def emotion_from_obj(obj: dict) -> EmotionSpec:
    if obj["mode"] == "global":
        return EmotionSpec(EmotionMode.GLOBAL, (obj["category"], obj["intensity"]), None)
    regional = {
        name: (pair["category"], pair["intensity"]) for name, pair in obj["regions"].items()
    }
    return EmotionSpec(EmotionMode.REGIONAL, None, regional)


def schedule_from_obj(obj: dict, base: ControlSchedule | None = None) -> ControlSchedule:
    """Build a schedule from a document; absent fields come from `base`."""
    _validate(obj, schedule_schema(), "schedule")
    base = base if base is not None else ControlSchedule()
    try:
        lip_scale = (
            _lip_scale_from_obj(obj["lip_scale"]) if "lip_scale" in obj else base.lip_scale
        )
        if "phoneme_edits" in obj:
            edits = tuple(
                PhonemeEdit(e["name"], e["lambda"], e["start"], e["stop"])
                for e in obj["phoneme_edits"]
            )
        else:
            edits = base.phoneme_edits
        emotion = emotion_from_obj(obj["emotion"]) if "emotion" in obj else base.emotion
        if "kalman" in obj:
            kalman = None if obj["kalman"] is None else KalmanParams(**obj["kalman"])
        else:
            kalman = base.kalman
        return ControlSchedule(lip_scale, edits, emotion, kalman)
    except ConfigError:
        raise
    except FacemotionError as exc:
        raise ConfigError(f"schedule: {exc}") from exc


def _lip_scale_to_obj(ls: LipScale) -> dict:
    if ls.mode == "off":
        return {"mode": "off"}
    if ls.mode == "fixed":
        return {"mode": "fixed", "factor": ls.factor}
    return {
        "mode": "amplitude",
        "f_min": ls.config.f_min,
        "f_max": ls.config.f_max,
        "rms_ref": ls.config.rms_ref,
    }


def emotion_to_obj(spec: EmotionSpec) -> dict:
    if spec.mode is EmotionMode.GLOBAL:
        cat, intensity = spec.global_emotion
        return {"mode": "global", "category": cat, "intensity": intensity}
    return {
        "mode": "regional",
        "regions": {
            name: {"category": cat, "intensity": intensity}
            for name, (cat, intensity) in spec.regional.items()
        },
    }


def schedule_to_obj(s: ControlSchedule) -> dict:
    return {
        "lip_scale": _lip_scale_to_obj(s.lip_scale),
        "phoneme_edits": [
            {"name": e.name, "lambda": e.lam, "start": e.start, "stop": e.stop}
            for e in s.phoneme_edits
        ],
        "emotion": emotion_to_obj(s.emotion),
        "kalman": None if s.kalman is None else {"q": s.kalman.q, "r": s.kalman.r},
    }


def load_schedule(path: str, base: ControlSchedule | None = None) -> ControlSchedule:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"schedule {path}: invalid JSON: {exc}") from exc
    return schedule_from_obj(obj, base)
