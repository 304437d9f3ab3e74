"""Lip-audio alignment controls.

The lip-sync deformation is the lip-row difference between refined and
original keypoints:

    D_l = (K_refine - K_ori) restricted to the lip mask

Controls operate on D_l: a clamped amplitude-driven scale factor, and
projection-based style editing along unit phoneme directions

    x' = x + (lambda - 1) (x . u) u

so the component of the lip deformation along a pronunciation direction is
scaled by lambda while the orthogonal complement is untouched.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Deformation, DeformationKind, KeypointSet, RegionMask
from .errors import ConfigError, DimensionError

UNIT_TOL = 1e-12


@dataclass(frozen=True)
class PhonemeVector:
    """Unit direction in flattened lip-deformation space for one pronunciation."""

    name: str
    direction: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=np.float64)
        if d.ndim != 1 or d.size == 0 or d.size % 3 != 0:
            raise DimensionError(
                f"phoneme '{self.name}' direction must be a flat 3k vector, got shape {d.shape}"
            )
        norm = np.linalg.norm(d)
        if abs(norm - 1.0) > 1e-9:
            raise DimensionError(
                f"phoneme '{self.name}' direction norm {norm} is not 1 (normalize at build time)"
            )
        d = d.copy()
        d.setflags(write=False)
        object.__setattr__(self, "direction", d)


@dataclass(frozen=True)
class ScaleConfig:
    """Amplitude-to-scale mapping: f = clamp(rms / rms_ref, f_min, f_max)."""

    f_min: float = 0.25
    f_max: float = 2.0
    rms_ref: float | str = "auto"

    def __post_init__(self):
        if not (0 <= self.f_min <= self.f_max):
            raise ConfigError(f"need 0 <= f_min <= f_max, got [{self.f_min}, {self.f_max}]")
        if self.rms_ref != "auto":
            ref = float(self.rms_ref)
            if not (np.isfinite(ref) and ref > 0):
                raise ConfigError(f"rms_ref must be positive or 'auto', got {self.rms_ref}")
            object.__setattr__(self, "rms_ref", ref)

    def resolve(self, rms: np.ndarray) -> "ScaleConfig":
        """Replace 'auto' with the utterance median RMS."""
        if self.rms_ref != "auto":
            return self
        ref = float(np.median(np.asarray(rms, dtype=np.float64)))
        if ref <= 0:
            raise ConfigError("utterance median RMS is zero; cannot auto-resolve rms_ref")
        return ScaleConfig(self.f_min, self.f_max, ref)


def lip_sync_deformation(
    k_refine: KeypointSet, k_ori: KeypointSet, lip_mask: RegionMask
) -> Deformation:
    """D_l = K_refine - K_ori on lip rows, exactly zero elsewhere."""
    if k_refine.coords.shape != k_ori.coords.shape:
        raise DimensionError(
            f"lip_sync_deformation: shapes {k_refine.coords.shape} vs {k_ori.coords.shape}"
        )
    lip_mask.validate_for(k_ori.n_kp)
    out = np.zeros_like(k_ori.coords)
    idx = lip_mask.index_array()
    out[idx] = k_refine.coords[idx] - k_ori.coords[idx]
    return Deformation(out, DeformationKind.LIP_SYNC)


def scale_factor(rms_frame: float, cfg: ScaleConfig) -> float:
    """Per-frame lip-scale factor from audio amplitude."""
    if cfg.rms_ref == "auto":
        raise ConfigError("scale_factor needs a resolved rms_ref (call cfg.resolve first)")
    if not (np.isfinite(rms_frame) and rms_frame >= 0):
        raise DimensionError(f"rms must be finite and >= 0, got {rms_frame}")
    return float(min(max(rms_frame / cfg.rms_ref, cfg.f_min), cfg.f_max))


def scale_deformation(d: Deformation, f: float) -> Deformation:
    """Multiply every offset by f; kind is preserved."""
    if not np.isfinite(f):
        raise DimensionError(f"scale factor must be finite, got {f}")
    return Deformation(d.offsets * f, d.kind)


def style_edit(
    d: Deformation, p: PhonemeVector, lam: float, lip_mask: RegionMask
) -> Deformation:
    """Scale the component of the lip deformation along a phoneme direction.

    With x the flattened lip rows and u the unit direction:
    x' = x + (lam - 1)(x . u) u. Rows outside the lip mask stay untouched.
    """
    if not np.isfinite(lam):
        raise DimensionError(f"lambda must be finite, got {lam}")
    if d.kind is not DeformationKind.LIP_SYNC:
        raise DimensionError(f"style_edit expects a lip-sync deformation, got kind {d.kind.value}")
    lip_mask.validate_for(d.n_kp)
    if p.direction.size != len(lip_mask) * 3:
        raise DimensionError(
            f"phoneme '{p.name}' direction length {p.direction.size} "
            f"does not match lip mask size {len(lip_mask) * 3}"
        )
    idx = lip_mask.index_array()
    x = d.offsets[idx].reshape(-1)
    x = x + (lam - 1.0) * (x @ p.direction) * p.direction
    out = np.array(d.offsets)
    out[idx] = x.reshape(len(lip_mask), 3)
    return Deformation(out, d.kind)


def build_phoneme_vector(frames, lip_mask: RegionMask, name: str) -> PhonemeVector:
    """Unit phoneme direction: normalized mean of flattened lip rows."""
    frames = list(frames)
    if not frames:
        raise DimensionError("build_phoneme_vector needs at least one frame")
    idx = lip_mask.index_array()
    lip_mask.validate_for(frames[0].n_kp)
    mean = np.mean([f.offsets[idx].reshape(-1) for f in frames], axis=0)
    norm = np.linalg.norm(mean)
    if norm <= UNIT_TOL:
        raise DimensionError(f"mean lip deformation for '{name}' has zero norm")
    return PhonemeVector(name, mean / norm)
