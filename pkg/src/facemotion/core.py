"""Keypoint and deformation algebra.

Implicit facial keypoints are n_kp x 3 coordinate grids in normalized scene
units. A rigid pose (R, t, s) composes canonical keypoints and an expression
offset into posed keypoints:

    K_ori = s * (K_c @ R + delta) + t        (row-vector convention)

Driven keypoints add lip-sync and emotion offset fields elementwise:

    K_d = K_ori + D_l + D_e

All types are immutable values; every operation is pure.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, InvalidPoseError, MaskError

DEFAULT_N_KP = 21

# Default facial regions for a 21-point session. The lip mask has four
# indices; regions are pairwise disjoint. All of this is session
# configuration and may be overridden in the config document.
DEFAULT_REGIONS = {
    "lips": (6, 12, 14, 17),
    "eyes": (11, 13, 15, 16),
    "brows": (1, 2, 9, 10),
    "other": (0, 3, 4, 5, 7, 8, 18, 19, 20),
}

ORTHO_TOL = 1e-9


def _as_grid(values, n_cols: int, what: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != n_cols:
        raise DimensionError(f"{what} must be (n, {n_cols}), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DimensionError(f"{what} contains non-finite values")
    arr = arr.copy()
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class KeypointSet:
    """An n_kp x 3 grid of keypoint coordinates."""

    coords: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "coords", _as_grid(self.coords, 3, "keypoint coords"))

    @property
    def n_kp(self) -> int:
        return self.coords.shape[0]

    def __eq__(self, other) -> bool:
        return isinstance(other, KeypointSet) and np.array_equal(self.coords, other.coords)


@dataclass(frozen=True)
class RigidPose:
    """Rotation R (3x3, orthonormal, det +1), translation t (3,) and scale s > 0."""

    rotation: np.ndarray
    translation: np.ndarray
    scale: float = 1.0

    def __post_init__(self):
        rot = np.asarray(self.rotation, dtype=np.float64)
        if rot.shape != (3, 3):
            raise DimensionError(f"rotation must be 3x3, got {rot.shape}")
        err = np.max(np.abs(rot.T @ rot - np.eye(3)))
        if err > ORTHO_TOL:
            raise InvalidPoseError(f"rotation not orthonormal (max deviation {err:.3e})")
        det = np.linalg.det(rot)
        if abs(det - 1.0) > ORTHO_TOL:
            raise InvalidPoseError(f"rotation determinant {det:.12f}, expected +1")
        trans = np.asarray(self.translation, dtype=np.float64)
        if trans.shape != (3,):
            raise DimensionError(f"translation must be (3,), got {trans.shape}")
        if not (np.isfinite(self.scale) and self.scale > 0):
            raise InvalidPoseError(f"scale must be positive, got {self.scale}")
        rot = rot.copy()
        rot.setflags(write=False)
        trans = trans.copy()
        trans.setflags(write=False)
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", trans)
        object.__setattr__(self, "scale", float(self.scale))

    @staticmethod
    def identity() -> "RigidPose":
        return RigidPose(np.eye(3), np.zeros(3), 1.0)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, RigidPose)
            and self.scale == other.scale
            and np.array_equal(self.rotation, other.rotation)
            and np.array_equal(self.translation, other.translation)
        )


class DeformationKind(enum.Enum):
    LIP_SYNC = "lip_sync"
    EMOTION = "emotion"
    RAW = "raw"


@dataclass(frozen=True)
class Deformation:
    """An n_kp x 3 offset field tagged by what produced it.

    A LIP_SYNC deformation is zero on every row outside the session lip mask;
    construction sites (mask_deformation, lip_sync_deformation) enforce this.
    """

    offsets: np.ndarray
    kind: DeformationKind = DeformationKind.RAW

    def __post_init__(self):
        object.__setattr__(self, "offsets", _as_grid(self.offsets, 3, "deformation offsets"))

    @property
    def n_kp(self) -> int:
        return self.offsets.shape[0]

    @staticmethod
    def zeros(n_kp: int, kind: DeformationKind = DeformationKind.RAW) -> "Deformation":
        return Deformation(np.zeros((n_kp, 3)), kind)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Deformation)
            and self.kind is other.kind
            and np.array_equal(self.offsets, other.offsets)
        )


@dataclass(frozen=True)
class RegionMask:
    """A named subset of keypoint rows."""

    name: str
    indices: tuple = field(default_factory=tuple)

    def __post_init__(self):
        idx = tuple(sorted(int(i) for i in self.indices))
        if len(set(idx)) != len(idx):
            raise MaskError(f"region '{self.name}' has duplicate indices")
        if idx and idx[0] < 0:
            raise MaskError(f"region '{self.name}' has negative index {idx[0]}")
        object.__setattr__(self, "indices", idx)

    def validate_for(self, n_kp: int) -> None:
        if self.indices and self.indices[-1] >= n_kp:
            raise MaskError(
                f"region '{self.name}' index {self.indices[-1]} out of range for n_kp={n_kp}"
            )

    def index_array(self) -> np.ndarray:
        return np.asarray(self.indices, dtype=np.intp)

    def __len__(self) -> int:
        return len(self.indices)


def default_regions(n_kp: int = DEFAULT_N_KP) -> dict:
    """Session region map for the default 21-point layout."""
    regions = {name: RegionMask(name, idx) for name, idx in DEFAULT_REGIONS.items()}
    validate_regions(regions, n_kp)
    return regions


def lip_region_fallback(n_kp: int, lip_count: int) -> dict:
    """Regions for non-default layouts: the first lip_count rows are lips."""
    if lip_count > n_kp:
        raise MaskError(f"lip_count {lip_count} exceeds n_kp {n_kp}")
    return {
        "lips": RegionMask("lips", tuple(range(lip_count))),
        "other": RegionMask("other", tuple(range(lip_count, n_kp))),
    }


def validate_regions(regions: dict, n_kp: int) -> None:
    """Check all masks are in range and pairwise disjoint."""
    seen: dict[int, str] = {}
    for name, mask in regions.items():
        mask.validate_for(n_kp)
        for i in mask.indices:
            if i in seen:
                raise MaskError(f"regions '{seen[i]}' and '{name}' both contain index {i}")
            seen[i] = name


def _check_same_shape(a: np.ndarray, b: np.ndarray, what: str) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{what}: shapes {a.shape} and {b.shape} do not agree")


def compose_keypoints(canonical: KeypointSet, pose: RigidPose, delta: Deformation) -> KeypointSet:
    """Compose posed keypoints: s * (K_c @ R + delta) + t.

    The expression offset is added after rotating the canonical grid and
    before applying scale and translation.
    """
    _check_same_shape(canonical.coords, delta.offsets, "compose_keypoints")
    posed = pose.scale * (canonical.coords @ pose.rotation + delta.offsets) + pose.translation
    return KeypointSet(posed)


def decompose_keypoints(posed: KeypointSet, pose: RigidPose, canonical: KeypointSet) -> Deformation:
    """Invert compose_keypoints for a known pose and canonical grid.

    delta = (K - t) / s - K_c @ R. Exact inverse since s > 0 and R is
    orthonormal.
    """
    _check_same_shape(posed.coords, canonical.coords, "decompose_keypoints")
    delta = (posed.coords - pose.translation) / pose.scale - canonical.coords @ pose.rotation
    return Deformation(delta, DeformationKind.RAW)


def apply_deformations(base: KeypointSet, lip: Deformation, emo: Deformation) -> KeypointSet:
    """Driven keypoints K_d = K_ori + D_l + D_e, elementwise.

    Argument order is not kind-checked (addition commutes, so a swapped
    LipSync/Emotion pair is accepted); RAW deformations carry no placement
    guarantee and trigger a warning.
    """
    _check_same_shape(base.coords, lip.offsets, "apply_deformations(lip)")
    _check_same_shape(base.coords, emo.offsets, "apply_deformations(emo)")
    for arg, d in (("lip", lip), ("emo", emo)):
        if d.kind is DeformationKind.RAW:
            warnings.warn(f"apply_deformations: {arg} argument has kind RAW", stacklevel=2)
    # sum the deformations first: IEEE addition commutes, so swapping the
    # two arguments stays bitwise identical
    return KeypointSet(base.coords + (lip.offsets + emo.offsets))


def mask_deformation(d: Deformation, mask: RegionMask) -> Deformation:
    """Keep rows inside the mask, zero all others. Kind is preserved."""
    mask.validate_for(d.n_kp)
    out = np.zeros_like(d.offsets)
    idx = mask.index_array()
    out[idx] = d.offsets[idx]
    return Deformation(out, d.kind)


def project_2d(k: KeypointSet) -> np.ndarray:
    """Drop the z column for display; returns an n_kp x 2 array."""
    return np.array(k.coords[:, :2])
