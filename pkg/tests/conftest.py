"""Shared fixtures: small model dims, seeded weights, random geometry helpers."""

import numpy as np
import pytest

from facemotion import (
    AudioFeatureSequence,
    KeypointSet,
    ModelDims,
    RegionMask,
    RigidPose,
    init_weights,
)

# Small enough that predictor calls take milliseconds; n_heads divides d_model.
SMALL_DIMS = ModelDims(
    n_kp=6,
    d_audio=8,
    d_model=8,
    n_layers=1,
    n_heads=2,
    ff_hidden=16,
    refiner_hidden=16,
    n_styles=4,
    cond_dim=4,
    lip_count=2,
    max_window=50,
)
SMALL_LIPS = RegionMask("lips", (2, 4))


@pytest.fixture(scope="session")
def small_dims():
    return SMALL_DIMS


@pytest.fixture(scope="session")
def small_lips():
    return SMALL_LIPS


@pytest.fixture(scope="session")
def small_weights():
    return init_weights(0, SMALL_DIMS)


def rotation_about(axis: np.ndarray, angle: float) -> np.ndarray:
    """Row-vector rotation matrix: v @ R rotates v by angle about axis.

    Rodrigues formula for the column convention, transposed once at the end.
    """
    a = np.asarray(axis, dtype=np.float64)
    a = a / np.linalg.norm(a)
    kx, ky, kz = a
    k = np.array([[0.0, -kz, ky], [kz, 0.0, -kx], [-ky, kx, 0.0]])
    col = np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)
    return col.T


def random_pose(rng: np.random.Generator) -> RigidPose:
    axis = rng.normal(size=3)
    angle = rng.uniform(-np.pi, np.pi)
    return RigidPose(
        rotation=rotation_about(axis, angle),
        translation=rng.normal(size=3),
        scale=float(rng.uniform(0.5, 2.0)),
    )


def random_keypoints(rng: np.random.Generator, n_kp: int) -> KeypointSet:
    return KeypointSet(rng.normal(size=(n_kp, 3)))


def make_audio(rng: np.random.Generator, n_frames: int, d_audio: int) -> AudioFeatureSequence:
    return AudioFeatureSequence(
        embeddings=rng.normal(size=(n_frames, d_audio)),
        rms=rng.uniform(0.0, 1.0, size=n_frames),
    )
