"""Training losses and the gradient-check harness.

Sequence losses sum per-frame Euclidean norms over flattened frames:

    L_rec = sum_t || pred_t - gt_t ||_2
    L_vel = sum_{t>=1} || (pred_t - pred_{t-1}) - (gt_t - gt_{t-1}) ||_2
    L_exp = L_vel + lambda_rec * L_rec

The sync loss is a negative cosine similarity between paired motion-window
and audio-window embeddings produced by pluggable providers:

    L_sync = - <S_v(motion), S_a(audio)> / (||S_v(motion)|| ||S_a(audio)||)

L_refine = L_sync + lambda_kp * L_kp + lambda_reg * L_reg with L_kp/L_reg the
windowed keypoint distances to ground truth / recomposed keypoints.

Frames may be Deformation, KeypointSet, scalars, or any array-like; each
frame is flattened before the norm, so scalar toys work as written.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError

SYNC_FRAMES = 5


@dataclass(frozen=True)
class LossWeights:
    lambda_rec: float = 1.0
    lambda_kp: float = 1.0
    lambda_reg: float = 1.0

    def __post_init__(self):
        for name in ("lambda_rec", "lambda_kp", "lambda_reg"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise DimensionError(f"{name} must be finite and >= 0, got {v}")


def _frame_array(frame) -> np.ndarray:
    if hasattr(frame, "offsets"):
        return np.asarray(frame.offsets, dtype=np.float64).reshape(-1)
    if hasattr(frame, "coords"):
        return np.asarray(frame.coords, dtype=np.float64).reshape(-1)
    return np.asarray(frame, dtype=np.float64).reshape(-1)


def _frames(seq, what: str) -> list:
    frames = [_frame_array(f) for f in seq]
    if frames and any(f.shape != frames[0].shape for f in frames):
        raise DimensionError(f"{what}: frames have mixed shapes")
    return frames


def _pairwise(pred, gt, what: str) -> tuple:
    p = _frames(pred, what)
    g = _frames(gt, what)
    if len(p) != len(g):
        raise DimensionError(f"{what}: sequence lengths {len(p)} vs {len(g)} differ")
    if p and p[0].shape != g[0].shape:
        raise DimensionError(f"{what}: frame shapes {p[0].shape} vs {g[0].shape} differ")
    return p, g


def loss_rec(pred, gt, use_l1: bool = False) -> float:
    """Reconstruction loss: sum of per-frame norms (L2 by default, L1 optional)."""
    p, g = _pairwise(pred, gt, "loss_rec")
    ord_ = 1 if use_l1 else 2
    return float(sum(np.linalg.norm(a - b, ord=ord_) for a, b in zip(p, g)))


def loss_vel(pred, gt) -> float:
    """Velocity loss: norms of frame-difference mismatches, from the second frame on."""
    p, g = _pairwise(pred, gt, "loss_vel")
    if len(p) < 2:
        raise DimensionError(f"loss_vel needs at least 2 frames, got {len(p)}")
    total = 0.0
    for t in range(1, len(p)):
        total += np.linalg.norm((p[t] - p[t - 1]) - (g[t] - g[t - 1]))
    return float(total)


def loss_exp(pred, gt, w: LossWeights = LossWeights(), use_l1: bool = False) -> float:
    """Expression predictor objective: L_vel + lambda_rec * L_rec."""
    return loss_vel(pred, gt) + w.lambda_rec * loss_rec(pred, gt, use_l1=use_l1)


@dataclass(frozen=True)
class SyncWindow:
    """Five consecutive motion frames paired with five audio feature rows."""

    motion: np.ndarray
    audio: np.ndarray

    def __post_init__(self):
        motion = np.asarray(self.motion, dtype=np.float64)
        audio = np.asarray(self.audio, dtype=np.float64)
        if motion.shape[0] != SYNC_FRAMES:
            raise DimensionError(f"sync window needs exactly {SYNC_FRAMES} motion frames")
        if audio.shape[0] != SYNC_FRAMES:
            raise DimensionError(f"sync window needs exactly {SYNC_FRAMES} audio rows")
        object.__setattr__(self, "motion", motion)
        object.__setattr__(self, "audio", audio)

    @property
    def motion_flat(self) -> np.ndarray:
        return self.motion.reshape(-1)

    @property
    def audio_flat(self) -> np.ndarray:
        return self.audio.reshape(-1)


class LinearEmbedding:
    """Fixed seeded linear map used as a toy sync-embedding provider."""

    def __init__(self, seed: int, in_dim: int, out_dim: int = 32):
        rng = np.random.default_rng(seed)
        self.matrix = rng.standard_normal((out_dim, in_dim)) / np.sqrt(in_dim)

    def __call__(self, flat: np.ndarray) -> np.ndarray:
        flat = np.asarray(flat, dtype=np.float64).reshape(-1)
        if flat.size != self.matrix.shape[1]:
            raise DimensionError(
                f"embedding input length {flat.size} != expected {self.matrix.shape[1]}"
            )
        return self.matrix @ flat


def default_sync_providers(n_kp: int, d_audio: int, embed_dim: int = 32, seed: int = 1234):
    """The (S_v, S_a) pair for flattened 5-frame keypoint/audio windows."""
    sv = LinearEmbedding(seed, SYNC_FRAMES * n_kp * 3, embed_dim)
    sa = LinearEmbedding(seed + 1, SYNC_FRAMES * d_audio, embed_dim)
    return sv, sa


def loss_sync(win: SyncWindow, sv, sa) -> float:
    """Negative cosine similarity between motion and audio embeddings."""
    ev = np.asarray(sv(win.motion_flat), dtype=np.float64).reshape(-1)
    ea = np.asarray(sa(win.audio_flat), dtype=np.float64).reshape(-1)
    if ev.shape != ea.shape:
        raise DimensionError(f"embedding lengths differ: {ev.shape} vs {ea.shape}")
    nv, na = np.linalg.norm(ev), np.linalg.norm(ea)
    if nv == 0 or na == 0:
        raise DimensionError("sync loss undefined for zero-norm embeddings")
    return float(-(ev @ ea) / (nv * na))


def loss_kp(k_refine_seq, k_gt_seq) -> float:
    """Windowed keypoint distance to ground truth."""
    p, g = _pairwise(k_refine_seq, k_gt_seq, "loss_kp")
    return float(sum(np.linalg.norm(a - b) for a, b in zip(p, g)))


def loss_reg(k_refine_seq, k_rec_seq) -> float:
    """Windowed keypoint distance to the recomposed keypoints."""
    p, g = _pairwise(k_refine_seq, k_rec_seq, "loss_reg")
    return float(sum(np.linalg.norm(a - b) for a, b in zip(p, g)))


def loss_refine(sync: float, kp: float, reg: float, w: LossWeights = LossWeights()) -> float:
    """Refiner objective: L_sync + lambda_kp * L_kp + lambda_reg * L_reg."""
    return float(sync + w.lambda_kp * kp + w.lambda_reg * reg)


def loss_cls(probs, label: int) -> float:
    """Cross entropy against a one-hot label: -log p[label].

    A zero probability at the label yields +inf, the degenerate flag value.
    """
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 1 or p.size < 2:
        raise DimensionError(f"probs must be a vector of >= 2 classes, got shape {p.shape}")
    if np.any(p < 0):
        raise DimensionError("probs must be non-negative")
    total = float(p.sum())
    if abs(total - 1.0) > 1e-9:
        raise DimensionError(f"probs sum to {total}, not 1 (tolerance 1e-9)")
    if not (0 <= label < p.size):
        raise DimensionError(f"label {label} out of range [0, {p.size})")
    if p[label] == 0.0:
        return math.inf
    return float(-np.log(p[label]))


def grad_check(f, params, h: float = 1e-5) -> float:
    """Compare analytic gradients against central finite differences.

    `f(params)` must return `(loss, grad)` with grad the analytic gradient.
    For every component i the numerical slope (f(p + h e_i) - f(p - h e_i))
    / (2h) is compared to the analytic one; the result is the largest
    |analytic_i - numerical_i| / max(|numerical_i|, 1e-8).
    """
    if h <= 0:
        raise DimensionError(f"step h must be positive, got {h}")
    params = np.asarray(params, dtype=np.float64)
    loss, grad = f(params)
    if not np.isfinite(loss):
        raise DimensionError(f"loss is non-finite at the checked point: {loss}")
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != params.shape:
        raise DimensionError(f"gradient shape {grad.shape} != params shape {params.shape}")
    worst = 0.0
    for i in range(params.size):
        bumped = params.copy()
        bumped[i] = params[i] + h
        up, _ = f(bumped)
        bumped[i] = params[i] - h
        down, _ = f(bumped)
        if not (np.isfinite(up) and np.isfinite(down)):
            raise DimensionError(f"loss non-finite while probing component {i}")
        numeric = (up - down) / (2.0 * h)
        err = abs(grad[i] - numeric) / max(abs(numeric), 1e-8)
        worst = max(worst, err)
    return float(worst)
