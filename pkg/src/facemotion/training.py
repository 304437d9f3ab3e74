"""Desk-scale refiner training: analytic backprop, Adam, synthetic data.

The refiner MLP is trained on L_refine = L_sync + lambda_kp L_kp +
lambda_reg L_reg over 5-frame windows, with the toy linear sync providers.
Gradients are hand-derived (the MLP is two tanh layers plus a linear head)
and validated against central finite differences by the gradient checker.

The synthetic dataset maps audio features to lip deformations through a
fixed hidden linear map plus Gaussian noise, so the objective is learnable
and the training-sanity criterion is checkable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import RegionMask
from .errors import DimensionError, TrainingError
from .losses import SYNC_FRAMES, LinearEmbedding, LossWeights, default_sync_providers
from .models import ModelDims, ModelWeights, NoiseSpec

_NORM_FLOOR = 1e-30

_REFINER_KEYS = ("refiner.w0", "refiner.b0", "refiner.w1", "refiner.b1", "refiner.w2", "refiner.b2")


def refiner_param_shapes(dims: ModelDims) -> dict:
    in_dim = dims.d_audio + dims.n_kp * 3
    h = dims.refiner_hidden
    return {
        "refiner.w0": (in_dim, h),
        "refiner.b0": (h,),
        "refiner.w1": (h, h),
        "refiner.b1": (h,),
        "refiner.w2": (h, dims.lip_count * 3),
        "refiner.b2": (dims.lip_count * 3,),
    }


def pack_refiner(tensors: dict) -> np.ndarray:
    """Flatten the six refiner tensors into one parameter vector."""
    return np.concatenate([np.asarray(tensors[k], dtype=np.float64).reshape(-1) for k in _REFINER_KEYS])


def unpack_refiner(params: np.ndarray, dims: ModelDims) -> dict:
    shapes = refiner_param_shapes(dims)
    expected = sum(int(np.prod(s)) for s in shapes.values())
    if params.size != expected:
        raise DimensionError(f"parameter vector has {params.size} entries, expected {expected}")
    out = {}
    offset = 0
    for key in _REFINER_KEYS:
        shape = shapes[key]
        size = int(np.prod(shape))
        out[key] = params[offset : offset + size].reshape(shape)
        offset += size
    return out


@dataclass(frozen=True)
class SyntheticDataset:
    """Batched 5-frame training windows with pre-drawn refiner input noise."""

    audio: np.ndarray      # (n, 5, d_audio)
    k_rec: np.ndarray      # (n, 5, n_kp, 3)
    k_gt: np.ndarray       # (n, 5, n_kp, 3)
    input_noise: np.ndarray  # (n, 5, n_kp, 3)
    lip_indices: np.ndarray

    @property
    def n_windows(self) -> int:
        return self.audio.shape[0]


def make_synthetic_dataset(
    seed: int,
    dims: ModelDims,
    lip_mask: RegionMask,
    n_windows: int = 256,
    noise: NoiseSpec = NoiseSpec(),
    target_scale: float = 0.1,
    target_noise: float = 0.01,
) -> SyntheticDataset:
    """Lip deformations from a fixed hidden linear map over audio features.

    k_gt equals k_rec except on lip rows, which gain `audio @ hidden_map`
    plus Gaussian noise of scale `target_noise`. The refiner input noise is
    pre-drawn here so every loss evaluation is deterministic.
    """
    if len(lip_mask) != dims.lip_count:
        raise DimensionError(
            f"lip mask size {len(lip_mask)} does not match dims.lip_count={dims.lip_count}"
        )
    rng = np.random.default_rng(seed)
    lip3 = dims.lip_count * 3
    hidden_map = rng.standard_normal((dims.d_audio, lip3)) * (target_scale / np.sqrt(dims.d_audio))
    base = rng.uniform(-0.5, 0.5, size=(dims.n_kp, 3))
    audio = rng.standard_normal((n_windows, SYNC_FRAMES, dims.d_audio))
    k_rec = base + rng.normal(0.0, 0.05, size=(n_windows, SYNC_FRAMES, dims.n_kp, 3))
    k_gt = np.array(k_rec)
    lip_idx = lip_mask.index_array()
    target = audio @ hidden_map + rng.normal(0.0, target_noise, size=(n_windows, SYNC_FRAMES, lip3))
    k_gt[:, :, lip_idx, :] += target.reshape(n_windows, SYNC_FRAMES, dims.lip_count, 3)
    noise_rng = np.random.default_rng(noise.seed)
    input_noise = (
        noise_rng.normal(0.0, noise.sigma, size=k_rec.shape) if noise.sigma > 0 else np.zeros_like(k_rec)
    )
    return SyntheticDataset(audio, k_rec, k_gt, input_noise, lip_idx)


def _batched_loss_and_grad(
    params: np.ndarray,
    data: SyntheticDataset,
    sv: LinearEmbedding,
    sa: LinearEmbedding,
    lw: LossWeights,
    dims: ModelDims,
):
    """Mean per-window L_refine over the dataset, with its gradient."""
    t = unpack_refiner(params, dims)
    n, f = data.n_windows, SYNC_FRAMES
    n_kp3 = dims.n_kp * 3
    lip_idx = data.lip_indices

    x = np.concatenate(
        [data.audio.reshape(n * f, -1), (data.k_rec + data.input_noise).reshape(n * f, n_kp3)],
        axis=1,
    )
    z0 = x @ t["refiner.w0"] + t["refiner.b0"]
    h0 = np.tanh(z0)
    z1 = h0 @ t["refiner.w1"] + t["refiner.b1"]
    h1 = np.tanh(z1)
    out = h1 @ t["refiner.w2"] + t["refiner.b2"]

    k_refine = np.array(data.k_rec)
    k_refine[:, :, lip_idx, :] = out.reshape(n, f, dims.lip_count, 3)

    diff_kp = (k_refine - data.k_gt).reshape(n, f, n_kp3)
    diff_reg = (k_refine - data.k_rec).reshape(n, f, n_kp3)
    norms_kp = np.linalg.norm(diff_kp, axis=2)
    norms_reg = np.linalg.norm(diff_reg, axis=2)

    motion = k_refine.reshape(n, f * n_kp3)
    v = motion @ sv.matrix.T
    a = data.audio.reshape(n, -1) @ sa.matrix.T
    nv = np.linalg.norm(v, axis=1)
    na = np.linalg.norm(a, axis=1)
    dot = np.einsum("ij,ij->i", v, a)
    sync = -dot / (nv * na)

    per_window = sync + lw.lambda_kp * norms_kp.sum(axis=1) + lw.lambda_reg * norms_reg.sum(axis=1)
    loss = float(per_window.mean())

    # dL/dK_refine
    g_k = np.zeros_like(k_refine).reshape(n, f, n_kp3)
    g_k += (lw.lambda_kp / n) * diff_kp / np.maximum(norms_kp, _NORM_FLOOR)[:, :, None]
    g_k += (lw.lambda_reg / n) * diff_reg / np.maximum(norms_reg, _NORM_FLOOR)[:, :, None]
    dv = (-a / (nv * na)[:, None] + (dot / (nv**3 * na))[:, None] * v) / n
    g_k += (dv @ sv.matrix).reshape(n, f, n_kp3)

    g_out = g_k.reshape(n, f, dims.n_kp, 3)[:, :, lip_idx, :].reshape(n * f, -1)
    grad = {}
    grad["refiner.w2"] = h1.T @ g_out
    grad["refiner.b2"] = g_out.sum(axis=0)
    g_h1 = g_out @ t["refiner.w2"].T
    g_z1 = g_h1 * (1.0 - h1**2)
    grad["refiner.w1"] = h0.T @ g_z1
    grad["refiner.b1"] = g_z1.sum(axis=0)
    g_h0 = g_z1 @ t["refiner.w1"].T
    g_z0 = g_h0 * (1.0 - h0**2)
    grad["refiner.w0"] = x.T @ g_z0
    grad["refiner.b0"] = g_z0.sum(axis=0)
    return loss, pack_refiner(grad)


def refiner_loss_fn(
    data: SyntheticDataset,
    dims: ModelDims,
    lw: LossWeights = LossWeights(),
    sv: LinearEmbedding | None = None,
    sa: LinearEmbedding | None = None,
):
    """Closure (params) -> (loss, grad) over a dataset; grad_check compatible."""
    if sv is None or sa is None:
        sv, sa = default_sync_providers(dims.n_kp, dims.d_audio)
    return lambda params: _batched_loss_and_grad(params, data, sv, sa, lw, dims)


@dataclass
class AdamConfig:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def train_refiner(
    dataset: SyntheticDataset,
    w0: ModelWeights,
    steps: int = 500,
    lr: float = 1e-4,
    lw: LossWeights = LossWeights(),
    sv: LinearEmbedding | None = None,
    sa: LinearEmbedding | None = None,
) -> tuple:
    """Full-batch Adam on the refiner; returns (weights, loss trace).

    The trace has steps + 1 entries: the loss before each update and the
    final loss after the last one. Deterministic given the dataset and w0.
    """
    if dataset.n_windows == 0:
        raise TrainingError("dataset is empty")
    dims = w0.dims
    fn = refiner_loss_fn(dataset, dims, lw, sv, sa)
    params = pack_refiner(w0.tensors)
    cfg = AdamConfig(lr=lr)
    m = np.zeros_like(params)
    v = np.zeros_like(params)
    trace: list[float] = []
    for step in range(steps):
        loss, grad = fn(params)
        if not np.isfinite(loss):
            raise TrainingError(f"non-finite loss at step {step}", trace=trace)
        trace.append(loss)
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad**2
        m_hat = m / (1.0 - cfg.beta1 ** (step + 1))
        v_hat = v / (1.0 - cfg.beta2 ** (step + 1))
        params = params - cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.eps)
    final_loss, _ = fn(params)
    if not np.isfinite(final_loss):
        raise TrainingError("non-finite loss after final step", trace=trace)
    trace.append(final_loss)

    tensors = dict(w0.tensors)
    tensors.update(unpack_refiner(params, dims))
    trained = ModelWeights(dims=dims, tensors=tensors, categories=w0.categories, version=w0.version)
    return trained, trace


def write_loss_trace(trace, stream) -> None:
    """Comma-separated step,value rows."""
    stream.write("step,value\n")
    for step, value in enumerate(trace):
        stream.write(f"{step},{format(float(value), '.17g')}\n")
