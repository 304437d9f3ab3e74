"""Toy-scale neural predictors and their weight store.

Two autoregressive attention decoders map per-frame audio embeddings to
expression offsets: a style-conditioned expression predictor and a
condition-conditioned combined predictor (used for emotion synthesis). A small
MLP refines the lip rows of recomposed keypoints:

    K_rec    = K_ori with its expression offset replaced by the prediction
    K_refine = MLP(e_a, K_rec + z)   written into lip rows only

All parameters are explicit float64 tensors, deterministically initialized
from a seed and serialized to a self-describing text container.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .core import Deformation, DeformationKind, KeypointSet, RegionMask, RigidPose
from .errors import DimensionError, FormatError, VersionError, WeightsError

WEIGHTS_VERSION = 1

DEFAULT_CATEGORIES = (
    "neutral",
    "happy",
    "sad",
    "angry",
    "surprised",
    "fear",
    "disgust",
    "contempt",
)

_LN_EPS = 1e-5


@dataclass(frozen=True)
class ModelDims:
    """Dimension record shared by the predictors and the refiner."""

    n_kp: int = 21
    d_audio: int = 64
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    ff_hidden: int = 128
    refiner_hidden: int = 128
    n_styles: int = 8
    cond_dim: int = 16
    lip_count: int = 4
    max_window: int = 50
    noise_sigma: float = 1e-3

    def __post_init__(self):
        for name in (
            "n_kp", "d_audio", "d_model", "n_layers", "n_heads",
            "ff_hidden", "refiner_hidden", "n_styles", "cond_dim",
            "lip_count", "max_window",
        ):
            v = getattr(self, name)
            if not (isinstance(v, int) and v > 0):
                raise WeightsError(f"dimension {name} must be a positive integer, got {v!r}")
        if self.d_model % self.n_heads != 0:
            raise WeightsError(
                f"n_heads={self.n_heads} does not divide d_model={self.d_model}"
            )
        if not (np.isfinite(self.noise_sigma) and self.noise_sigma >= 0):
            raise WeightsError(f"noise_sigma must be >= 0, got {self.noise_sigma}")


@dataclass(frozen=True)
class AudioFeatureSequence:
    """Per-frame audio embeddings plus per-frame RMS amplitude, 25 fps aligned."""

    embeddings: np.ndarray
    rms: np.ndarray

    def __post_init__(self):
        emb = np.asarray(self.embeddings, dtype=np.float64)
        rms = np.asarray(self.rms, dtype=np.float64)
        if emb.ndim != 2:
            raise DimensionError(f"embeddings must be (T, D), got {emb.shape}")
        if rms.shape != (emb.shape[0],):
            raise DimensionError(
                f"rms length {rms.shape} does not match {emb.shape[0]} frames"
            )
        if not np.all(np.isfinite(emb)):
            raise DimensionError("audio embeddings contain non-finite values")
        if not (np.all(np.isfinite(rms)) and np.all(rms >= 0)):
            raise DimensionError("rms values must be finite and >= 0")
        emb = emb.copy()
        emb.setflags(write=False)
        rms = rms.copy()
        rms.setflags(write=False)
        object.__setattr__(self, "embeddings", emb)
        object.__setattr__(self, "rms", rms)

    def __len__(self) -> int:
        return self.embeddings.shape[0]

    @property
    def d_audio(self) -> int:
        return self.embeddings.shape[1]


@dataclass(frozen=True)
class StyleCode:
    """One-hot speaking-style selector, kept as an index."""

    index: int
    n_styles: int = 8

    def __post_init__(self):
        if not (0 <= self.index < self.n_styles):
            raise DimensionError(
                f"style index {self.index} out of range [0, {self.n_styles})"
            )


@dataclass(frozen=True)
class NoiseSpec:
    """Gaussian input noise for the lip refiner."""

    sigma: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if not (np.isfinite(self.sigma) and self.sigma >= 0):
            raise DimensionError(f"noise sigma must be >= 0, got {self.sigma}")


def tensor_shapes(dims: ModelDims, n_categories: int) -> dict:
    """Canonical name -> shape map for every parameter tensor."""
    d = dims.d_model
    shapes: dict[str, tuple] = {}
    for prefix, has_style, cond in (
        ("predictor", True, 0),
        ("cpred", False, dims.cond_dim),
    ):
        if has_style:
            shapes[f"{prefix}.style_table"] = (dims.n_styles, d)
        shapes[f"{prefix}.pos_table"] = (dims.max_window, d)
        shapes[f"{prefix}.in_proj.weight"] = (dims.n_kp * 3 + cond, d)
        shapes[f"{prefix}.in_proj.bias"] = (d,)
        shapes[f"{prefix}.audio_proj.weight"] = (dims.d_audio, d)
        shapes[f"{prefix}.audio_proj.bias"] = (d,)
        for i in range(dims.n_layers):
            base = f"{prefix}.layers.{i}"
            for ln in ("ln1", "ln2", "ln3"):
                shapes[f"{base}.{ln}.gain"] = (d,)
                shapes[f"{base}.{ln}.bias"] = (d,)
            for attn in ("self_attn", "cross_attn"):
                for mat in ("wq", "wk", "wv", "wo"):
                    shapes[f"{base}.{attn}.{mat}"] = (d, d)
                for bias in ("bq", "bk", "bv", "bo"):
                    shapes[f"{base}.{attn}.{bias}"] = (d,)
            shapes[f"{base}.ff.w1"] = (d, dims.ff_hidden)
            shapes[f"{base}.ff.b1"] = (dims.ff_hidden,)
            shapes[f"{base}.ff.w2"] = (dims.ff_hidden, d)
            shapes[f"{base}.ff.b2"] = (d,)
        shapes[f"{prefix}.ln_f.gain"] = (d,)
        shapes[f"{prefix}.ln_f.bias"] = (d,)
        shapes[f"{prefix}.out_proj.weight"] = (d, dims.n_kp * 3)
        shapes[f"{prefix}.out_proj.bias"] = (dims.n_kp * 3,)
    shapes["refiner.w0"] = (dims.d_audio + dims.n_kp * 3, dims.refiner_hidden)
    shapes["refiner.b0"] = (dims.refiner_hidden,)
    shapes["refiner.w1"] = (dims.refiner_hidden, dims.refiner_hidden)
    shapes["refiner.b1"] = (dims.refiner_hidden,)
    shapes["refiner.w2"] = (dims.refiner_hidden, dims.lip_count * 3)
    shapes["refiner.b2"] = (dims.lip_count * 3,)
    shapes["emotion.table"] = (n_categories, dims.cond_dim)
    return shapes


@dataclass(frozen=True)
class ModelWeights:
    """Named parameter tensors plus the dimension record, versioned."""

    dims: ModelDims
    tensors: dict
    categories: tuple = DEFAULT_CATEGORIES
    version: int = WEIGHTS_VERSION

    def __post_init__(self):
        object.__setattr__(self, "categories", tuple(self.categories))
        expected = tensor_shapes(self.dims, len(self.categories))
        if set(self.tensors) != set(expected):
            missing = sorted(set(expected) - set(self.tensors))
            extra = sorted(set(self.tensors) - set(expected))
            raise WeightsError(f"tensor names mismatch (missing={missing}, extra={extra})")
        frozen = {}
        for name, shape in expected.items():
            arr = np.asarray(self.tensors[name], dtype=np.float64)
            if arr.shape != shape:
                raise WeightsError(f"tensor {name} has shape {arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise WeightsError(f"tensor {name} contains non-finite values")
            arr = arr.copy()
            arr.setflags(write=False)
            frozen[name] = arr
        object.__setattr__(self, "tensors", frozen)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, ModelWeights)
            and self.dims == other.dims
            and self.categories == other.categories
            and self.version == other.version
            and all(np.array_equal(self.tensors[k], other.tensors[k]) for k in self.tensors)
        )

    def emotion_condition_table(self) -> dict:
        """Category name -> condition vector rows (neutral row is zero)."""
        table = self.tensors["emotion.table"]
        return {name: table[i] for i, name in enumerate(self.categories)}


def init_weights(seed: int, dims: ModelDims, categories=DEFAULT_CATEGORIES) -> ModelWeights:
    """Deterministic seeded initialization.

    Every tensor is uniform in [-1/sqrt(fan), 1/sqrt(fan)] with fan the
    leading dimension (the vector length for biases and tables). Layer-norm
    gains are ones, offsets zeros. Emotion condition rows are unit-norm
    Gaussian draws, except the reserved 'neutral' row which is zero.
    """
    categories = tuple(categories)
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in tensor_shapes(dims, len(categories)).items():
        if name == "emotion.table":
            table = np.zeros(shape)
            for i, cat in enumerate(categories):
                if cat == "neutral":
                    continue
                row = rng.standard_normal(dims.cond_dim)
                table[i] = row / np.linalg.norm(row)
            tensors[name] = table
        elif name.endswith(".gain"):
            tensors[name] = np.ones(shape)
        elif name.endswith((".ln1.bias", ".ln2.bias", ".ln3.bias", ".ln_f.bias")):
            tensors[name] = np.zeros(shape)
        else:
            bound = 1.0 / np.sqrt(shape[0])
            tensors[name] = rng.uniform(-bound, bound, size=shape)
    return ModelWeights(dims=dims, tensors=tensors, categories=categories)


def _layer_norm(x: np.ndarray, gain: np.ndarray, bias: np.ndarray) -> np.ndarray:
    mean = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mean) / np.sqrt(var + _LN_EPS) * gain + bias


def _split_heads(x: np.ndarray, n_heads: int) -> np.ndarray:
    # (..., d) -> (..., heads, d_head)
    return x.reshape(*x.shape[:-1], n_heads, x.shape[-1] // n_heads)


def _attend(query: np.ndarray, keys: np.ndarray, values: np.ndarray, n_heads: int) -> np.ndarray:
    """Single-query multi-head attention over a (L, d) key/value bank."""
    d_head = query.shape[-1] // n_heads
    q = _split_heads(query, n_heads)              # (heads, d_head)
    k = _split_heads(keys, n_heads)               # (L, heads, d_head)
    v = _split_heads(values, n_heads)
    scores = np.einsum("hd,lhd->hl", q, k) / np.sqrt(d_head)
    scores -= scores.max(axis=-1, keepdims=True)
    weights = np.exp(scores)
    weights /= weights.sum(axis=-1, keepdims=True)
    ctx = np.einsum("hl,lhd->hd", weights, v)
    return ctx.reshape(-1)


class _Decoder:
    """One autoregressive decode pass over a window of audio rows."""

    def __init__(self, w: ModelWeights, prefix: str, cond: np.ndarray | None):
        self.t = w.tensors
        self.dims = w.dims
        self.prefix = prefix
        self.cond = cond

    def _p(self, name: str) -> np.ndarray:
        return self.t[f"{self.prefix}.{name}"]

    def run(self, audio_rows: np.ndarray, style_index: int | None) -> np.ndarray:
        dims = self.dims
        t_len = audio_rows.shape[0]
        if t_len > dims.max_window:
            raise DimensionError(
                f"window of {t_len} frames exceeds position table length {dims.max_window}"
            )
        h_audio = audio_rows @ self._p("audio_proj.weight") + self._p("audio_proj.bias")
        layers = []
        for i in range(dims.n_layers):
            base = f"layers.{i}"
            layers.append({
                "ak": h_audio @ self._p(f"{base}.cross_attn.wk") + self._p(f"{base}.cross_attn.bk"),
                "av": h_audio @ self._p(f"{base}.cross_attn.wv") + self._p(f"{base}.cross_attn.bv"),
                "sk": np.empty((t_len, dims.d_model)),
                "sv": np.empty((t_len, dims.d_model)),
                "base": base,
            })
        outs = np.empty((t_len, dims.n_kp * 3))
        prev = np.zeros(dims.n_kp * 3)
        for step in range(t_len):
            token = prev if self.cond is None else np.concatenate([prev, self.cond])
            x = token @ self._p("in_proj.weight") + self._p("in_proj.bias")
            if style_index is not None:
                x = x + self._p("style_table")[style_index]
            x = x + self._p("pos_table")[step]
            for layer in layers:
                base = layer["base"]
                z = _layer_norm(x, self._p(f"{base}.ln1.gain"), self._p(f"{base}.ln1.bias"))
                layer["sk"][step] = z @ self._p(f"{base}.self_attn.wk") + self._p(f"{base}.self_attn.bk")
                layer["sv"][step] = z @ self._p(f"{base}.self_attn.wv") + self._p(f"{base}.self_attn.bv")
                q = z @ self._p(f"{base}.self_attn.wq") + self._p(f"{base}.self_attn.bq")
                ctx = _attend(q, layer["sk"][: step + 1], layer["sv"][: step + 1], dims.n_heads)
                x = x + ctx @ self._p(f"{base}.self_attn.wo") + self._p(f"{base}.self_attn.bo")

                z = _layer_norm(x, self._p(f"{base}.ln2.gain"), self._p(f"{base}.ln2.bias"))
                q = z @ self._p(f"{base}.cross_attn.wq") + self._p(f"{base}.cross_attn.bq")
                ctx = _attend(q, layer["ak"][: step + 1], layer["av"][: step + 1], dims.n_heads)
                x = x + ctx @ self._p(f"{base}.cross_attn.wo") + self._p(f"{base}.cross_attn.bo")

                z = _layer_norm(x, self._p(f"{base}.ln3.gain"), self._p(f"{base}.ln3.bias"))
                h = np.maximum(z @ self._p(f"{base}.ff.w1") + self._p(f"{base}.ff.b1"), 0.0)
                x = x + h @ self._p(f"{base}.ff.w2") + self._p(f"{base}.ff.b2")
            z = _layer_norm(x, self._p("ln_f.gain"), self._p("ln_f.bias"))
            out = z @ self._p("out_proj.weight") + self._p("out_proj.bias")
            outs[step] = out
            prev = out
        return outs


def _check_audio(audio: AudioFeatureSequence, w: ModelWeights) -> None:
    if audio.d_audio != w.dims.d_audio:
        raise DimensionError(
            f"audio embedding width {audio.d_audio} does not match weights d_audio={w.dims.d_audio}"
        )
    if len(audio) < 1:
        raise DimensionError("audio sequence is empty")


def predict_window(
    audio_rows: np.ndarray,
    w: ModelWeights,
    *,
    style_index: int | None = None,
    condition: np.ndarray | None = None,
    network: str = "predictor",
) -> np.ndarray:
    """One fresh causal decode over <= max_window audio rows.

    Returns a (T, n_kp, 3) offset array. Frame t depends only on audio rows
    <= t and the previously emitted frames of the same window.
    """
    audio_rows = np.asarray(audio_rows, dtype=np.float64)
    if network == "predictor":
        dec = _Decoder(w, "predictor", None)
        outs = dec.run(audio_rows, style_index)
    else:
        cond = np.zeros(w.dims.cond_dim) if condition is None else np.asarray(condition, dtype=np.float64)
        if cond.shape != (w.dims.cond_dim,):
            raise DimensionError(
                f"condition length {cond.shape} does not match cond_dim={w.dims.cond_dim}"
            )
        dec = _Decoder(w, "cpred", cond)
        outs = dec.run(audio_rows, None)
    return outs.reshape(-1, w.dims.n_kp, 3)


def _chunked_predict(audio: AudioFeatureSequence, w: ModelWeights, window: int, **kw) -> list:
    if window < 1:
        raise DimensionError(f"window must be >= 1, got {window}")
    _check_audio(audio, w)
    frames = []
    for start in range(0, len(audio), window):
        rows = audio.embeddings[start : start + window]
        out = predict_window(rows, w, **kw)
        frames.extend(Deformation(out[i], DeformationKind.RAW) for i in range(out.shape[0]))
    return frames


def predict_expressions(
    audio: AudioFeatureSequence, style: StyleCode, w: ModelWeights, window: int = 50
) -> list:
    """Style-conditioned expression offsets, one Deformation per frame.

    The sequence is processed in consecutive windows of `window` frames, each
    decoded causally from a fresh zero start token; the style embedding is
    added to every input token. Overlap blending across windows is the
    pipeline's job.
    """
    if style.index >= w.dims.n_styles:
        raise DimensionError(
            f"style index {style.index} out of range for n_styles={w.dims.n_styles}"
        )
    return _chunked_predict(audio, w, window, style_index=style.index, network="predictor")


def combined_predict(
    emo_condition, audio: AudioFeatureSequence, w: ModelWeights, window: int = 50
) -> list:
    """Condition-conditioned combined offsets (lip sync + emotion together).

    `emo_condition` is a cond_dim vector concatenated to every input token;
    the reserved label 'neutral' (or None) encodes as the zero vector.
    """
    if isinstance(emo_condition, str):
        if emo_condition != "neutral":
            raise DimensionError(
                f"only the reserved label 'neutral' is accepted here, got {emo_condition!r}"
            )
        emo_condition = None
    return _chunked_predict(audio, w, window, condition=emo_condition, network="cpred")


def recompose_with_prediction(
    k_ori: KeypointSet, delta_pred: Deformation, pose: RigidPose | None = None
) -> KeypointSet:
    """K_rec: k_ori with its expression offset replaced by delta_pred.

    Under the session convention the k_ori stream carries a zero expression
    offset, so replacing it contributes s * delta_pred on top of k_ori.
    """
    if k_ori.coords.shape != delta_pred.offsets.shape:
        raise DimensionError(
            f"keypoints {k_ori.coords.shape} and prediction {delta_pred.offsets.shape} disagree"
        )
    s = 1.0 if pose is None else pose.scale
    return KeypointSet(k_ori.coords + s * delta_pred.offsets)


def refiner_forward(tensors: dict, mlp_in: np.ndarray) -> np.ndarray:
    """The refiner MLP: two tanh hidden layers, linear lip-row output."""
    h0 = np.tanh(mlp_in @ tensors["refiner.w0"] + tensors["refiner.b0"])
    h1 = np.tanh(h0 @ tensors["refiner.w1"] + tensors["refiner.b1"])
    return h1 @ tensors["refiner.w2"] + tensors["refiner.b2"]


def refine_lips(
    audio_row: np.ndarray,
    k_ori: KeypointSet,
    delta_pred: Deformation,
    noise: NoiseSpec,
    w: ModelWeights,
    lip_mask: RegionMask,
    pose: RigidPose | None = None,
) -> KeypointSet:
    """Refined keypoints: the MLP rewrites lip rows of K_rec, nothing else.

    The MLP consumes the audio row and a noise-perturbed copy of K_rec and
    directly predicts absolute lip-row coordinates. Rows outside the lip mask
    are returned exactly as in K_rec.
    """
    audio_row = np.asarray(audio_row, dtype=np.float64)
    if audio_row.shape != (w.dims.d_audio,):
        raise DimensionError(
            f"audio row shape {audio_row.shape} does not match d_audio={w.dims.d_audio}"
        )
    if k_ori.n_kp != w.dims.n_kp:
        raise DimensionError(f"n_kp {k_ori.n_kp} does not match weights n_kp={w.dims.n_kp}")
    k_rec = recompose_with_prediction(k_ori, delta_pred, pose)
    if len(lip_mask) == 0:
        return k_rec
    if len(lip_mask) != w.dims.lip_count:
        raise DimensionError(
            f"lip mask has {len(lip_mask)} rows, weights expect {w.dims.lip_count}"
        )
    lip_mask.validate_for(k_ori.n_kp)
    rng = np.random.default_rng(noise.seed)
    z = rng.normal(0.0, noise.sigma, size=k_rec.coords.shape) if noise.sigma > 0 else 0.0
    mlp_in = np.concatenate([audio_row, (k_rec.coords + z).reshape(-1)])
    lip_rows = refiner_forward(w.tensors, mlp_in).reshape(w.dims.lip_count, 3)
    refined = np.array(k_rec.coords)
    refined[lip_mask.index_array()] = lip_rows
    return KeypointSet(refined)


# ---------------------------------------------------------------------------
# Weight serialization: text container, one 17-significant-digit decimal per
# value so round-trips are bit-exact.

def _fmt(v: float) -> str:
    return format(float(v), ".17g")


_INT_DIMS = (
    "n_kp", "d_audio", "d_model", "n_layers", "n_heads", "ff_hidden",
    "refiner_hidden", "n_styles", "cond_dim", "lip_count", "max_window",
)


def save_weights(w: ModelWeights) -> bytes:
    """Serialize to the versioned text container."""
    buf = io.StringIO()
    buf.write(f"weights {w.version}\n")
    for name in _INT_DIMS:
        buf.write(f"dim {name} {getattr(w.dims, name)}\n")
    buf.write(f"sigma {_fmt(w.dims.noise_sigma)}\n")
    buf.write("categories " + " ".join(w.categories) + "\n")
    for name, arr in w.tensors.items():
        shape = " ".join(str(s) for s in arr.shape)
        buf.write(f"tensor {name} {arr.ndim} {shape}\n")
        flat = arr.reshape(-1)
        if arr.ndim == 2:
            for row in arr:
                buf.write(" ".join(_fmt(v) for v in row) + "\n")
        else:
            buf.write(" ".join(_fmt(v) for v in flat) + "\n")
    buf.write("end\n")
    return buf.getvalue().encode("utf-8")


def load_weights(data) -> ModelWeights:
    """Parse the text container; errors carry line context, never partial data."""
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    lines = data.splitlines()
    if not lines:
        raise FormatError("weights: empty input")
    head = lines[0].split()
    if len(head) != 2 or head[0] != "weights":
        raise FormatError(f"weights line 1: expected 'weights <version>', got {lines[0]!r}")
    if head[1] != str(WEIGHTS_VERSION):
        raise VersionError(f"weights: unsupported version {head[1]!r}")

    dims_kw: dict = {}
    categories: tuple = ()
    raw_tensors: dict[str, np.ndarray] = {}
    i = 1
    n = len(lines)
    saw_end = False
    while i < n:
        parts = lines[i].split()
        if not parts:
            i += 1
            continue
        tag = parts[0]
        if tag == "dim":
            if len(parts) != 3 or parts[1] not in _INT_DIMS:
                raise FormatError(f"weights line {i + 1}: bad dim record {lines[i]!r}")
            dims_kw[parts[1]] = int(parts[2])
            i += 1
        elif tag == "sigma":
            dims_kw["noise_sigma"] = float(parts[1])
            i += 1
        elif tag == "categories":
            categories = tuple(parts[1:])
            i += 1
        elif tag == "tensor":
            if len(parts) < 3:
                raise FormatError(f"weights line {i + 1}: bad tensor header {lines[i]!r}")
            name = parts[1]
            try:
                ndim = int(parts[2])
                shape = tuple(int(s) for s in parts[3 : 3 + ndim])
            except ValueError as exc:
                raise FormatError(f"weights line {i + 1}: bad tensor shape: {exc}") from exc
            if len(shape) != ndim:
                raise FormatError(f"weights line {i + 1}: tensor {name} shape incomplete")
            count = int(np.prod(shape))
            values: list[float] = []
            i += 1
            while len(values) < count and i < n:
                row = lines[i].split()
                if row and row[0] in ("tensor", "end", "dim", "sigma", "categories"):
                    break
                try:
                    values.extend(float(v) for v in row)
                except ValueError as exc:
                    raise FormatError(f"weights line {i + 1}: bad value in {name}: {exc}") from exc
                i += 1
            if len(values) != count:
                raise FormatError(
                    f"weights: tensor {name} truncated ({len(values)} of {count} values)"
                )
            raw_tensors[name] = np.asarray(values).reshape(shape)
        elif tag == "end":
            saw_end = True
            i += 1
        else:
            raise FormatError(f"weights line {i + 1}: unknown record {tag!r}")
    if not saw_end:
        raise FormatError("weights: missing end marker (truncated file)")
    if not categories:
        raise FormatError("weights: missing categories record")
    try:
        dims = ModelDims(**dims_kw)
        return ModelWeights(dims=dims, tensors=raw_tensors, categories=categories)
    except (WeightsError, TypeError) as exc:
        raise FormatError(f"weights: inconsistent contents: {exc}") from exc
