"""The text-to-gesture transformer.

Encoder: input words projected to the model width, positionally encoded,
then N blocks of multi-head self-attention + a two-layer FC, residuals
around each sublayer.  The 9-dim agent-attribute vector is appended to every
encoded position and fused through two FC layers into the conditioning
sequence the decoder cross-attends to.

Decoder: pose history projected to the model width, positionally encoded,
then N blocks of causally-masked multi-head self-attention, unmasked
cross-attention over the fused text encoding, and a two-layer FC, residuals
throughout.  A final linear head maps back to 4*J raw quaternion values,
normalized per joint outside the network.

Attention divides scores by the key dimension k itself; dividing by sqrt(k)
is available behind ``attention_scale="sqrt_k"`` for comparability.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, asdict

import numpy as np

from . import autodiff as ad
from . import quat
from .autodiff import Tensor
from .skeleton import GestureSequence, SkeletonDef
from .textembed import SentenceEmbedding

EOS_STOP_GEODESIC = 1e-3
EOS_STOP_RUN = 12  # consecutive frames near the EoS pose before stopping
WIRE_SIG_DIGITS = 9


@dataclass
class ModelConfig:
    d_model: int = 200
    n_blocks: int = 2
    n_heads: int = 2
    d_word: int = 300
    t_sen: int = 32
    t_ges: int = 480
    window: int = 20
    n_joints: int = 23
    attribute_dim: int = 9
    attention_scale: str = "k"  # "k" or "sqrt_k"
    use_layer_norm: bool = False

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise ValueError(f"d_model={self.d_model} not divisible by n_heads={self.n_heads}")
        if self.window > self.t_ges:
            raise ValueError(f"window={self.window} exceeds t_ges={self.t_ges}")
        if self.attention_scale not in ("k", "sqrt_k"):
            raise ValueError(f"attention_scale must be 'k' or 'sqrt_k', got {self.attention_scale!r}")

    @property
    def d_head(self) -> int:
        return self.d_model // self.n_heads

    @property
    def pose_dim(self) -> int:
        return 4 * self.n_joints

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "ModelConfig":
        return cls(**doc)


# ---------------------------------------------------------------------------
# parameters


def _param_shapes(cfg: ModelConfig):
    d, dk, dw, pd, na = cfg.d_model, cfg.d_head, cfg.d_word, cfg.pose_dim, cfg.attribute_dim
    shapes = [("word_proj.w", (dw, d)), ("word_proj.b", (d,)),
              ("pose_proj.w", (pd, d)), ("pose_proj.b", (d,))]
    for i in range(cfg.n_blocks):
        for h in range(cfg.n_heads):
            for m in ("wq", "wk", "wv"):
                shapes.append((f"enc.{i}.attn.{h}.{m}", (d, dk)))
        shapes.append((f"enc.{i}.attn.concat", (d, d)))
        shapes.append((f"enc.{i}.fc1.w", (d, d)))
        shapes.append((f"enc.{i}.fc1.b", (d,)))
        shapes.append((f"enc.{i}.fc2.w", (d, d)))
        shapes.append((f"enc.{i}.fc2.b", (d,)))
    shapes += [("fuse.fc1.w", (d + na, d)), ("fuse.fc1.b", (d,)),
               ("fuse.fc2.w", (d, d)), ("fuse.fc2.b", (d,))]
    for i in range(cfg.n_blocks):
        for part in ("self", "cross"):
            for h in range(cfg.n_heads):
                for m in ("wq", "wk", "wv"):
                    shapes.append((f"dec.{i}.{part}.{h}.{m}", (d, dk)))
            shapes.append((f"dec.{i}.{part}.concat", (d, d)))
        shapes.append((f"dec.{i}.fc1.w", (d, d)))
        shapes.append((f"dec.{i}.fc1.b", (d,)))
        shapes.append((f"dec.{i}.fc2.w", (d, d)))
        shapes.append((f"dec.{i}.fc2.b", (d,)))
    shapes += [("head.w", (d, pd)), ("head.b", (pd,))]
    return shapes


HEAD_INIT_SCALE = 0.01


def init_params(cfg: ModelConfig, seed: int = 0, rest_pose: np.ndarray | None = None) -> dict:
    """Xavier-uniform weights, zero biases; deterministic for a fixed seed.

    The output head opens near-zero with its bias at the flattened rest
    pose, so the untrained decoder emits (approximately) the rest pose.
    Without this, the first predictions are uniformly random rotations whose
    Euler angles land in arbitrary modulo-pi basins of the angle loss, and
    the leaf joints, which the pose loss cannot see, never escape them.
    """
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in _param_shapes(cfg):
        if name.endswith(".b"):
            params[name] = Tensor(np.zeros(shape))
        else:
            fan_in, fan_out = shape[0], shape[-1]
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            params[name] = Tensor(rng.uniform(-limit, limit, size=shape))
    params["head.w"] = Tensor(params["head.w"].data * HEAD_INIT_SCALE)
    if rest_pose is not None:
        params["head.b"] = Tensor(np.asarray(rest_pose, dtype=np.float64).reshape(-1).copy())
    return params


def count_parameters(params: dict) -> int:
    return int(sum(t.data.size for t in params.values()))


def analytic_parameter_count(cfg: ModelConfig) -> int:
    """Closed-form count implied by the config's shapes."""
    d, dw, pd, na, n = cfg.d_model, cfg.d_word, cfg.pose_dim, cfg.attribute_dim, cfg.n_blocks
    word = dw * d + d
    pose = pd * d + d
    enc = n * (6 * d * d + 2 * d)
    dec = n * (10 * d * d + 2 * d)
    fuse = (d + na) * d + d + d * d + d
    head = d * pd + pd
    return word + pose + enc + dec + fuse + head


# ---------------------------------------------------------------------------
# attention

def positional_encoding(t: int, d_model: int) -> np.ndarray:
    """Sinusoidal table: sin on even channels, cos on odd."""
    if t <= 0 or d_model <= 0:
        raise ValueError("positional encoding needs positive dimensions")
    pos = np.arange(t)[:, None]
    i = np.arange(d_model)[None, :]
    angle = pos / np.power(10000.0, (2 * (i // 2)) / d_model)
    pe = np.empty((t, d_model))
    pe[:, 0::2] = np.sin(angle[:, 0::2])
    pe[:, 1::2] = np.cos(angle[:, 1::2])
    return pe


def causal_mask(t: int) -> np.ndarray:
    """True above the diagonal: position i may not attend to j > i."""
    return np.triu(np.ones((t, t), dtype=bool), k=1)


def attention(q, k, v, mask=None, scale: str = "k"):
    """softmax(q kT / divisor) v with the divisor set by ``scale``."""
    dk = q.shape[-1] if isinstance(q, Tensor) else np.shape(q)[-1]
    divisor = float(dk) if scale == "k" else float(np.sqrt(dk))
    logits = ad.scale(ad.matmul(q, ad.swap_last(k)), 1.0 / divisor)
    if mask is not None:
        logits = ad.masked_fill(logits, mask, -np.inf)
    return ad.matmul(ad.softmax(logits, axis=-1), v)


def multi_head(x_q, x_kv, params: dict, prefix: str, cfg: ModelConfig, mask=None):
    """Concat of per-head attentions, projected by the concat matrix."""
    heads = []
    for h in range(cfg.n_heads):
        q = ad.matmul(x_q, params[f"{prefix}.{h}.wq"])
        k = ad.matmul(x_kv, params[f"{prefix}.{h}.wk"])
        v = ad.matmul(x_kv, params[f"{prefix}.{h}.wv"])
        heads.append(attention(q, k, v, mask=mask, scale=cfg.attention_scale))
    stacked = heads[0] if len(heads) == 1 else ad.concat(heads, axis=-1)
    return ad.matmul(stacked, params[f"{prefix}.concat"])


def _fc_pair(x, params, prefix):
    h = ad.relu(ad.add(ad.matmul(x, params[f"{prefix}1.w"]), params[f"{prefix}1.b"]))
    return ad.add(ad.matmul(h, params[f"{prefix}2.w"]), params[f"{prefix}2.b"])


def _residual(x, sub, cfg):
    out = ad.add(x, sub)
    if cfg.use_layer_norm:
        out = ad.layer_norm_free_affine(out)
    return out


# ---------------------------------------------------------------------------
# encoder / decoder


def encode(sent: SentenceEmbedding | np.ndarray, attrs_vec, params: dict, cfg: ModelConfig):
    """Fused text encoding: (..., t_sen, d_model).

    ``sent`` is a SentenceEmbedding or a raw (..., t_sen, d_word) matrix;
    ``attrs_vec`` is the 9-vector (or a batch of them).
    """
    matrix = sent.matrix if isinstance(sent, SentenceEmbedding) else sent
    t_sen = np.shape(matrix.data if isinstance(matrix, Tensor) else matrix)[-2]
    x = ad.add(ad.matmul(matrix, params["word_proj.w"]), params["word_proj.b"])
    x = ad.add(x, positional_encoding(t_sen, cfg.d_model))
    for i in range(cfg.n_blocks):
        x = _residual(x, multi_head(x, x, params, f"enc.{i}.attn", cfg), cfg)
        x = _residual(x, _fc_pair(x, params, f"enc.{i}.fc"), cfg)
    attrs_arr = np.asarray(attrs_vec, dtype=np.float64)
    tiled = np.broadcast_to(
        attrs_arr.reshape(attrs_arr.shape[:-1] + (1, attrs_arr.shape[-1])),
        tuple(x.shape[:-1]) + (cfg.attribute_dim,),
    )
    fused = ad.concat([x, tiled], axis=-1)
    return _fc_pair(fused, params, "fuse.fc")


def decode(history, encoded, params: dict, cfg: ModelConfig):
    """Raw head outputs (..., s, 4*J) for a pose-history window.

    Self-attention is causally masked; cross-attention over ``encoded`` is
    not.  Pure function of its inputs.
    """
    s = np.shape(history if not isinstance(history, Tensor) else history.data)[-2]
    x = ad.add(ad.matmul(history, params["pose_proj.w"]), params["pose_proj.b"])
    x = ad.add(x, positional_encoding(s, cfg.d_model))
    mask = causal_mask(s)
    for i in range(cfg.n_blocks):
        x = _residual(x, multi_head(x, x, params, f"dec.{i}.self", cfg, mask=mask), cfg)
        x = _residual(x, multi_head(x, encoded, params, f"dec.{i}.cross", cfg), cfg)
        x = _residual(x, _fc_pair(x, params, f"dec.{i}.fc"), cfg)
    return ad.add(ad.matmul(x, params["head.w"]), params["head.b"])


def decode_step(history, encoded, params: dict, cfg: ModelConfig):
    """Last position's raw 4*J head output for the given history window."""
    out = decode(history, encoded, params, cfg)
    return out[..., -1, :]


# ---------------------------------------------------------------------------
# autoregressive generation


def round_wire(arr: np.ndarray) -> np.ndarray:
    """Round to 9 significant digits: the precision carried on the wire and
    therefore the precision generated sequences are defined to have."""
    out = np.array([float(f"{v:.{WIRE_SIG_DIGITS}g}") for v in arr.reshape(-1)])
    return (out + 0.0).reshape(arr.shape)  # +0.0 normalizes -0.0


def generate_frames(
    sent: SentenceEmbedding,
    attrs_vec: np.ndarray,
    params: dict,
    cfg: ModelConfig,
    skeleton: SkeletonDef,
    t_ges: int | None = None,
):
    """Autoregressive frame generator seeded with ``window`` SoS poses.

    Yields (pose (J, 4), latency seconds) per frame.  Stops at ``t_ges``
    frames or once the output has stayed within the per-joint geodesic
    tolerance of the EoS pose for 12 consecutive frames.  Emitted
    quaternions are unit-normalized and rounded to wire precision, and the
    rounded pose is what feeds back into the history, so a stream consumer
    replaying the frames sees exactly the generator's own state.
    """
    t_ges = t_ges or cfg.t_ges
    j = skeleton.n_joints
    encoded = encode(sent, attrs_vec, params, cfg)
    history = [skeleton.sos_pose.reshape(-1)] * cfg.window
    eos_run = 0
    for _ in range(t_ges):
        start = time.perf_counter()
        window = np.stack(history[-cfg.window :])
        raw = decode_step(window, encoded, params, cfg)
        pose = quat.normalize(raw.data.reshape(j, 4))
        pose = round_wire(pose)
        latency = time.perf_counter() - start
        history.append(pose.reshape(-1))
        yield pose, latency
        if quat.geodesic(pose, skeleton.eos_pose).max() <= EOS_STOP_GEODESIC:
            eos_run += 1
            if eos_run >= EOS_STOP_RUN:
                return
        else:
            eos_run = 0


def generate(
    sent: SentenceEmbedding,
    attrs_vec: np.ndarray,
    params: dict,
    cfg: ModelConfig,
    skeleton: SkeletonDef,
    t_ges: int | None = None,
    fps: float = 120.0,
    attributes=None,
    sentence: str = "",
):
    """Full-sequence wrapper over :func:`generate_frames`.

    Returns (GestureSequence, per-frame latencies in seconds).
    """
    frames, latencies = [], []
    for pose, latency in generate_frames(sent, attrs_vec, params, cfg, skeleton, t_ges):
        frames.append(pose)
        latencies.append(latency)
    seq = GestureSequence(
        skeleton=skeleton,
        fps=fps,
        rotations=np.stack(frames),
        attributes=attributes,
        sentence=sentence,
    )
    return seq, latencies
