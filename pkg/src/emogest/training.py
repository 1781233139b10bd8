"""Adam training loop, dataset splitting, and the metrics log.

The decoder trains with teacher forcing under a causal mask.  Two context
modes are supported: ``full`` feeds each whole target sequence once per
epoch; ``windowed`` trains every frame against exactly the sliding
SoS-seeded history window that autoregressive generation will use, which
makes the training conditionals match the generation-time ones.

The stated per-epoch decay of 0.999 is applied as a multiplicative
learning-rate schedule by default; ``decay_mode="shrink"`` applies it as
parameter shrinkage instead.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import losses as losses_mod
from . import model as model_mod
from . import quat
from .autodiff import Tape, Tensor
from .checkpoint import save_checkpoint
from .evaluation import mean_pose_error
from .losses import GtPack
from .model import ModelConfig
from .numerics import value
from .skeleton import SkeletonDef
from .textembed import EmbeddingStore, embed_sentence, tokenize
from .attributes import encode_attributes

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

METRICS_HEADER = (
    "epoch,lr,train_ang,train_pose,train_aff,train_reg,train_total,"
    "val_total,mean_pose_error_val"
)


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    decay: float = 0.999
    decay_mode: str = "lr"  # "lr" schedule or "shrink" parameter decay
    batch_size: int = 16
    epochs: int = 600
    lam: float = 1e-5
    use_angle_loss: bool = True
    use_pose_loss: bool = True
    use_affective_loss: bool = True
    seed: int = 0
    window_mode: str = "windowed"  # "windowed" (generation-matched) or "full"
    eval_every: int = 50
    # std-dev of per-component noise added to (then renormalized) decoder
    # history inputs; teaches the decoder to contract small deviations so
    # autoregressive rollout does not drift off the data manifold
    input_noise: float = 0.02
    # windowed mode only: every N epochs, regenerate the model's own
    # autoregressive history windows and train on them (targets stay ground
    # truth) alongside the clean windows; 0 disables.  This trains exactly
    # the conditionals the rollout will visit.
    rollout_refresh: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0 or self.decay <= 0:
            raise ValueError("learning_rate and decay must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.decay_mode not in ("lr", "shrink"):
            raise ValueError(f"decay_mode must be 'lr' or 'shrink', got {self.decay_mode!r}")
        if self.window_mode not in ("windowed", "full"):
            raise ValueError(f"window_mode must be 'windowed' or 'full', got {self.window_mode!r}")


@dataclass
class DataSplit:
    train: list
    val: list
    test: list


def split(n_items: int, seed: int) -> DataSplit:
    """80/10/10 by shuffled index, remainder to train; 10% rounds half-up."""
    if n_items < 10:
        raise ValueError(f"need at least 10 items to split, got {n_items}")
    part = int(n_items / 10 + 0.5)
    perm = np.random.default_rng(seed).permutation(n_items)
    return DataSplit(
        train=sorted(int(i) for i in perm[: n_items - 2 * part]),
        val=sorted(int(i) for i in perm[n_items - 2 * part : n_items - part]),
        test=sorted(int(i) for i in perm[n_items - part :]),
    )


class Adam:
    def __init__(self, params: dict):
        self.m = {k: np.zeros_like(t.data) for k, t in params.items()}
        self.v = {k: np.zeros_like(t.data) for k, t in params.items()}
        self.t = 0

    def step(self, params: dict, lr: float):
        self.t += 1
        bc1 = 1.0 - ADAM_BETA1**self.t
        bc2 = 1.0 - ADAM_BETA2**self.t
        for k, p in params.items():
            g = p.grad
            m = self.m[k] = ADAM_BETA1 * self.m[k] + (1 - ADAM_BETA1) * g
            v = self.v[k] = ADAM_BETA2 * self.v[k] + (1 - ADAM_BETA2) * (g * g)
            p.data = p.data - lr * (m / bc1) / (np.sqrt(v / bc2) + ADAM_EPS)


@dataclass
class PreparedData:
    sentences: np.ndarray  # (B, t_sen, d_word)
    attrs: np.ndarray  # (B, 9)
    quats: np.ndarray  # (B, T, J, 4)
    t_frames: int


def prepare_items(items, model_cfg: ModelConfig, store: EmbeddingStore) -> PreparedData:
    """Embed sentences, encode attributes, and EoS-pad gestures to equal length."""
    if not items:
        raise TrainingError("empty corpus")
    t_frames = max(seq.n_frames for seq in items)
    if t_frames > model_cfg.t_ges:
        raise TrainingError(f"sequences of {t_frames} frames exceed model t_ges={model_cfg.t_ges}")
    sents, attrs, quats = [], [], []
    for seq in items:
        if seq.attributes is None:
            raise TrainingError(f"sequence {seq.sentence!r} has no attribute annotations")
        sents.append(embed_sentence(tokenize(seq.sentence), store, model_cfg.t_sen).matrix)
        attrs.append(encode_attributes(seq.attributes))
        quats.append(seq.padded(t_frames).rotations)
    return PreparedData(
        sentences=np.stack(sents), attrs=np.stack(attrs), quats=np.stack(quats), t_frames=t_frames
    )


def teacher_forced_inputs(quats: np.ndarray, skeleton: SkeletonDef) -> np.ndarray:
    """Shift right: position t sees gt frame t-1, position 0 sees SoS."""
    b, t, j, _ = quats.shape
    flat = quats.reshape(b, t, 4 * j)
    sos = np.broadcast_to(skeleton.sos_pose.reshape(-1), (b, 1, 4 * j))
    return np.concatenate([sos, flat[:, :-1]], axis=1)


def windowed_inputs(quats_item: np.ndarray, skeleton: SkeletonDef, window: int) -> np.ndarray:
    """(T, window, 4J): row t is the exact history window generation uses
    when predicting frame t (SoS-seeded, sliding over the ground truth)."""
    t, j, _ = quats_item.shape
    flat = quats_item.reshape(t, 4 * j)
    sos = skeleton.sos_pose.reshape(-1)
    out = np.empty((t, window, 4 * j))
    for target in range(t):
        for w in range(window):
            idx = target - window + w
            out[target, w] = sos if idx < 0 else flat[idx]
    return out


def _perturb_history(flat_inputs: np.ndarray, sigma: float, rng) -> np.ndarray:
    """Add noise to flattened history quats and renormalize per joint."""
    if sigma <= 0:
        return flat_inputs
    shape = flat_inputs.shape[:-1] + (flat_inputs.shape[-1] // 4, 4)
    noisy = flat_inputs.reshape(shape) + rng.standard_normal(shape) * sigma
    return quat.normalize(noisy).reshape(flat_inputs.shape)


def _forward_losses(
    params, data: PreparedData, gt: GtPack, batch_idx, skeleton, model_cfg, cfg,
    noise_rng=None, rollout_wins=None,
):
    """Loss term Tensors (batch means) for one batch of item indices."""
    j = skeleton.n_joints
    sent = data.sentences[batch_idx]
    attrs = data.attrs[batch_idx]
    quats = data.quats[batch_idx]
    gt_batch = GtPack(
        quats=gt.quats[batch_idx],
        euler=gt.euler[batch_idx],
        positions=gt.positions.reshape(-1, data.t_frames, j, 3)[batch_idx].reshape(-1, j, 3),
        features=gt.features.reshape(-1, data.t_frames, 15)[batch_idx].reshape(-1, 15),
    )
    b, t = quats.shape[0], data.t_frames
    sigma = cfg.input_noise if noise_rng is not None else 0.0
    encoded = model_mod.encode(sent, attrs, params, model_cfg)  # (b, t_sen, d)
    if cfg.window_mode == "full":
        dec_in = teacher_forced_inputs(quats, skeleton)
        if sigma > 0:
            dec_in = _perturb_history(dec_in, sigma, noise_rng)
        raw = model_mod.decode(dec_in, encoded, params, model_cfg)
        pred_q = quat.normalize(raw.reshape((b, t, j, 4)))
    else:
        # batch all sliding windows; a 0/1 selection matmul repeats each
        # item's encoding per window while keeping encoder gradients flowing
        wins = np.concatenate(
            [windowed_inputs(quats[i], skeleton, model_cfg.window) for i in range(b)], axis=0
        )  # (b*t, window, 4J)
        if sigma > 0:
            wins = _perturb_history(wins, sigma, noise_rng)
        copies = 1
        if rollout_wins is not None:
            # model-visited windows train against the same ground truth
            wins = np.concatenate([wins, rollout_wins[batch_idx].reshape(b * t, model_cfg.window, 4 * j)])
            copies = 2
        sel = np.tile(np.repeat(np.eye(b), t, axis=0), (copies, 1))  # (copies*b*t, b)
        enc_rep = ad.matmul(sel, encoded.reshape((b, -1))).reshape(
            (copies * b * t, model_cfg.t_sen, model_cfg.d_model)
        )
        raw = model_mod.decode(wins, enc_rep, params, model_cfg)  # (copies*b*t, window, 4J)
        pred_q = quat.normalize(raw[:, -1, :].reshape((copies * b, t, j, 4)))
        if copies == 2:
            gt_batch = GtPack(
                quats=np.concatenate([gt_batch.quats] * 2),
                euler=np.concatenate([gt_batch.euler] * 2),
                positions=np.concatenate([gt_batch.positions] * 2),
                features=np.concatenate([gt_batch.features] * 2),
            )
    return losses_mod.batch_losses(
        pred_q, gt_batch, skeleton,
        use_angle=cfg.use_angle_loss, use_pose=cfg.use_pose_loss,
        use_affective=cfg.use_affective_loss,
    )


def collect_rollout_windows(params, data: PreparedData, model_cfg: ModelConfig, skeleton) -> np.ndarray:
    """The history windows an autoregressive rollout actually visits."""
    n, t = data.quats.shape[0], data.t_frames
    j = skeleton.n_joints
    out = np.empty((n, t, model_cfg.window, 4 * j))
    for i in range(n):
        encoded = model_mod.encode(data.sentences[i], data.attrs[i], params, model_cfg)
        history = [skeleton.sos_pose.reshape(-1)] * model_cfg.window
        for step in range(t):
            window = np.stack(history[-model_cfg.window :])
            out[i, step] = window
            raw = model_mod.decode_step(window, encoded, params, model_cfg)
            pose = quat.normalize(raw.data.reshape(j, 4))
            history.append(pose.reshape(-1))
    return out


def _fmt(x) -> str:
    return repr(float(x))


def train(
    items: list,
    cfg: TrainConfig,
    model_cfg: ModelConfig,
    store: EmbeddingStore,
    skeleton: SkeletonDef,
    checkpoint_path=None,
    metrics_path=None,
    data_split: DataSplit | None = None,
    initial_params: dict | None = None,
):
    """Train on the corpus; returns (params, metrics_rows, best_val_total).

    ``data_split`` selects train/val subsets; without one, all items train
    and also serve as the validation set.  The best-validation checkpoint is
    written to ``checkpoint_path``; per-epoch rows go to ``metrics_path``
    (the autoregressive validation pose error is evaluated every
    ``eval_every`` epochs and on the final epoch).  ``initial_params`` warm
    starts from an existing parameter set instead of a fresh initialization.
    """
    if not items:
        raise TrainingError("empty corpus")
    train_items = [items[i] for i in data_split.train] if data_split else list(items)
    val_items = [items[i] for i in data_split.val] if data_split else list(items)

    data = prepare_items(train_items, model_cfg, store)
    val_data = prepare_items(val_items, model_cfg, store)
    gt = GtPack.build(data.quats, skeleton)
    val_gt = GtPack.build(val_data.quats, skeleton)

    if initial_params is not None:
        params = {k: Tensor(p.data.copy()) for k, p in initial_params.items()}
    else:
        params = model_mod.init_params(model_cfg, seed=cfg.seed, rest_pose=skeleton.sos_pose)
    adam = Adam(params)
    rng = np.random.default_rng(cfg.seed)
    n = len(train_items)
    rows = []
    best_val = np.inf
    best_snapshot = None
    lam = cfg.lam

    rollout_wins = None
    for epoch in range(cfg.epochs):
        lr = cfg.learning_rate * (cfg.decay**epoch if cfg.decay_mode == "lr" else 1.0)
        perm = rng.permutation(n)
        noise_rng = np.random.default_rng((cfg.seed, epoch))
        if (
            cfg.rollout_refresh
            and cfg.window_mode == "windowed"
            and epoch % cfg.rollout_refresh == 0
        ):
            rollout_wins = collect_rollout_windows(params, data, model_cfg, skeleton)
        sums = {"ang": 0.0, "pose": 0.0, "aff": 0.0, "reg": 0.0, "total": 0.0}
        n_batches = 0
        for start in range(0, n, cfg.batch_size):
            batch_idx = perm[start : start + cfg.batch_size]
            tape = Tape()
            for p in params.values():
                tape.watch(p)

            def diagnostic(reason):
                dump = {
                    "epoch": epoch,
                    "reason": reason,
                    "batch_indices": [int(i) for i in batch_idx],
                    "sentences": [train_items[int(i)].sentence for i in batch_idx],
                }
                return TrainingError(f"non-finite loss at epoch {epoch}: {json.dumps(dump)}")

            try:
                terms = _forward_losses(
                    params, data, gt, batch_idx, skeleton, model_cfg, cfg,
                    noise_rng=noise_rng, rollout_wins=rollout_wins,
                )
            except ValueError as e:
                raise diagnostic(str(e)) from e
            loss = terms["ang"] + terms["pose"] + terms["aff"]
            if lam:
                reg = losses_mod.parameter_l2_norm(params) * lam
                loss = loss + reg
            else:
                reg = 0.0
            loss_val = float(value(loss))
            if not np.isfinite(loss_val):
                raise diagnostic({k: float(value(v)) for k, v in terms.items()})
            if isinstance(loss, Tensor):
                tape.backward(loss)
                adam.step(params, lr)
            tape.release()
            for key, v in terms.items():
                sums[key] += float(value(v))
            sums["reg"] += float(value(reg))
            sums["total"] += loss_val
            n_batches += 1
        if cfg.decay_mode == "shrink":
            for p in params.values():
                p.data = p.data * cfg.decay

        val_terms = _forward_losses(params, val_data, val_gt, np.arange(len(val_items)), skeleton, model_cfg, cfg)
        val_total = float(value(val_terms["ang"] + val_terms["pose"] + val_terms["aff"]))
        if lam:
            val_total += lam * float(value(losses_mod.parameter_l2_norm(params)))

        mpe = ""
        if cfg.eval_every and (epoch % cfg.eval_every == 0 or epoch == cfg.epochs - 1):
            preds = generate_for_items(val_items, params, model_cfg, store, skeleton)
            mpe = _fmt(mean_pose_error(val_items, preds, skeleton))

        rows.append(
            f"{epoch},{_fmt(lr)},{_fmt(sums['ang'] / n_batches)},{_fmt(sums['pose'] / n_batches)},"
            f"{_fmt(sums['aff'] / n_batches)},{_fmt(sums['reg'] / n_batches)},"
            f"{_fmt(sums['total'] / n_batches)},{_fmt(val_total)},{mpe}"
        )
        if val_total < best_val:
            best_val = val_total
            best_snapshot = {k: p.data.copy() for k, p in params.items()}

    if best_snapshot is not None:
        for k, p in params.items():
            p.data = best_snapshot[k]
    if checkpoint_path is not None:
        save_checkpoint(
            checkpoint_path,
            params,
            {
                "model": model_cfg.to_dict(),
                "train": {
                    "lam": cfg.lam,
                    "use_angle_loss": cfg.use_angle_loss,
                    "use_pose_loss": cfg.use_pose_loss,
                    "use_affective_loss": cfg.use_affective_loss,
                    "window_mode": cfg.window_mode,
                    "seed": cfg.seed,
                },
                "skeleton_hash": skeleton.content_hash(),
                "best_val_total": best_val,
            },
        )
    if metrics_path is not None:
        with open(metrics_path, "w") as fh:
            fh.write(METRICS_HEADER + "\n")
            fh.write("\n".join(rows) + "\n")
    return params, rows, best_val


def generate_for_items(items, params, model_cfg: ModelConfig, store, skeleton):
    """Autoregressive generation for each item's sentence/attributes."""
    preds = []
    for seq in items:
        emb = embed_sentence(tokenize(seq.sentence), store, model_cfg.t_sen)
        attrs_vec = encode_attributes(seq.attributes)
        pred, _ = model_mod.generate(
            emb, attrs_vec, params, model_cfg, skeleton,
            t_ges=max(seq.n_frames, model_cfg.window),
            fps=seq.fps, attributes=seq.attributes, sentence=seq.sentence,
        )
        preds.append(pred)
    return preds
