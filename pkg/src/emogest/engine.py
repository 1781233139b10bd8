"""The loaded-assets bundle shared by the CLI and the service.

A GestureEngine holds one read-only parameter set plus the skeleton,
lexicon, embedding store, and affect table, resolves incoming requests
(emotion terms or explicit VAD triples), and generates frame streams.
Generation does not mutate the engine, so any number of requests may run
concurrently against one instance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import affect as affect_mod
from .affect import AffectTable, EmotionLexicon, vad_lookup
from .attributes import GENDERS, HANDEDNESS, TASKS, AgentAttributes, encode_attributes
from .checkpoint import load_checkpoint
from .autodiff import Tensor
from .model import ModelConfig, generate_frames
from .skeleton import SkeletonDef, default_skeleton, forward_kinematics
from .textembed import EmbeddingStore, embed_sentence, load_embeddings, tokenize


class RequestError(ValueError):
    pass


def resolve_emotion(emotion, lexicon: EmotionLexicon):
    """An emotion term or an explicit v,a,d triple -> (vad tuple, term or None)."""
    if isinstance(emotion, (list, tuple)):
        vals = [float(v) for v in emotion]
    elif "," in str(emotion):
        try:
            vals = [float(v) for v in str(emotion).split(",")]
        except ValueError:
            raise RequestError(f"bad VAD triple {emotion!r}") from None
    else:
        return vad_lookup(str(emotion), lexicon), str(emotion).strip().casefold()
    if len(vals) != 3 or any(not 0.0 <= v <= 1.0 for v in vals):
        raise RequestError(f"VAD triple must be 3 values in [0, 1], got {emotion!r}")
    return tuple(vals), None


def resolve_attributes(task, emotion, gender, handedness, lexicon) -> AgentAttributes:
    task, gender, handedness = str(task).lower(), str(gender).lower(), str(handedness).lower()
    if task not in TASKS:
        raise RequestError(f"task must be one of {TASKS}, got {task!r}")
    if gender not in GENDERS:
        raise RequestError(f"gender must be one of {GENDERS}, got {gender!r}")
    if handedness not in HANDEDNESS:
        raise RequestError(f"handedness must be one of {HANDEDNESS}, got {handedness!r}")
    vad, term = resolve_emotion(emotion, lexicon)
    return AgentAttributes(task, vad, gender, handedness, emotion_term=term)


@dataclass
class FrameOut:
    t: int
    pose: np.ndarray  # (J, 4)
    positions: np.ndarray  # (J, 3)
    latency_s: float


class GestureEngine:
    def __init__(
        self,
        params: dict,
        model_cfg: ModelConfig,
        skeleton: SkeletonDef,
        lexicon: EmotionLexicon | None = None,
        store: EmbeddingStore | None = None,
        affect_table: AffectTable | None = None,
    ):
        self.params = params
        self.model_cfg = model_cfg
        self.skeleton = skeleton
        self.lexicon = lexicon or affect_mod.default_lexicon()
        self.store = store or EmbeddingStore(dim=model_cfg.d_word)
        self.affect_table = affect_table or affect_mod.default_affect_table()

    @classmethod
    def load(
        cls,
        checkpoint_path,
        skeleton_path=None,
        lexicon_path=None,
        embeddings_path=None,
        affect_table_path=None,
    ) -> "GestureEngine":
        arrays, config = load_checkpoint(checkpoint_path)
        model_cfg = ModelConfig.from_dict(config["model"])
        skeleton = SkeletonDef.load(skeleton_path) if skeleton_path else default_skeleton()
        if config.get("skeleton_hash") and config["skeleton_hash"] != skeleton.content_hash():
            raise RequestError(
                f"checkpoint was trained against skeleton {config['skeleton_hash']}, "
                f"got {skeleton.content_hash()} ({skeleton.name})"
            )
        return cls(
            params={k: Tensor(v) for k, v in arrays.items()},
            model_cfg=model_cfg,
            skeleton=skeleton,
            lexicon=affect_mod.load_lexicon(lexicon_path) if lexicon_path else None,
            store=load_embeddings(embeddings_path) if embeddings_path else None,
            affect_table=AffectTable.load(affect_table_path) if affect_table_path else None,
        )

    def resolve(self, sentence, task, emotion, gender, handedness):
        if not str(sentence).strip():
            raise RequestError("sentence must be non-empty")
        attrs = resolve_attributes(task, emotion, gender, handedness, self.lexicon)
        emb = embed_sentence(tokenize(sentence), self.store, self.model_cfg.t_sen)
        return emb, attrs

    def frame_iter(self, sentence, task, emotion, gender, handedness, t_ges=None):
        """Per-frame generator of FrameOut for a resolved request."""
        emb, attrs = self.resolve(sentence, task, emotion, gender, handedness)
        vec = encode_attributes(attrs)
        for t, (pose, latency) in enumerate(
            generate_frames(emb, vec, self.params, self.model_cfg, self.skeleton, t_ges=t_ges)
        ):
            positions = forward_kinematics(pose, self.skeleton)
            yield FrameOut(t=t, pose=pose, positions=positions, latency_s=latency)

    def generate_sequence(self, sentence, task, emotion, gender, handedness, fps_out=120.0, t_ges=None):
        """Full sequence plus the per-frame latency list."""
        from .skeleton import GestureSequence

        _, attrs = self.resolve(sentence, task, emotion, gender, handedness)
        frames, latencies = [], []
        for out in self.frame_iter(sentence, task, emotion, gender, handedness, t_ges=t_ges):
            frames.append(out.pose)
            latencies.append(out.latency_s)
        seq = GestureSequence(
            skeleton=self.skeleton,
            fps=fps_out,
            rotations=np.stack(frames),
            attributes=attrs,
            sentence=str(sentence),
        )
        return seq, latencies


def latency_stats_ms(latencies) -> dict:
    arr = np.asarray(latencies) * 1000.0
    return {
        "frames": int(arr.size),
        "mean_ms": float(arr.mean()),
        "p95_ms": float(np.percentile(arr, 95)),
    }
