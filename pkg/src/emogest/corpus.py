"""Corpus manifests and the synthetic fixture corpus.

A corpus is a directory of canonical gesture files plus a JSONL manifest
(one record per line: file, sentence, attribute annotations).  The fixture
generator procedurally covers the attribute grid with smooth sinusoidal
gestures whose speed and amplitude grow with arousal, whose arm spread grows
with dominance, and whose dominant-hand motion follows handedness, so loss
and metric behaviors can be exercised at desk scale.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import affect as affect_mod
from . import motionfile, quat
from .attributes import GENDERS, HANDEDNESS, TASKS, AgentAttributes
from .skeleton import GestureSequence, SkeletonDef

FIXTURE_FPS = 30.0
FIXTURE_FRAMES = 24

_TEMPLATES = (
    "i feel so {term} about this",
    "that story made me {term}",
    "honestly i am {term} right now",
    "you look {term} to me today",
    "we were all {term} after the show",
    "it leaves me rather {term} again",
)

# joints that move in fixture gestures, with a base amplitude weight
_MOVING = (
    ("spine1", 0.25), ("spine2", 0.25), ("spine3", 0.3), ("neck", 0.5), ("head", 0.6),
    ("l_shoulder", 0.9), ("l_elbow", 1.0), ("l_wrist", 1.0),
    ("r_shoulder", 0.9), ("r_elbow", 1.0), ("r_wrist", 1.0),
)


def _axis_angle_quat(axis: np.ndarray, angles: np.ndarray) -> np.ndarray:
    """Unit quaternions for rotations of ``angles`` about a fixed unit axis."""
    half = 0.5 * angles
    q = np.zeros(angles.shape + (4,))
    q[..., 0] = np.cos(half)
    q[..., 1:] = np.sin(half)[..., None] * axis
    return q


def synthesize_fixture_corpus(
    n: int,
    seed: int,
    out_dir,
    skeleton: SkeletonDef,
    lexicon=None,
    fps: float = FIXTURE_FPS,
    n_frames: int = FIXTURE_FRAMES,
):
    """Write ``n`` canonical gesture files plus a manifest; returns its path."""
    if n < 1:
        raise ValueError("n must be >= 1")
    lexicon = lexicon or affect_mod.default_lexicon()
    terms = list(affect_mod.REQUIRED_TERMS)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    records = []
    for i in range(n):
        term = terms[i % len(terms)]
        task = TASKS[i % 2]
        gender = GENDERS[(i // 2) % 2]
        hand = HANDEDNESS[(i // 4) % 2]
        vad = affect_mod.vad_lookup(term, lexicon)
        attrs = AgentAttributes(task, vad, gender, hand, emotion_term=term)
        sentence = _TEMPLATES[i % len(_TEMPLATES)].format(term=term)
        seq = _fixture_gesture(attrs, skeleton, rng, fps, n_frames, sentence)
        name = f"fixture_{i:03d}.ges"
        motionfile.write_canonical(seq, out_dir / name)
        records.append(
            {
                "file": name,
                "sentence": sentence,
                "task": task,
                "emotion_term": term,
                "vad": list(vad),
                "gender": gender,
                "handedness": hand,
            }
        )
    manifest = out_dir / "manifest.jsonl"
    with open(manifest, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")
    return manifest


def _fixture_gesture(attrs, skeleton, rng, fps, n_frames, sentence) -> GestureSequence:
    _, arousal, dominance = attrs.vad
    freq = 0.4 + 1.2 * arousal  # 0.4..1.6 Hz, the pace of real gesticulation
    amp = (0.05 + 0.28 * arousal) * (1.25 if attrs.task == "narration" else 1.0)
    spread = 0.5 * (dominance - 0.5)  # static shoulder abduction, +-0.25 rad
    dominant = "l" if attrs.handedness == "left" else "r"

    t = np.arange(n_frames)
    envelope = np.sin(np.pi * t / (n_frames - 1)) ** 2
    rotations = np.broadcast_to(skeleton.sos_pose, (n_frames,) + skeleton.sos_pose.shape).copy()
    for name, weight in _MOVING:
        j = skeleton.joint_index(name)
        axis = rng.standard_normal(3)
        axis /= np.linalg.norm(axis)
        side_gain = 1.0
        if name.startswith(("l_", "r_")):
            side_gain = 1.5 if name.startswith(dominant + "_") else 0.7
        phase = rng.uniform(0, 2 * np.pi)
        angles = amp * weight * side_gain * np.sin(2 * np.pi * freq * t / fps + phase)
        static = spread if name.endswith("_shoulder") else 0.0
        wobble = _axis_angle_quat(axis, envelope * (angles + static))
        rotations[:, j] = quat.mul(skeleton.sos_pose[j][None], wobble)
    return GestureSequence(
        skeleton=skeleton, fps=fps, rotations=rotations, attributes=attrs, sentence=sentence
    )


def load_manifest(manifest_path):
    """Records from a JSONL manifest."""
    records = []
    with open(manifest_path) as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as e:
                raise ValueError(f"{manifest_path}:{line_no}: bad manifest record: {e}") from None
    return records


def load_corpus(manifest_path, skeleton: SkeletonDef):
    """GestureSequences for every manifest record (files relative to it)."""
    base = Path(manifest_path).parent
    return [
        motionfile.read_canonical(base / rec["file"], skeleton)
        for rec in load_manifest(manifest_path)
    ]
