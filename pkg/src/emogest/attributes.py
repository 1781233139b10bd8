"""Agent attributes conditioning the generation: task, emotion, gender, handedness."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

TASKS = ("narration", "conversation")
GENDERS = ("female", "male")
HANDEDNESS = ("left", "right")


@dataclass(frozen=True)
class AgentAttributes:
    """Conditioning tuple: acting task, VAD emotion point, gender, handedness.

    ``vad`` components live in [0, 1].  ``emotion_term`` optionally records
    the categorical term the VAD point was resolved from.
    """

    task: str
    vad: tuple
    gender: str
    handedness: str
    emotion_term: str | None = None

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"task must be one of {TASKS}, got {self.task!r}")
        if self.gender not in GENDERS:
            raise ValueError(f"gender must be one of {GENDERS}, got {self.gender!r}")
        if self.handedness not in HANDEDNESS:
            raise ValueError(f"handedness must be one of {HANDEDNESS}, got {self.handedness!r}")
        vad = tuple(float(v) for v in self.vad)
        if len(vad) != 3:
            raise ValueError(f"vad needs 3 components, got {len(vad)}")
        if any(not (0.0 <= v <= 1.0) for v in vad):
            raise ValueError(f"vad components must be in [0, 1], got {vad}")
        object.__setattr__(self, "vad", vad)


def encode_attributes(attrs: AgentAttributes) -> np.ndarray:
    """Fixed 9-vector layout: [task(2), vad(3), gender(2), handedness(2)]."""
    vec = np.zeros(9)
    vec[TASKS.index(attrs.task)] = 1.0
    vec[2:5] = attrs.vad
    vec[5 + GENDERS.index(attrs.gender)] = 1.0
    vec[7 + HANDEDNESS.index(attrs.handedness)] = 1.0
    return vec
