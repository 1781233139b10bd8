"""The directed pose graph, poses, gesture sequences, and forward kinematics.

A skeleton is a 23-joint directed tree stored in topological order (every
parent index precedes its children; the root sits at index 0).  A pose is a
(J, 4) array of unit quaternions, one relative rotation per joint; a gesture
sequence stacks poses into (T, J, 4) with an fps and the agent annotations.

The root's world position is pinned to the origin for every frame: the agent
is seated and only relative rotations are modeled.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from . import numerics as nm
from . import quat
from .attributes import AgentAttributes
from .numerics import value

JOINT_COUNT = 23

SKELETON_FORMAT = "emogest-skeleton"
SKELETON_VERSION = 1


class SkeletonError(ValueError):
    pass


@dataclass
class SkeletonDef:
    """Joint table plus the fixed start/end-of-sequence idle poses."""

    names: list
    parents: np.ndarray
    offsets: np.ndarray
    sos_pose: np.ndarray
    eos_pose: np.ndarray
    name: str = "unnamed"
    version: int = SKELETON_VERSION

    def __post_init__(self):
        self.parents = np.asarray(self.parents, dtype=np.int64)
        self.offsets = np.asarray(self.offsets, dtype=np.float64)
        self.sos_pose = np.asarray(self.sos_pose, dtype=np.float64)
        self.eos_pose = np.asarray(self.eos_pose, dtype=np.float64)
        self.validate()

    @property
    def n_joints(self) -> int:
        return len(self.names)

    def validate(self):
        j = len(self.names)
        if j < 1:
            raise SkeletonError("skeleton needs at least one joint")
        if len(set(self.names)) != j:
            raise SkeletonError("duplicate joint names")
        if self.parents.shape != (j,) or self.offsets.shape != (j, 3):
            raise SkeletonError("parents/offsets shapes inconsistent with joint list")
        if self.parents[0] != -1:
            raise SkeletonError("joint 0 must be the root (parent -1)")
        for i in range(1, j):
            if not 0 <= self.parents[i] < i:
                raise SkeletonError(
                    f"joint {i} ({self.names[i]}) has parent {self.parents[i]}; "
                    "parents must precede children"
                )
        for pose_name, pose in (("sos_pose", self.sos_pose), ("eos_pose", self.eos_pose)):
            if pose.shape != (j, 4):
                raise SkeletonError(f"{pose_name} must have shape ({j}, 4)")
            norms = np.linalg.norm(pose, axis=-1)
            if not np.allclose(norms, 1.0, atol=1e-6):
                raise SkeletonError(f"{pose_name} quaternions must be unit-norm")

    def joint_index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise SkeletonError(f"unknown joint {name!r}") from None

    def children(self):
        out = [[] for _ in range(self.n_joints)]
        for i in range(1, self.n_joints):
            out[self.parents[i]].append(i)
        return out

    def leaves(self):
        kids = self.children()
        return [self.names[i] for i in range(self.n_joints) if not kids[i]]

    def to_json(self) -> dict:
        return {
            "format": SKELETON_FORMAT,
            "version": self.version,
            "name": self.name,
            "units": "meters",
            "joints": [
                {"name": n, "parent": int(p), "offset": [float(v) for v in o]}
                for n, p, o in zip(self.names, self.parents, self.offsets)
            ],
            "sos_pose": [[float(v) for v in q] for q in self.sos_pose],
            "eos_pose": [[float(v) for v in q] for q in self.eos_pose],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "SkeletonDef":
        if doc.get("format") != SKELETON_FORMAT:
            raise SkeletonError(f"not a skeleton file (format={doc.get('format')!r})")
        joints = doc["joints"]
        return cls(
            names=[j["name"] for j in joints],
            parents=np.array([j["parent"] for j in joints]),
            offsets=np.array([j["offset"] for j in joints]),
            sos_pose=np.array(doc["sos_pose"]),
            eos_pose=np.array(doc["eos_pose"]),
            name=doc.get("name", "unnamed"),
            version=doc.get("version", SKELETON_VERSION),
        )

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=1)

    @classmethod
    def load(cls, path) -> "SkeletonDef":
        with open(path) as fh:
            return cls.from_json(json.load(fh))

    def content_hash(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


_default_skeleton = None


def default_skeleton() -> SkeletonDef:
    """The canonical seated 23-joint skeleton shipped with the package."""
    global _default_skeleton
    if _default_skeleton is None:
        text = resources.files("emogest").joinpath("assets/skeleton_v1.json").read_text()
        _default_skeleton = SkeletonDef.from_json(json.loads(text))
    return _default_skeleton


@dataclass
class GestureSequence:
    """A timed sequence of poses with its skeleton and annotations."""

    skeleton: SkeletonDef
    fps: float
    rotations: np.ndarray  # (T, J, 4)
    attributes: AgentAttributes | None = None
    sentence: str = ""

    def __post_init__(self):
        self.rotations = np.asarray(self.rotations, dtype=np.float64)
        if self.fps <= 0:
            raise ValueError(f"fps must be positive, got {self.fps}")
        if self.rotations.ndim != 3 or self.rotations.shape[1:] != (self.skeleton.n_joints, 4):
            raise ValueError(
                f"rotations must have shape (T, {self.skeleton.n_joints}, 4), "
                f"got {self.rotations.shape}"
            )

    @property
    def n_frames(self) -> int:
        return self.rotations.shape[0]

    def padded(self, t_ges: int) -> "GestureSequence":
        """Pad (or leave) the sequence to t_ges frames using the EoS pose."""
        t = self.n_frames
        if t >= t_ges:
            return self
        pad = np.broadcast_to(self.skeleton.eos_pose, (t_ges - t,) + self.skeleton.eos_pose.shape)
        return GestureSequence(
            skeleton=self.skeleton,
            fps=self.fps,
            rotations=np.concatenate([self.rotations, pad], axis=0),
            attributes=self.attributes,
            sentence=self.sentence,
        )


def forward_kinematics(rotations, skeleton: SkeletonDef):
    """World joint positions from relative rotations.

    ``rotations`` has shape (..., J, 4); the result has shape (..., J, 3).
    Works on plain arrays and on autodiff Tensors.  The root is fixed at the
    origin; each child position is its parent's position plus the parent
    chain's world rotation applied to the child's offset.
    """
    lead = value(rotations).shape[:-2]
    j = skeleton.n_joints
    if value(rotations).shape[-2:] != (j, 4):
        raise ValueError(f"rotations must end in ({j}, 4), got {value(rotations).shape}")

    world_rot = [None] * j
    world_pos = [None] * j
    zero = np.zeros(lead + (3, 1))
    for i in range(j):
        local = quat.to_matrix(rotations[..., i, :])
        if i == 0:
            world_rot[0] = local
            world_pos[0] = zero
        else:
            p = skeleton.parents[i]
            world_rot[i] = nm.matmul(world_rot[p], local)
            offset = skeleton.offsets[i].reshape(3, 1)
            world_pos[i] = world_pos[p] + nm.matmul(world_rot[p], offset)
    rows = [nm.reshape(wp, lead + (1, 3)) for wp in world_pos]
    return nm.concat(rows, axis=-2)


def bounding_box_diagonal(seq: GestureSequence) -> float:
    """Mean over frames of the FK point cloud's axis-aligned box diagonal."""
    if seq.n_frames == 0:
        raise ValueError("cannot compute bounding box of an empty sequence")
    pos = forward_kinematics(seq.rotations, seq.skeleton)
    mins = pos.min(axis=1)
    maxs = pos.max(axis=1)
    return float(np.linalg.norm(maxs - mins, axis=-1).mean())
