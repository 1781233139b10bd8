"""Evaluation metrics and trajectory export.

The headline metric: per sequence, the mean over frames of the joint-summed
Euclidean FK distance between prediction and ground truth, normalized by
that ground-truth sequence's bounding-box diagonal; reported as the mean
over sequences.  Jerk (second difference of FK positions) and per-frame
affective error back the ablation comparisons.
"""

from __future__ import annotations

import numpy as np

from . import affect as affect_mod
from .skeleton import GestureSequence, SkeletonDef, bounding_box_diagonal, forward_kinematics

TRAJECTORY_JOINTS = ("head", "l_wrist", "r_wrist")


def _pad_pair(gt: GestureSequence, pred: GestureSequence):
    t = max(gt.n_frames, pred.n_frames)
    return gt.padded(t), pred.padded(t)


def mean_pose_error(gt_set, pred_set, skeleton: SkeletonDef) -> float:
    """Normalized mean pose error over paired sequences."""
    if len(gt_set) != len(pred_set):
        raise ValueError(f"got {len(gt_set)} ground-truth vs {len(pred_set)} predicted sequences")
    errors = []
    for gt, pred in zip(gt_set, pred_set):
        gt_p, pred_p = _pad_pair(gt, pred)
        gt_pos = forward_kinematics(gt_p.rotations, skeleton)
        pred_pos = forward_kinematics(pred_p.rotations, skeleton)
        per_frame = np.linalg.norm(gt_pos - pred_pos, axis=-1).sum(axis=-1)  # sum joints
        diag = bounding_box_diagonal(gt_p)
        if diag == 0.0:
            raise ValueError("degenerate sequence: zero bounding-box diagonal")
        errors.append(per_frame.mean() / diag)
    return float(np.mean(errors))


def mean_jerk(seq: GestureSequence) -> float:
    """Mean norm of the second difference of FK joint positions."""
    if seq.n_frames < 3:
        raise ValueError("jerk needs at least 3 frames")
    pos = forward_kinematics(seq.rotations, seq.skeleton)
    second = pos[2:] - 2.0 * pos[1:-1] + pos[:-2]
    return float(np.linalg.norm(second, axis=-1).mean())


def mean_affective_error(gt: GestureSequence, pred: GestureSequence, skeleton: SkeletonDef) -> float:
    """Mean over frames of the squared affective-feature distance."""
    gt_p, pred_p = _pad_pair(gt, pred)
    gt_f = affect_mod.extract_affective(forward_kinematics(gt_p.rotations, skeleton), skeleton)
    pred_f = affect_mod.extract_affective(forward_kinematics(pred_p.rotations, skeleton), skeleton)
    d = gt_f - pred_f
    return float((d * d).sum(axis=-1).mean())


def export_trajectories(seq: GestureSequence, joints=TRAJECTORY_JOINTS):
    """Rows (t, joint, x, y, z) for the requested end-effectors."""
    indices = [seq.skeleton.joint_index(j) for j in joints]
    pos = forward_kinematics(seq.rotations, seq.skeleton)
    rows = []
    for t in range(seq.n_frames):
        for name, idx in zip(joints, indices):
            x, y, z = pos[t, idx]
            rows.append((t, name, float(x), float(y), float(z)))
    return rows


def write_trajectory_csv(rows, path):
    with open(path, "w") as fh:
        fh.write("t,joint,x,y,z\n")
        for t, joint, x, y, z in rows:
            fh.write(f"{t},{joint},{repr(x)},{repr(y)},{repr(z)}\n")
