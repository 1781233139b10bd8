"""The three data losses and the regularized total.

Angle loss: squared Euler-angle differences wrapped modulo pi, plus the same
on successive-frame differences (the first frame's derivative term is zero).
Pose loss: squared FK position differences.  Affective loss: squared
distance between the 15 gesture-based affective features.  Total: their sum
plus lambda times the global L2 norm of all trainable parameters.

Each loss has one implementation, written over the backend-dispatch layer:
fed plain arrays it evaluates metrics, fed autodiff Tensors it builds the
training gradient graph.  Predictions are hemisphere-aligned to the ground
truth before any comparison, so quaternion sign flips cost nothing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import affect as affect_mod
from . import autodiff as ad
from . import numerics as nm
from . import quat
from .autodiff import Tensor
from .numerics import value
from .skeleton import GestureSequence, SkeletonDef, forward_kinematics


@dataclass
class LossBreakdown:
    ang: float
    pose: float
    aff: float
    reg: float

    @property
    def total(self) -> float:
        return self.ang + self.pose + self.aff + self.reg

    def row(self):
        return [self.ang, self.pose, self.aff, self.reg, self.total]


@dataclass
class GtPack:
    """Per-item ground-truth quantities precomputed outside the graph."""

    quats: np.ndarray  # (B, T, J, 4)
    euler: np.ndarray  # (B, T, J, 3)
    positions: np.ndarray  # (B*T, J, 3)
    features: np.ndarray  # (B*T, 15)

    @classmethod
    def build(cls, quats: np.ndarray, skeleton: SkeletonDef, table=None) -> "GtPack":
        quats = np.asarray(quats, dtype=np.float64)
        b, t, j, _ = quats.shape
        flat = quats.reshape(b * t, j, 4)
        positions = forward_kinematics(flat, skeleton)
        return cls(
            quats=quats,
            euler=quat.to_euler(quats),
            positions=positions,
            features=affect_mod.extract_affective(positions, skeleton, table),
        )


def align_to_gt(pred_q, gt_q):
    """Hemisphere-align predicted quaternions to the ground truth."""
    return quat.hemisphere_align(pred_q, value(gt_q))


def angle_loss_sum(gt_euler, pred_q_aligned):
    """Sum over items/frames/joints of the wrapped-angle and velocity terms.

    ``gt_euler`` (B, T, J, 3) is plain; ``pred_q_aligned`` (B, T, J, 4) may
    be a Tensor.
    """
    e_pred = quat.to_euler(pred_q_aligned)
    d = nm.wrap_pi(gt_euler - e_pred)
    total = nm.sum_(d * d)
    vel_gt = gt_euler[:, 1:] - gt_euler[:, :-1]
    vel_pred = e_pred[:, 1:] - e_pred[:, :-1]
    dv = nm.wrap_pi(vel_gt - vel_pred)
    return total + nm.sum_(dv * dv)


def pose_loss_sum(gt_positions, pred_positions):
    """Sum of squared FK position differences; inputs (B*T, J, 3)."""
    d = gt_positions - pred_positions
    return nm.sum_(d * d)


def affective_loss_sum(gt_features, pred_features):
    """Sum over frames of squared affective-feature distances; (B*T, 15)."""
    d = gt_features - pred_features
    return nm.sum_(d * d)


def parameter_l2_norm(params: dict):
    """Global L2 norm (not squared) over every trainable tensor."""
    total = None
    for name in sorted(params):
        s = ad.sum_(ad.mul(params[name], params[name]))
        total = s if total is None else ad.add(total, s)
    return ad.sqrt(total)


def batch_losses(
    pred_q,
    gt: GtPack,
    skeleton: SkeletonDef,
    use_angle=True,
    use_pose=True,
    use_affective=True,
    table=None,
):
    """Per-term batch means for aligned predicted quaternions (B, T, J, 4).

    Returns a dict of Tensor-or-float scalars; switched-off terms are 0.0.
    FK runs once and feeds both the pose and affective terms.
    """
    b, t, j, _ = value(pred_q).shape
    aligned = align_to_gt(pred_q, gt.quats)
    out = {"ang": 0.0, "pose": 0.0, "aff": 0.0}
    if use_angle:
        out["ang"] = angle_loss_sum(gt.euler, aligned) * (1.0 / b)
    if use_pose or use_affective:
        flat = nm.reshape(aligned, (b * t, j, 4))
        positions = forward_kinematics(flat, skeleton)
        if use_pose:
            out["pose"] = pose_loss_sum(gt.positions, positions) * (1.0 / b)
        if use_affective:
            feats = affect_mod.extract_affective(positions, skeleton, table)
            out["aff"] = affective_loss_sum(gt.features, feats) * (1.0 / b)
    return out


# ---------------------------------------------------------------------------
# sequence-level API (metrics/tests); same cores, batch of one


def _paired(gt: GestureSequence, pred: GestureSequence):
    if gt.n_frames != pred.n_frames:
        raise ValueError(f"sequence lengths differ: {gt.n_frames} vs {pred.n_frames}")
    if gt.skeleton.n_joints != pred.skeleton.n_joints:
        raise ValueError("sequences have different joint counts")
    gt_q = gt.rotations[None]
    pred_q = align_to_gt(pred.rotations[None], gt_q)
    return gt_q, pred_q


def angle_loss(gt: GestureSequence, pred: GestureSequence) -> float:
    gt_q, pred_q = _paired(gt, pred)
    return float(value(angle_loss_sum(quat.to_euler(gt_q), pred_q)))


def pose_loss(gt: GestureSequence, pred: GestureSequence, skeleton: SkeletonDef | None = None) -> float:
    """FK runs each sequence on its own skeleton (they may differ in scale)."""
    gt_q, pred_q = _paired(gt, pred)
    t, j = gt.n_frames, gt.skeleton.n_joints
    gt_pos = forward_kinematics(gt_q.reshape(t, j, 4), gt.skeleton)
    pred_pos = forward_kinematics(nm.reshape(pred_q, (t, j, 4)), pred.skeleton)
    return float(value(pose_loss_sum(gt_pos, pred_pos)))


def affective_loss(gt: GestureSequence, pred: GestureSequence, skeleton: SkeletonDef | None = None, table=None) -> float:
    """FK per sequence on its own skeleton; a uniformly scaled predicted
    skeleton therefore contributes nothing (the features are scale-free)."""
    gt_q, pred_q = _paired(gt, pred)
    t, j = gt.n_frames, gt.skeleton.n_joints
    gt_feats = affect_mod.extract_affective(
        forward_kinematics(gt_q.reshape(t, j, 4), gt.skeleton), gt.skeleton, table
    )
    pred_feats = affect_mod.extract_affective(
        forward_kinematics(nm.reshape(pred_q, (t, j, 4)), pred.skeleton), pred.skeleton, table
    )
    return float(value(affective_loss_sum(gt_feats, pred_feats)))


def total_loss(gt: GestureSequence, pred: GestureSequence, params: dict, cfg) -> LossBreakdown:
    """Sequence-level breakdown honoring the config's loss switches and lambda."""
    skeleton = gt.skeleton
    ang = angle_loss(gt, pred) if cfg.use_angle_loss else 0.0
    pose = pose_loss(gt, pred, skeleton) if cfg.use_pose_loss else 0.0
    aff = affective_loss(gt, pred, skeleton) if cfg.use_affective_loss else 0.0
    reg = cfg.lam * float(value(parameter_l2_norm(params))) if cfg.lam and params else 0.0
    return LossBreakdown(ang=ang, pose=pose, aff=aff, reg=reg)
