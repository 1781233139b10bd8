"""Metric definitions: normalized mean pose error, jerk, trajectory export."""

import numpy as np
import pytest

from emogest import quat
from emogest.evaluation import (
    export_trajectories,
    mean_affective_error,
    mean_jerk,
    mean_pose_error,
    write_trajectory_csv,
)
from emogest.skeleton import (
    GestureSequence,
    SkeletonDef,
    bounding_box_diagonal,
    default_skeleton,
    forward_kinematics,
)


@pytest.fixture(scope="module")
def sk():
    return default_skeleton()


def random_seq(sk, t, seed):
    rng = np.random.default_rng(seed)
    return GestureSequence(sk, 30.0, quat.normalize(rng.standard_normal((t, sk.n_joints, 4))))


def test_mean_pose_error_zero_for_identical(sk):
    gt = random_seq(sk, 5, 0)
    assert mean_pose_error([gt], [GestureSequence(sk, 30.0, gt.rotations.copy())], sk) == 0.0


def test_mean_pose_error_hand_value_single_frame(sk):
    # identity vs root rotated: compute expected from the definition directly
    identity = np.broadcast_to(quat.identity(), (1, 23, 4)).copy()
    gt = GestureSequence(sk, 30.0, identity)
    rot = identity.copy()
    rot[:, 0] = quat.from_euler(np.array([0.0, 0.4, 0.0]))
    pred = GestureSequence(sk, 30.0, rot)
    gt_pos = forward_kinematics(gt.rotations, sk)
    pred_pos = forward_kinematics(pred.rotations, sk)
    expected = np.linalg.norm(gt_pos - pred_pos, axis=-1).sum() / bounding_box_diagonal(gt)
    assert np.isclose(mean_pose_error([gt], [pred], sk), expected, atol=1e-12)


def test_mean_pose_error_pads_shorter_prediction_with_eos(sk):
    gt = GestureSequence(sk, 30.0, np.broadcast_to(sk.eos_pose, (6, 23, 4)).copy())
    pred = GestureSequence(sk, 30.0, np.broadcast_to(sk.eos_pose, (2, 23, 4)).copy())
    assert mean_pose_error([gt], [pred], sk) == 0.0


def test_mean_pose_error_degenerate_diagonal_errors(sk):
    flat = SkeletonDef(sk.names, sk.parents, np.zeros((23, 3)), sk.sos_pose, sk.eos_pose)
    gt = GestureSequence(flat, 30.0, np.broadcast_to(quat.identity(), (2, 23, 4)).copy())
    with pytest.raises(ValueError, match="diagonal"):
        mean_pose_error([gt], [gt], flat)


def test_mean_pose_error_mismatched_counts(sk):
    gt = random_seq(sk, 3, 1)
    with pytest.raises(ValueError, match="sequences"):
        mean_pose_error([gt], [gt, gt], sk)


def test_mean_jerk_zero_for_constant_and_positive_for_oscillation(sk):
    const = GestureSequence(sk, 30.0, np.broadcast_to(sk.sos_pose, (6, 23, 4)).copy())
    assert mean_jerk(const) == 0.0
    t = np.arange(12)
    wob = np.broadcast_to(sk.sos_pose, (12, 23, 4)).copy()
    angles = 0.4 * np.sin(t)
    wob[:, 1] = quat.from_euler(np.stack([angles, 0 * angles, 0 * angles], axis=-1))
    assert mean_jerk(GestureSequence(sk, 30.0, wob)) > 0.0


def test_mean_affective_error_zero_on_equal(sk):
    gt = random_seq(sk, 4, 2)
    assert mean_affective_error(gt, GestureSequence(sk, 30.0, gt.rotations.copy()), sk) == 0.0


def test_export_trajectories_schema_and_fk_values(sk):
    seq = GestureSequence(sk, 30.0, np.broadcast_to(sk.sos_pose, (4, 23, 4)).copy())
    rows = export_trajectories(seq)
    assert len(rows) == 4 * 3
    assert all(len(r) == 5 for r in rows)
    pos = forward_kinematics(seq.rotations, sk)
    head = sk.joint_index("head")
    spot = [r for r in rows if r[0] == 2 and r[1] == "head"][0]
    assert np.allclose(spot[2:], pos[2, head])
    # identity pose: constant rows across time
    first = [r for r in rows if r[1] == "head"][0]
    assert all(np.allclose(r[2:], first[2:]) for r in rows if r[1] == "head")


def test_export_trajectories_unknown_joint(sk):
    seq = random_seq(sk, 2, 3)
    with pytest.raises(Exception, match="unknown joint"):
        export_trajectories(seq, joints=("head", "tentacle"))


def test_trajectory_csv_five_columns(sk, tmp_path):
    seq = random_seq(sk, 3, 4)
    path = tmp_path / "traj.csv"
    write_trajectory_csv(export_trajectories(seq), path)
    lines = path.read_text().strip().split("\n")
    assert lines[0] == "t,joint,x,y,z"
    assert all(len(line.split(",")) == 5 for line in lines)
