"""Affective feature extraction vs hand trigonometry; lexicon lookups."""

import numpy as np
import pytest

from emogest import affect, quat
from emogest.affect import LexiconError, default_lexicon, vad_lookup
from emogest.skeleton import default_skeleton, forward_kinematics


@pytest.fixture(scope="module")
def sk():
    return default_skeleton()


def rest_positions(sk):
    return forward_kinematics(sk.sos_pose, sk)


def test_feature_vector_shape_and_ranges(sk):
    rng = np.random.default_rng(0)
    poses = quat.normalize(rng.standard_normal((20, 23, 4)))
    feats = affect.extract_affective(forward_kinematics(poses, sk), sk)
    assert feats.shape == (20, 15)
    assert np.isfinite(feats).all()
    assert (feats[:, :7] >= 0).all() and (feats[:, :7] <= np.pi).all()
    assert (feats[:, 7:] >= 0).all()


def test_bilateral_symmetry(sk):
    f = affect.extract_affective(rest_positions(sk), sk)
    assert np.isclose(f[1], f[2], atol=1e-12)  # elbow flexions
    assert np.isclose(f[3], f[4], atol=1e-12)  # shoulder abductions
    assert np.isclose(f[7], f[8], atol=1e-12)  # wrist reach pair
    assert np.isclose(f[9], f[10], atol=1e-12)  # wrist-to-head pair


def test_scale_independence(sk):
    pos = rest_positions(sk)
    assert np.allclose(
        affect.extract_affective(pos, sk), affect.extract_affective(pos * 2.0, sk), atol=1e-9
    )


def test_translation_and_yaw_invariance(sk):
    rng = np.random.default_rng(1)
    pos = forward_kinematics(quat.normalize(rng.standard_normal((23, 4))), sk)
    f = affect.extract_affective(pos, sk)
    th = 1.234
    yaw = np.array([[np.cos(th), 0, np.sin(th)], [0, 1, 0], [-np.sin(th), 0, np.cos(th)]])
    moved = pos @ yaw.T + np.array([0.4, -0.2, 1.0])
    assert np.allclose(f, affect.extract_affective(moved, sk), atol=1e-9)


def test_full_rotation_invariance_except_torso_lean(sk):
    rng = np.random.default_rng(2)
    pos = forward_kinematics(quat.normalize(rng.standard_normal((23, 4))), sk)
    f = affect.extract_affective(pos, sk)
    r = quat.to_matrix(quat.normalize(rng.standard_normal(4)))
    f2 = affect.extract_affective(pos @ r.T, sk)
    keep = [i for i in range(15) if i != 5]  # all but the vertical-referenced angle
    assert np.allclose(f[keep], f2[keep], atol=1e-9)


def test_left_right_exchange_permutes_paired_features(sk):
    rng = np.random.default_rng(3)
    pos = forward_kinematics(quat.normalize(rng.standard_normal((23, 4))), sk)
    swapped = pos.copy()
    for left, right in [
        ("l_clavicle", "r_clavicle"), ("l_shoulder", "r_shoulder"),
        ("l_elbow", "r_elbow"), ("l_wrist", "r_wrist"),
        ("l_hip", "r_hip"), ("l_knee", "r_knee"),
        ("l_ankle", "r_ankle"), ("l_toe", "r_toe"),
    ]:
        li, ri = sk.joint_index(left), sk.joint_index(right)
        swapped[[li, ri]] = swapped[[ri, li]]
    f = affect.extract_affective(pos, sk)
    g = affect.extract_affective(swapped, sk)
    perm = [0, 2, 1, 4, 3, 5, 6, 8, 7, 10, 9, 11, 12, 13, 14]
    assert np.allclose(g, f[perm], atol=1e-12)


def test_hand_trigonometry_oracle(sk):
    pos = rest_positions(sk)

    def p(name):
        return pos[sk.joint_index(name)]

    def angle(vertex, a, b):
        u, w = a - vertex, b - vertex
        return np.arccos(np.dot(u, w) / (np.linalg.norm(u) * np.linalg.norm(w)))

    def area(a, b, c):
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a))

    expected = np.array([
        angle(p("neck"), p("head"), p("root")),
        angle(p("l_elbow"), p("l_shoulder"), p("l_wrist")),
        angle(p("r_elbow"), p("r_shoulder"), p("r_wrist")),
        angle(p("l_shoulder"), p("neck"), p("l_elbow")),
        angle(p("r_shoulder"), p("neck"), p("r_elbow")),
        angle(p("root"), p("neck"), p("root") + np.array([0.0, 1.0, 0.0])),
        angle(p("neck"), p("l_shoulder"), p("r_shoulder")),
        np.linalg.norm(p("l_wrist") - p("root")) / np.linalg.norm(p("l_shoulder") - p("r_shoulder")),
        np.linalg.norm(p("r_wrist") - p("root")) / np.linalg.norm(p("l_shoulder") - p("r_shoulder")),
        np.linalg.norm(p("r_wrist") - p("head")) / np.linalg.norm(p("root") - p("neck")),
        np.linalg.norm(p("l_wrist") - p("head")) / np.linalg.norm(p("root") - p("neck")),
        np.linalg.norm(p("l_wrist") - p("r_wrist")) / np.linalg.norm(p("l_shoulder") - p("r_shoulder")),
        area(p("l_wrist"), p("neck"), p("r_wrist")) / area(p("l_shoulder"), p("root"), p("r_shoulder")),
        area(p("l_elbow"), p("root"), p("r_elbow")) / area(p("l_shoulder"), p("root"), p("r_shoulder")),
        area(p("l_wrist"), p("head"), p("r_wrist")) / area(p("l_shoulder"), p("root"), p("r_shoulder")),
    ])
    assert np.allclose(affect.extract_affective(pos, sk), expected, atol=1e-9)


def test_degenerate_geometry_is_clamped_and_flagged(sk):
    pos = np.zeros((23, 3))  # every joint coincident
    feats, deg = affect.extract_affective_info(pos, sk)
    assert deg
    assert np.isfinite(feats).all()
    assert (feats <= affect.RATIO_CAP + 1e-12).all()


def test_affective_distance_properties():
    rng = np.random.default_rng(4)
    a = rng.standard_normal(15)
    b = rng.standard_normal(15)
    assert affect.affective_distance(a, a) == 0.0
    one = a.copy()
    one[3] += 1.0
    assert np.isclose(affect.affective_distance(a, one), 1.0)
    # componentwise summation oracle
    assert np.isclose(affect.affective_distance(a, b), sum((x - y) ** 2 for x, y in zip(a, b)))
    assert np.isclose(affect.affective_distance(a, b), affect.affective_distance(b, a))


def test_lexicon_contains_dataset_terms():
    lex = default_lexicon()
    assert len(lex) >= 11
    for term in affect.REQUIRED_TERMS:
        v = vad_lookup(term, lex)
        assert all(0.0 <= x <= 1.0 for x in v)


def test_lexicon_case_folding():
    lex = default_lexicon()
    assert vad_lookup("JOYOUS", lex) == vad_lookup("joyous", lex)


def test_lexicon_unknown_term_lists_near_misses():
    lex = default_lexicon()
    with pytest.raises(LexiconError, match="unknown emotion term"):
        vad_lookup("flabbergasted", lex)


def test_lexicon_file_loading(tmp_path):
    path = tmp_path / "lex.tsv"
    lines = ["# comment"] + [f"{t}\t0.5\t0.5\t0.5" for t in affect.REQUIRED_TERMS]
    path.write_text("\n".join(lines) + "\n")
    lex = affect.load_lexicon(path)
    assert vad_lookup("sad", lex) == (0.5, 0.5, 0.5)


def test_lexicon_rejects_bad_rows(tmp_path):
    path = tmp_path / "lex.tsv"
    path.write_text("sad\t0.5\t0.5\n")
    with pytest.raises(LexiconError, match=":1:"):
        affect.load_lexicon(path)
