"""Quaternion algebra against scipy and rotation-matrix oracles."""

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from emogest import quat


def random_units(n, seed=0):
    rng = np.random.default_rng(seed)
    return quat.normalize(rng.standard_normal((n, 4)))


def test_normalize_scaling():
    out, deg = quat.normalize_info(np.array([2.0, 0.0, 0.0, 0.0]))
    assert np.allclose(out, [1, 0, 0, 0])
    assert not deg


def test_normalize_degenerate_falls_back_to_identity():
    out, deg = quat.normalize_info(np.zeros(4))
    assert np.allclose(out, [1, 0, 0, 0])
    assert deg


def test_normalize_nonfinite_rejected():
    with pytest.raises(ValueError):
        quat.normalize(np.array([np.nan, 0, 0, 0]))


def test_normalize_random_vectors_unit_norm():
    rng = np.random.default_rng(1)
    v = rng.standard_normal((200, 4))
    out = quat.normalize(v)
    norms = np.linalg.norm(out, axis=-1)
    assert np.abs(norms - 1.0).max() < 1e-9
    # direct norm oracle
    expected = v / np.linalg.norm(v, axis=-1, keepdims=True)
    assert np.allclose(out, expected, atol=1e-9)


def test_hemisphere_align_antipodal():
    out = quat.hemisphere_align(np.array([-1.0, 0, 0, 0]), np.array([1.0, 0, 0, 0]))
    assert np.allclose(out, [1, 0, 0, 0])


def test_hemisphere_align_identity_case():
    q = random_units(1, seed=2)[0]
    assert np.array_equal(quat.hemisphere_align(q, q), q)


def test_hemisphere_align_preserves_rotation():
    qs = random_units(100, seed=3)
    refs = random_units(100, seed=4)
    aligned = quat.hemisphere_align(qs, refs)
    # rotation-matrix comparison oracle
    assert np.abs(quat.to_matrix(aligned) - quat.to_matrix(qs)).max() < 1e-9
    dots = np.sum(aligned * refs, axis=-1)
    assert (dots >= 0).all()


def test_to_matrix_matches_scipy():
    qs = random_units(100, seed=5)
    ours = quat.to_matrix(qs)
    theirs = Rotation.from_quat(qs[:, [1, 2, 3, 0]]).as_matrix()
    assert np.abs(ours - theirs).max() < 1e-12


def test_euler_identity():
    assert np.allclose(quat.to_euler(np.array([1.0, 0, 0, 0])), [0, 0, 0])


def test_euler_axis_aligned():
    q = quat.from_euler(np.array([np.pi / 2, 0.0, 0.0]))
    assert np.allclose(quat.to_euler(q), [np.pi / 2, 0, 0], atol=1e-12)


def test_euler_roundtrip_1000_random_rotations():
    qs = random_units(1000, seed=6)
    back = quat.from_euler(quat.to_euler(qs))
    # rotation-matrix distance oracle
    assert quat.geodesic(qs, back).max() < 1e-6


def test_euler_matches_scipy_intrinsic_xyz():
    qs = random_units(200, seed=7)
    ours = quat.to_euler(qs)
    theirs = Rotation.from_quat(qs[:, [1, 2, 3, 0]]).as_euler("XYZ")
    assert np.abs(ours - theirs).max() < 1e-9


def test_euler_components_canonical_range():
    e = quat.to_euler(random_units(500, seed=8))
    assert (e > -np.pi - 1e-12).all() and (e <= np.pi + 1e-12).all()


def test_gimbal_lock_canonical_branch():
    # pitch exactly +pi/2: roll must be absorbed (reported zero), no error
    q = quat.from_euler(np.array([0.3, np.pi / 2, 0.2]))
    e = quat.to_euler(q)
    assert e[0] == 0.0
    assert np.isclose(e[1], np.pi / 2, atol=1e-9)
    back = quat.from_euler(e)
    assert quat.geodesic(q[None], back[None])[0] < 1e-6


def test_mul_matches_scipy_composition():
    a = random_units(50, seed=9)
    b = random_units(50, seed=10)
    ours = quat.mul(a, b)
    theirs = (
        Rotation.from_quat(a[:, [1, 2, 3, 0]]) * Rotation.from_quat(b[:, [1, 2, 3, 0]])
    ).as_quat()[:, [3, 0, 1, 2]]
    sign = np.where(np.sum(ours * theirs, axis=-1, keepdims=True) >= 0, 1.0, -1.0)
    assert np.abs(ours - theirs * sign).max() < 1e-12


def test_rotate_matches_matrix_action():
    qs = random_units(50, seed=11)
    v = np.random.default_rng(12).standard_normal((50, 3))
    ours = quat.rotate(qs, v)
    theirs = np.einsum("nij,nj->ni", quat.to_matrix(qs), v)
    assert np.abs(ours - theirs).max() < 1e-12


def test_from_matrix_roundtrip():
    # matrix comparison: the geodesic metric itself quantizes near zero angle
    qs = random_units(200, seed=13)
    for q in qs:
        back = quat.from_matrix(quat.to_matrix(q))
        assert np.abs(quat.to_matrix(back) - quat.to_matrix(q)).max() < 1e-12
