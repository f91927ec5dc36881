import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from matchfield.core import make_rng
from matchfield.dualquat import (
    PLANAR_COLS,
    Quaternion,
    ScaledDq,
    UnitDualQuaternion,
    dq4_apply,
    dq4_blend,
    dq4_from8,
    dq4_to8,
    dq8_apply,
    dq8_blend,
    dq8_from_rt,
    dq8_identity,
    dq8_mul,
    dq8_normalize,
    dq8_to_rt,
    dq8_translate_after,
    dq8_translation,
    dq_apply,
    dq_blend,
    dq_from_transform,
    dq_multiply,
    dq_normalize,
    dq_to_transform,
    quat_from_matrix,
    quat_mul,
    quat_rotate,
    quat_to_matrix,
    trans2dq,
)


def random_rotation_obj(rng):
    q = rng.normal(size=4)
    return Rotation.from_quat(q / np.linalg.norm(q))


def random_rotation(rng, dim):
    if dim == 3:
        return random_rotation_obj(rng).as_matrix()
    ang = rng.uniform(-np.pi, np.pi)
    c, s = np.cos(ang), np.sin(ang)
    return np.array([[c, -s], [s, c]])


def unit_residual(a):
    r, d = a[0:4], a[4:8]
    return max(abs(np.linalg.norm(r) - 1.0), abs(float(np.dot(r, d))))


def test_quat_mul_matches_rotation_composition():
    rng = make_rng(2)
    for _ in range(20):
        Ra = random_rotation_obj(rng)
        Rb = random_rotation_obj(rng)
        qa = quat_from_matrix(Ra.as_matrix())
        qb = quat_from_matrix(Rb.as_matrix())
        M = quat_to_matrix(quat_mul(qa, qb))
        assert np.allclose(M, (Ra * Rb).as_matrix(), atol=1e-12)


def test_quat_rotate_matches_matrix():
    rng = make_rng(3)
    for _ in range(20):
        R = random_rotation_obj(rng)
        q = quat_from_matrix(R.as_matrix())
        v = rng.normal(size=3)
        assert np.allclose(quat_rotate(q, v), R.apply(v), atol=1e-12)


def test_quat_matrix_round_trip():
    rng = make_rng(4)
    for _ in range(20):
        R = random_rotation_obj(rng).as_matrix()
        assert np.allclose(quat_to_matrix(quat_from_matrix(R)), R, atol=1e-12)


def test_dq8_apply_matches_matrix_oracle():
    rng = make_rng(5)
    for dim in (2, 3):
        for _ in range(20):
            R = random_rotation(rng, dim)
            t = rng.normal(size=dim)
            mu = rng.uniform(0.5, 2.0)
            dq = dq8_from_rt(R, t)
            assert unit_residual(dq) < 1e-9
            pts = rng.normal(size=(7, 3))
            if dim == 2:
                pts[:, 2] = 0.0
            want3 = np.zeros((7, 3))
            want3[:, :dim] = mu * (pts[:, :dim] @ R.T + t)
            got = dq8_apply(dq, mu, pts)
            assert np.allclose(got, want3, atol=1e-9)


def test_dq8_to_rt_round_trip():
    rng = make_rng(6)
    for _ in range(20):
        R = random_rotation(rng, 3)
        t = rng.normal(size=3)
        R2, t2 = dq8_to_rt(dq8_from_rt(R, t))
        assert np.allclose(R2, R, atol=1e-12)
        assert np.allclose(t2, t, atol=1e-12)


def test_dq8_identity_and_translation():
    assert np.allclose(dq8_identity(), [1, 0, 0, 0, 0, 0, 0, 0])
    assert dq8_identity(4).shape == (4, 8)
    dq = dq8_translation(np.array([2.0, 4.0, 6.0]))
    assert np.allclose(dq[4:8], [0.0, 1.0, 2.0, 3.0])


def test_trans2dq_hand_value():
    # frozen: dual = t_quat / 2 times the identity real part -> (0, 1, 2, 0)
    dq = trans2dq([2.0, 4.0])
    assert np.allclose(dq.real.as_array(), [1.0, 0.0, 0.0, 0.0])
    assert np.allclose(dq.dual.as_array(), [0.0, 1.0, 2.0, 0.0])
    with pytest.raises(ValueError):
        trans2dq([1.0, 2.0, 3.0, 4.0])


def test_dq_multiply_applies_right_operand_first():
    rng = make_rng(7)
    for _ in range(10):
        Ra, ta = random_rotation(rng, 3), rng.normal(size=3)
        Rb, tb = random_rotation(rng, 3), rng.normal(size=3)
        a = dq_from_transform(Ra, ta)
        b = dq_from_transform(Rb, tb)
        Rc, tc = dq_to_transform(dq_multiply(a, b))
        # b first, then a: x -> Ra (Rb x + tb) + ta
        assert np.allclose(Rc, Ra @ Rb, atol=1e-9)
        assert np.allclose(tc, Ra @ tb + ta, atol=1e-9)


def test_dq8_translate_after_equals_product():
    rng = make_rng(8)
    for _ in range(10):
        dq = dq8_from_rt(random_rotation(rng, 3), rng.normal(size=3))
        t = rng.normal(size=3)
        want = dq8_mul(dq8_translation(t), dq)
        assert np.allclose(dq8_translate_after(dq, t), want, atol=1e-12)


def test_dq8_mul_keeps_unit_invariants():
    rng = make_rng(9)
    for _ in range(20):
        a = dq8_from_rt(random_rotation(rng, 3), rng.normal(size=3))
        b = dq8_from_rt(random_rotation(rng, 3), rng.normal(size=3))
        assert unit_residual(dq8_normalize(dq8_mul(a, b))) < 1e-9


def test_dq_normalize_restores_invariants():
    rng = make_rng(10)
    for _ in range(10):
        a = dq8_from_rt(random_rotation(rng, 3), rng.normal(size=3))
        noisy = a * 1.7 + np.concatenate([np.zeros(4), 1e-3 * rng.normal(size=4)])
        fixed = dq_normalize(noisy)
        assert unit_residual(fixed.as_array()) < 1e-9
    with pytest.raises(ValueError):
        dq_normalize(np.zeros(8))


def test_unit_dual_quaternion_validation():
    with pytest.raises(ValueError):
        UnitDualQuaternion(Quaternion(2.0, 0, 0, 0), Quaternion(0, 0, 0, 0))
    with pytest.raises(ValueError):
        UnitDualQuaternion(Quaternion(1.0, 0, 0, 0), Quaternion(1.0, 0, 0, 0))
    ident = UnitDualQuaternion.identity()
    assert ident.is_planar()


def test_dq_from_transform_rejects_non_rotation():
    with pytest.raises(ValueError):
        dq_from_transform(np.array([[1.0, 0.2], [0.0, 1.0]]), np.zeros(2))
    with pytest.raises(ValueError):
        dq_from_transform(np.diag([1.0, -1.0, 1.0]), np.zeros(3))


def test_dq_apply_scalar_layer():
    R = np.array([[0.0, -1.0], [1.0, 0.0]])
    dq = dq_from_transform(R, np.array([1.0, 0.0]))
    out = dq_apply(dq, 2.0, np.array([1.0, 0.0]))
    assert np.allclose(out, [2.0, 2.0], atol=1e-12)
    sdq = ScaledDq(dq, 2.0)
    assert np.allclose(sdq.apply([1.0, 0.0]), [2.0, 2.0])
    with pytest.raises(ValueError):
        ScaledDq(dq, -1.0)
    with pytest.raises(ValueError):
        dq_apply(dq, 1.0, np.zeros(5))


def test_planar_round_trip_and_apply():
    rng = make_rng(12)
    for _ in range(20):
        dq = dq8_from_rt(random_rotation(rng, 2), rng.normal(size=2))
        c = dq4_from8(dq)
        assert np.allclose(dq4_to8(c), dq, atol=1e-15)
        pts2 = rng.normal(size=(6, 2))
        pts3 = np.concatenate([pts2, np.zeros((6, 1))], axis=1)
        mu = rng.uniform(0.5, 2.0)
        assert np.allclose(dq4_apply(c, mu, pts2), dq8_apply(dq, mu, pts3)[:, :2], atol=1e-12)


def test_planar_blend_matches_full_blend():
    rng = make_rng(13)
    for _ in range(10):
        dqs = np.stack(
            [dq8_from_rt(random_rotation(rng, 2), rng.normal(size=2)) for _ in range(5)]
        )
        w = rng.uniform(0.1, 1.0, size=5)
        full = dq8_blend(w, dqs)
        compact = dq4_blend(w, dqs[:, PLANAR_COLS])
        assert np.allclose(dq4_to8(compact), full, atol=1e-12)


def test_blend_of_perpendicular_rotations_bisects():
    # frozen: equal-weight blend of 0 and 90 degree rotations about the same
    # center is the 45 degree rotation about that center
    center = np.array([3.0, 1.0])
    R90 = np.array([[0.0, -1.0], [1.0, 0.0]])
    R45 = np.array(
        [[np.cos(np.pi / 4), -np.sin(np.pi / 4)], [np.sin(np.pi / 4), np.cos(np.pi / 4)]]
    )
    a = dq_from_transform(np.eye(2), np.zeros(2))
    b = dq_from_transform(R90, center - R90 @ center)
    blended = dq_blend([(1.0, a), (1.0, b)])
    Rc, tc = dq_to_transform(blended, dim=2)
    assert np.allclose(Rc, R45, atol=1e-12)
    assert np.allclose(tc, center - R45 @ center, atol=1e-12)


def test_blend_ignores_antipodes_and_weight_scale():
    rng = make_rng(14)
    for _ in range(10):
        qs = [dq_from_transform(random_rotation(rng, 3), rng.normal(size=3)) for _ in range(4)]
        w = list(rng.uniform(0.1, 1.0, size=4))
        base = dq_blend(zip(w, qs))
        flipped = [UnitDualQuaternion.from_array(-qs[1].as_array())] + qs[:1] + qs[2:]
        wf = [w[1], w[0]] + w[2:]
        other = dq_blend(zip(wf, flipped))
        scaled = dq_blend(zip([5.0 * v for v in w], qs))
        p = rng.normal(size=3)
        assert np.allclose(dq_apply(base, 1.0, p), dq_apply(other, 1.0, p), atol=1e-9)
        assert np.allclose(dq_apply(base, 1.0, p), dq_apply(scaled, 1.0, p), atol=1e-9)


def test_blend_unit_invariants_and_errors():
    rng = make_rng(15)
    qs = [dq_from_transform(random_rotation(rng, 3), rng.normal(size=3)) for _ in range(6)]
    out = dq_blend([(w, q) for w, q in zip(rng.uniform(0.0, 1.0, size=6), qs)])
    assert unit_residual(out.as_array()) < 1e-9
    with pytest.raises(ValueError):
        dq_blend([])
    with pytest.raises(ValueError):
        dq_blend([(-1.0, qs[0])])
    with pytest.raises(ValueError):
        dq_blend([(0.0, qs[0]), (0.0, qs[1])])


def test_dq_to_transform_planar_slice():
    R = np.array([[0.0, -1.0], [1.0, 0.0]])
    dq = dq_from_transform(R, np.array([2.0, 5.0]))
    R2, t2 = dq_to_transform(dq, dim=2)
    assert R2.shape == (2, 2) and t2.shape == (2,)
    assert np.allclose(R2, R, atol=1e-12)
    assert np.allclose(t2, [2.0, 5.0], atol=1e-12)
    with pytest.raises(ValueError):
        dq_to_transform(dq, dim=4)
