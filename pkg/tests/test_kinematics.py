import os

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from artikit.kinematics import (
    ArticulatedObject,
    Joint,
    JointState,
    PluckerAxis,
    RigidTransform,
    axis_to_parent_frame,
    box_mesh,
    box_surface_area,
    export_obj_sequence,
    forward_kinematics,
    instantiate,
    project_to_plucker,
    rotation_about,
    sample_box_surface,
    sample_joint_states,
    screw_transform,
    transform_axis,
    write_obj,
)
from helpers import (
    axis_through,
    box_part,
    hybrid_object,
    two_part_prismatic,
    two_part_revolute,
)


def random_axis(rng) -> PluckerAxis:
    return project_to_plucker(np.concatenate([rng.normal(size=3), rng.normal(size=3)]))


def random_pose(rng) -> RigidTransform:
    return RigidTransform(
        Rotation.random(random_state=rng).as_matrix(), rng.normal(size=3)
    )


# ----------------------------------------------------------------------
# rotations and rigid transforms


def test_rotation_about_quarter_turn():
    r = rotation_about(np.array([0.0, 0.0, 1.0]), np.pi / 2)
    assert np.allclose(r @ [1, 0, 0], [0, 1, 0], atol=1e-12)


def test_rotation_about_matches_scipy():
    rng = np.random.default_rng(0)
    for _ in range(100):
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        theta = rng.uniform(-np.pi, np.pi)
        ours = rotation_about(axis, theta)
        ref = Rotation.from_rotvec(theta * axis).as_matrix()
        assert np.abs(ours - ref).max() < 1e-12


def test_rigid_transform_compose_apply():
    rng = np.random.default_rng(1)
    for _ in range(50):
        a, b = random_pose(rng), random_pose(rng)
        x = rng.normal(size=(4, 3))
        assert np.abs((a @ b).apply(x) - a.apply(b.apply(x))).max() < 1e-12


def test_rigid_transform_inverse():
    rng = np.random.default_rng(2)
    for _ in range(50):
        a = random_pose(rng)
        ident = a @ a.inverse()
        assert np.abs(ident.rotation - np.eye(3)).max() < 1e-12
        assert np.abs(ident.translation).max() < 1e-12


# ----------------------------------------------------------------------
# Plücker projection and re-framing


def test_project_already_canonical():
    axis = project_to_plucker(np.array([0.0, 0.0, 2.0, 1.0, 0.0, 0.0]))
    assert np.allclose(axis.l, [0, 0, 1])
    assert np.allclose(axis.m, [1, 0, 0])


def test_project_removes_parallel_momentum():
    axis = project_to_plucker(np.array([0.0, 0.0, 1.0, 1.0, 0.0, 1.0]))
    assert np.allclose(axis.l, [0, 0, 1])
    assert np.allclose(axis.m, [1, 0, 0])


def test_project_idempotent():
    rng = np.random.default_rng(3)
    for _ in range(200):
        v = rng.normal(size=6)
        once = project_to_plucker(v)
        twice = project_to_plucker(once.to_array())
        assert np.abs(once.to_array() - twice.to_array()).max() < 1e-12
        assert abs(np.linalg.norm(once.l) - 1.0) < 1e-9
        assert abs(once.l @ once.m) < 1e-9


def test_project_degenerate_direction():
    with pytest.raises(ValueError, match="degenerate joint axis"):
        project_to_plucker(np.array([0.0, 0.0, 0.0, 1.0, 2.0, 3.0]))


def test_transform_axis_pure_translation_example():
    axis = PluckerAxis(np.array([0.0, 0.0, 1.0]), np.zeros(3))
    pose = RigidTransform.from_translation(np.array([1.0, 0.0, 0.0]))
    moved = axis_to_parent_frame(axis, pose)
    assert np.allclose(moved.l, [0, 0, 1])
    assert np.allclose(moved.m, [0, 1, 0])


def test_transform_axis_point_transport():
    # any point on the line must land on the transformed line
    rng = np.random.default_rng(4)
    for _ in range(300):
        axis = random_axis(rng)
        pose = random_pose(rng)
        moved = transform_axis(axis, pose)
        for s in (-2.0, 0.0, 1.3):
            p = axis.point_on_line() + s * axis.l
            q = pose.apply(p)
            gap = np.cross(moved.l, q - moved.point_on_line())
            assert np.linalg.norm(gap) < 1e-9


def test_axis_to_parent_frame_round_trip():
    rng = np.random.default_rng(5)
    for _ in range(100):
        axis = random_axis(rng)
        pose = random_pose(rng)
        back = transform_axis(axis_to_parent_frame(axis, pose), pose)
        assert np.abs(back.to_array() - axis.to_array()).max() < 1e-9


def test_axis_reversed_keeps_line():
    axis = axis_through((1.0, 2.0, 0.5), (0.0, 1.0, 0.0))
    rev = axis.reversed()
    assert np.array_equal(rev.l, -axis.l)
    gap = np.cross(rev.l, axis.point_on_line() - rev.point_on_line())
    assert np.linalg.norm(gap) < 1e-12


# ----------------------------------------------------------------------
# screw transform


def test_screw_identity_at_zero_state():
    rng = np.random.default_rng(6)
    for _ in range(20):
        t = screw_transform(random_axis(rng), 0.0, 0.0)
        assert np.abs(t.rotation - np.eye(3)).max() < 1e-12
        assert np.abs(t.translation).max() < 1e-12


def test_screw_pure_prismatic():
    axis = PluckerAxis(np.array([0.0, 0.0, 1.0]), np.zeros(3))
    t = screw_transform(axis, 0.0, 0.5)
    assert np.array_equal(t.rotation, np.eye(3))
    assert np.allclose(t.translation, [0, 0, 0.5])


def test_screw_half_turn_offset_axis():
    # axis through (1,0,0) pointing up: l=(0,0,1), m = p x l = (0,-1,0)
    axis = PluckerAxis(np.array([0.0, 0.0, 1.0]), np.array([0.0, -1.0, 0.0]))
    t = screw_transform(axis, np.pi, 0.0)
    assert np.allclose(t.rotation, np.diag([-1.0, -1.0, 1.0]), atol=1e-12)
    assert np.allclose(t.translation, [2, 0, 0], atol=1e-12)
    assert np.allclose(t.apply(np.zeros(3)), [2, 0, 0], atol=1e-12)


def test_screw_matches_rotation_about_point_oracle():
    # independent construction: translate a line point to the origin,
    # rotate, translate back, then slide along the axis
    rng = np.random.default_rng(7)
    for _ in range(300):
        axis = random_axis(rng)
        theta = rng.uniform(-np.pi, np.pi)
        d = rng.normal()
        p = axis.point_on_line()
        r = rotation_about(axis.l, theta)
        oracle = (
            RigidTransform.from_translation(p + d * axis.l)
            @ RigidTransform(r, np.zeros(3))
            @ RigidTransform.from_translation(-p)
        )
        ours = screw_transform(axis, theta, d)
        assert np.abs(ours.rotation - oracle.rotation).max() < 1e-9
        assert np.abs(ours.translation - oracle.translation).max() < 1e-9


def test_screw_fixed_points_on_axis():
    rng = np.random.default_rng(8)
    for _ in range(300):
        axis = random_axis(rng)
        t = screw_transform(axis, rng.uniform(-np.pi, np.pi), 0.0)
        for s in (-1.0, 0.0, 2.5):
            p = axis.point_on_line() + s * axis.l
            assert np.linalg.norm(t.apply(p) - p) < 1e-9


def test_screw_same_axis_composition():
    rng = np.random.default_rng(9)
    for _ in range(300):
        axis = random_axis(rng)
        th1, th2 = rng.uniform(-2, 2, size=2)
        d1, d2 = rng.normal(size=2)
        combined = screw_transform(axis, th1 + th2, d1 + d2)
        chained = screw_transform(axis, th1, d1) @ screw_transform(axis, th2, d2)
        assert np.abs(combined.rotation - chained.rotation).max() < 1e-9
        assert np.abs(combined.translation - chained.translation).max() < 1e-9


# ----------------------------------------------------------------------
# tree validation and forward kinematics


def test_validate_missing_part():
    obj = two_part_prismatic()
    obj.joints[0] = Joint(0, 5, obj.joints[0].axis, (0, 1), (0, 0))
    with pytest.raises(ValueError, match="missing part 5"):
        obj.validate()


def test_validate_multiple_parents():
    obj = ArticulatedObject(
        root=0,
        parts=[box_part((0, 0, 0), (1, 1, 1)) for _ in range(3)],
        joints=[
            Joint(0, 2, axis_through((0, 0, 0), (0, 0, 1)), (0, 1), (0, 0)),
            Joint(1, 2, axis_through((0, 0, 0), (0, 0, 1)), (0, 1), (0, 0)),
        ],
    )
    with pytest.raises(ValueError, match="multiple parents"):
        obj.validate()


def test_validate_kinematic_loop():
    obj = ArticulatedObject(
        root=0,
        parts=[box_part((0, 0, 0), (1, 1, 1)) for _ in range(3)],
        joints=[
            Joint(1, 2, axis_through((0, 0, 0), (0, 0, 1)), (0, 1), (0, 0)),
            Joint(2, 1, axis_through((0, 0, 0), (0, 0, 1)), (0, 1), (0, 0)),
        ],
    )
    with pytest.raises(ValueError, match="kinematic loop|multiple parents"):
        obj.validate()


def test_fk_zero_states_reproduce_rest_exactly():
    for obj in (two_part_prismatic(), two_part_revolute(), hybrid_object()):
        poses = forward_kinematics(obj)
        for pose, part in zip(poses, obj.parts):
            assert np.array_equal(pose.rotation, part.pose.rotation)
            assert np.array_equal(pose.translation, part.pose.translation)


def test_fk_prismatic_hand_case():
    obj = two_part_prismatic()
    poses = forward_kinematics(obj, np.array([[0.0, 0.3]]))
    assert np.allclose(poses[0].translation, obj.parts[0].pose.translation)
    expected = obj.parts[1].pose.translation + np.array([0.3, 0.0, 0.0])
    assert np.allclose(poses[1].translation, expected, atol=1e-12)


def test_fk_single_moving_joint_matches_screw():
    # with every other joint at rest, the child pose is exactly the
    # object-frame screw applied to its rest pose
    obj = ArticulatedObject(
        root=0,
        parts=[
            box_part((0, 0, 0), (1, 1, 0.4)),
            box_part((0, 0, 0.4), (0.8, 0.8, 0.3)),
            box_part((0, 0, 0.7), (0.5, 0.5, 0.2)),
        ],
        joints=[
            Joint(0, 1, axis_through((0.5, 0, 0.4), (0, 0, 1)), (0, 0.5), (-1, 1)),
            Joint(1, 2, axis_through((0, 0.4, 0.7), (1, 0, 0)), (0, 0.2), (-1, 1)),
        ],
    )
    obj.validate()
    states = np.zeros((2, 2))
    states[0] = (0.7, 0.2)
    poses = forward_kinematics(obj, states)
    screw = screw_transform(obj.joints[0].axis, 0.7, 0.2)
    for idx in (1, 2):  # part 2 rides along with part 1
        expected = screw @ obj.parts[idx].pose
        assert np.abs(poses[idx].rotation - expected.rotation).max() < 1e-12
        assert np.abs(poses[idx].translation - expected.translation).max() < 1e-12


def test_fk_inverse_composition_returns_rest():
    # move a 3-part chain to q, rebuild the object at the moved rest
    # configuration with axes transported by each parent's motion, then
    # drive it with -q: every part must land back on its original rest
    rng = np.random.default_rng(10)
    for _ in range(50):
        obj = ArticulatedObject(
            root=0,
            parts=[box_part(rng.normal(size=3), (1, 1, 1)) for _ in range(3)],
            joints=[
                Joint(0, 1, random_axis(rng), (-1, 1), (-1, 1)),
                Joint(1, 2, random_axis(rng), (-1, 1), (-1, 1)),
            ],
        )
        q = rng.uniform(-1, 1, size=(2, 2))
        poses = forward_kinematics(obj, q)
        motion = [poses[i] @ obj.parts[i].pose.inverse() for i in range(3)]
        moved = ArticulatedObject(
            root=0,
            parts=[
                box_part(poses[i].translation, (1, 1, 1)) for i in range(3)
            ],
            joints=[
                Joint(
                    j.parent,
                    j.child,
                    transform_axis(j.axis, motion[j.parent]),
                    (-1, 1),
                    (-1, 1),
                )
                for j in obj.joints
            ],
        )
        for i, pose in enumerate(poses):
            moved.parts[i].pose = pose
        back = forward_kinematics(moved, -q)
        for i in range(3):
            assert np.abs(back[i].rotation - obj.parts[i].pose.rotation).max() < 1e-9
            assert np.abs(back[i].translation - obj.parts[i].pose.translation).max() < 1e-9


def test_fk_rotation_drift_over_long_chains():
    rng = np.random.default_rng(11)
    parts = [box_part(rng.normal(size=3), (1, 1, 1)) for _ in range(101)]
    joints = [
        Joint(i, i + 1, random_axis(rng), (-1, 1), (-np.pi, np.pi))
        for i in range(100)
    ]
    obj = ArticulatedObject(root=0, parts=parts, joints=joints)
    states = rng.uniform(-1, 1, size=(100, 2))
    poses = forward_kinematics(obj, states)
    worst = max(
        np.abs(p.rotation @ p.rotation.T - np.eye(3)).max() for p in poses
    )
    assert worst < 1e-7


def test_fk_rejects_broken_tree():
    obj = two_part_prismatic()
    obj.joints[0] = Joint(1, 1, obj.joints[0].axis, (0, 1), (0, 0))
    with pytest.raises(ValueError):
        forward_kinematics(obj)


# ----------------------------------------------------------------------
# joint-state sampling


def test_sample_states_degenerate_ranges_are_zero():
    obj = two_part_prismatic(travel=0.0)
    states = sample_joint_states(obj, 32, np.random.default_rng(0))
    assert states.shape == (32, 1, 2)
    assert np.array_equal(states, np.zeros_like(states))


def test_sample_states_uniform_mean():
    obj = two_part_prismatic(travel=1.0)
    states = sample_joint_states(obj, 10_000, np.random.default_rng(1))
    assert abs(states[:, 0, 1].mean() - 0.5) < 0.02
    assert states[:, 0, 1].min() >= 0.0
    assert states[:, 0, 1].max() <= 1.0
    assert np.array_equal(states[:, 0, 0], np.zeros(10_000))


def test_sample_states_deterministic():
    obj = hybrid_object()
    a = sample_joint_states(obj, 16, np.random.default_rng(7))
    b = sample_joint_states(obj, 16, np.random.default_rng(7))
    assert np.array_equal(a, b)


def test_sample_states_within_ranges():
    obj = hybrid_object()
    states = sample_joint_states(obj, 1000, np.random.default_rng(2))
    assert states[:, 0, 0].min() >= -0.8 and states[:, 0, 0].max() <= 0.8
    assert states[:, 0, 1].min() >= 0.0 and states[:, 0, 1].max() <= 0.25


# ----------------------------------------------------------------------
# geometry instantiation


def test_box_surface_points_lie_on_surface():
    rng = np.random.default_rng(3)
    size = np.array([1.0, 1.0, 1.0])
    pts = sample_box_surface(size, 500, rng)
    half = size / 2.0
    on_face = np.isclose(np.abs(pts), half, atol=1e-12)
    assert (on_face.sum(axis=1) >= 1).all()
    assert (np.abs(pts) <= half + 1e-12).all()


def test_box_surface_area_and_allocation():
    size = np.array([2.0, 1.0, 0.5])
    assert box_surface_area(size) == pytest.approx(2 * (2 + 0.5 + 1.0))
    # a flat box still samples; a zero box errors
    with pytest.raises(ValueError, match="zero-area box"):
        sample_box_surface(np.zeros(3), 10, np.random.default_rng(0))


def test_instantiate_counts_and_membership():
    obj = two_part_revolute()
    shape = instantiate(obj, n_points=777, seed=0)
    assert sum(len(p) for p in shape.points) == 777
    assert shape.merged_points().shape == (777, 3)
    # undo each part's pose and check surface membership
    for pts, pose, part in zip(shape.points, shape.poses, obj.parts):
        local = (pts - pose.translation) @ pose.rotation
        half = part.bbox / 2.0
        on_face = np.isclose(np.abs(local), half, atol=1e-9)
        assert (on_face.sum(axis=1) >= 1).all()


def test_instantiate_area_weighted_allocation():
    # one part has four times the area of the other
    obj = ArticulatedObject(
        root=0,
        parts=[box_part((0, 0, 0), (2, 2, 2)), box_part((3, 0, 0), (1, 1, 1))],
        joints=[Joint(0, 1, axis_through((3, 0, 0), (0, 0, 1)), (0, 0), (0, 0))],
    )
    shape = instantiate(obj, n_points=1000, seed=0)
    assert len(shape.points[0]) == 800
    assert len(shape.points[1]) == 200


def test_instantiate_deterministic_and_keyed():
    obj = hybrid_object(obj_id="thing")
    states = np.array([[0.3, 0.1]])
    a = instantiate(obj, states, n_points=256, seed=5)
    b = instantiate(obj, states, n_points=256, seed=5)
    assert all(np.array_equal(x, y) for x, y in zip(a.points, b.points))
    c = instantiate(obj, states, n_points=256, seed=6)
    assert not np.array_equal(a.merged_points(), c.merged_points())
    d = instantiate(obj, states, n_points=256, seed=5, sample_key=9)
    assert not np.array_equal(a.merged_points(), d.merged_points())


def test_instantiate_translation_equivariance():
    shift = np.array([0.4, -1.0, 2.0])
    base = two_part_revolute(obj_id="same")
    moved = two_part_revolute(obj_id="same")
    for part, orig in zip(moved.parts, base.parts):
        part.pose = RigidTransform(
            orig.pose.rotation.copy(), orig.pose.translation + shift
        )
    moved.joints[0] = Joint(
        0,
        1,
        axis_through((-0.35, 0, 0.1) + shift, (0, -1, 0)),
        (0.0, 0.0),
        (0.0, 1.2),
    )
    states = np.array([[0.7, 0.0]])
    a = instantiate(base, states, n_points=300, seed=2, sample_key=0)
    b = instantiate(moved, states, n_points=300, seed=2, sample_key=0)
    assert np.abs((a.merged_points() + shift) - b.merged_points()).max() < 1e-9


def test_instantiate_zero_area_part_errors():
    obj = two_part_prismatic()
    obj.parts[1].bbox = np.zeros(3)
    with pytest.raises(ValueError, match="zero-area box for part 1"):
        instantiate(obj, n_points=64, seed=0)


def test_obj_export_and_frame_sequence(tmp_path):
    obj = two_part_revolute()
    verts, faces = box_mesh(obj.parts[0].bbox)
    assert verts.shape == (8, 3) and faces.shape == (12, 3)
    path = tmp_path / "posed.obj"
    poses = forward_kinematics(obj)
    meshes = [
        (pose.apply(box_mesh(p.bbox)[0]), box_mesh(p.bbox)[1])
        for p, pose in zip(obj.parts, poses)
    ]
    write_obj(path, meshes)
    text = path.read_text().splitlines()
    assert sum(1 for ln in text if ln.startswith("v ")) == 16
    assert sum(1 for ln in text if ln.startswith("f ")) == 24
    assert sum(1 for ln in text if ln.startswith("g ")) == 2

    frames = export_obj_sequence(obj, np.zeros((3, 1, 2)), tmp_path / "anim")
    assert [os.path.basename(p) for p in frames] == [
        "frame_0000.obj",
        "frame_0001.obj",
        "frame_0002.obj",
    ]
    assert all(os.path.exists(p) for p in frames)


def test_object_dict_round_trip():
    obj = hybrid_object(obj_id="abc")
    back = ArticulatedObject.from_dict(obj.to_dict())
    assert back.content_key() == obj.content_key()
    assert back.obj_id == "abc"
    assert back.root == obj.root


def test_content_key_sensitive_to_geometry():
    a = two_part_prismatic(travel=0.5)
    b = two_part_prismatic(travel=0.6)
    assert a.content_key() != b.content_key()
    assert a.content_key() == two_part_prismatic(travel=0.5).content_key()


def test_joint_state_type():
    s = JointState(theta=0.2, d=0.1)
    assert s.theta == 0.2 and s.d == 0.1
