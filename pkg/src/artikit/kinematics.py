"""Screw-joint kinematics for articulated objects.

Joints are lines in Pluecker coordinates (unit direction ``l`` plus
moment ``m``) with a turning and a sliding range.  A joint state
(theta, d) induces the rigid motion that rotates by theta about the
line and slides by d along it; forward kinematics composes these
motions over a rooted part tree.  Part geometry is realized as boxes,
instantiated into surface point samples and meshes for metrics and
export.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from ._util import allocate_counts, canonical_json, digest_to_entropy, stable_digest

_AXIS_EPS = 1e-8


def hat(v: np.ndarray) -> np.ndarray:
    """Cross-product matrix: hat(v) @ w == cross(v, w)."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def rotation_about(direction: np.ndarray, angle: float) -> np.ndarray:
    """Rotation matrix about a unit direction through the origin."""
    direction = np.asarray(direction, dtype=float)
    k = hat(direction)
    return (
        np.eye(3)
        + np.sin(angle) * k
        + (1.0 - np.cos(angle)) * (k @ k)
    )


@dataclass(eq=False)
class RigidTransform:
    """Rotation plus translation, acting as p -> R @ p + t."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=float)
        self.translation = np.asarray(self.translation, dtype=float)
        if self.rotation.shape != (3, 3) or self.translation.shape != (3,):
            raise ValueError("rigid transform needs a 3x3 rotation and 3-vector")

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_translation(cls, t) -> "RigidTransform":
        return cls(np.eye(3), np.asarray(t, dtype=float))

    def __matmul__(self, other: "RigidTransform") -> "RigidTransform":
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def inverse(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)

    def apply(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        return points @ self.rotation.T + self.translation

    def rotation_defect(self) -> float:
        """How far the rotation block is from a proper rotation."""
        r = self.rotation
        ortho = np.abs(r.T @ r - np.eye(3)).max()
        return max(ortho, abs(np.linalg.det(r) - 1.0))


@dataclass(eq=False)
class PluckerAxis:
    """Oriented line: unit direction ``l`` and moment ``m`` with l.m = 0."""

    l: np.ndarray
    m: np.ndarray

    def __post_init__(self):
        self.l = np.asarray(self.l, dtype=float)
        self.m = np.asarray(self.m, dtype=float)
        if self.l.shape != (3,) or self.m.shape != (3,):
            raise ValueError("axis needs two 3-vectors")

    @classmethod
    def through_point(cls, point, direction) -> "PluckerAxis":
        """Line through ``point`` with the given (not necessarily unit) direction."""
        direction = np.asarray(direction, dtype=float)
        norm = np.linalg.norm(direction)
        if norm <= _AXIS_EPS:
            raise ValueError("degenerate joint axis")
        l = direction / norm
        return cls(l, np.cross(np.asarray(point, dtype=float), l))

    def point_on_line(self) -> np.ndarray:
        """The line point closest to the origin."""
        return np.cross(self.l, self.m)

    def reversed(self) -> "PluckerAxis":
        return PluckerAxis(-self.l, -self.m)

    def to_array(self) -> np.ndarray:
        return np.concatenate([self.l, self.m])

    def defect(self) -> float:
        """Max violation of the unit-direction and perpendicularity invariants."""
        return max(abs(np.linalg.norm(self.l) - 1.0), abs(float(self.l @ self.m)))


def project_to_plucker(v: np.ndarray) -> PluckerAxis:
    """Snap an unconstrained 6-vector onto valid line coordinates.

    The first three components are normalized to a unit direction and
    the moment is made perpendicular to it.  Idempotent.
    """
    v = np.asarray(v, dtype=float)
    if v.shape != (6,):
        raise ValueError("expected a 6-vector")
    l_raw, m_raw = v[:3], v[3:]
    norm = np.linalg.norm(l_raw)
    if norm <= _AXIS_EPS:
        raise ValueError("degenerate joint axis")
    l = l_raw / norm
    m = m_raw - (m_raw @ l) * l
    return PluckerAxis(l, m)


def transform_axis(axis: PluckerAxis, tf: RigidTransform) -> PluckerAxis:
    """Re-express a line after applying a rigid transform to its points."""
    l = tf.rotation @ axis.l
    m = tf.rotation @ axis.m + np.cross(tf.translation, l)
    return PluckerAxis(l, m)


def axis_to_parent_frame(
    axis_global: PluckerAxis, parent_pose: RigidTransform
) -> PluckerAxis:
    """Express an object-frame joint axis in a part's local frame.

    ``parent_pose`` is the part's pose (local -> object); the axis is
    carried through its inverse.
    """
    return transform_axis(axis_global, parent_pose.inverse())


@dataclass
class JointState:
    theta: float = 0.0
    d: float = 0.0


def screw_transform(axis: PluckerAxis, theta: float, d: float) -> RigidTransform:
    """Rigid motion that turns by theta about the axis line and slides by d.

    R = R(theta, l), t = (I - R) (l x m) + d l; theta = d = 0 gives the
    identity.
    """
    r = rotation_about(axis.l, theta)
    t = (np.eye(3) - r) @ axis.point_on_line() + d * axis.l
    return RigidTransform(r, t)


# ----------------------------------------------------------------------
# articulated objects


@dataclass(eq=False)
class Part:
    pose: RigidTransform
    bbox: np.ndarray
    latent: np.ndarray

    def __post_init__(self):
        self.bbox = np.asarray(self.bbox, dtype=float)
        self.latent = np.asarray(self.latent, dtype=float)
        if self.bbox.shape != (3,):
            raise ValueError("bbox must be a 3-vector of box side lengths")


@dataclass(eq=False)
class Joint:
    parent: int
    child: int
    axis: PluckerAxis
    range_prismatic: np.ndarray
    range_revolute: np.ndarray

    def __post_init__(self):
        self.range_prismatic = np.asarray(self.range_prismatic, dtype=float)
        self.range_revolute = np.asarray(self.range_revolute, dtype=float)
        if self.range_prismatic.shape != (2,) or self.range_revolute.shape != (2,):
            raise ValueError("ranges must be (lo, hi) pairs")


@dataclass(eq=False)
class ArticulatedObject:
    """Rooted kinematic tree of box parts connected by screw joints.

    Poses and joint axes are expressed in the object frame; rest poses
    correspond to all-zero joint states.
    """

    root: int
    parts: list[Part]
    joints: list[Joint]
    obj_id: str | None = None

    def validate(self) -> None:
        n = len(self.parts)
        if n == 0:
            raise ValueError("object has no parts")
        if not 0 <= self.root < n:
            raise ValueError(f"root index {self.root} out of range")
        if len(self.joints) != n - 1:
            raise ValueError(
                f"{n} parts need {n - 1} joints, got {len(self.joints)}"
            )
        seen_child: dict[int, int] = {}
        for k, joint in enumerate(self.joints):
            for end in (joint.parent, joint.child):
                if not 0 <= end < n:
                    raise ValueError(f"joint {k} references missing part {end}")
            if joint.parent == joint.child:
                raise ValueError(f"joint {k} connects part {joint.parent} to itself")
            if joint.child == self.root:
                raise ValueError(f"joint {k} makes the root a child")
            if joint.child in seen_child:
                raise ValueError(
                    f"part {joint.child} has multiple parents "
                    f"(joints {seen_child[joint.child]} and {k})"
                )
            seen_child[joint.child] = k
        reached = {self.root}
        frontier = [self.root]
        by_parent: dict[int, list[int]] = {}
        for k, joint in enumerate(self.joints):
            by_parent.setdefault(joint.parent, []).append(k)
        while frontier:
            p = frontier.pop()
            for k in by_parent.get(p, ()):
                c = self.joints[k].child
                if c not in reached:
                    reached.add(c)
                    frontier.append(c)
        if len(reached) != n:
            missing = sorted(set(range(n)) - reached)
            raise ValueError(
                f"kinematic loop: parts {missing} are not reachable from the root"
            )

    def joint_order(self) -> list[int]:
        """Joint indices sorted so parents are processed before children."""
        by_parent: dict[int, list[int]] = {}
        for k, joint in enumerate(self.joints):
            by_parent.setdefault(joint.parent, []).append(k)
        order = []
        frontier = [self.root]
        while frontier:
            p = frontier.pop()
            for k in by_parent.get(p, ()):
                order.append(k)
                frontier.append(self.joints[k].child)
        if len(order) != len(self.joints):
            self.validate()
            raise ValueError("kinematic loop")
        return order

    def to_dict(self) -> dict:
        parts = []
        for part in self.parts:
            rec = {
                "pose": part.pose.translation.tolist(),
                "bbox": part.bbox.tolist(),
                "latent": part.latent.tolist(),
            }
            rot = part.pose.rotation
            if np.any(rot != np.eye(3)):
                rec["pose_rotation"] = rot.tolist()
            parts.append(rec)
        joints = [
            {
                "parent": j.parent,
                "child": j.child,
                "axis_l": j.axis.l.tolist(),
                "axis_m": j.axis.m.tolist(),
                "range_prismatic": j.range_prismatic.tolist(),
                "range_revolute": j.range_revolute.tolist(),
            }
            for j in self.joints
        ]
        rec = {"root": self.root, "parts": parts, "joints": joints}
        if self.obj_id is not None:
            rec["id"] = self.obj_id
        return rec

    @classmethod
    def from_dict(cls, rec: dict) -> "ArticulatedObject":
        parts = []
        for p in rec["parts"]:
            rot = np.asarray(p.get("pose_rotation", np.eye(3)), dtype=float)
            parts.append(
                Part(
                    pose=RigidTransform(rot, np.asarray(p["pose"], dtype=float)),
                    bbox=p["bbox"],
                    latent=p["latent"],
                )
            )
        joints = [
            Joint(
                parent=int(j["parent"]),
                child=int(j["child"]),
                axis=PluckerAxis(
                    np.asarray(j["axis_l"], dtype=float),
                    np.asarray(j["axis_m"], dtype=float),
                ),
                range_prismatic=j["range_prismatic"],
                range_revolute=j["range_revolute"],
            )
            for j in rec["joints"]
        ]
        obj = cls(
            root=int(rec.get("root", 0)),
            parts=parts,
            joints=joints,
            obj_id=rec.get("id"),
        )
        obj.validate()
        return obj

    def content_key(self) -> str:
        """Digest of the object's content, used to key deterministic sampling."""
        return stable_digest(canonical_json(self.to_dict()))


def _as_state_array(obj: ArticulatedObject, states) -> np.ndarray:
    n_joints = len(obj.joints)
    if states is None:
        return np.zeros((n_joints, 2))
    if isinstance(states, (list, tuple)) and all(
        isinstance(s, JointState) for s in states
    ):
        states = np.array([[s.theta, s.d] for s in states]).reshape(n_joints, 2)
    states = np.asarray(states, dtype=float)
    if states.shape != (n_joints, 2):
        raise ValueError(
            f"expected states of shape ({n_joints}, 2), got {states.shape}"
        )
    return states


def forward_kinematics(obj: ArticulatedObject, states=None) -> list[RigidTransform]:
    """Global part poses for the given joint states.

    The child pose is parent_pose o T(theta, d) o rest_offset with the
    screw taken about the joint axis; all-zero states reproduce every
    rest pose exactly.  ``states`` is an (n_joints, 2) array of
    (theta, d) rows, a list of JointState, or None for all-zero.
    """
    states = _as_state_array(obj, states)
    n = len(obj.parts)
    motion: list[RigidTransform | None] = [None] * n
    motion[obj.root] = RigidTransform.identity()
    for k in obj.joint_order():
        joint = obj.joints[k]
        step = screw_transform(joint.axis, states[k, 0], states[k, 1])
        motion[joint.child] = motion[joint.parent] @ step
    return [motion[i] @ obj.parts[i].pose for i in range(n)]


def sample_joint_states(
    obj: ArticulatedObject, count: int, rng: np.random.Generator
) -> np.ndarray:
    """Uniform joint states within each joint's ranges, shape (count, J, 2)."""
    out = np.zeros((count, len(obj.joints), 2))
    for k, joint in enumerate(obj.joints):
        tlo, thi = joint.range_revolute
        dlo, dhi = joint.range_prismatic
        out[:, k, 0] = rng.uniform(tlo, thi, size=count)
        out[:, k, 1] = rng.uniform(dlo, dhi, size=count)
    return out


# ----------------------------------------------------------------------
# geometry instantiation

_BOX_CORNER_SIGNS = np.array(
    [
        [-1, -1, -1],
        [+1, -1, -1],
        [+1, +1, -1],
        [-1, +1, -1],
        [-1, -1, +1],
        [+1, -1, +1],
        [+1, +1, +1],
        [-1, +1, +1],
    ],
    dtype=float,
)

_BOX_FACES = np.array(
    [
        [0, 2, 1], [0, 3, 2],
        [4, 5, 6], [4, 6, 7],
        [0, 1, 5], [0, 5, 4],
        [1, 2, 6], [1, 6, 5],
        [2, 3, 7], [2, 7, 6],
        [3, 0, 4], [3, 4, 7],
    ],
    dtype=int,
)


def box_mesh(size) -> tuple[np.ndarray, np.ndarray]:
    """Vertices (8, 3) and triangle indices (12, 3) of a centered box."""
    size = np.asarray(size, dtype=float)
    return _BOX_CORNER_SIGNS * (size / 2.0), _BOX_FACES.copy()


def box_surface_area(size) -> float:
    sx, sy, sz = np.asarray(size, dtype=float)
    return 2.0 * (sx * sy + sy * sz + sx * sz)


def sample_box_surface(size, n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform points on the surface of a centered box, area weighted."""
    size = np.asarray(size, dtype=float)
    if np.any(size < 0):
        raise ValueError("box sides must be non-negative")
    half = size / 2.0
    # face order: -x, +x, -y, +y, -z, +z
    face_axis = np.array([0, 0, 1, 1, 2, 2])
    face_sign = np.array([-1.0, 1.0, -1.0, 1.0, -1.0, 1.0])
    areas = np.array(
        [
            size[1] * size[2], size[1] * size[2],
            size[0] * size[2], size[0] * size[2],
            size[0] * size[1], size[0] * size[1],
        ]
    )
    if areas.sum() <= 0.0:
        raise ValueError("zero-area box")
    counts = allocate_counts(areas, n)
    chunks = []
    for face in range(6):
        c = int(counts[face])
        if c == 0:
            continue
        pts = np.empty((c, 3))
        axis = face_axis[face]
        others = [a for a in range(3) if a != axis]
        pts[:, axis] = face_sign[face] * half[axis]
        for a in others:
            pts[:, a] = rng.uniform(-half[a], half[a], size=c)
        chunks.append(pts)
    return np.concatenate(chunks, axis=0) if chunks else np.empty((0, 3))


@dataclass(eq=False)
class PosedShape:
    """Point samples and box meshes of an object at one joint state."""

    points: list[np.ndarray]
    meshes: list[tuple[np.ndarray, np.ndarray]]
    poses: list[RigidTransform]

    def merged_points(self) -> np.ndarray:
        return np.concatenate([p for p in self.points if len(p)], axis=0)


def instantiate(
    obj: ArticulatedObject,
    states=None,
    n_points: int = 2048,
    seed: int = 0,
    sample_key: int | None = None,
) -> PosedShape:
    """Pose the object and sample points on every part's box surface.

    Point placement is deterministic, keyed on (object identity,
    ``sample_key``, ``seed``); by default the key also covers the joint
    state values, so equal inputs give bit-equal clouds.  Pass an
    explicit ``sample_key`` to pin the surface samples across different
    states of the same object.
    """
    states = _as_state_array(obj, states)
    poses = forward_kinematics(obj, states)
    areas = [box_surface_area(p.bbox) for p in obj.parts]
    for k, area in enumerate(areas):
        if area <= 0.0:
            raise ValueError(f"zero-area box for part {k}")
    counts = allocate_counts(areas, n_points)
    if obj.obj_id:
        obj_entropy = digest_to_entropy(stable_digest(obj.obj_id))
    else:
        obj_entropy = digest_to_entropy(obj.content_key())
    if sample_key is None:
        sample_key = digest_to_entropy(stable_digest(states.tobytes()))
    points = []
    meshes = []
    for k, part in enumerate(obj.parts):
        rng = np.random.default_rng(
            np.random.SeedSequence([int(seed), obj_entropy, int(sample_key), k])
        )
        local = sample_box_surface(part.bbox, int(counts[k]), rng)
        points.append(poses[k].apply(local))
        verts, faces = box_mesh(part.bbox)
        meshes.append((poses[k].apply(verts), faces))
    return PosedShape(points=points, meshes=meshes, poses=poses)


# ----------------------------------------------------------------------
# OBJ export


def write_obj(path, meshes, group_names=None) -> None:
    """Write box meshes to a Wavefront OBJ file, one group per part."""
    if group_names is None:
        group_names = [f"part_{k}" for k in range(len(meshes))]
    lines = []
    offset = 1
    for name, (verts, faces) in zip(group_names, meshes):
        lines.append(f"g {name}")
        for v in verts:
            lines.append(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}")
        for f in faces:
            lines.append(f"f {f[0] + offset} {f[1] + offset} {f[2] + offset}")
        offset += len(verts)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def export_obj_sequence(obj: ArticulatedObject, states_seq, out_dir) -> list[str]:
    """Write one OBJ per joint state, named ``frame_%04d.obj``."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for idx, states in enumerate(states_seq):
        poses = forward_kinematics(obj, states)
        meshes = []
        for part, pose in zip(obj.parts, poses):
            verts, faces = box_mesh(part.bbox)
            meshes.append((pose.apply(verts), faces))
        path = os.path.join(out_dir, "frame_%04d.obj" % idx)
        write_obj(path, meshes)
        paths.append(path)
    return paths
