"""URDF export and import for articulated box objects.

Element subset: ``robot``, ``link`` with one ``visual`` (box geometry
and an ``origin``), ``joint`` of type fixed / prismatic / revolute /
continuous with ``origin``, ``axis``, ``limit`` and parent/child link
refs.  Conventions used by the exporter:

- every link frame keeps the object frame's orientation; joint origins
  carry pure translations and the root link frame is the object frame,
  so re-parsing reproduces object-frame poses directly;
- each joint origin sits on the joint axis, with the axis vector
  expressed in the joint frame as URDF requires;
- a screw joint with both a live sliding and a live turning range is
  emitted as a prismatic joint into a massless ``*__carriage`` link
  followed by a revolute joint about the same axis; the parser folds
  such chains back into a single joint;
- shape latents are not representable in URDF and parse back as empty.
"""

from __future__ import annotations

import xml.etree.ElementTree as ET

import numpy as np
from scipy.spatial.transform import Rotation

from .kinematics import (
    ArticulatedObject,
    Joint,
    Part,
    PluckerAxis,
    RigidTransform,
    axis_to_parent_frame,
)

_DEGENERATE = 1e-12


def _fmt(values) -> str:
    # repr of a float is the shortest string that parses back bit-exactly
    return " ".join(repr(float(v)) for v in np.atleast_1d(values))


def _parse_triple(text: str | None, default=(0.0, 0.0, 0.0)) -> np.ndarray:
    if text is None:
        return np.array(default, dtype=float)
    return np.array([float(v) for v in text.split()], dtype=float)


def _rpy_to_matrix(rpy: np.ndarray) -> np.ndarray:
    return Rotation.from_euler("xyz", rpy).as_matrix()


def _matrix_to_rpy(matrix: np.ndarray) -> np.ndarray:
    return Rotation.from_matrix(matrix).as_euler("xyz")


def _origin_element(parent: ET.Element, tf: RigidTransform) -> None:
    ET.SubElement(
        parent,
        "origin",
        xyz=_fmt(tf.translation),
        rpy=_fmt(_matrix_to_rpy(tf.rotation)),
    )


def _range_live(rng: np.ndarray) -> bool:
    return abs(rng[0]) > _DEGENERATE or abs(rng[1]) > _DEGENERATE


def export_urdf(obj: ArticulatedObject) -> str:
    """Serialize the object as URDF XML text.

    Links are written in part-index order so a re-parse assigns the
    same part indices.
    """
    obj.validate()
    robot = ET.Element("robot", name=obj.obj_id or "artikit_object")

    # first pass: place every link frame along the tree
    link_pos: dict[int, np.ndarray] = {obj.root: np.zeros(3)}
    anchors: dict[int, np.ndarray] = {}
    axes: dict[int, PluckerAxis] = {}
    for k in obj.joint_order():
        joint = obj.joints[k]
        parent_frame = RigidTransform.from_translation(link_pos[joint.parent])
        axis_local = axis_to_parent_frame(joint.axis, parent_frame)
        anchors[k] = axis_local.point_on_line()
        axes[k] = axis_local
        link_pos[joint.child] = link_pos[joint.parent] + anchors[k]

    for i, part in enumerate(obj.parts):
        link = ET.SubElement(robot, "link", name=f"part_{i}")
        visual = ET.SubElement(link, "visual")
        local = RigidTransform(
            part.pose.rotation, part.pose.translation - link_pos[i]
        )
        _origin_element(visual, local)
        geom = ET.SubElement(visual, "geometry")
        ET.SubElement(geom, "box", size=_fmt(part.bbox))

    for k in obj.joint_order():
        joint = obj.joints[k]
        p, c = joint.parent, joint.child
        anchor, axis_local = anchors[k], axes[k]
        slide = _range_live(joint.range_prismatic)
        turn = _range_live(joint.range_revolute)
        parent_name, child_name = f"part_{p}", f"part_{c}"
        if slide and turn:
            carriage = f"{child_name}__carriage"
            _add_joint(
                robot, f"joint_{p}_{c}_slide", "prismatic", parent_name,
                carriage, anchor, axis_local.l, joint.range_prismatic,
            )
            ET.SubElement(robot, "link", name=carriage)
            _add_joint(
                robot, f"joint_{p}_{c}_turn", "revolute", carriage,
                child_name, np.zeros(3), axis_local.l, joint.range_revolute,
            )
        elif slide:
            _add_joint(
                robot, f"joint_{p}_{c}", "prismatic", parent_name,
                child_name, anchor, axis_local.l, joint.range_prismatic,
            )
        elif turn:
            _add_joint(
                robot, f"joint_{p}_{c}", "revolute", parent_name,
                child_name, anchor, axis_local.l, joint.range_revolute,
            )
        else:
            _add_joint(
                robot, f"joint_{p}_{c}", "fixed", parent_name,
                child_name, anchor, None, None,
            )

    ET.indent(robot)
    return ET.tostring(robot, encoding="unicode", xml_declaration=True)


def _add_joint(robot, name, jtype, parent, child, xyz, axis, limits) -> None:
    joint = ET.SubElement(robot, "joint", name=name, type=jtype)
    ET.SubElement(joint, "origin", xyz=_fmt(xyz), rpy="0 0 0")
    ET.SubElement(joint, "parent", link=parent)
    ET.SubElement(joint, "child", link=child)
    if axis is not None:
        ET.SubElement(joint, "axis", xyz=_fmt(axis))
    if limits is not None:
        ET.SubElement(
            joint,
            "limit",
            lower=repr(float(limits[0])),
            upper=repr(float(limits[1])),
            effort="1.0",
            velocity="1.0",
        )


# ----------------------------------------------------------------------
# import


def parse_urdf(text: str) -> ArticulatedObject:
    """Rebuild an ArticulatedObject from URDF text in the same subset."""
    robot = ET.fromstring(text)
    if robot.tag != "robot":
        raise ValueError("not a URDF document: missing <robot> root")

    links: dict[str, dict] = {}
    link_order: list[str] = []
    for el in robot.findall("link"):
        name = el.get("name")
        if name is None or name in links:
            raise ValueError("links need unique names")
        visual = el.find("visual")
        rec: dict = {"visual": None}
        if visual is not None:
            origin = visual.find("origin")
            xyz = _parse_triple(origin.get("xyz") if origin is not None else None)
            rpy = _parse_triple(origin.get("rpy") if origin is not None else None)
            box = visual.find("geometry/box")
            if box is None:
                raise ValueError(f"link {name}: only box geometry is supported")
            rec["visual"] = {
                "origin": RigidTransform(_rpy_to_matrix(rpy), xyz),
                "size": _parse_triple(box.get("size")),
            }
        links[name] = rec
        link_order.append(name)

    joints = []
    for el in robot.findall("joint"):
        jtype = el.get("type")
        if jtype not in ("fixed", "prismatic", "revolute", "continuous"):
            raise ValueError(f"unsupported joint type {jtype!r}")
        origin = el.find("origin")
        xyz = _parse_triple(origin.get("xyz") if origin is not None else None)
        rpy = _parse_triple(origin.get("rpy") if origin is not None else None)
        axis_el = el.find("axis")
        axis = _parse_triple(
            axis_el.get("xyz") if axis_el is not None else None, (1.0, 0.0, 0.0)
        )
        limit = el.find("limit")
        lo = float(limit.get("lower", 0.0)) if limit is not None else 0.0
        hi = float(limit.get("upper", 0.0)) if limit is not None else 0.0
        if jtype == "continuous":
            jtype, lo, hi = "revolute", -np.pi, np.pi
        parent_el, child_el = el.find("parent"), el.find("child")
        if parent_el is None or child_el is None:
            raise ValueError(f"joint {el.get('name')}: missing parent or child")
        joints.append(
            {
                "name": el.get("name"),
                "type": jtype,
                "parent": parent_el.get("link"),
                "child": child_el.get("link"),
                "tf": RigidTransform(_rpy_to_matrix(rpy), xyz),
                "axis": axis,
                "limits": (lo, hi),
            }
        )

    children = {j["child"] for j in joints}
    roots = [name for name in link_order if name not in children]
    if len(roots) != 1:
        raise ValueError(f"expected exactly one root link, found {roots}")

    # accumulate link frames in object coordinates
    frames = {roots[0]: RigidTransform.identity()}
    pending = list(joints)
    while pending:
        progressed = False
        for j in list(pending):
            if j["parent"] in frames:
                frames[j["child"]] = frames[j["parent"]] @ j["tf"]
                pending.remove(j)
                progressed = True
        if not progressed:
            raise ValueError("kinematic loop: some joints never attach to the root")

    # fold prismatic -> carriage -> revolute chains into screw joints
    by_parent: dict[str, list[dict]] = {}
    for j in joints:
        by_parent.setdefault(j["parent"], []).append(j)
    merged: list[dict] = []
    skip: set[str] = set()
    carriages: set[str] = set()
    for j in joints:
        mid = j["child"]
        downstream = by_parent.get(mid, [])
        if (
            j["type"] == "prismatic"
            and links[mid]["visual"] is None
            and len(downstream) == 1
            and downstream[0]["type"] == "revolute"
        ):
            tail = downstream[0]
            dir_slide = frames[mid].rotation @ j["axis"]
            dir_turn = frames[tail["child"]].rotation @ tail["axis"]
            if np.linalg.norm(np.cross(dir_slide, dir_turn)) > 1e-6:
                raise ValueError(
                    f"carriage chain at {mid} has mismatched slide/turn axes"
                )
            merged.append(
                {
                    "parent": j["parent"],
                    "child": tail["child"],
                    "frame": frames[tail["child"]],
                    "axis": tail["axis"],
                    "range_prismatic": j["limits"],
                    "range_revolute": tail["limits"],
                }
            )
            skip.update({j["name"], tail["name"]})
            carriages.add(mid)
    for j in joints:
        if j["name"] in skip:
            continue
        rec = {
            "parent": j["parent"],
            "child": j["child"],
            "frame": frames[j["child"]],
            "axis": j["axis"],
            "range_prismatic": (0.0, 0.0),
            "range_revolute": (0.0, 0.0),
        }
        if j["type"] == "prismatic":
            rec["range_prismatic"] = j["limits"]
        elif j["type"] == "revolute":
            rec["range_revolute"] = j["limits"]
        merged.append(rec)

    part_links = [n for n in link_order if n not in carriages]
    part_index = {name: k for k, name in enumerate(part_links)}

    parts = []
    for name in part_links:
        visual = links[name]["visual"]
        frame = frames[name]
        if visual is None:
            pose, size = frame, np.full(3, 1e-3)
        else:
            pose = frame @ visual["origin"]
            size = visual["size"]
        parts.append(Part(pose=pose, bbox=size, latent=np.zeros(0)))

    out_joints = []
    for rec in merged:
        if rec["parent"] not in part_index or rec["child"] not in part_index:
            raise ValueError("joint endpoints must be part links after merging")
        frame = rec["frame"]
        direction = frame.rotation @ np.asarray(rec["axis"], dtype=float)
        axis = PluckerAxis.through_point(frame.translation, direction)
        out_joints.append(
            Joint(
                parent=part_index[rec["parent"]],
                child=part_index[rec["child"]],
                axis=axis,
                range_prismatic=np.asarray(rec["range_prismatic"], dtype=float),
                range_revolute=np.asarray(rec["range_revolute"], dtype=float),
            )
        )

    obj = ArticulatedObject(
        root=part_index[roots[0]],
        parts=parts,
        joints=out_joints,
        obj_id=robot.get("name"),
    )
    obj.validate()
    return obj
