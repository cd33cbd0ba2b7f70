"""Procedural articulated-object corpus: generation, I/O, splits, encoding.

Four synthetic families of box-part objects stand in for scanned
assets: cabinets with prismatic drawers, cabinets with revolute doors
hinged on a vertical box edge, two-part laptops, and scissors-like
pairs pivoting about a shared axis.  Every object is a tree of axis
aligned boxes at rest (rest rotations are identity), each joint
carries at most one prismatic and one revolute range, and part counts
stay within the codec capacity.

Corpus files are JSON, one record per object, using the same schema as
``ArticulatedObject.to_dict``.  ``corpus_to_matrix`` runs the full
encoding pipeline: recenter and rescale each object into the unit cube
[-1, 1]^3, encode to a flat vector, whiten per channel, and zero the
attribute channels of padding slots in normalized space.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from joblib import Parallel, delayed
from scipy.spatial.transform import Rotation

from ._util import allocate_counts
from .graph import (
    ArticulationGraph,
    EdgeAttr,
    GraphCodec,
    NodeAttr,
    NormalizationStats,
    pair_index,
)
from .kinematics import (
    ArticulatedObject,
    Joint,
    Part,
    PluckerAxis,
    RigidTransform,
)

FAMILIES = ("cabinet_drawers", "cabinet_doors", "laptop", "scissors")
# umbrella names accepted anywhere a family is named
FAMILY_GROUPS = {
    "cabinet": ("cabinet_drawers", "cabinet_doors"),
    "mixed": FAMILIES,
}


def resolve_family(name: str) -> tuple[str, ...]:
    """Concrete family tuple for a family or family-group name."""
    key = name.strip().lower().replace("-", "_")
    if key in FAMILY_GROUPS:
        return FAMILY_GROUPS[key]
    if key in FAMILIES:
        return (key,)
    known = ", ".join(FAMILIES + tuple(FAMILY_GROUPS))
    raise ValueError(f"unknown family {name!r} (known: {known})")


@dataclass(frozen=True)
class SynthSpec:
    """Knobs for the synthetic generator.

    ``part_range`` bounds the part count of objects whose family allows
    a variable count (drawer cabinets); both ends must sit in
    [2, n_slots].
    """

    family: str = "mixed"
    part_range: tuple[int, int] = (2, 8)
    size_range: tuple[float, float] = (0.4, 1.2)
    latent_width: int = 8
    n_slots: int = 8
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.part_range
        if not (2 <= lo <= hi <= self.n_slots):
            raise ValueError(
                f"part_range {self.part_range} must lie within [2, {self.n_slots}]"
            )
        a, b = self.size_range
        if not (0.0 < a <= b):
            raise ValueError(f"bad size_range {self.size_range}")
        resolve_family(self.family)


def latent_signature(bbox, width: int) -> np.ndarray:
    """Deterministic scale-invariant signature of box proportions.

    Built from sinusoids of the log side ratios, so similar proportions
    land close together and every value stays in [-1, 1].
    """
    sx, sy, sz = np.asarray(bbox, dtype=float)
    if min(sx, sy, sz) <= 0:
        raise ValueError("box sides must be positive")
    u = np.log(sx / sy)
    v = np.log(sy / sz)
    base = np.array([
        np.sin(u), np.cos(u), np.sin(v), np.cos(v),
        np.sin(u + v), np.cos(u + v), np.sin(u - v), np.cos(u - v),
    ])
    out = np.zeros(width)
    out[: min(width, len(base))] = base[:width]
    return out


def _part(center, size, width: int) -> Part:
    center = np.asarray(center, dtype=float)
    size = np.asarray(size, dtype=float)
    return Part(
        pose=RigidTransform.from_translation(center),
        bbox=size,
        latent=latent_signature(size, width),
    )


def _axis_through(point, direction) -> PluckerAxis:
    return PluckerAxis.through_point(np.asarray(point, float), np.asarray(direction, float))


def _build_cabinet_drawers(rng: np.random.Generator, spec: SynthSpec) -> ArticulatedObject:
    lo, hi = spec.part_range
    n_drawers = int(rng.integers(max(1, lo - 1), hi))
    a, b = spec.size_range
    depth = rng.uniform(0.6 * a, 0.7 * b)
    width = rng.uniform(0.8 * a, b)
    slot_h = rng.uniform(0.18, 0.30) * (a + b) / 2.0
    height = slot_h * n_drawers * 1.2 + 0.08
    parts = [_part((0.0, 0.0, 0.0), (depth, width, height), spec.latent_width)]
    joints = []
    for k in range(n_drawers):
        dz = -height / 2.0 + slot_h * 1.2 * (k + 0.5) + 0.04
        size = (depth * 0.88, width * 0.85, slot_h)
        center = (-0.02 * depth, 0.0, dz)
        parts.append(_part(center, size, spec.latent_width))
        joints.append(
            Joint(
                parent=0,
                child=k + 1,
                axis=_axis_through(center, (1.0, 0.0, 0.0)),
                range_prismatic=(0.0, 0.8 * depth),
                range_revolute=(0.0, 0.0),
            )
        )
    return ArticulatedObject(root=0, parts=parts, joints=joints)


def _build_cabinet_doors(rng: np.random.Generator, spec: SynthSpec) -> ArticulatedObject:
    n_doors = int(rng.integers(1, 3)) if spec.part_range[1] >= 3 else 1
    a, b = spec.size_range
    depth = rng.uniform(0.5 * a, 0.6 * b)
    width = rng.uniform(0.9 * a, b)
    height = rng.uniform(0.9 * a, 1.1 * b)
    thick = 0.05 * depth + 0.01
    parts = [_part((0.0, 0.0, 0.0), (depth, width, height), spec.latent_width)]
    joints = []
    door_w = width / n_doors * 0.92
    door_x = depth / 2.0 + thick / 2.0
    for k in range(n_doors):
        yc = 0.0 if n_doors == 1 else (-width / 4.0 if k == 0 else width / 4.0)
        center = (door_x, yc, 0.0)
        parts.append(_part(center, (thick, door_w, height * 0.94), spec.latent_width))
        # hinge on an outer vertical edge of the door box so the leaf
        # swings clear of the carcass
        side = rng.choice([-1.0, 1.0]) if n_doors == 1 else (-1.0 if k == 0 else 1.0)
        hinge = (door_x - thick / 2.0, yc + side * door_w / 2.0, 0.0)
        # axis sign keeps positive angles opening outward on either side
        joints.append(
            Joint(
                parent=0,
                child=k + 1,
                axis=_axis_through(hinge, (0.0, 0.0, -side)),
                range_prismatic=(0.0, 0.0),
                range_revolute=(0.0, rng.uniform(np.pi / 3.0, 0.55 * np.pi)),
            )
        )
    return ArticulatedObject(root=0, parts=parts, joints=joints)


def _build_laptop(rng: np.random.Generator, spec: SynthSpec) -> ArticulatedObject:
    a, b = spec.size_range
    depth = rng.uniform(0.7 * a, 0.8 * b)
    width = rng.uniform(0.9 * a, b)
    thick = rng.uniform(0.04, 0.08) * (a + b)
    base = _part((0.0, 0.0, thick / 2.0), (depth, width, thick), spec.latent_width)
    lid_t = thick * rng.uniform(0.5, 0.9)
    lid = _part((0.0, 0.0, thick + lid_t / 2.0), (depth, width, lid_t), spec.latent_width)
    # hinge along the shared back edge; -y keeps positive angles lifting
    # the lid front upward
    joint = Joint(
        parent=0,
        child=1,
        axis=_axis_through((-depth / 2.0, 0.0, thick), (0.0, -1.0, 0.0)),
        range_prismatic=(0.0, 0.0),
        range_revolute=(0.0, rng.uniform(1.5, 2.1)),
    )
    return ArticulatedObject(root=0, parts=[base, lid], joints=[joint])


def _build_scissors(rng: np.random.Generator, spec: SynthSpec) -> ArticulatedObject:
    a, b = spec.size_range
    length = rng.uniform(0.9 * a, 1.1 * b)
    blade_w = length * rng.uniform(0.10, 0.16)
    blade_t = length * rng.uniform(0.03, 0.05)
    lower = _part((0.0, 0.0, 0.0), (length, blade_w, blade_t), spec.latent_width)
    upper = _part((0.0, 0.0, blade_t), (length, blade_w, blade_t), spec.latent_width)
    pivot_x = rng.uniform(-0.25, 0.0) * length
    spread = rng.uniform(0.3, 0.7)
    joint = Joint(
        parent=0,
        child=1,
        axis=_axis_through((pivot_x, 0.0, blade_t / 2.0), (0.0, 0.0, 1.0)),
        range_prismatic=(0.0, 0.0),
        range_revolute=(-spread, spread),
    )
    return ArticulatedObject(root=0, parts=[lower, upper], joints=[joint])


_BUILDERS = {
    "cabinet_drawers": _build_cabinet_drawers,
    "cabinet_doors": _build_cabinet_doors,
    "laptop": _build_laptop,
    "scissors": _build_scissors,
}


def generate_synthetic(
    spec: SynthSpec,
    n: int,
    rng: np.random.Generator | None = None,
    n_jobs: int = 1,
) -> list[ArticulatedObject]:
    """Generate ``n`` objects; every one passes ``validate``.

    Each object is built from its own derived seed, so the corpus is
    identical for any ``n_jobs``.
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    families = resolve_family(spec.family)
    seeds = rng.integers(0, 2**63 - 1, size=n)
    picks = rng.integers(0, len(families), size=n)

    def build(i: int) -> ArticulatedObject:
        family = families[picks[i]]
        obj = _BUILDERS[family](np.random.default_rng(int(seeds[i])), spec)
        obj.obj_id = f"{family}-{spec.seed}-{i:05d}"
        obj.validate()
        return obj

    if n_jobs in (None, 0, 1):
        return [build(i) for i in range(n)]
    out = Parallel(n_jobs=n_jobs, prefer="threads")(delayed(build)(i) for i in range(n))
    return list(out)


def normalize_object(obj: ArticulatedObject) -> tuple[ArticulatedObject, np.ndarray, float]:
    """Recenter and isotropically rescale an object into [-1, 1]^3.

    Returns the normalized object plus the center and scale of the map
    x' = scale * (x - center) applied to it.  Joint axes move with the
    same rigid-plus-scale map: directions are unchanged, moments become
    scale * (m - center x l), prismatic ranges scale, angles do not.
    """
    lo = np.full(3, np.inf)
    hi = np.full(3, -np.inf)
    for part in obj.parts:
        corners = part.pose.apply(
            np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)])
            * (part.bbox / 2.0)
        )
        lo = np.minimum(lo, corners.min(axis=0))
        hi = np.maximum(hi, corners.max(axis=0))
    center = (lo + hi) / 2.0
    extent = float((hi - lo).max())
    if extent <= 0:
        raise ValueError("object has zero extent")
    scale = 2.0 / extent
    parts = [
        Part(
            pose=RigidTransform(
                part.pose.rotation.copy(),
                scale * (part.pose.translation - center),
            ),
            bbox=scale * part.bbox,
            latent=part.latent.copy(),
        )
        for part in obj.parts
    ]
    joints = [
        Joint(
            parent=j.parent,
            child=j.child,
            axis=PluckerAxis(j.axis.l.copy(), scale * (j.axis.m - np.cross(center, j.axis.l))),
            range_prismatic=(scale * j.range_prismatic[0], scale * j.range_prismatic[1]),
            range_revolute=j.range_revolute,
        )
        for j in obj.joints
    ]
    out = ArticulatedObject(root=obj.root, parts=parts, joints=joints, obj_id=obj.obj_id)
    return out, center, scale


def object_to_graph(obj: ArticulatedObject, codec: GraphCodec) -> ArticulationGraph:
    """Encode an object into slots 0..P-1 of a capacity-K graph.

    Stored edges keep the convention that a positive parent sign means
    the lower-indexed slot is the parent; joints whose parent is the
    higher index are stored reversed (sign and axis negated).
    """
    n_parts = len(obj.parts)
    if n_parts > codec.n_slots:
        raise ValueError(
            f"object has {n_parts} parts but the codec holds {codec.n_slots}"
        )
    nodes = []
    for k in range(codec.n_slots):
        if k < n_parts:
            part = obj.parts[k]
            latent = np.zeros(codec.latent_width)
            take = min(codec.latent_width, len(part.latent))
            latent[:take] = part.latent[:take]
            orientation = None
            if codec.include_rotation:
                orientation = _rotation_vector(part.pose.rotation)
            nodes.append(
                NodeAttr(
                    exists=1.0,
                    position=part.pose.translation.copy(),
                    size=part.bbox.copy(),
                    latent=latent,
                    orientation=orientation,
                )
            )
        else:
            nodes.append(_blank_node(codec))
    edges = [_blank_edge() for _ in range(codec.n_edges)]
    for joint in obj.joints:
        i, j = sorted((joint.parent, joint.child))
        attr = EdgeAttr(
            parent_sign=1.0,
            axis_dir=joint.axis.l.copy(),
            axis_moment=joint.axis.m.copy(),
            range_prismatic=np.asarray(joint.range_prismatic, dtype=float),
            range_revolute=np.asarray(joint.range_revolute, dtype=float),
        )
        if joint.parent > joint.child:
            attr = attr.reversed()
        edges[pair_index(codec.n_slots, i, j)] = attr
    return ArticulationGraph(n_slots=codec.n_slots, nodes=nodes, edges=edges)


def _rotation_vector(rotation: np.ndarray) -> np.ndarray:
    return Rotation.from_matrix(rotation).as_rotvec()


def _blank_node(codec: GraphCodec) -> NodeAttr:
    orientation = np.zeros(3) if codec.include_rotation else None
    return NodeAttr(
        exists=0.0,
        position=np.zeros(3),
        size=np.zeros(3),
        latent=np.zeros(codec.latent_width),
        orientation=orientation,
    )


def _blank_edge() -> EdgeAttr:
    return EdgeAttr(
        parent_sign=0.0,
        axis_dir=np.zeros(3),
        axis_moment=np.zeros(3),
        range_prismatic=np.zeros(2),
        range_revolute=np.zeros(2),
    )


def zero_background(x: np.ndarray, codec: GraphCodec) -> np.ndarray:
    """Zero the attribute channels of padding slots in normalized space.

    Node existence indicators always survive (they are the padding
    signal itself); everything else belonging to a missing node, or to
    a pair with a missing endpoint, is set to the normalized zero.
    """
    x = np.array(x, dtype=float)
    batched = x.ndim == 2
    rows = x if batched else x[None, :]
    fields = codec.node_fields()
    exists_off = fields["exists"].start
    for row in rows:
        present = [
            row[codec.node_slice(k).start + exists_off] > 0.0
            for k in range(codec.n_slots)
        ]
        for k in range(codec.n_slots):
            if present[k]:
                continue
            sl = codec.node_slice(k)
            keep = row[sl.start + exists_off]
            row[sl] = 0.0
            row[sl.start + exists_off] = keep
        for i in range(codec.n_slots):
            for j in range(i + 1, codec.n_slots):
                if not (present[i] and present[j]):
                    row[codec.edge_slice(i, j)] = 0.0
    return rows if batched else rows[0]


def corpus_to_matrix(
    corpus: list[ArticulatedObject],
    codec: GraphCodec,
    stats: NormalizationStats | None = None,
) -> tuple[np.ndarray, NormalizationStats]:
    """Full encoding pipeline: normalize pose, flatten, whiten, zero padding.

    Statistics are fit on the raw flat matrix when not supplied; pass
    the training stats back in to encode validation or test splits.
    """
    if not corpus:
        raise ValueError("corpus is empty")
    raw = np.stack([
        codec.flatten(object_to_graph(normalize_object(obj)[0], codec))
        for obj in corpus
    ])
    if stats is None:
        stats = NormalizationStats.fit(raw, codec)
    return zero_background(stats.normalize(raw), codec), stats


def split(
    corpus: list[ArticulatedObject],
    ratios: tuple[float, float, float],
    seed: int = 0,
) -> tuple[list, list, list]:
    """Deterministic disjoint train/val/test split by shuffled indices."""
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3:
        raise ValueError("need exactly three ratios")
    if any(r < 0 for r in ratios):
        raise ValueError("ratios must be nonnegative")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios sum to {sum(ratios)}, expected 1")
    counts = allocate_counts(np.array(ratios), len(corpus))
    order = np.random.default_rng(seed).permutation(len(corpus))
    edges = np.cumsum(counts)
    picks = [order[: edges[0]], order[edges[0] : edges[1]], order[edges[1] :]]
    return tuple([corpus[i] for i in sorted(p)] for p in picks)


def save_corpus(corpus: list[ArticulatedObject], path: str) -> None:
    records = [obj.to_dict() for obj in corpus]
    with open(path, "w") as fh:
        json.dump({"format": "artikit-corpus-1", "objects": records}, fh, indent=1)
        fh.write("\n")


def load_corpus(path: str) -> list[ArticulatedObject]:
    """Read a corpus file; schema problems name the offending record."""
    with open(path) as fh:
        payload = json.load(fh)
    if isinstance(payload, dict):
        records = payload.get("objects")
        if records is None:
            raise ValueError(f"{path}: corpus file has no 'objects' array")
    else:
        records = payload
    corpus = []
    for idx, rec in enumerate(records):
        try:
            corpus.append(ArticulatedObject.from_dict(rec))
        except (KeyError, TypeError) as exc:
            raise ValueError(f"{path}: object {idx}: bad record ({exc})") from exc
        except ValueError as exc:
            raise ValueError(f"{path}: object {idx}: {exc}") from exc
    return corpus
