"""Turns denoised flat vectors into valid articulated objects.

Pipeline: threshold the existence indicators (top-2 fallback), pick
the spanning tree over foreground nodes that maximizes total edge
confidence |parent_sign|, orient edges by the sign votes, project the
axes onto valid line coordinates, sanitize ranges and box sizes, and
reindex into an ArticulatedObject.  A report records what was repaired
so callers can audit batch extractions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graph import GraphCodec, NormalizationStats
from .kinematics import (
    ArticulatedObject,
    Joint,
    Part,
    PluckerAxis,
    RigidTransform,
    project_to_plucker,
    rotation_about,
)

_BBOX_FLOOR = 1e-3
_DIR_EPS = 1e-8


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, a: int) -> int:
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[rb] = ra
        return True


def max_weight_spanning_tree(
    nodes: list[int], weight: dict[tuple[int, int], float]
) -> list[tuple[int, int]]:
    """Spanning tree over ``nodes`` maximizing the total edge weight.

    Kruskal on sorted (-weight, i, j) keys, so ties resolve to the
    lexicographically smallest edge set deterministically.
    """
    edges = sorted(weight, key=lambda e: (-weight[e], e))
    uf = _UnionFind(max(nodes) + 1)
    chosen = []
    for (i, j) in edges:
        if uf.union(i, j):
            chosen.append((i, j))
            if len(chosen) == len(nodes) - 1:
                break
    if len(chosen) != len(nodes) - 1:
        raise ValueError("edge set does not span the nodes")
    return chosen


@dataclass(eq=False)
class ExtractionReport:
    foreground: list[int]
    tree_edges: list[tuple[int, int]]
    orientation_conflicts: int = 0
    repairs: list[str] = field(default_factory=list)


def extract_object(
    x0: np.ndarray,
    codec: GraphCodec,
    stats: NormalizationStats | None = None,
) -> tuple[ArticulatedObject, ExtractionReport]:
    """Decode a (possibly normalized) flat vector into a valid object.

    ``stats`` denormalizes the vector first; pass None for raw vectors.
    The output always satisfies the rooted-tree invariants.
    """
    x0 = np.asarray(x0, dtype=float)
    if stats is not None:
        x0 = stats.denormalize(x0)
    graph = codec.unflatten(x0)
    repairs: list[str] = []

    exists = np.array([node.exists for node in graph.nodes])
    foreground = [i for i in range(codec.n_slots) if exists[i] > 0.5]
    if len(foreground) < 2:
        order = sorted(range(codec.n_slots), key=lambda i: (-exists[i], i))
        foreground = sorted(order[:2])
        repairs.append(
            f"fewer than two foreground nodes, kept top-2 {tuple(foreground)}"
        )

    weight = {
        (i, j): abs(graph.edge(i, j).parent_sign)
        for a, i in enumerate(foreground)
        for j in foreground[a + 1 :]
    }
    tree = max_weight_spanning_tree(foreground, weight)

    # orient each edge by its sign vote, then take the root minimizing
    # disagreements (ties to the lowest node id)
    neighbors: dict[int, list[int]] = {i: [] for i in foreground}
    for (i, j) in tree:
        neighbors[i].append(j)
        neighbors[j].append(i)

    votes = {
        (i, j): (i, j) if graph.edge(i, j).parent_sign >= 0 else (j, i)
        for (i, j) in tree
    }

    def conflicts_from(root: int) -> int:
        count = 0
        seen = {root}
        stack = [root]
        while stack:
            p = stack.pop()
            for c in neighbors[p]:
                if c in seen:
                    continue
                seen.add(c)
                stack.append(c)
                key = (p, c) if (p, c) in votes else (c, p)
                if votes[key] != (p, c):
                    count += 1
        return count

    root = min(foreground, key=lambda r: (conflicts_from(r), r))
    conflict_count = conflicts_from(root)
    if conflict_count:
        repairs.append(
            f"re-oriented {conflict_count} edge(s) away from root {root}"
        )

    index_of = {node: k for k, node in enumerate(foreground)}
    parts = []
    for i in foreground:
        node = graph.nodes[i]
        size = node.size.copy()
        if np.any(size < _BBOX_FLOOR):
            repairs.append(f"clamped box size of node {i} to {_BBOX_FLOOR}")
            size = np.maximum(size, _BBOX_FLOOR)
        rotation = np.eye(3)
        if node.orientation is not None:
            angle = np.linalg.norm(node.orientation)
            if angle > 0:
                rotation = rotation_about(node.orientation / angle, angle)
        parts.append(
            Part(
                pose=RigidTransform(rotation, node.position.copy()),
                bbox=size,
                latent=node.latent.copy(),
            )
        )

    joints = []
    seen = {root}
    stack = [root]
    ordered: list[tuple[int, int]] = []
    while stack:
        p = stack.pop()
        for c in sorted(neighbors[p]):
            if c not in seen:
                seen.add(c)
                stack.append(c)
                ordered.append((p, c))
    for (p, c) in ordered:
        edge = graph.edge(p, c)
        raw = np.concatenate([edge.axis_dir, edge.axis_moment])
        if np.linalg.norm(raw[:3]) <= _DIR_EPS:
            repairs.append(
                f"degenerate axis direction on edge ({p}, {c}), used +z"
            )
            direction = np.array([0.0, 0.0, 1.0])
            axis = PluckerAxis(
                direction, raw[3:] - (raw[3:] @ direction) * direction
            )
        else:
            axis = project_to_plucker(raw)
        rp = np.sort(edge.range_prismatic)
        rr = np.sort(edge.range_revolute)
        clamped_p = np.array([min(rp[0], 0.0), max(rp[1], 0.0)])
        clamped_r = np.array([min(rr[0], 0.0), max(rr[1], 0.0)])
        if not (np.array_equal(rp, clamped_p) and np.array_equal(rr, clamped_r)):
            repairs.append(f"clamped ranges of edge ({p}, {c}) to contain 0")
        joints.append(
            Joint(
                parent=index_of[p],
                child=index_of[c],
                axis=axis,
                range_prismatic=clamped_p,
                range_revolute=clamped_r,
            )
        )

    obj = ArticulatedObject(root=index_of[root], parts=parts, joints=joints)
    obj.validate()
    report = ExtractionReport(
        foreground=foreground,
        tree_edges=tree,
        orientation_conflicts=conflict_count,
        repairs=repairs,
    )
    return obj, report


# ----------------------------------------------------------------------
# part retrieval


@dataclass(eq=False)
class PartLibrary:
    """Flat catalog of part descriptors for nearest-neighbor retrieval."""

    features: np.ndarray
    sources: list[tuple[int, int]]

    @classmethod
    def from_objects(cls, objects: list[ArticulatedObject]) -> "PartLibrary":
        feats = []
        sources = []
        for oi, obj in enumerate(objects):
            for pi, part in enumerate(obj.parts):
                feats.append(np.concatenate([part.bbox, part.latent]))
                sources.append((oi, pi))
        if not feats:
            raise ValueError("no parts to build a library from")
        return cls(features=np.stack(feats), sources=sources)

    def __len__(self) -> int:
        return len(self.sources)


def retrieve_nearest_part(bbox, latent, library: PartLibrary) -> int:
    """Id of the library part nearest in (bbox, latent) space.

    Euclidean distance over the concatenated descriptor; exact ties go
    to the lowest id.
    """
    if len(library) == 0:
        raise ValueError("empty part library")
    query = np.concatenate(
        [np.asarray(bbox, dtype=float), np.asarray(latent, dtype=float)]
    )
    if query.shape != (library.features.shape[1],):
        raise ValueError(
            f"query has {query.shape[0]} features, library rows have "
            f"{library.features.shape[1]}"
        )
    dists = np.linalg.norm(library.features - query, axis=1)
    return int(np.argmin(dists))


def snap_parts_to_library(
    obj: ArticulatedObject, library: PartLibrary, objects: list[ArticulatedObject]
) -> ArticulatedObject:
    """Replace each part's box and latent with its nearest library entry."""
    parts = []
    for part in obj.parts:
        idx = retrieve_nearest_part(part.bbox, part.latent, library)
        oi, pi = library.sources[idx]
        src = objects[oi].parts[pi]
        parts.append(Part(pose=part.pose, bbox=src.bbox.copy(),
                          latent=src.latent.copy()))
    return ArticulatedObject(root=obj.root, parts=parts, joints=obj.joints,
                             obj_id=obj.obj_id)
