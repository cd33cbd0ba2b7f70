"""Fixed-size vector codec for articulation graphs.

An object with at most ``n_slots`` parts is stored as a complete graph
over the part slots.  Node attributes describe one part (existence
flag, pose, box size, shape latent) and edge attributes describe the
candidate joint between a pair of parts (parent sign, screw axis,
motion ranges).  Only the upper triangle (i < j) is stored; querying
an edge as (j, i) applies the sign conventions for the reversed
direction.  The codec maps graphs to flat float vectors and back, and
carries the per-channel metadata needed for normalization and
conditioning masks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

CHANNEL_INDICATOR = "indicator"
CHANNEL_SIGN = "sign"
CHANNEL_VALUE = "value"

MASK_KINDS = ("parts", "motion", "gapart", "custom")

_SCALE_FLOOR = 1e-6


def pair_index(n_slots: int, i: int, j: int) -> int:
    """Position of the unordered pair (i, j), i < j, in lexicographic order."""
    if not 0 <= i < j < n_slots:
        raise ValueError(f"invalid node pair ({i}, {j}) for {n_slots} slots")
    return i * (2 * n_slots - i - 1) // 2 + (j - i - 1)


def pair_list(n_slots: int) -> list[tuple[int, int]]:
    return [(i, j) for i in range(n_slots) for j in range(i + 1, n_slots)]


@dataclass(eq=False)
class NodeAttr:
    """Attributes of one part slot.

    ``exists`` is 1.0 for a real part and 0.0 for padding.  ``position``
    is the rest-pose translation of the part frame.  ``orientation`` is
    an axis-angle rest rotation and is only stored when the codec is
    built with ``include_rotation=True``; otherwise it must be None.
    """

    exists: float
    position: np.ndarray
    size: np.ndarray
    latent: np.ndarray
    orientation: np.ndarray | None = None

    def __eq__(self, other) -> bool:
        if not isinstance(other, NodeAttr):
            return NotImplemented
        if (self.orientation is None) != (other.orientation is None):
            return False
        rot_ok = self.orientation is None or np.array_equal(
            self.orientation, other.orientation
        )
        return (
            self.exists == other.exists
            and np.array_equal(self.position, other.position)
            and np.array_equal(self.size, other.size)
            and np.array_equal(self.latent, other.latent)
            and rot_ok
        )


@dataclass(eq=False)
class EdgeAttr:
    """Attributes of the candidate joint between a pair of part slots.

    ``parent_sign`` > 0 means the lower-indexed endpoint is the parent,
    < 0 means the higher-indexed endpoint is, and 0 means no joint.
    ``axis_dir``/``axis_moment`` are the Pluecker coordinates of the
    joint axis in the object frame, pointing "from i to j".  Ranges are
    (lo, hi) bounds for the sliding and turning motions and do not
    depend on the query direction.
    """

    parent_sign: float
    axis_dir: np.ndarray
    axis_moment: np.ndarray
    range_prismatic: np.ndarray
    range_revolute: np.ndarray

    def reversed(self) -> "EdgeAttr":
        """The same joint seen from the other endpoint."""
        return EdgeAttr(
            parent_sign=-self.parent_sign,
            axis_dir=-np.asarray(self.axis_dir, dtype=float),
            axis_moment=-np.asarray(self.axis_moment, dtype=float),
            range_prismatic=np.array(self.range_prismatic, dtype=float),
            range_revolute=np.array(self.range_revolute, dtype=float),
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, EdgeAttr):
            return NotImplemented
        return (
            self.parent_sign == other.parent_sign
            and np.array_equal(self.axis_dir, other.axis_dir)
            and np.array_equal(self.axis_moment, other.axis_moment)
            and np.array_equal(self.range_prismatic, other.range_prismatic)
            and np.array_equal(self.range_revolute, other.range_revolute)
        )


@dataclass(eq=False)
class ArticulationGraph:
    """Complete graph over part slots with node and edge attributes.

    ``edges`` holds the upper triangle in lexicographic pair order.
    """

    n_slots: int
    nodes: list[NodeAttr]
    edges: list[EdgeAttr]

    def __post_init__(self):
        if len(self.nodes) != self.n_slots:
            raise ValueError(
                f"expected {self.n_slots} nodes, got {len(self.nodes)}"
            )
        n_edges = self.n_slots * (self.n_slots - 1) // 2
        if len(self.edges) != n_edges:
            raise ValueError(f"expected {n_edges} edges, got {len(self.edges)}")

    def edge(self, i: int, j: int) -> EdgeAttr:
        """Edge attributes for the ordered query (i, j).

        Queries with i > j return a reversed view of the stored record:
        parent sign and axis flip, ranges stay put.
        """
        if i == j:
            raise ValueError("no self edges")
        if i < j:
            return self.edges[pair_index(self.n_slots, i, j)]
        return self.edges[pair_index(self.n_slots, j, i)].reversed()

    def __eq__(self, other) -> bool:
        if not isinstance(other, ArticulationGraph):
            return NotImplemented
        return (
            self.n_slots == other.n_slots
            and self.nodes == other.nodes
            and self.edges == other.edges
        )


@dataclass(frozen=True)
class GraphCodec:
    """Flat-vector layout for a fixed number of part slots.

    The vector is all node blocks in slot order followed by all edge
    blocks in lexicographic pair order.  A node block is
    [exists, position(3), orientation(3)?, size(3), latent(F)] and an
    edge block is [parent_sign, axis_dir(3), axis_moment(3),
    range_prismatic(2), range_revolute(2)].
    """

    n_slots: int = 8
    latent_width: int = 8
    include_rotation: bool = False

    def __post_init__(self):
        if self.n_slots < 2:
            raise ValueError("need at least two part slots")
        if self.latent_width < 0:
            raise ValueError("latent width must be >= 0")

    @property
    def pose_width(self) -> int:
        return 6 if self.include_rotation else 3

    @property
    def node_dim(self) -> int:
        return 1 + self.pose_width + 3 + self.latent_width

    @property
    def edge_dim(self) -> int:
        return 11

    @property
    def n_edges(self) -> int:
        return self.n_slots * (self.n_slots - 1) // 2

    @property
    def flat_dim(self) -> int:
        return self.n_slots * self.node_dim + self.n_edges * self.edge_dim

    # ------------------------------------------------------------------
    # index helpers

    def node_slice(self, i: int) -> slice:
        if not 0 <= i < self.n_slots:
            raise ValueError(f"node index {i} out of range")
        return slice(i * self.node_dim, (i + 1) * self.node_dim)

    def edge_slice(self, i: int, j: int) -> slice:
        base = self.n_slots * self.node_dim
        k = pair_index(self.n_slots, min(i, j), max(i, j))
        return slice(base + k * self.edge_dim, base + (k + 1) * self.edge_dim)

    def node_fields(self) -> dict[str, slice]:
        """Sub-slices of a node block, keyed by field name."""
        p = self.pose_width
        fields = {"exists": slice(0, 1), "position": slice(1, 4)}
        if self.include_rotation:
            fields["orientation"] = slice(4, 7)
        fields["size"] = slice(1 + p, 4 + p)
        fields["latent"] = slice(4 + p, 4 + p + self.latent_width)
        return fields

    def edge_fields(self) -> dict[str, slice]:
        return {
            "parent_sign": slice(0, 1),
            "axis_dir": slice(1, 4),
            "axis_moment": slice(4, 7),
            "range_prismatic": slice(7, 9),
            "range_revolute": slice(9, 11),
        }

    def channel_names(self) -> list[str]:
        names = []
        xyz = ("x", "y", "z")
        for i in range(self.n_slots):
            names.append(f"node{i}.exists")
            names.extend(f"node{i}.pos.{a}" for a in xyz)
            if self.include_rotation:
                names.extend(f"node{i}.rot.{a}" for a in xyz)
            names.extend(f"node{i}.size.{a}" for a in xyz)
            names.extend(f"node{i}.latent{k}" for k in range(self.latent_width))
        for i, j in pair_list(self.n_slots):
            tag = f"edge{i}-{j}"
            names.append(f"{tag}.parent_sign")
            names.extend(f"{tag}.axis_dir.{a}" for a in xyz)
            names.extend(f"{tag}.axis_moment.{a}" for a in xyz)
            names.extend([f"{tag}.range_d.lo", f"{tag}.range_d.hi"])
            names.extend([f"{tag}.range_theta.lo", f"{tag}.range_theta.hi"])
        return names

    def channel_kinds(self) -> list[str]:
        """Per-channel statistic class: indicator, sign or value."""
        kinds = []
        for _ in range(self.n_slots):
            kinds.append(CHANNEL_INDICATOR)
            kinds.extend([CHANNEL_VALUE] * (self.node_dim - 1))
        for _ in range(self.n_edges):
            kinds.append(CHANNEL_SIGN)
            kinds.extend([CHANNEL_VALUE] * (self.edge_dim - 1))
        return kinds

    def exists_mask(self) -> np.ndarray:
        """Boolean vector selecting the per-slot existence channels."""
        mask = np.zeros(self.flat_dim, dtype=bool)
        for i in range(self.n_slots):
            mask[self.node_slice(i).start] = True
        return mask

    # ------------------------------------------------------------------
    # graph <-> vector

    def flatten(self, graph: ArticulationGraph) -> np.ndarray:
        if graph.n_slots != self.n_slots:
            raise ValueError(
                f"graph has {graph.n_slots} slots, codec expects {self.n_slots}"
            )
        x = np.zeros(self.flat_dim, dtype=float)
        nf = self.node_fields()
        for i, node in enumerate(graph.nodes):
            block = x[self.node_slice(i)]
            block[nf["exists"]] = node.exists
            block[nf["position"]] = self._checked(node.position, 3, f"node{i}.position")
            if self.include_rotation:
                rot = node.orientation
                if rot is None:
                    rot = np.zeros(3)
                block[nf["orientation"]] = self._checked(rot, 3, f"node{i}.orientation")
            elif node.orientation is not None and np.any(
                np.asarray(node.orientation) != 0
            ):
                raise ValueError(
                    f"node{i} carries an orientation but the codec stores none"
                )
            block[nf["size"]] = self._checked(node.size, 3, f"node{i}.size")
            block[nf["latent"]] = self._checked(
                node.latent, self.latent_width, f"node{i}.latent"
            )
        ef = self.edge_fields()
        for (i, j) in pair_list(self.n_slots):
            edge = graph.edges[pair_index(self.n_slots, i, j)]
            block = x[self.edge_slice(i, j)]
            block[ef["parent_sign"]] = edge.parent_sign
            block[ef["axis_dir"]] = self._checked(edge.axis_dir, 3, "axis_dir")
            block[ef["axis_moment"]] = self._checked(edge.axis_moment, 3, "axis_moment")
            block[ef["range_prismatic"]] = self._checked(
                edge.range_prismatic, 2, "range_prismatic"
            )
            block[ef["range_revolute"]] = self._checked(
                edge.range_revolute, 2, "range_revolute"
            )
        return x

    def unflatten(self, x: np.ndarray) -> ArticulationGraph:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.flat_dim,):
            raise ValueError(
                f"expected a flat vector of length {self.flat_dim}, got {x.shape}"
            )
        nf = self.node_fields()
        nodes = []
        for i in range(self.n_slots):
            block = x[self.node_slice(i)]
            nodes.append(
                NodeAttr(
                    exists=float(block[nf["exists"]][0]),
                    position=block[nf["position"]].copy(),
                    orientation=(
                        block[nf["orientation"]].copy()
                        if self.include_rotation
                        else None
                    ),
                    size=block[nf["size"]].copy(),
                    latent=block[nf["latent"]].copy(),
                )
            )
        ef = self.edge_fields()
        edges = []
        for (i, j) in pair_list(self.n_slots):
            block = x[self.edge_slice(i, j)]
            edges.append(
                EdgeAttr(
                    parent_sign=float(block[ef["parent_sign"]][0]),
                    axis_dir=block[ef["axis_dir"]].copy(),
                    axis_moment=block[ef["axis_moment"]].copy(),
                    range_prismatic=block[ef["range_prismatic"]].copy(),
                    range_revolute=block[ef["range_revolute"]].copy(),
                )
            )
        return ArticulationGraph(n_slots=self.n_slots, nodes=nodes, edges=edges)

    @staticmethod
    def _checked(value, width: int, name: str) -> np.ndarray:
        arr = np.asarray(value, dtype=float)
        if arr.shape != (width,):
            raise ValueError(f"{name} must have shape ({width},), got {arr.shape}")
        return arr

    def to_dict(self) -> dict:
        return {
            "n_slots": self.n_slots,
            "latent_width": self.latent_width,
            "include_rotation": self.include_rotation,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GraphCodec":
        return cls(**d)


@dataclass
class NormalizationStats:
    """Per-channel affine statistics for whitening flat vectors.

    Indicator channels map {0, 1} onto {-1, +1}, sign channels are left
    untouched, value channels are z-scored against the training set
    with the scale floored so constant channels normalize to zero.
    """

    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, x: np.ndarray, codec: GraphCodec) -> "NormalizationStats":
        x = np.asarray(x, dtype=float)
        if x.ndim != 2 or x.shape[1] != codec.flat_dim:
            raise ValueError(
                f"expected (n, {codec.flat_dim}) training matrix, got {x.shape}"
            )
        kinds = np.array(codec.channel_kinds())
        mean = x.mean(axis=0)
        scale = np.maximum(x.std(axis=0), _SCALE_FLOOR)
        mean[kinds == CHANNEL_INDICATOR] = 0.5
        scale[kinds == CHANNEL_INDICATOR] = 0.5
        mean[kinds == CHANNEL_SIGN] = 0.0
        scale[kinds == CHANNEL_SIGN] = 1.0
        return cls(mean=mean, scale=scale)

    def normalize(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.mean) / self.scale

    def denormalize(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=float) * self.scale + self.mean


def make_mask(
    codec: GraphCodec,
    kind: str,
    *,
    nodes: tuple[int, ...] = (),
    edges: tuple[tuple[int, int], ...] = (),
    known: np.ndarray | None = None,
) -> np.ndarray:
    """Boolean mask over flat-vector channels marking the known entries.

    Kinds:

    - ``"parts"``: every node channel is known (generate the motion
      structure for given part geometry).
    - ``"motion"``: every edge channel plus the existence flags are
      known (generate geometry for a given motion structure).
    - ``"gapart"``: a single observed child part and its joint to the
      base: node 0 keeps exists/size/latent (pose free), node 1 keeps
      only its existence flag, and edge (0, 1) keeps the parent sign,
      the axis direction and whichever range rows are exactly [0, 0]
      in ``known`` (a degenerate row pins the motion type; a live row
      is left free).  Requires the raw ``known`` vector.
    - ``"custom"``: the union of the full blocks for ``nodes`` and
      ``edges``; with neither given the mask is all-free.
    """
    if kind not in MASK_KINDS:
        raise ValueError(f"unknown mask kind {kind!r}, expected one of {MASK_KINDS}")
    mask = np.zeros(codec.flat_dim, dtype=bool)
    if kind == "parts":
        for i in range(codec.n_slots):
            mask[codec.node_slice(i)] = True
    elif kind == "motion":
        mask[codec.n_slots * codec.node_dim :] = True
        mask |= codec.exists_mask()
    elif kind == "gapart":
        if known is None:
            raise ValueError("gapart mask needs the raw known vector")
        known = np.asarray(known, dtype=float)
        if known.shape != (codec.flat_dim,):
            raise ValueError(
                f"known vector must have shape ({codec.flat_dim},), got {known.shape}"
            )
        nf = codec.node_fields()
        n0 = codec.node_slice(0).start
        for name in ("exists", "size", "latent"):
            s = nf[name]
            mask[n0 + s.start : n0 + s.stop] = True
        n1 = codec.node_slice(1).start
        mask[n1 + nf["exists"].start] = True
        ef = codec.edge_fields()
        e0 = codec.edge_slice(0, 1).start
        for name in ("parent_sign", "axis_dir"):
            s = ef[name]
            mask[e0 + s.start : e0 + s.stop] = True
        for name in ("range_prismatic", "range_revolute"):
            s = ef[name]
            row = known[e0 + s.start : e0 + s.stop]
            if np.all(row == 0.0):
                mask[e0 + s.start : e0 + s.stop] = True
    else:
        for i in nodes:
            mask[codec.node_slice(i)] = True
        for (i, j) in edges:
            mask[codec.edge_slice(i, j)] = True
    return mask
