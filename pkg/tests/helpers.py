"""Shared builders and finite-difference utilities for the test suite."""

import numpy as np

from artikit.graph import ArticulationGraph, EdgeAttr, GraphCodec, NodeAttr
from artikit.kinematics import (
    ArticulatedObject,
    Joint,
    Part,
    PluckerAxis,
    RigidTransform,
)


def random_node(rng: np.random.Generator, codec: GraphCodec) -> NodeAttr:
    orientation = rng.normal(size=3) if codec.include_rotation else None
    return NodeAttr(
        exists=float(rng.integers(0, 2)),
        position=rng.normal(size=3),
        size=rng.uniform(0.1, 1.0, size=3),
        latent=rng.normal(size=codec.latent_width),
        orientation=orientation,
    )


def random_edge(rng: np.random.Generator) -> EdgeAttr:
    return EdgeAttr(
        parent_sign=float(rng.uniform(-1, 1)),
        axis_dir=rng.normal(size=3),
        axis_moment=rng.normal(size=3),
        range_prismatic=np.sort(rng.normal(size=2)),
        range_revolute=np.sort(rng.normal(size=2)),
    )


def random_graph(rng: np.random.Generator, codec: GraphCodec) -> ArticulationGraph:
    return ArticulationGraph(
        n_slots=codec.n_slots,
        nodes=[random_node(rng, codec) for _ in range(codec.n_slots)],
        edges=[random_edge(rng) for _ in range(codec.n_edges)],
    )


def box_part(center, size, latent=()) -> Part:
    return Part(
        pose=RigidTransform.from_translation(np.asarray(center, dtype=float)),
        bbox=np.asarray(size, dtype=float),
        latent=np.asarray(latent, dtype=float),
    )


def axis_through(point, direction) -> PluckerAxis:
    return PluckerAxis.through_point(
        np.asarray(point, dtype=float), np.asarray(direction, dtype=float)
    )


def two_part_prismatic(travel=0.5, obj_id=None) -> ArticulatedObject:
    """Cabinet-and-drawer pair sliding along +x."""
    parts = [
        box_part((0, 0, 0), (0.6, 0.8, 0.9)),
        box_part((0, 0, 0.1), (0.5, 0.7, 0.2)),
    ]
    joint = Joint(
        parent=0,
        child=1,
        axis=axis_through((0, 0, 0.1), (1, 0, 0)),
        range_prismatic=(0.0, travel),
        range_revolute=(0.0, 0.0),
    )
    return ArticulatedObject(root=0, parts=parts, joints=joints_list(joint), obj_id=obj_id)


def two_part_revolute(angle=1.2, obj_id=None) -> ArticulatedObject:
    """Base-and-lid pair hinged along the shared back edge."""
    parts = [
        box_part((0, 0, 0.05), (0.7, 0.9, 0.1)),
        box_part((0, 0, 0.15), (0.7, 0.9, 0.1)),
    ]
    joint = Joint(
        parent=0,
        child=1,
        axis=axis_through((-0.35, 0, 0.1), (0, -1, 0)),
        range_prismatic=(0.0, 0.0),
        range_revolute=(0.0, angle),
    )
    return ArticulatedObject(root=0, parts=parts, joints=joints_list(joint), obj_id=obj_id)


def hybrid_object(obj_id=None) -> ArticulatedObject:
    """Single joint with both a live slide and a live turn."""
    parts = [
        box_part((0, 0, 0), (0.8, 0.8, 0.4)),
        box_part((0.2, 0, 0.3), (0.3, 0.3, 0.2)),
    ]
    joint = Joint(
        parent=0,
        child=1,
        axis=axis_through((0.2, 0, 0.3), (0, 0, 1)),
        range_prismatic=(0.0, 0.25),
        range_revolute=(-0.8, 0.8),
    )
    return ArticulatedObject(root=0, parts=parts, joints=joints_list(joint), obj_id=obj_id)


def single_box(rng: np.random.Generator, obj_id=None) -> ArticulatedObject:
    """One free part, no joints; the cheapest metric test subject."""
    return ArticulatedObject(
        root=0,
        parts=[box_part(rng.normal(scale=0.2, size=3), rng.uniform(0.3, 1.0, size=3))],
        joints=[],
        obj_id=obj_id,
    )


def joints_list(*joints) -> list:
    return list(joints)


# ----------------------------------------------------------------------
# finite differences


def numeric_grad(fn, x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of a scalar function of one array."""
    x = np.asarray(x, dtype=float)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + eps
        up = fn(x)
        flat[i] = keep - eps
        down = fn(x)
        flat[i] = keep
        gflat[i] = (up - down) / (2.0 * eps)
    return grad


def max_param_fd_error(params, loss_fn, grads, eps=1e-5, floor=1e-8) -> float:
    """Worst relative error between analytic grads and central differences,
    checked at every scalar coordinate of every parameter tensor.

    ``floor`` bounds the denominator from below.  A central difference of
    a float64 loss L cannot resolve derivatives smaller than about
    ulp(L) / (2 eps), so for coordinates whose true gradient is zero the
    floor must sit above that quantization noise or one-ulp flicker in
    the loss reads as a large relative error.
    """
    worst = 0.0
    for name, values in params.items():
        flat = values.reshape(-1)
        gflat = grads[name].reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + eps
            up = loss_fn()
            flat[i] = keep - eps
            down = loss_fn()
            flat[i] = keep
            fd = (up - down) / (2.0 * eps)
            denom = max(abs(fd), abs(gflat[i]), floor)
            worst = max(worst, abs(fd - gflat[i]) / denom)
    return worst
