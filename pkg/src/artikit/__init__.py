"""artikit: generative toolkit for 3D articulated objects.

Kinematic trees of box parts joined by screw joints are encoded as
fixed-size vectors, modeled with a graph-attention diffusion model,
decoded back into valid articulation trees, and compared with
instantiation-based set metrics.
"""

from .graph import (
    ArticulationGraph,
    EdgeAttr,
    GraphCodec,
    NodeAttr,
    NormalizationStats,
    make_mask,
)
from .kinematics import (
    ArticulatedObject,
    Joint,
    JointState,
    Part,
    PluckerAxis,
    RigidTransform,
    forward_kinematics,
    instantiate,
    project_to_plucker,
    sample_joint_states,
    screw_transform,
)
from .diffusion import (
    NoiseSchedule,
    conditioned_sample,
    make_schedule,
    q_sample,
    reverse_step,
    sample,
    training_loss,
)
from .denoiser import DenoiserConfig, GraphDenoiser, init_params
from .training import (
    Checkpoint,
    TrainConfig,
    load_checkpoint,
    save_checkpoint,
    train,
)
from .postprocess import ExtractionReport, PartLibrary, extract_object
from .urdf import export_urdf, parse_urdf
from .metrics import (
    chamfer,
    compute_distance_matrix,
    cov,
    d_tilde,
    evaluate_sets,
    instantiation_distance,
    mmd,
    one_nna,
)
from .dataset import (
    SynthSpec,
    corpus_to_matrix,
    generate_synthetic,
    load_corpus,
    normalize_object,
    object_to_graph,
    save_corpus,
    split,
)
from .estimator import ArticulationDiffusion

__version__ = "0.1.0"

__all__ = [
    "ArticulationDiffusion",
    "ArticulationGraph",
    "ArticulatedObject",
    "Checkpoint",
    "DenoiserConfig",
    "EdgeAttr",
    "ExtractionReport",
    "GraphCodec",
    "GraphDenoiser",
    "Joint",
    "JointState",
    "NodeAttr",
    "NoiseSchedule",
    "NormalizationStats",
    "Part",
    "PartLibrary",
    "PluckerAxis",
    "RigidTransform",
    "SynthSpec",
    "TrainConfig",
    "chamfer",
    "compute_distance_matrix",
    "conditioned_sample",
    "corpus_to_matrix",
    "cov",
    "d_tilde",
    "evaluate_sets",
    "export_urdf",
    "extract_object",
    "forward_kinematics",
    "generate_synthetic",
    "init_params",
    "instantiate",
    "instantiation_distance",
    "load_checkpoint",
    "load_corpus",
    "make_mask",
    "make_schedule",
    "mmd",
    "normalize_object",
    "object_to_graph",
    "one_nna",
    "parse_urdf",
    "project_to_plucker",
    "q_sample",
    "reverse_step",
    "sample",
    "sample_joint_states",
    "save_checkpoint",
    "save_corpus",
    "screw_transform",
    "split",
    "train",
    "training_loss",
]
