"""Graph-conditioned volumetric building design generation.

Data model (program graphs, voxel graphs, assignments), a seeded synthetic
dataset generator, a pointer-based cross-modal GAN with WGAN-GP training,
and the evaluation metrics (connectivity accuracy, FAR distance, TPR
accuracy, Fréchet distance over a pluggable embedder).
"""

from .core import (
    Assignment,
    EdgeKind,
    GeometryError,
    ProgramEdge,
    ProgramGraph,
    ProgramNode,
    ProgramType,
    ValidationError,
    VolumetricDesign,
    VoxelGraph,
    VoxelNode,
    assignment_to_labels,
    build_program_graph,
    build_voxel_graph,
    design_from_labeled_graph,
)
from .jsonio import ParseError, deserialize, serialize
from .synth import (
    CorePattern,
    SynthConfig,
    SynthRecord,
    compute_conditions,
    generate_dataset,
    generate_design,
    sample_partition,
)
from .generator import GenConfig, Generator, generator_forward, sample_design
from .critic import Critic, CriticConfig
from .training import TrainConfig, gradient_penalty, real_labels, train
from .metrics import (
    MetricsReport,
    connectivity_accuracy,
    far_distance,
    frechet_distance,
    tpr_accuracy,
)
from .descriptor import DescriptorEmbedder, descriptor_embed

__version__ = "0.1.0"

__all__ = [
    "Assignment",
    "CorePattern",
    "Critic",
    "CriticConfig",
    "DescriptorEmbedder",
    "EdgeKind",
    "GenConfig",
    "Generator",
    "GeometryError",
    "MetricsReport",
    "ParseError",
    "ProgramEdge",
    "ProgramGraph",
    "ProgramNode",
    "ProgramType",
    "SynthConfig",
    "SynthRecord",
    "TrainConfig",
    "ValidationError",
    "VolumetricDesign",
    "VoxelGraph",
    "VoxelNode",
    "assignment_to_labels",
    "build_program_graph",
    "build_voxel_graph",
    "compute_conditions",
    "connectivity_accuracy",
    "descriptor_embed",
    "deserialize",
    "design_from_labeled_graph",
    "far_distance",
    "frechet_distance",
    "generate_dataset",
    "generate_design",
    "generator_forward",
    "gradient_penalty",
    "real_labels",
    "sample_design",
    "sample_partition",
    "serialize",
    "tpr_accuracy",
    "train",
]
