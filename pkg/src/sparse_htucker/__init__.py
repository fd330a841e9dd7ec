"""Sparse hierarchical Tucker factorization of high-order count tensors."""

from .cur_sampler import (
    LeverageScores,
    NestingError,
    NodeSampling,
    leverage_scores,
    nested_sampling,
    root_mirror,
)
from .dimension_tree import (
    DimensionTree,
    TreeFormatError,
    TreeNode,
    balanced_tree,
    data_driven_tree,
    read_tree,
    validate,
    write_tree,
)
from .eval import (
    EvalReport,
    epsilon_sweep,
    frobenius_error,
    sampled_nnz_error,
    scaling_run,
)
from .factorizer import FactorizationPlan, assemble, check_nesting, factorize, parameterize
from .ingest import EventTable, SynthProfile, build_cooccurrence_tensor, read_events, synth_events
from .model import ConceptReport, HTuckerModel, ModelFormatError, load_model, save_model
from .sparse_tensor import SparseTensor, TensorFormatError, read_tensor, write_tensor

__version__ = "0.1.0"

__all__ = [
    "ConceptReport",
    "DimensionTree",
    "EvalReport",
    "EventTable",
    "FactorizationPlan",
    "HTuckerModel",
    "LeverageScores",
    "ModelFormatError",
    "NestingError",
    "NodeSampling",
    "SparseTensor",
    "SynthProfile",
    "TensorFormatError",
    "TreeFormatError",
    "TreeNode",
    "assemble",
    "balanced_tree",
    "build_cooccurrence_tensor",
    "check_nesting",
    "data_driven_tree",
    "epsilon_sweep",
    "factorize",
    "frobenius_error",
    "leverage_scores",
    "load_model",
    "nested_sampling",
    "parameterize",
    "read_events",
    "read_tensor",
    "read_tree",
    "root_mirror",
    "sampled_nnz_error",
    "save_model",
    "scaling_run",
    "synth_events",
    "validate",
    "write_tensor",
    "write_tree",
]
