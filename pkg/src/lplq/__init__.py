"""Step-function models of mixed-norm lattices L_p(L_q) and their automorphisms."""
from .blpq import BKpqSpec, Embedding, canonical_representation, closed_form_norm
from .config import InvariantError, PreconditionError, Tolerances
from .stepfn import NormParams, Partition1D, StepFunction1D, StepFunction2D, mixed_norm, n_map
from .transport import LatticeAutomorphism, PLMap, apply, auh_pipeline, compose, inverse, unit_to_e

__all__ = [
    "BKpqSpec", "Embedding", "canonical_representation", "closed_form_norm",
    "InvariantError", "PreconditionError", "Tolerances",
    "NormParams", "Partition1D", "StepFunction1D", "StepFunction2D", "mixed_norm", "n_map",
    "LatticeAutomorphism", "PLMap", "apply", "auh_pipeline", "compose", "inverse", "unit_to_e",
]
