"""Rubric-driven noisy-gate Bayesian networks for skill assessment."""

from .bn import (
    Cpt,
    Evidence,
    Factor,
    Network,
    ValidationReport,
    Variable,
    factor_marginalize,
    factor_product,
    factor_reduce,
    validate_network,
)
from .engine import EliminationOrder, Query, choose_order, enumerate_joint, posterior
from .errors import (
    DataError,
    InconsistentEvidenceError,
    ParameterError,
    RubricBnError,
    StructureError,
)
from .gates import (
    ConstraintSpec,
    NoisyOrSpec,
    and_cpt,
    constraint_cpt,
    noisy_or_cpt,
    prior_cpt,
)
from .rubric import (
    CompiledNetwork,
    ModelConfig,
    RubricSpec,
    TaskSpec,
    UniformParameters,
    compile,
    encode_failure,
    encode_success_constrained,
    encode_success_unconstrained,
    encode_supplementary,
    load_rubric,
)

__version__ = "0.1.0"
