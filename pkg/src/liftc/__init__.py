"""Weighted Datalog templates compiled into differentiable computation graphs."""

from .errors import (
    ConfigError,
    CyclicGroundingError,
    DomainError,
    GroundingLimitError,
    LiftcError,
    NonFinite,
    ParseError,
    ShapeMismatch,
    ValidationError,
)
from .engine import backward, forward
from .graph import ComputationGraph, build_graph, export_dot, prune, vectorize
from .grounder import GroundProgram, NotEntailed, ground_example, ground_for_query, least_model, relevant_to
from .logic import Atom, Example, Fixed, Learnable, Query, Template, WeightedFact, WeightedRule, validate_template
from .params import GradientStore, ParameterStore
from .parser import load_examples, load_template, parse_examples, parse_template, serialize
from .train import BuildOptions, Dataset, TrainConfig, build_dataset, cross_validate, evaluate, init_params, train
from .zoo import ZOO_NAMES, ZooSpec, instantiate

__all__ = sorted(
    name for name, obj in globals().items() if not name.startswith("_") and not hasattr(obj, "__path__") and not hasattr(obj, "__file__")
)
