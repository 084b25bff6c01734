"""Reachability probabilities of attractors in asynchronous logical models."""

from .avatar import AvatarConfig, avatar_run
from .firefront import FirefrontConfig, firefront_run
from .markov import absorption_probabilities, build_chain, exact_run, power_absorption_estimate
from .model import ComponentDef, LogicalModel, ModelError
from .parser import ModelDocument, format_model, load_model, parse_model
from .results import AbsorptionResult, Attractor, AttractorEstimate, serialize_result
from .stg import CapacityError, attractors, build_stg, tarjan_scc

__all__ = [
    "AbsorptionResult", "Attractor", "AttractorEstimate", "AvatarConfig", "CapacityError",
    "ComponentDef", "FirefrontConfig", "LogicalModel", "ModelDocument", "ModelError",
    "absorption_probabilities", "attractors", "avatar_run", "build_chain", "build_stg",
    "exact_run", "firefront_run", "format_model", "load_model", "parse_model",
    "power_absorption_estimate", "serialize_result", "tarjan_scc",
]
