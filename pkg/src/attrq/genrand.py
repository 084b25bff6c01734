"""Random Boolean models with a fixed number of regulators per component."""

from __future__ import annotations

import numpy as np

from .model import And, Atom, ComponentDef, LogicalModel
from .parser import ModelDocument
from .stg import DEFAULT_STATE_CAP, model_attractors


def generate_random_model(n: int, k: int, rng) -> LogicalModel:
    """Each component gets ``k`` distinct regulators and a uniformly drawn truth table.

    The truth table is written as one TARGET rule per minterm where it is 1
    (so a constant-0 function has no rule at all).
    """
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got n={n}, k={k}")
    rng = np.random.default_rng(rng)
    comps = []
    for i in range(n):
        regs = sorted(int(r) for r in rng.choice(n, size=k, replace=False))
        table = rng.integers(0, 2, size=1 << k)
        rules = []
        for m in range(1 << k):
            if table[m]:
                atoms = tuple(Atom(r, "=", (m >> j) & 1) for j, r in enumerate(regs))
                rules.append((1, atoms[0] if k == 1 else And(atoms)))
        comps.append(ComponentDef(f"g{i}", 1, tuple(rules)))
    return LogicalModel(comps)


def filter_multistable(model: LogicalModel, cap: int = DEFAULT_STATE_CAP) -> bool:
    """True iff the full STG has at least two attractors."""
    return len(model_attractors(model, cap=cap)) >= 2


def random_multistable(n: int, k: int, rng, max_tries: int = 10_000) -> LogicalModel:
    rng = np.random.default_rng(rng)
    for _ in range(max_tries):
        model = generate_random_model(n, k, rng)
        if filter_multistable(model):
            return model
    raise RuntimeError(f"no multistable model found in {max_tries} draws (n={n}, k={k})")


def as_document(model: LogicalModel, name: str = "random") -> ModelDocument:
    return ModelDocument(model, name=name)
