"""Attractors, absorption results and their JSON/CSV serialisation."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Optional


@dataclass(frozen=True)
class Attractor:
    """A terminal SCC, or a set of states recognised by an oracle.

    ``states`` holds sorted state codes; it is empty for user oracles whose
    members were never enumerated (``oracle_size`` then gives the count).
    """

    kind: str  # "point" | "complex"
    states: tuple = ()
    label: Optional[str] = None
    oracle_size: Optional[int] = None

    @classmethod
    def point(cls, code: int) -> "Attractor":
        return cls("point", (code,))

    @classmethod
    def complex(cls, codes, label=None) -> "Attractor":
        codes = tuple(sorted(codes))
        return cls("point" if len(codes) == 1 else "complex", codes, label)

    @property
    def size(self) -> Optional[int]:
        return len(self.states) if self.states else self.oracle_size

    def sort_key(self):
        return (self.states[0] if self.states else math.inf, self.label or "")


@dataclass
class AttractorEstimate:
    attractor: Attractor
    probability: float
    lower_bound: Optional[float] = None
    upper_bound: Optional[float] = None
    std_error: Optional[float] = None
    avg_depth: Optional[float] = None
    inputs: Optional[dict] = None  # input valuation -> partial probability


@dataclass
class AbsorptionResult:
    method: str
    attractors: list = field(default_factory=list)
    residual: float = 0.0
    parameters: dict = field(default_factory=dict)
    model: str = "model"
    iterations: Optional[int] = None
    runs: Optional[int] = None
    wall_time_s: float = 0.0
    metadata: dict = field(default_factory=dict)

    def sorted_attractors(self) -> list:
        return sorted(self.attractors, key=lambda e: (-e.probability, e.attractor.sort_key()))

    def probability_of(self, attractor_states) -> float:
        """Probability reported for the attractor with exactly these member codes (0 if absent)."""
        key = tuple(sorted(attractor_states))
        for est in self.attractors:
            if est.attractor.states == key:
                return est.probability
        return 0.0

    def by_states(self) -> dict:
        return {est.attractor.states: est for est in self.attractors}

    def total_probability(self) -> float:
        return math.fsum(e.probability for e in self.attractors)


def attractor_ids(result: AbsorptionResult) -> list:
    """Table-style ids (PA1, CA2, ...) in serialisation order."""
    out = []
    for k, est in enumerate(result.sorted_attractors(), start=1):
        a = est.attractor
        if a.label:
            out.append(a.label)
        else:
            out.append(f"{'PA' if a.kind == 'point' else 'CA'}{k}")
    return out


def _round(x):
    return None if x is None else float(x)


def result_to_dict(result: AbsorptionResult, model=None, max_states: int = 64) -> dict:
    rows = []
    for aid, est in zip(attractor_ids(result), result.sorted_attractors()):
        a = est.attractor
        row = {"id": aid, "kind": a.kind, "size": a.size, "probability": est.probability}
        for key in ("lower_bound", "upper_bound", "std_error", "avg_depth"):
            val = getattr(est, key)
            if val is not None:
                row[key] = _round(val)
        if est.inputs is not None:
            row["inputs"] = dict(sorted(est.inputs.items()))
        if model is not None and a.states and len(a.states) <= max_states:
            row["states"] = [model.format_state(c) for c in a.states]
        rows.append(row)
    out = {
        "model": result.model,
        "method": result.method,
        "parameters": result.parameters,
        "attractors": rows,
    }
    out["residual_probability"] = result.residual
    if result.iterations is not None:
        out["iterations"] = result.iterations
    if result.runs is not None:
        out["runs"] = result.runs
    for key, val in sorted(result.metadata.items()):
        out.setdefault(key, val)
    out["wall_time_s"] = round(result.wall_time_s, 6)
    return out


CSV_COLUMNS = ["id", "kind", "size", "probability", "lower_bound", "upper_bound",
               "std_error", "avg_depth"]


def serialize_result(result: AbsorptionResult, fmt: str = "json", model=None) -> str:
    """Deterministic text rendering: attractors by descending probability,
    ties broken by smallest member state code."""
    data = result_to_dict(result, model)
    if fmt == "json":
        return json.dumps(data, indent=2) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS + ["states"])
        for row in data["attractors"]:
            w.writerow([row.get(c, "") for c in CSV_COLUMNS] + [" ".join(row.get("states", []))])
        return buf.getvalue()
    raise ValueError(f"unknown format {fmt!r}")
