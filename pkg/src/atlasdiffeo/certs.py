"""Certificates: structured pass/fail results of quantitative checks.

A Certificate records every inequality that was evaluated (with its margin),
the sampling resolution behind each claim, and an overall verdict.  Failures
are values, not exceptions: callers inspect `passed` and the clauses.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

__all__ = ["Clause", "Certificate", "to_jsonable", "canonical_json"]


@dataclass
class Clause:
    """One checked inequality.

    `margin` is how far the check is on the passing side (negative = failed);
    the name says which requirement the clause encodes.
    """

    name: str
    passed: bool
    margin: float
    detail: dict[str, Any] = field(default_factory=dict)

    def as_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {
            "name": self.name,
            "passed": bool(self.passed),
            "margin": float(self.margin),
        }
        if self.detail:
            d["detail"] = to_jsonable(self.detail)
        return d


@dataclass
class Certificate:
    kind: str
    clauses: list[Clause] = field(default_factory=list)
    resolution: dict[str, Any] = field(default_factory=dict)
    info: dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.clauses)

    def add(self, name: str, passed: bool, margin: float, **detail: Any) -> Clause:
        clause = Clause(name, bool(passed), float(margin), dict(detail))
        self.clauses.append(clause)
        return clause

    def failing_clauses(self) -> list[Clause]:
        return [c for c in self.clauses if not c.passed]

    def as_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "passed": self.passed,
            "clauses": [c.as_dict() for c in self.clauses],
            "resolution": to_jsonable(self.resolution),
            "info": to_jsonable(self.info),
        }


def to_jsonable(obj: Any) -> Any:
    """Convert nested results (numpy scalars/arrays, tuples) to plain python.

    Keeps output JSON-serializable and, because floats go through python's
    shortest-round-trip repr inside json.dumps, byte-stable across runs.
    """
    import numpy as np

    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, Certificate):
        return obj.as_dict()
    if isinstance(obj, Clause):
        return obj.as_dict()
    return obj


def canonical_json(payload: Any) -> str:
    """Serialize with sorted keys and no whitespace variance.

    The same payload always produces the same bytes; reports rely on this
    for reproducibility checks.
    """
    return json.dumps(to_jsonable(payload), sort_keys=True, separators=(",", ":"))
