"""
Serialized documents emitted by the toolkit.

Exact rationals travel as "p/q" strings, floats as JSON numbers.
"""

import json
from typing import Any, Dict, List, Optional, Union

from pydantic import BaseModel, ConfigDict, Field

JsonScalar = Union[str, float, int]


class Document(BaseModel):
    """Base for all emitted documents; serialization is byte-deterministic."""

    model_config = ConfigDict(populate_by_name=True)

    def to_json(self) -> str:
        payload = self.model_dump(mode="json", by_alias=True)
        return json.dumps(payload, sort_keys=True, indent=2)


class MeasureDocument(Document):
    """A spectral measure: a.c. support, sampled density and atoms."""

    kind: str
    jacobi: Dict[str, List[JsonScalar]]
    ac_support: Optional[List[float]] = None
    density_samples: List[List[float]] = Field(default_factory=list)
    atoms: List[List[JsonScalar]] = Field(default_factory=list)


class AtomCurve(Document):
    """Location and weight of one marginal atom along a time grid."""

    label: str
    locations: List[Optional[float]]
    weights: List[float]
    active: List[bool]


class SupportPlotDocument(Document):
    """Supports of pi_t over a time grid: a.c. bands and atom curves."""

    params: Dict[str, JsonScalar]
    t_grid: List[float]
    support_bands: List[Optional[List[float]]]
    atom_curves: List[AtomCurve] = Field(default_factory=list)


class VerificationReport(Document):
    """Outcome of one verification check over its grid."""

    check: str
    params: Dict[str, Any]
    grid: Dict[str, Any]
    max_residual: Optional[float]  # None when the check raised
    tolerance: float
    passed: bool = Field(alias="pass")
    failing_cell: Optional[Dict[str, Any]] = None
    details: Dict[str, float] = Field(default_factory=dict)
    error: Optional[str] = None


class VerificationSummary(Document):
    """All reports of one `verify` run, in canonical order."""

    suite: str
    mode: str
    reports: List[VerificationReport]
    max_residual: float
    passed: bool = Field(alias="pass")

    @classmethod
    def from_reports(cls, suite: str, mode: str, reports: List[VerificationReport]) -> "VerificationSummary":
        ordered = sorted(reports, key=lambda r: (r.check, json.dumps(r.params, sort_keys=True), json.dumps(r.grid, sort_keys=True)))
        return cls(
            suite=suite,
            mode=mode,
            reports=ordered,
            max_residual=max((r.max_residual for r in ordered if r.max_residual is not None), default=0.0),
            passed=all(r.passed for r in ordered),
        )


class ConvolutionDocument(Document):
    """c-convolution of two bi-Poisson pairs against the pair at the summed time."""

    params: Dict[str, JsonScalar]
    s: JsonScalar
    t: JsonScalar
    order: int
    mode: str
    first: List[JsonScalar]
    second: List[JsonScalar]
    expected_first: List[JsonScalar]
    expected_second: List[JsonScalar]
    max_residual: float
    passed: bool = Field(alias="pass")
