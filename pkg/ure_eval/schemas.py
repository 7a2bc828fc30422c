from enum import Enum
from fractions import Fraction
from math import comb
from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_serializer, model_validator


class Scheme(str, Enum):
    """Evaluation schemes; values double as the CLI `--scheme` names."""

    TRADITIONAL_RAND = "rand"
    GOLD_FULL = "full"
    URE = "ure"


class SkipPolicy(str, Enum):
    SKIP = "skip"
    ZERO = "zero"


# -------- dataset validation --------
class ValidationIssue(BaseModel):
    kind: Literal["duplicate", "out_of_range", "invalid_label", "incomplete"]
    user: int
    item: Optional[int] = None
    label: Optional[int] = None
    line: Optional[int] = Field(None, description="1-based source line when parsed from a file")


class ValidationSummary(BaseModel):
    duplicates: List[ValidationIssue] = Field(default_factory=list)
    out_of_range: List[ValidationIssue] = Field(default_factory=list)
    invalid_labels: List[ValidationIssue] = Field(default_factory=list)
    incomplete_users: List[ValidationIssue] = Field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not (self.duplicates or self.out_of_range or self.invalid_labels or self.incomplete_users)

    def issues(self) -> List[ValidationIssue]:
        """All issues ordered by source line (unknown lines last)."""
        every = self.duplicates + self.out_of_range + self.invalid_labels + self.incomplete_users
        return sorted(every, key=lambda i: (i.line is None, i.line or 0))


# -------- evaluation --------
class EvalReport(BaseModel):
    scheme: Scheme
    k: int = Field(..., ge=1, description="cutoff K (or K̄ for the traditional scheme)")
    per_user: Dict[int, float] = Field(default_factory=dict, description="dense user id -> metric value")
    macro_mean: float
    skipped_users: Dict[str, int] = Field(default_factory=dict, description="reason tag -> count")
    skipped_user_ids: Dict[str, List[int]] = Field(default_factory=dict)
    zero_filled: int = Field(0, description="users scored 0 under the zero skip policy")
    skip_policy: SkipPolicy = SkipPolicy.SKIP

    @model_validator(mode="after")
    def _check_values(self):
        for user, value in self.per_user.items():
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"per-user value {value} for user={user} outside [0,1]")
        return self

    @property
    def skipped_total(self) -> int:
        return sum(self.skipped_users.values())


# -------- experiments --------
class CorrelationCurve(BaseModel):
    fixed: str = Field(..., description="fixed metric id, e.g. rand@5 or ure@30; ure@K means URE at the same K")
    nbar: Optional[int] = None
    k_grid: List[int]
    pearson_r: List[Optional[float]] = Field(..., description="None marks an undefined point (zero variance)")
    k_max: int

    @model_validator(mode="after")
    def _check_curve(self):
        if len(self.k_grid) != len(self.pearson_r):
            raise ValueError("k_grid and pearson_r differ in length")
        if self.k_max not in self.k_grid:
            raise ValueError(f"k_max={self.k_max} not on the grid")
        return self

    def r_at(self, k: int) -> Optional[float]:
        return self.pearson_r[self.k_grid.index(k)]


class CorrelationMatrix(BaseModel):
    row_metrics: List[str]
    col_k: List[int]
    values: List[List[Optional[float]]]
    row_argmax: List[Optional[int]] = Field(..., description="per row, the K of the best-correlated column")

    @property
    def diagonal_dominant(self) -> bool:
        """Every row peaks at its own K (rows named ure@K)."""
        own = [int(m.split("@")[1]) for m in self.row_metrics]
        return all(a == k for a, k in zip(self.row_argmax, own))


class ComparisonRow(BaseModel):
    model: str
    traditional: Optional[float] = None
    gold: Optional[float] = None
    ure: Optional[float] = None


class ComparisonTable(BaseModel):
    k: int
    kbar: int
    rows: List[ComparisonRow]
    order: Dict[str, List[str]] = Field(..., description="scheme -> model labels, best first")
    kendall_tau: Dict[str, Optional[float]] = Field(..., description="scheme -> tau against the reference order")
    reference: str


# -------- oracle --------
class ExactValue(BaseModel):
    """Exact rational carried as a reduced numerator/denominator pair."""

    model_config = ConfigDict(frozen=True)

    numerator: int
    denominator: int = Field(..., gt=0)

    @model_validator(mode="after")
    def _reduced(self):
        if Fraction(self.numerator, self.denominator).denominator != self.denominator:
            raise ValueError(f"{self.numerator}/{self.denominator} is not in reduced form")
        return self

    @classmethod
    def of(cls, value) -> "ExactValue":
        f = Fraction(value)
        return cls(numerator=f.numerator, denominator=f.denominator)

    @property
    def value(self) -> Fraction:
        return Fraction(self.numerator, self.denominator)

    @model_serializer
    def _as_text(self) -> str:
        return str(self)

    def __float__(self) -> float:
        return self.numerator / self.denominator

    def __str__(self) -> str:
        if self.denominator == 1:
            return str(self.numerator)
        return f"{self.numerator}/{self.denominator}"


class EnumerationSpec(BaseModel):
    """Instance of the random-ranking / random-subset enumeration."""

    model_config = ConfigDict(frozen=True)

    item_count: int = Field(..., ge=1, description="N")
    n_pos: int = Field(..., ge=0, description="N⁺")
    sample_size: int = Field(..., ge=1, description="N̄")
    cutoff_full: int = Field(..., ge=1, description="K")
    cutoff_rand: int = Field(..., ge=1, description="K̄")

    @model_validator(mode="after")
    def _ranges(self):
        if self.n_pos > self.item_count:
            raise ValueError("n_pos exceeds item_count")
        if self.sample_size > self.item_count:
            raise ValueError("sample_size exceeds item_count")
        if self.cutoff_full > self.item_count:
            raise ValueError("cutoff_full exceeds item_count")
        if self.cutoff_rand > self.sample_size:
            raise ValueError("cutoff_rand exceeds sample_size")
        return self

    @property
    def n_neg(self) -> int:
        return self.item_count - self.n_pos

    @property
    def placements(self) -> int:
        return comb(self.item_count, self.n_pos)

    @property
    def subsets(self) -> int:
        return comb(self.item_count, self.sample_size)

    @property
    def cost(self) -> int:
        return self.placements * self.subsets


class Theorem1Result(BaseModel):
    spec: EnumerationSpec
    convention: SkipPolicy
    pairs: int
    skipped_pairs: int
    mean_recall_rand: ExactValue
    mean_recall_full: ExactValue
    difference: ExactValue
    ok: bool


class ConditionalCheck(BaseModel):
    n_observed: int
    subsets: int
    mean_estimate: ExactValue
    ok: bool


class Theorem2Result(BaseModel):
    item_count: int
    n_pos: int
    m_above: int
    sample_size: int
    cutoff: int
    convention: SkipPolicy
    subsets: int
    skipped_subsets: int
    mean_estimate: ExactValue
    target: ExactValue
    difference: ExactValue
    conditional: List[ConditionalCheck]
    ok: bool


class HypergeomCheck(BaseModel):
    item_count: int
    n_pos: int
    cutoff: int
    expected_recall: ExactValue
    target: ExactValue
    pmf_total: ExactValue
    ok: bool


class HypergeomSweepResult(BaseModel):
    max_items: int
    checked: int
    failures: List[HypergeomCheck] = Field(default_factory=list)
    ok: bool


class MonteCarloCheck(BaseModel):
    mode: str
    mean: float
    stderr: float
    trials: int
    skipped: int = Field(..., description="draws without an observed positive")
    target: float
    sigmas: float = 4.0
    ok: bool


# -------- run configuration --------
class RunConfig(BaseModel):
    """Everything that determines an invocation's output; embedded in every output file."""

    subcommand: str
    mode: Optional[str] = None
    inputs: Dict[str, str] = Field(default_factory=dict, description="role -> path")
    scheme: Optional[Scheme] = None
    k: Optional[int] = Field(None, ge=1)
    kbar: Optional[int] = Field(None, ge=1)
    nbar: Optional[int] = Field(None, ge=1)
    seed: Optional[int] = None
    budget: Optional[int] = Field(None, ge=1)
    out: Optional[str] = None
    format: Literal["json", "csv"] = "json"
    skip_policy: SkipPolicy = SkipPolicy.SKIP
    params: Dict[str, Any] = Field(default_factory=dict, description="subcommand-specific parameters")
