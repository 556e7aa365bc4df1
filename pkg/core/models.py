"""
Data models for EBCO.

Serializable records only; array-carrying containers live next to the code
that builds them (dataset, network, attribution).
"""

from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .config import Config

# A feature value: category string or numeric grid point
Value = Union[str, float]
Direction = Literal["minimize", "maximize"]


class FeatureDef(BaseModel):
    """One input feature and its declared value domain."""
    name: str = Field(..., min_length=1)
    kind: Literal["categorical", "numeric"]
    categories: Optional[List[str]] = Field(None, description="Declared categories, in order")
    bounds: Optional[Tuple[float, float]] = Field(None, description="(min, max) of a numeric feature")

    @model_validator(mode="after")
    def _check_domain(self):
        if self.kind == "categorical":
            if not self.categories or len(self.categories) < 2:
                raise ValueError(f"Categorical feature '{self.name}' needs at least 2 categories")
            if len(set(self.categories)) != len(self.categories):
                raise ValueError(f"Categorical feature '{self.name}' has duplicate categories")
        else:
            if self.bounds is None:
                raise ValueError(f"Numeric feature '{self.name}' needs bounds")
            low, high = self.bounds
            if not low < high:
                raise ValueError(f"Numeric feature '{self.name}' needs min < max, got {self.bounds}")
        return self

    def contains(self, value: Value) -> bool:
        """Check whether a value lies in the declared domain."""
        if self.kind == "categorical":
            return isinstance(value, str) and value in self.categories
        if isinstance(value, str) or isinstance(value, bool):
            return False
        low, high = self.bounds
        return low <= float(value) <= high


class FeatureSchema(BaseModel):
    """Ordered features plus label names."""
    features: List[FeatureDef] = Field(..., min_length=1)
    labels: List[str] = Field(..., min_length=1)

    @model_validator(mode="after")
    def _check_names(self):
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise ValueError("Feature names must be unique")
        if any(not label for label in self.labels):
            raise ValueError("Label names must be nonempty")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("Label names must be unique")
        clash = set(names) & set(self.labels)
        if clash:
            raise ValueError(f"Label names clash with feature names: {sorted(clash)}")
        return self

    @property
    def feature_names(self) -> List[str]:
        return [f.name for f in self.features]

    def feature(self, name: str) -> Optional[FeatureDef]:
        for f in self.features:
            if f.name == name:
                return f
        return None


class EncodingSlice(BaseModel):
    """Encoded columns [start, stop) of one feature."""
    feature: str
    kind: Literal["categorical", "numeric"]
    start: int = Field(..., ge=0)
    stop: int = Field(..., ge=1)
    categories: Optional[List[str]] = None
    mean: float = 0.0
    std: float = 1.0


class ValueDomain(BaseModel):
    """Candidate values of one feature."""
    feature: str
    candidates: List[Value]


class ScoredValue(BaseModel):
    value: Value
    score: float = Field(..., description="Relevance aggregated over labels (max)")
    per_label: List[float]


class PrunedDomain(BaseModel):
    """Candidate values split into kept and dropped by relevance."""
    feature: str
    kept: List[ScoredValue]
    dropped: List[ScoredValue] = Field(default_factory=list)
    guard_applied: bool = False

    @property
    def kept_values(self) -> List[Value]:
        return [s.value for s in self.kept]


class SyntheticSpec(BaseModel):
    """Shape of a synthetic dataset with a planted low-risk assignment."""
    n_features: int = Field(5, ge=1, description="Categorical features")
    n_values: int = Field(3, ge=2, description="Categories per feature")
    n_numeric: int = Field(0, ge=0, description="Extra numeric noise features")
    n_labels: int = Field(3, ge=1)
    n_samples: int = Field(500, ge=1)
    planted_size: int = Field(2, ge=0)
    planted: Optional[Dict[str, str]] = Field(None, description="Explicit planted bindings")
    low_probability: float = Field(0.05, ge=0.0, le=0.1)
    high_probability: float = Field(0.85, ge=0.7, le=1.0)
    noise: float = Field(0.05, ge=0.0, le=0.1)


class PlantedTruth(BaseModel):
    spec_version: str = Config.SPEC_VERSION
    assignment: Dict[str, str]
    match_probabilities: List[float]
    other_probabilities: List[float]
    seed: int


class TrainConfig(BaseModel):
    hidden_size: int = Field(Config.HIDDEN_SIZE, ge=1)
    epochs: int = Field(Config.EPOCHS, ge=1)
    learning_rate: float = Field(Config.LEARNING_RATE, gt=0.0)
    seed: int = 0
    holdout_fraction: float = Field(0.0, ge=0.0, lt=0.5)


class TrainMeta(BaseModel):
    seed: int
    epochs: int
    learning_rate: float
    hidden_size: int
    initial_loss: float
    final_loss: float
    holdout_loss: Optional[float] = None
    holdout_accuracy: Optional[List[float]] = None


class Assignment(BaseModel):
    """Partial feature -> value map, in binding order."""
    bindings: Dict[str, Value] = Field(default_factory=dict)

    def extend(self, feature: str, value: Value) -> "Assignment":
        """New assignment with one more binding."""
        if feature in self.bindings:
            raise ValueError(f"Feature '{feature}' is already bound")
        return Assignment(bindings={**self.bindings, feature: value})

    def contains(self, other: Dict[str, Value]) -> bool:
        """Check whether every binding of ``other`` is present."""
        return all(f in self.bindings and self.bindings[f] == v for f, v in other.items())


class SensitivityScore(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    upsilon: List[float]
    lam: List[float] = Field(..., alias="lambda")
    assignment: Assignment


class Candidate(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    assignment: Assignment
    gamma: List[float]
    big_gamma: float = Field(..., ge=0.0)
    lam: List[float] = Field(..., alias="lambda")
    upsilon: List[float]
    objective: float = Field(..., description="Mean direction-adjusted lambda (lower is better)")


class TraceIteration(BaseModel):
    index: int
    feature: str
    features_assigned: int
    beam: List[Candidate]
    best_lambda: List[float]
    best_big_gamma: float
    best_objective: float
    evaluations: int


class SearchTrace(BaseModel):
    method: Literal["ebco", "dp"]
    iterations: List[TraceIteration] = Field(default_factory=list)

    @property
    def total_evaluations(self) -> int:
        return self.iterations[-1].evaluations if self.iterations else 0


class SearchConfig(BaseModel):
    delta: float = Field(Config.DELTA, ge=0.0)
    omega: float = Field(Config.OMEGA, ge=0.0, le=1.0)
    rho: float = Field(Config.RHO, ge=0.0)
    zeta: int = Field(Config.ZETA, ge=1)
    direction: Union[Direction, List[Direction]] = "minimize"
    feature_order: Literal["relevance", "schema"] = "relevance"
    gamma_mode: Literal["as_written", "passthrough"] = "as_written"
    dp_capacity: Optional[int] = Field(None, ge=1)
    oracle_limit: int = Field(Config.ORACLE_LIMIT, ge=1)
    n_jobs: int = Config.N_JOBS

    def directions(self, n_labels: int) -> List[Direction]:
        """Per-label directions."""
        if isinstance(self.direction, str):
            return [self.direction] * n_labels
        if len(self.direction) != n_labels:
            raise ValueError(f"direction lists {len(self.direction)} entries for {n_labels} labels")
        return list(self.direction)


class RunConfig(BaseModel):
    """One JSON file describing a full experiment."""
    schema_path: Optional[Path] = None
    dataset_path: Optional[Path] = None
    synthetic: Optional[SyntheticSpec] = None
    train: TrainConfig = Field(default_factory=TrainConfig)
    search: SearchConfig = Field(default_factory=SearchConfig)
    reference_size: int = Field(Config.REFERENCE_SIZE, ge=1)
    attribution_method: Literal["exact", "montecarlo", "deepshap"] = "deepshap"
    attribution_scale: Literal["probability", "logit"] = "probability"
    permutations: int = Field(Config.PERMUTATIONS, ge=1)
    grid_size: int = Field(Config.GRID_SIZE, ge=2)
    output_dir: Path = Config.OUTPUT_DIR
    seed: int
    rounds: int = Field(Config.COMPARE_ROUNDS, ge=1)
    model_path: Optional[Path] = None

    @model_validator(mode="after")
    def _check_source(self):
        if (self.dataset_path is None) == (self.synthetic is None):
            raise ValueError("Give exactly one of dataset_path or synthetic")
        if self.dataset_path is not None and self.schema_path is None:
            raise ValueError("dataset_path requires schema_path")
        return self

    @field_validator("seed")
    @classmethod
    def _check_seed(cls, v: int) -> int:
        if v < 0:
            raise ValueError("seed must be non-negative")
        return v


class ReportMetadata(BaseModel):
    """Run metadata; excluded from reproducibility comparisons."""
    command: str
    created_at: str = Field(default_factory=lambda: datetime.now(timezone.utc).isoformat())


class ComparisonRow(BaseModel):
    seed: int
    target_objective: float
    ebco_evaluations: Optional[int]
    dp_evaluations: Optional[int]
    ebco_total_evaluations: int
    dp_total_evaluations: int
    ebco_best_objective: float
    dp_best_objective: float
    oracle_gap: Optional[float] = None
    ebco_not_worse: bool


class Report(BaseModel):
    spec_version: str = Config.SPEC_VERSION
    metadata: ReportMetadata
    config: dict
    train_meta: Optional[TrainMeta] = None
    relevance: Dict[str, float] = Field(default_factory=dict)
    pruning: List[PrunedDomain] = Field(default_factory=list)
    best: Optional[Candidate] = None
    oracle: Optional[Candidate] = None
    planted: Optional[PlantedTruth] = None
    recovered_planted: Optional[bool] = None
    comparison: List[ComparisonRow] = Field(default_factory=list)
    files: Dict[str, str] = Field(default_factory=dict)
    notes: List[str] = Field(default_factory=list)
