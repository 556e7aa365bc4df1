"""
Tabular multi-label datasets: loading, validation, encoding, synthesis.
"""

import dataclasses
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .config import Config
from .errors import (
    EmptyDataset,
    InvalidSpec,
    MissingColumn,
    TypeMismatch,
    UnknownCategory,
    UnknownFeature,
    ValueOutOfDomain,
)
from .models import (
    Assignment,
    EncodingSlice,
    FeatureDef,
    FeatureSchema,
    PlantedTruth,
    SyntheticSpec,
    Value,
    ValueDomain,
)

logger = logging.getLogger(__name__)

LABEL_PREFIX = "label:"


@dataclass(frozen=True, eq=False)
class Dataset:
    """Raw table, binary targets and the dense encoding the network sees."""
    schema: FeatureSchema
    raw: pd.DataFrame
    targets: np.ndarray
    encoded: np.ndarray
    encoding_map: Tuple[EncodingSlice, ...]
    # source cell text of a loaded CSV, None once values are synthetic or assigned
    cells: Optional[pd.DataFrame] = None

    def __post_init__(self):
        m = len(self.raw)
        if self.targets.shape != (m, len(self.schema.labels)):
            raise ValueError(f"targets shape {self.targets.shape} does not match {m} rows")
        if self.encoded.shape[0] != m:
            raise ValueError(f"encoded matrix has {self.encoded.shape[0]} rows, expected {m}")

    @property
    def m(self) -> int:
        return len(self.raw)

    @property
    def n(self) -> int:
        return len(self.schema.features)

    @property
    def p(self) -> int:
        return self.encoded.shape[1]

    @property
    def feature_names(self) -> List[str]:
        return self.schema.feature_names

    @property
    def label_names(self) -> List[str]:
        return list(self.schema.labels)

    def encoding_for(self, feature: str) -> EncodingSlice:
        """Encoding slice of a feature."""
        for s in self.encoding_map:
            if s.feature == feature:
                return s
        raise UnknownFeature(feature)

    def subset(self, rows: Sequence[int]) -> "Dataset":
        """Rows of this dataset, keeping the original encoding."""
        rows = np.asarray(rows, dtype=int)
        return dataclasses.replace(
            self,
            raw=self.raw.iloc[rows].reset_index(drop=True),
            targets=self.targets[rows],
            encoded=self.encoded[rows],
            cells=None if self.cells is None else self.cells.iloc[rows].reset_index(drop=True),
        )


def fit_encoding(raw: pd.DataFrame, schema: FeatureSchema) -> Tuple[EncodingSlice, ...]:
    """One-hot for categorical features, population z-score for numeric ones."""
    slices = []
    start = 0
    for feature in schema.features:
        if feature.kind == "categorical":
            width = len(feature.categories)
            slices.append(EncodingSlice(
                feature=feature.name, kind="categorical", start=start, stop=start + width,
                categories=list(feature.categories),
            ))
        else:
            width = 1
            column = raw[feature.name].to_numpy(dtype=float)
            mean = float(column.mean())
            # constant columns encode to zero
            std = 0.0 if column.max() == column.min() else float(column.std(ddof=0))
            slices.append(EncodingSlice(
                feature=feature.name, kind="numeric", start=start, stop=start + 1,
                mean=mean, std=std,
            ))
        start += width
    return tuple(slices)


def _encode_column(values: pd.Series, encoding: EncodingSlice) -> np.ndarray:
    """Encode one raw column under its slice of the encoding map."""
    if encoding.kind == "categorical":
        dummies = pd.get_dummies(pd.Categorical(values, categories=encoding.categories))
        return dummies.to_numpy(dtype=float)
    column = values.to_numpy(dtype=float)
    if encoding.std == 0.0:
        return np.zeros((len(column), 1))
    return ((column - encoding.mean) / encoding.std).reshape(-1, 1)


def encode_frame(raw: pd.DataFrame, encoding_map: Sequence[EncodingSlice]) -> np.ndarray:
    """Dense encoded matrix of a raw table under a fixed encoding map."""
    width = encoding_map[-1].stop if encoding_map else 0
    encoded = np.zeros((len(raw), width))
    for encoding in encoding_map:
        encoded[:, encoding.start:encoding.stop] = _encode_column(raw[encoding.feature], encoding)
    return encoded


def build_dataset(
    schema: FeatureSchema, raw: pd.DataFrame, targets: np.ndarray, cells: Optional[pd.DataFrame] = None
) -> Dataset:
    """Encode a validated raw table into a Dataset."""
    if len(raw) == 0:
        raise EmptyDataset("raw table")
    raw = raw[schema.feature_names].reset_index(drop=True)
    encoding_map = fit_encoding(raw, schema)
    return Dataset(
        schema=schema,
        raw=raw,
        targets=np.asarray(targets, dtype=np.int8),
        encoded=encode_frame(raw, encoding_map),
        encoding_map=encoding_map,
        cells=cells,
    )


def _parse_feature(cells: pd.Series, feature: FeatureDef) -> pd.Series:
    """Validate and coerce one feature column of string cells."""
    if feature.kind == "categorical":
        allowed = set(feature.categories)
        for row, cell in enumerate(cells, start=1):
            if cell not in allowed:
                raise UnknownCategory(row, feature.name, cell)
        return cells.astype(object)

    values = pd.to_numeric(cells.str.strip(), errors="coerce")
    bad = values.isna()
    if bad.any():
        row = int(np.flatnonzero(bad.to_numpy())[0])
        raise TypeMismatch(row + 1, feature.name, cells.iloc[row])
    low, high = feature.bounds
    outside = (values < low) | (values > high)
    if outside.any():
        row = int(np.flatnonzero(outside.to_numpy())[0])
        raise ValueOutOfDomain(feature.name, float(values.iloc[row]))
    return values.astype(float)


def load_csv(path: Union[str, Path], schema: FeatureSchema) -> Dataset:
    """
    Load and validate a dataset CSV.

    The header lists the schema features followed by one ``label:<name>``
    column per label. Row numbers in errors count data rows from 1.
    """
    frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")

    label_columns = [LABEL_PREFIX + label for label in schema.labels]
    for column in schema.feature_names + label_columns:
        if column not in frame.columns:
            raise MissingColumn(column)

    if len(frame) == 0:
        raise EmptyDataset(str(path))

    raw = pd.DataFrame({
        feature.name: _parse_feature(frame[feature.name], feature)
        for feature in schema.features
    })

    targets = np.zeros((len(frame), len(schema.labels)), dtype=np.int8)
    for j, column in enumerate(label_columns):
        cells = frame[column].str.strip()
        for row, cell in enumerate(cells, start=1):
            if cell not in ("0", "1"):
                raise TypeMismatch(row, column, cell)
        targets[:, j] = (cells == "1").to_numpy()

    dataset = build_dataset(schema, raw, targets, cells=frame)
    logger.info(f"Loaded {dataset.m} rows x {dataset.n} features ({dataset.p} encoded columns) from {path}")
    return dataset


def write_csv(dataset: Dataset, path: Union[str, Path]) -> Path:
    """
    Write the raw table and targets in the load_csv layout.

    A dataset read by load_csv is written back from its source cells, so
    the table comes out cell for cell as it went in.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if dataset.cells is not None:
        frame = dataset.cells
    else:
        frame = dataset.raw.copy()
        for j, label in enumerate(dataset.label_names):
            frame[LABEL_PREFIX + label] = dataset.targets[:, j].astype(int)
    frame.to_csv(path, index=False, lineterminator="\n")
    return path


def synthetic_schema(spec: SyntheticSpec) -> FeatureSchema:
    """Schema of the synthetic generator: f0.. categorical, x0.. numeric."""
    features = [
        FeatureDef(name=f"f{i}", kind="categorical", categories=[f"v{j}" for j in range(spec.n_values)])
        for i in range(spec.n_features)
    ]
    features += [
        FeatureDef(name=f"x{i}", kind="numeric", bounds=(0.0, 10.0))
        for i in range(spec.n_numeric)
    ]
    return FeatureSchema(features=features, labels=[f"y{j}" for j in range(spec.n_labels)])


def generate_synthetic(spec: SyntheticSpec, seed: int) -> Tuple[Dataset, PlantedTruth]:
    """
    Draw a dataset whose labels are unlikely exactly where the planted
    assignment holds.

    Samples matching every planted binding get label probability
    ``low_probability`` (plus per-label noise, capped at 0.1), all others
    ``high_probability`` (floored at 0.7).
    """
    schema = synthetic_schema(spec)
    planted_size = len(spec.planted) if spec.planted is not None else spec.planted_size

    if planted_size > spec.n_features:
        raise InvalidSpec(f"Planted assignment binds {planted_size} features but only {spec.n_features} exist")
    if spec.n_samples < 10:
        raise InvalidSpec(f"Need at least 10 samples, got {spec.n_samples}")

    rng = np.random.default_rng(seed)

    if spec.planted is not None:
        planted = {}
        for name, value in spec.planted.items():
            feature = schema.feature(name)
            if feature is None or feature.kind != "categorical":
                raise InvalidSpec(f"Planted feature '{name}' is not a categorical synthetic feature")
            if value not in feature.categories:
                raise InvalidSpec(f"Planted value '{value}' is not a category of '{name}'")
            planted[name] = value
    else:
        chosen = np.sort(rng.choice(spec.n_features, size=planted_size, replace=False))
        values = rng.integers(0, spec.n_values, size=planted_size)
        planted = {f"f{i}": f"v{v}" for i, v in zip(chosen, values)}

    codes = rng.integers(0, spec.n_values, size=(spec.n_samples, spec.n_features))
    numeric = np.round(rng.uniform(0.0, 10.0, size=(spec.n_samples, spec.n_numeric)), 2)

    match = np.ones(spec.n_samples, dtype=bool)
    for name, value in planted.items():
        match &= codes[:, int(name[1:])] == int(value[1:])

    low = np.clip(spec.low_probability + rng.uniform(-spec.noise, spec.noise, spec.n_labels), 0.0, 0.1)
    high = np.clip(spec.high_probability + rng.uniform(-spec.noise, spec.noise, spec.n_labels), 0.7, 1.0)
    probabilities = np.where(match[:, None], low[None, :], high[None, :])
    targets = (rng.random((spec.n_samples, spec.n_labels)) < probabilities).astype(np.int8)

    columns = {f"f{i}": pd.Series([f"v{c}" for c in codes[:, i]], dtype=object) for i in range(spec.n_features)}
    columns.update({f"x{i}": numeric[:, i] for i in range(spec.n_numeric)})
    raw = pd.DataFrame(columns)

    truth = PlantedTruth(
        assignment=planted,
        match_probabilities=low.tolist(),
        other_probabilities=high.tolist(),
        seed=seed,
    )
    dataset = build_dataset(schema, raw, targets)
    logger.info(f"Generated {dataset.m} synthetic rows, planted {planted} ({int(match.sum())} matches)")
    return dataset, truth


def candidate_values(dataset: Dataset, grid_size: int = Config.GRID_SIZE) -> List[ValueDomain]:
    """
    Candidate values per feature.

    Categorical features keep declaration order; numeric features use
    ``grid_size`` linearly interpolated quantiles of the observed column,
    with duplicates collapsed.
    """
    if grid_size < 2:
        raise ValueError("grid_size must be at least 2")

    domains = []
    for feature in dataset.schema.features:
        if feature.kind == "categorical":
            candidates: List[Value] = list(feature.categories)
        else:
            column = dataset.raw[feature.name].to_numpy(dtype=float)
            grid = np.quantile(column, np.linspace(0.0, 1.0, grid_size), method="linear")
            candidates = [float(v) for v in np.unique(grid)]
        domains.append(ValueDomain(feature=feature.name, candidates=candidates))
    return domains


def validate_assignment(schema: FeatureSchema, assignment: Assignment) -> None:
    """Raise if an assignment names unknown features or out-of-domain values."""
    for name, value in assignment.bindings.items():
        feature = schema.feature(name)
        if feature is None:
            raise UnknownFeature(name)
        if not feature.contains(value):
            raise ValueOutOfDomain(name, value)


def apply_assignment(dataset: Dataset, assignment: Assignment) -> Dataset:
    """
    Copy of the dataset with the assigned features fixed on every row.

    Re-encoding uses the original encoding map, so means, deviations and
    category order do not move.
    """
    validate_assignment(dataset.schema, assignment)
    if not assignment.bindings:
        return dataset

    raw = dataset.raw.copy()
    encoded = dataset.encoded.copy()
    for name, value in assignment.bindings.items():
        feature = dataset.schema.feature(name)
        value = value if feature.kind == "categorical" else float(value)
        raw[name] = pd.Series([value] * dataset.m, dtype=object if feature.kind == "categorical" else float)
        encoding = dataset.encoding_for(name)
        row = _encode_column(pd.Series([value]), encoding)
        encoded[:, encoding.start:encoding.stop] = row
    return dataclasses.replace(dataset, raw=raw, encoded=encoded, cells=None)
