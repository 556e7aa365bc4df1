"""
Error types raised by the EBCO pipeline.

Every error carries a module-qualified ``code`` so the CLI can report
where a failure originated without parsing messages.
"""


class EbcoError(Exception):
    """Base class for all pipeline errors."""

    module = "core"

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message

    @property
    def code(self) -> str:
        return f"{self.module}.{type(self).__name__}"

    def __str__(self) -> str:
        return f"[{self.code}] {self.message}"


class ConfigError(EbcoError):
    module = "cli"


# dataset

class MissingColumn(EbcoError):
    module = "dataset"

    def __init__(self, column: str):
        super().__init__(f"Missing column '{column}' in CSV header")
        self.column = column


class TypeMismatch(EbcoError):
    module = "dataset"

    def __init__(self, row: int, col: str, cell: str):
        super().__init__(f"Row {row}, column '{col}': cannot parse '{cell}' as a number")
        self.row = row
        self.col = col


class UnknownCategory(EbcoError):
    module = "dataset"

    def __init__(self, row: int, col: str, cell: str):
        super().__init__(f"Row {row}, column '{col}': category '{cell}' is not declared")
        self.row = row
        self.col = col


class EmptyDataset(EbcoError):
    module = "dataset"

    def __init__(self, source: str):
        super().__init__(f"No data rows in {source}")


class InvalidSpec(EbcoError):
    module = "dataset"


class UnknownFeature(EbcoError):
    module = "dataset"

    def __init__(self, feature: str):
        super().__init__(f"Unknown feature '{feature}'")
        self.feature = feature


class ValueOutOfDomain(EbcoError):
    module = "dataset"

    def __init__(self, feature: str, value):
        super().__init__(f"Value {value!r} lies outside the domain of feature '{feature}'")
        self.feature = feature
        self.value = value


# model

class NonFiniteLoss(EbcoError):
    module = "model"

    def __init__(self, epoch: int):
        super().__init__(f"Training loss became non-finite at epoch {epoch}")
        self.epoch = epoch


class DimensionMismatch(EbcoError):
    module = "model"

    def __init__(self, expected: int, actual: int, what: str = "row width"):
        super().__init__(f"Expected {what} {expected}, got {actual}")


# attribution

class TooManyFeatures(EbcoError):
    module = "attribution"

    def __init__(self, n_features: int, limit: int):
        super().__init__(
            f"Exact Shapley values need {n_features} <= {limit} features; use montecarlo or deepshap"
        )


# pruning

class UnknownValue(EbcoError):
    module = "pruning"

    def __init__(self, feature: str, value):
        super().__init__(f"Value {value!r} is not a candidate of feature '{feature}'")


# sensitivity

class DegenerateVariance(EbcoError):
    module = "sensitivity"

    def __init__(self, label: str):
        super().__init__(f"Predictions for label '{label}' have (near) zero variance")
        self.label = label


# search

class EmptyDomain(EbcoError):
    module = "search"

    def __init__(self, feature: str):
        super().__init__(f"Feature '{feature}' has no candidate values left")


class CapacityExceeded(EbcoError):
    module = "search"

    def __init__(self, stage: int, size: int, capacity: int):
        super().__init__(f"DP table at stage {stage} holds {size} entries, capacity is {capacity}")
        self.stage = stage


class SpaceTooLarge(EbcoError):
    module = "search"

    def __init__(self, size: int, limit: int):
        super().__init__(f"Search space of {size} assignments exceeds the oracle limit {limit}")
