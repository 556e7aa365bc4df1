"""Shared fixtures: small schemas, datasets and hand-sized networks."""

import numpy as np
import pandas as pd
import pytest

from core.dataset import build_dataset
from core.models import FeatureDef, FeatureSchema
from core.network import MlpModel


@pytest.fixture
def mixed_schema():
    return FeatureSchema(
        features=[
            FeatureDef(name="color", kind="categorical", categories=["red", "green", "blue"]),
            FeatureDef(name="size", kind="numeric", bounds=(0.0, 10.0)),
            FeatureDef(name="shape", kind="categorical", categories=["a", "b"]),
        ],
        labels=["y0", "y1"],
    )


@pytest.fixture
def mixed_dataset(mixed_schema):
    rng = np.random.default_rng(42)
    m = 40
    raw = pd.DataFrame({
        "color": pd.Series(rng.choice(["red", "green", "blue"], size=m), dtype=object),
        "size": np.round(rng.uniform(0.0, 10.0, size=m), 2),
        "shape": pd.Series(rng.choice(["a", "b"], size=m), dtype=object),
    })
    targets = rng.integers(0, 2, size=(m, 2))
    return build_dataset(mixed_schema, raw, targets)


@pytest.fixture
def categorical_dataset_factory():
    """Random all-categorical datasets with given domain sizes."""

    def make(sizes, m=30, n_labels=2, seed=0):
        rng = np.random.default_rng(seed)
        schema = FeatureSchema(
            features=[
                FeatureDef(name=f"f{i}", kind="categorical", categories=[f"v{j}" for j in range(k)])
                for i, k in enumerate(sizes)
            ],
            labels=[f"y{l}" for l in range(n_labels)],
        )
        raw = pd.DataFrame({
            f"f{i}": pd.Series([f"v{c}" for c in rng.integers(0, k, size=m)], dtype=object)
            for i, k in enumerate(sizes)
        })
        targets = rng.integers(0, 2, size=(m, n_labels))
        return build_dataset(schema, raw, targets)

    return make


@pytest.fixture
def model_factory():
    """Random relu networks, optionally tied to a dataset's encoding."""

    def make(p=None, hidden=8, n_labels=2, seed=0, output="sigmoid", dataset=None, scale=1.0):
        rng = np.random.default_rng(seed)
        if dataset is not None:
            p, n_labels = dataset.p, len(dataset.label_names)
        return MlpModel(
            w1=rng.normal(0.0, scale, size=(p, hidden)),
            b1=rng.normal(0.0, 0.5, size=hidden),
            w2=rng.normal(0.0, scale, size=(hidden, n_labels)),
            b2=rng.normal(0.0, 0.5, size=n_labels),
            output_activation=output,
            encoding_map=dataset.encoding_map if dataset is not None else (),
            label_names=tuple(dataset.label_names) if dataset is not None else (),
        )

    return make


@pytest.fixture
def linear_model_factory():
    """
    Networks that are affine on inputs in [-10, 10]: every hidden unit has a
    large positive bias so relu never clips, and the output is the identity.
    """

    def make(p, hidden=4, n_labels=2, seed=0):
        rng = np.random.default_rng(seed)
        w1 = rng.uniform(-1.0, 1.0, size=(p, hidden))
        return MlpModel(
            w1=w1,
            b1=np.full(hidden, 10.0 * p + 10.0),
            w2=rng.uniform(-1.0, 1.0, size=(hidden, n_labels)),
            b2=rng.uniform(-1.0, 1.0, size=n_labels),
            output_activation="identity",
        )

    return make
