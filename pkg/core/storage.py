"""
Artifact storage management for EBCO runs.
"""

import json
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import pandas as pd

from .attribution import AttributionTensor
from .config import Config
from .models import FeatureSchema, PlantedTruth, PrunedDomain, Report, SearchTrace
from .network import MlpModel, model_from_dict, model_to_dict


def read_json(path: Union[str, Path]) -> Any:
    """Read a JSON document."""
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def load_schema(path: Union[str, Path]) -> FeatureSchema:
    """Load a feature schema JSON document; the version field is optional."""
    document = read_json(path)
    document.pop("spec_version", None)
    return FeatureSchema(**document)


def load_model(path: Union[str, Path]) -> MlpModel:
    """Load a model JSON document written by save_model."""
    return model_from_dict(read_json(path))


def _assignment_text(bindings: Dict[str, Any]) -> str:
    return ";".join(f"{f}={v}" for f, v in bindings.items())


def trace_frame(trace: SearchTrace, labels: Sequence[str]) -> pd.DataFrame:
    """Flat trace: one row per beam member per iteration."""
    rows = []
    for iteration in trace.iterations:
        for rank, candidate in enumerate(iteration.beam):
            row = {
                "iteration": iteration.index,
                "feature": iteration.feature,
                "rank": rank,
                "values": _assignment_text(candidate.assignment.bindings),
            }
            for name, vector in (("lambda", candidate.lam), ("upsilon", candidate.upsilon), ("gamma", candidate.gamma)):
                row.update({f"{name}:{label}": v for label, v in zip(labels, vector)})
            row["big_gamma"] = candidate.big_gamma
            row["objective"] = candidate.objective
            row["cumulative_evaluations"] = iteration.evaluations
            rows.append(row)
    return pd.DataFrame(rows)


def plot_frame(trace: SearchTrace, labels: Sequence[str]) -> pd.DataFrame:
    """Best per-label Lambda against iteration, features assigned and evaluations."""
    rows = []
    for iteration in trace.iterations:
        row = {
            "iteration": iteration.index,
            "features_assigned": iteration.features_assigned,
            "cumulative_evaluations": iteration.evaluations,
        }
        row.update({f"lambda:{label}": v for label, v in zip(labels, iteration.best_lambda)})
        row["best_objective"] = iteration.best_objective
        rows.append(row)
    return pd.DataFrame(rows)


class ArtifactStorage:
    """File-based storage for one run's outputs."""

    def __init__(self, output_dir: Optional[Union[str, Path]] = None):
        self.output_dir = Path(output_dir if output_dir is not None else Config.OUTPUT_DIR)

    def _ensure_directories(self):
        """Ensure the output directory exists."""
        self.output_dir.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        return self.output_dir / name

    def write_json(self, name: str, data: Any) -> Path:
        """Write a JSON artifact, creating the output directory."""
        self._ensure_directories()
        file_path = self.path(name)
        with open(file_path, "w", encoding="utf-8") as f:
            json.dump(data, f, indent=2, default=str)
            f.write("\n")
        return file_path

    def write_frame(self, name: str, frame: pd.DataFrame) -> Path:
        """Write a CSV artifact, creating the output directory."""
        self._ensure_directories()
        file_path = self.path(name)
        frame.to_csv(file_path, index=False, lineterminator="\n")
        return file_path

    def save_model(self, model: MlpModel, name: str = "model.json") -> Path:
        return self.write_json(name, model_to_dict(model))

    def save_schema(self, schema: FeatureSchema, name: str = "schema.json") -> Path:
        return self.write_json(name, {"spec_version": Config.SPEC_VERSION, **schema.model_dump(mode="json")})

    def save_planted(self, truth: PlantedTruth, name: str = "planted.json") -> Path:
        return self.write_json(name, truth.model_dump(mode="json"))

    def save_report(self, report: Report, name: str = "report.json") -> Path:
        """Write the run report."""
        return self.write_json(name, report.model_dump(mode="json", by_alias=True))

    def save_trace(self, trace: SearchTrace, labels: Sequence[str], stem: str) -> List[Path]:
        """Trace as flat CSV plus full JSON."""
        return [
            self.write_frame(f"{stem}.csv", trace_frame(trace, labels)),
            self.write_json(f"{stem}.json", {
                "spec_version": Config.SPEC_VERSION,
                **trace.model_dump(mode="json", by_alias=True),
            }),
        ]

    def save_attributions(self, tensor: AttributionTensor, stem: str = "attributions") -> List[Path]:
        return [
            self.write_frame(f"{stem}.csv", tensor.to_frame()),
            self.write_json(f"{stem}.json", tensor.to_dict()),
        ]

    def save_pruning_audit(self, pruned: Sequence[PrunedDomain], delta: float, name: str = "pruning_audit.json") -> Path:
        return self.write_json(name, {
            "spec_version": Config.SPEC_VERSION,
            "delta": delta,
            "aggregation": "max over labels",
            "domains": [d.model_dump(mode="json") for d in pruned],
        })
