"""Declarative experiment plans for the augmentation study."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

STRATEGIES = ("real_only", "mixed", "synthetic_only")
VALID_FRACTIONS = tuple(round(0.1 * k, 1) for k in range(1, 9))


@dataclass(frozen=True)
class ExperimentPlan:
    strategy: str
    real_fraction: float
    synthetic_count: int
    seed: int
    test_manifest: tuple[str, ...]  # fixed held-out tile ids
    task: str = "energy"            # energy | height
    predictor_steps: int = 300

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if not any(abs(self.real_fraction - v) < 1e-9 for v in VALID_FRACTIONS):
            raise ValueError(f"real_fraction must be one of {VALID_FRACTIONS}")
        if self.synthetic_count < 0:
            raise ValueError("synthetic_count must be >= 0")
        if self.task not in ("energy", "height"):
            raise ValueError(f"unknown task {self.task!r}")
        if not self.test_manifest:
            raise ValueError("test manifest must not be empty")

    def check_leakage(self, train_ids: list[str]) -> None:
        overlap = set(train_ids) & set(self.test_manifest)
        if overlap:
            raise RuntimeError(f"test-set leakage detected: {sorted(overlap)[:5]}")

    def save(self, path: str | Path) -> None:
        data = asdict(self)
        data["test_manifest"] = list(self.test_manifest)
        Path(path).write_text(json.dumps(data, indent=2))


def load_plan(path: str | Path) -> ExperimentPlan:
    data = json.loads(Path(path).read_text())
    data["test_manifest"] = tuple(data["test_manifest"])
    return ExperimentPlan(**data)
