from .generate import SyntheticTile, generate_annotated, generate_batch
from .plan import ExperimentPlan, load_plan
from .predictor import ReferencePredictor, train_predictor
from .runner import ArmResult, run_arm, run_sweep, write_sweep_outputs

__all__ = [
    "SyntheticTile",
    "generate_annotated",
    "generate_batch",
    "ExperimentPlan",
    "load_plan",
    "ReferencePredictor",
    "train_predictor",
    "ArmResult",
    "run_arm",
    "run_sweep",
    "write_sweep_outputs",
]
