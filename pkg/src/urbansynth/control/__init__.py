from .branch import ControlBranch
from .training import train_control

__all__ = ["ControlBranch", "train_control"]
