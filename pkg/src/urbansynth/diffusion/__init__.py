from .schedule import NoiseSchedule
from .types import ConditioningBundle, LatentGrid
from .vae import ImageVAE
from .textcond import PromptTokenizer, TextEncoder
from .unet import DenoiserUNet
from .checkpoint import load_checkpoint, save_checkpoint, state_digest
from .training import ldm_loss, train_ldm, train_vae
from .sampling import sample

__all__ = [
    "NoiseSchedule",
    "ConditioningBundle",
    "LatentGrid",
    "ImageVAE",
    "PromptTokenizer",
    "TextEncoder",
    "DenoiserUNet",
    "load_checkpoint",
    "save_checkpoint",
    "state_digest",
    "ldm_loss",
    "train_ldm",
    "train_vae",
    "sample",
]
