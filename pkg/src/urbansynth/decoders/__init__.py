from .features import FeatureBundle, FeatureExtractor, fuse_features
from .heads import DecoderHead
from .losses import fit_class_weights, head_loss, seg_loss
from .training import train_head

__all__ = [
    "FeatureBundle",
    "FeatureExtractor",
    "fuse_features",
    "DecoderHead",
    "fit_class_weights",
    "head_loss",
    "seg_loss",
    "train_head",
]
