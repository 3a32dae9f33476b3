"""Controllable co-generation of urban satellite tiles with aligned
building-height and building-energy class maps, plus the evaluation and
data-augmentation machinery around it."""

__version__ = "0.1.0"
