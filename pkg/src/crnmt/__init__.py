"""Convolutional-recurrent neural machine translation, from scratch on numpy."""

__version__ = "0.1.0"

from .tensor import Tape, Tensor, backward

__all__ = ["Tape", "Tensor", "backward", "__version__"]
