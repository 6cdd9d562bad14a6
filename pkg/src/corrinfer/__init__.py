"""Replica and TAP analysis of perceptron learning with correlated patterns."""

from .spectrum import (SpectrumModel, empirical_spectrum, marchenko_pastur, make_spectrum,
                       random_orthogonal, single_atom, spectrum_of)
from .ffunc import SaddleDomainError, evaluate_F, evaluate_G
from .models import ChannelModel, PriorModel

__version__ = "0.1.0"

__all__ = ["SpectrumModel", "empirical_spectrum", "marchenko_pastur", "make_spectrum",
           "random_orthogonal", "single_atom", "spectrum_of", "SaddleDomainError", "evaluate_F",
           "evaluate_G", "ChannelModel", "PriorModel"]
