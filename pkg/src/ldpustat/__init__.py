"""Inhomogeneous U/V-statistics on weighted graphs and step kernels, the
cut-metric toolbox around them, exponential-tilt machinery, mean-field
variational solvers for the limiting log-partition and rate functions, and
finite-n Gibbs samplers with exact desk-scale oracles."""

from .functionals import BlockMeasure, TiltProfile
from .gibbs import GibbsModel, complete_graph_model
from .kernel import StepKernel
from .tilt import FiniteBaseMeasure
from .ustat import Motif, PhiKernel, monochrome_phi, product_phi

__all__ = [
    "BlockMeasure",
    "TiltProfile",
    "GibbsModel",
    "complete_graph_model",
    "StepKernel",
    "FiniteBaseMeasure",
    "Motif",
    "PhiKernel",
    "monochrome_phi",
    "product_phi",
]

__version__ = "0.1.0"
