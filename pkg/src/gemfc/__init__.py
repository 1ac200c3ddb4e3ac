"""Gradient echo memory and gradient frequency comb modelling toolkit.

Modules
-------
specfun       confluent hypergeometric, Humbert Phi2, Bessel, inverse Laplace
gem_analytic  storage and retrieval solutions for linear-gradient media
gfc_analytic  comb echo series, transfer function, efficiency optimisation
simulator     Maxwell-Bloch lattice solver for GEM and GFC media
metrics       efficiency, fidelity, amplitude preservation, echo partition
cli           experiment runner
"""
from __future__ import annotations

from . import gem_analytic, gfc_analytic, metrics, signals, simulator, specfun
from .gem_analytic import GemParams, RetrievalParams
from .gfc_analytic import GfcParams
from .metrics import evaluate
from .signals import Waveform, gaussian_input
from .simulator import SimGrid, simulate_gem, simulate_gfc

__version__ = "0.1.0"

__all__ = ["specfun", "gem_analytic", "gfc_analytic", "simulator", "metrics", "signals",
           "GemParams", "RetrievalParams", "GfcParams", "Waveform", "gaussian_input", "SimGrid",
           "simulate_gem", "simulate_gfc", "evaluate", "__version__"]
