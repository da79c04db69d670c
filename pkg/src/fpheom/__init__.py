"""Free-pole hierarchical equations of motion for a two-level system.

Pipeline: sample a noise spectrum, fit it with an adaptive barycentric
rational function, turn the lower-half-plane poles into an exponential
decomposition of the bath correlation function, then propagate a dense
depth-truncated hierarchy of auxiliary density operators.
"""

__version__ = "0.1.0"

from .hierarchy import (ADOVector, SystemSpec, TruncationSpec, build_generator, build_space,
                        factorized_state, propagate)
from .polefit import (ExponentialDecomposition, FitConfig, PoleSet, eval_correlation,
                      fit_barycentric, fit_decomposition, poles_and_residues)
from .spectrum import (BandgapParams, BandgapSpectrum, LorentzianSpectrum, SubohmicParams,
                       SubohmicSpectrum, Temperature, build_domain, sample)

__all__ = [
    "ADOVector", "SystemSpec", "TruncationSpec", "build_generator", "build_space",
    "factorized_state", "propagate", "ExponentialDecomposition", "FitConfig", "PoleSet",
    "eval_correlation", "fit_barycentric", "fit_decomposition", "poles_and_residues",
    "BandgapParams", "BandgapSpectrum", "LorentzianSpectrum", "SubohmicParams",
    "SubohmicSpectrum", "Temperature", "build_domain", "sample", "__version__",
]
