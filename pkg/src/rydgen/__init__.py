"""Generative design with Rydberg-atom Markov channels.

Submodules: ``lattice`` (geometry and blockade graphs), ``rydberg``
(Hamiltonian parameters and classical energies), ``quench`` (state
propagation and quantum proposal kernels), ``mcmc`` (Metropolis-Hastings
channels), ``metrics`` (divergences and latent distances), ``autoenc``
(discrete-latent autoencoder), ``designspace`` (designs, objectives and the
Renyi benchmark) and ``cli``.
"""
from ._accel import USE_NUMBA
from .errors import CapacityError, DivergenceError, EmptyArrayError, IndependenceWarning, PropagationError, TrainingError

__version__ = "0.1.0"

__all__ = [
    "USE_NUMBA",
    "CapacityError",
    "DivergenceError",
    "EmptyArrayError",
    "IndependenceWarning",
    "PropagationError",
    "TrainingError",
    "__version__",
]
