"""Random walks and spectra of heavy-tailed conductance models on the complete graph and on the PWIT."""
from . import errors, experiments, graph, levy, pwit, spectrum, walk
from ._backend import BACKEND
from .graph import (
    ConductanceMatrix,
    KernelMatrix,
    SymmetrizedMatrix,
    generate_divisible,
    generate_stable_domain,
    kernel,
    symmetrize,
)
from .levy import GammaType, Stable, TemperedStable, parse_spec
from .pwit import PwitEnvironment, SyntheticEnvironment, VertexId
from .spectrum import SpectralSummary, esd, jacobi_eigenvalues, jacobi_eigh
from .walk import WalkTrace, run_walk

__version__ = "0.1.0"
