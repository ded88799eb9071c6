"""Multi-fidelity cost-aware Bayesian optimization with latent-map Gaussian processes."""

from .domain import MultiSourceDataset, MixedPoint, ProblemSpace, assemble, read_table
from .lmgp import LMGP, FidelityManifold, FitConfig, FitError, extract_manifold, fit
from .acquisition import alpha_ei, alpha_kg, alpha_lf, alpha_mfca, alpha_pi, propose
from .engine import BOConfig, RunHistory, run, run_mfca, run_single_fidelity, step0_exclude
from .benchmarks import REGISTRY, get_problem, initial_dataset, rrmse

__version__ = "0.1.0"
