"""Exact MILP branch-and-bound laboratory.

Pure-Python/numpy stack: instance generators, a bounded-variable revised
simplex with warm starts, a depth-first branch-and-bound engine, a latent
tree model over bipartite MILP graphs, Gumbel-search planning, a
sequential training loop, and a benchmarking harness with CSV/JSON/PNG
reporting.
"""

from .autodiff import Tensor, gradients, parameter
from .bnb import BnbEngine, EpisodeRecord, SolveResult, solve
from .generators import FAMILIES, GeneratorConfig, generate
from .hlgauss import HlGaussCodec
from .metrics import MetricsReport, aggregate, read_runs, write_runs
from .milp import MilpInstance, read_instance, write_instance
from .model import BnbModel, ModelConfig, load_model, save_model
from .observation import BipartiteObservation, extract_observation
from .planner import GumbelConfig, SearchResult, search
from .policies import make_policy
from .simplex import LpSolution, SimplexSolver
from .training import ReplayBuffer, TrainConfig, TrainState, train

__version__ = "0.1.0"

__all__ = [
    "BipartiteObservation", "BnbEngine", "BnbModel", "EpisodeRecord",
    "FAMILIES", "GeneratorConfig", "GumbelConfig", "HlGaussCodec",
    "LpSolution", "MetricsReport", "MilpInstance", "ModelConfig",
    "ReplayBuffer", "SearchResult", "SimplexSolver", "SolveResult", "Tensor",
    "TrainConfig", "TrainState", "aggregate", "extract_observation",
    "generate", "gradients", "load_model", "make_policy", "parameter",
    "read_instance", "read_runs", "save_model", "search", "solve", "train",
    "write_instance", "write_runs", "__version__",
]
