"""Clustered regression across clients from one round of summary statistics."""
from .admm import SolverConfig, SolverDivergence, Surrogate, solve
from .bench import BenchConfig, local_baseline, oracle_baseline, run_replicates
from .core import ClusterSolution, FusionState, PenaltySpec, SummaryPacket
from .local import LassoConfig, make_packet
from .losses import LocalDataset
from .metrics import adjusted_rand_index, rand_index, rmse, selection_metrics
from .selection import grid_search, mbic
from .simulate import ScenarioSpec, generate, truth

__all__ = [
    "BenchConfig", "ClusterSolution", "FusionState", "LassoConfig", "LocalDataset", "PenaltySpec",
    "ScenarioSpec", "SolverConfig", "SolverDivergence", "SummaryPacket", "Surrogate",
    "adjusted_rand_index", "generate", "grid_search", "local_baseline", "make_packet", "mbic",
    "oracle_baseline", "rand_index", "rmse", "run_replicates", "selection_metrics", "solve", "truth",
]
