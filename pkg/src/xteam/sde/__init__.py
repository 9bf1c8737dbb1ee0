from .diagnostics import AssumptionReport, MartingaleResidual, TestFunction, check_assumptions, martingale_residual
from .dynamics import InitLaw, Mode, TeamDynamics, apply_matrix
from .grid import TimeGrid
from .noise import Substream, WienerBatch
from .registry import make_dynamics
from .simulate import (AgentPath, LawPath, PathChunk, SimulationBatch, mckean_vlasov_law, simulate_coupled,
                       simulate_decoupled, simulate_mckean_vlasov, simulate_reference)

__all__ = [
    "AgentPath", "AssumptionReport", "InitLaw", "LawPath", "MartingaleResidual", "Mode", "PathChunk",
    "SimulationBatch", "Substream", "TeamDynamics", "TestFunction", "TimeGrid", "WienerBatch",
    "apply_matrix", "check_assumptions", "make_dynamics", "martingale_residual", "mckean_vlasov_law",
    "simulate_coupled", "simulate_decoupled", "simulate_mckean_vlasov", "simulate_reference",
]
