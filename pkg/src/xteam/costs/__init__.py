from .estimate import (CostEstimate, JinfReport, estimate_Jinf, estimate_JN, estimate_randomized_cost,
                       mckean_vlasov_cost, per_replication_costs)
from .stage import StageCost, evaluate_stage_cost
from .wasserstein import wasserstein2

__all__ = [
    "CostEstimate", "JinfReport", "StageCost", "estimate_Jinf", "estimate_JN", "estimate_randomized_cost",
    "evaluate_stage_cost", "mckean_vlasov_cost", "per_replication_costs", "wasserstein2",
]
