from .problem import AgentProblem, AgentSlice, OracleValues, PrimalDualPoint, ProblemGraph
from .kkt import central_kkt_residual, central_lagrangian, kkt_parts, local_lagrangians
from .audit import finite_difference_audit

__all__ = [
    "AgentProblem",
    "AgentSlice",
    "OracleValues",
    "PrimalDualPoint",
    "ProblemGraph",
    "central_kkt_residual",
    "central_lagrangian",
    "kkt_parts",
    "local_lagrangians",
    "finite_difference_audit",
]
