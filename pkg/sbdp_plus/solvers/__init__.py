from .central import solve_central
from .local_nlp import LocalNlp, LocalSolution, assemble_local_nlp, solve_all_local, solve_local_nlp

__all__ = [
    "solve_central",
    "LocalNlp",
    "LocalSolution",
    "assemble_local_nlp",
    "solve_all_local",
    "solve_local_nlp",
]
