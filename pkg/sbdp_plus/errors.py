"""Exception hierarchy shared by all layers of the toolkit."""


class SbdpError(Exception):
    """Base class of every error raised by the toolkit."""


class DimensionError(SbdpError, ValueError):
    """An oracle or a point does not have the declared dimensions."""


class GraphError(SbdpError, ValueError):
    """Coupling-graph violation: asymmetric edges, non-neighbor access, disconnected graph."""


class ConfigurationError(SbdpError, ValueError):
    """Invalid engine configuration, scenario or catalog request."""


class LocalSolverError(SbdpError):
    """A local interior-point solve did not reach its tolerance.

    Attributes:
        best: best iterate found (a ``LocalSolution``), may be None
        agent_id: agent whose subproblem failed, None for central solves
        iteration: engine iteration at which the failure happened
    """

    def __init__(self, message: str, best=None, agent_id=None, iteration=None):
        super().__init__(message)
        self.best = best
        self.agent_id = agent_id
        self.iteration = iteration

    def at_iteration(self, iteration: int, agent_id=None) -> "LocalSolverError":
        self.iteration = iteration
        if agent_id is not None:
            self.agent_id = agent_id
        self.args = (f"iteration {iteration}, agent {self.agent_id}: {self.args[0]}",)
        return self


class LocalInfeasibleError(LocalSolverError):
    """Primal infeasibility of a local subproblem stalled above tolerance."""


class AnalysisError(SbdpError):
    """A convergence-analysis computation is undefined at the given inputs."""


class DivergenceError(SbdpError):
    """An iterative baseline left any reasonable neighborhood of the solution."""
