from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Optional, Tuple

from sbdp_plus.bench.logreg import LogRegInstance, gen_logreg
from sbdp_plus.bench.problems import example31, example51, nlp61
from sbdp_plus.core.problem import ProblemGraph
from sbdp_plus.errors import ConfigurationError


@dataclass(frozen=True)
class ParamSpec:
    kind: type
    default: Any
    description: str


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    description: str
    build: Callable[..., Any]
    params: Dict[str, ParamSpec] = field(default_factory=dict)

    def schema(self) -> Dict[str, str]:
        return {key: f"{param.kind.__name__} = {param.default!r}  # {param.description}" for key, param in self.params.items()}


_ENTRIES = (
    CatalogEntry(
        name="example31",
        description="min 0.5x1² + 0.5x2² s.t. x1 + a·x2 = 0, optional second coupling x1 + x2 = 0",
        build=example31,
        params={
            "a": ParamSpec(float, 0.5, "coupling coefficient"),
            "with_g2": ParamSpec(bool, False, "add the constraint x1 + x2 = 0 owned by agent 2"),
        },
    ),
    CatalogEntry(
        name="example51",
        description="min x1·x2 s.t. x1 - x2 = 0 (SOSC holds, Hessian indefinite)",
        build=example51,
    ),
    CatalogEntry(
        name="nlp61",
        description="min 2(x1 - 1)² + (x2 - 2)² s.t. -1 - x1·x2 ≤ 0, -1.5 + x1·x2 ≤ 0",
        build=nlp61,
    ),
    CatalogEntry(
        name="logreg",
        description="regularized logistic regression split across features, box constraints per agent",
        build=gen_logreg,
        params={
            "m": ParamSpec(int, 200, "training samples"),
            "n": ParamSpec(int, 100, "features"),
            "agents": ParamSpec(int, 10, "number of agents M, must divide n"),
            "seed": ParamSpec(int, 0, "seed of the Philox streams"),
            "eps_reg": ParamSpec(float, 0.1, "regularization weight"),
            "box": ParamSpec(float, 0.25, "bound |x_k| ≤ box"),
        },
    ),
)


def catalog() -> Dict[str, CatalogEntry]:
    """Built-in problems by name."""
    return {entry.name: entry for entry in _ENTRIES}


def build_target(name: str, **params) -> Tuple[ProblemGraph, Optional[LogRegInstance]]:
    """
    Build a catalog problem. Returns the problem and, for data-driven
    problems, the generated instance.

    Raises:
        ConfigurationError: unknown problem or parameter
    """
    entries = catalog()
    if name not in entries:
        raise ConfigurationError(f"unknown problem {name!r}; available: {', '.join(sorted(entries))}")
    entry = entries[name]
    unknown = set(params) - set(entry.params)
    if unknown:
        raise ConfigurationError(f"problem {name!r} takes no parameters {sorted(unknown)}")
    arguments = {key: param.kind(params.get(key, param.default)) for key, param in entry.params.items()}
    built = entry.build(**arguments)
    if isinstance(built, LogRegInstance):
        return built.problem, built
    return built, None


def build_problem(name: str, **params) -> ProblemGraph:
    return build_target(name, **params)[0]
