import math
from enum import Enum
from pathlib import Path
from typing import Dict, List, Literal, Optional

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from sbdp_plus.errors import ConfigurationError
from sbdp_plus.logging import get_logger_loguru
from sbdp_plus.settings import settings

logger = get_logger_loguru(__name__)


class Variant(str, Enum):
    SBDP_PLUS = "sbdp_plus"
    SBDP_PLUS_IDENTITY = "sbdp_plus_identity"
    SBDP_PLUS_SOSC = "sbdp_plus_sosc"
    SBDP_PLUS_PARTIAL_SOSC = "sbdp_plus_partial_sosc"
    SBDP_BASELINE = "sbdp_baseline"
    SBDP_BASELINE_DAMPED = "sbdp_baseline_damped"

    @property
    def uses_mixing(self) -> bool:
        return self in (Variant.SBDP_PLUS, Variant.SBDP_PLUS_SOSC, Variant.SBDP_PLUS_PARTIAL_SOSC)

    @property
    def uses_correction(self) -> bool:
        return self in (Variant.SBDP_PLUS_SOSC, Variant.SBDP_PLUS_PARTIAL_SOSC)

    @property
    def exchanges_corrections(self) -> bool:
        return self is Variant.SBDP_PLUS_SOSC


class EngineConfig(BaseModel):
    """Step sizes, penalties and stopping rule of one distributed run."""

    model_config = ConfigDict(extra="forbid")

    alpha: float = Field(default=0.5, description="Primal-dual step size in (0, 1).")
    beta: float = Field(default=1.0, description="Dual step size, positive.")
    rho: float = Field(default=0.0, description="Local proximal penalty, non-negative.")
    gamma: float = Field(default=0.0, description="SOSC correction penalty, non-negative.")
    epsilon: float = Field(default=1e-8, description="Stop once max_i ‖s_i‖∞ ≤ epsilon.")
    max_iter: int = Field(default=200, ge=0, description="Iteration cap.")
    variant: Variant = Field(default=Variant.SBDP_PLUS)
    local_tol: float = Field(default_factory=lambda: settings.LOCAL_TOL)
    neighbor_affine: bool = Field(default=False, description="Compute sensitivities locally, one exchange per iteration.")
    max_workers: int = Field(default_factory=lambda: settings.MAX_WORKERS, ge=1)
    divergence_threshold: float = Field(default_factory=lambda: settings.DIVERGENCE_THRESHOLD, gt=0)

    @field_validator("alpha")
    @classmethod
    def check_alpha(cls, value: float) -> float:
        if not 0.0 < value < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {value}")
        return value

    @field_validator("beta", "local_tol", "epsilon")
    @classmethod
    def check_positive(cls, value: float, info) -> float:
        if not value > 0:
            raise ValueError(f"{info.field_name} must be positive, got {value}")
        return value

    @field_validator("rho", "gamma")
    @classmethod
    def check_non_negative(cls, value: float, info) -> float:
        if value < 0 or math.isnan(value):
            raise ValueError(f"{info.field_name} must be non-negative, got {value}")
        return value


class AuditEntry(BaseModel):
    agent_id: int
    oracle: str
    max_rel_error: float
    passed: bool


class AuditReport(BaseModel):
    """Finite-difference comparison of every supplied derivative oracle."""

    step: float
    threshold: float
    entries: List[AuditEntry] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(entry.passed for entry in self.entries)

    @property
    def max_error(self) -> float:
        return max((entry.max_rel_error for entry in self.entries), default=0.0)

    def failures(self) -> List[AuditEntry]:
        return [entry for entry in self.entries if not entry.passed]

    def worst_by_oracle(self) -> Dict[str, float]:
        worst: Dict[str, float] = {}
        for entry in self.entries:
            worst[entry.oracle] = max(worst.get(entry.oracle, 0.0), entry.max_rel_error)
        return worst


class AssumptionCheck(BaseModel):
    name: str
    passed: bool
    witness: float = Field(description="Margin that decided the check, e.g. a smallest eigenvalue.")
    detail: str = ""


class AssumptionReport(BaseModel):
    checks: List[AssumptionCheck] = Field(default_factory=list)

    def __getitem__(self, name: str) -> AssumptionCheck:
        for check in self.checks:
            if check.name == name:
                return check
        raise KeyError(name)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def table(self) -> str:
        lines = [f"{'assumption':<28}{'result':<8}{'witness':>14}  detail"]
        for check in self.checks:
            status = "pass" if check.passed else "FAIL"
            lines.append(f"{check.name:<28}{status:<8}{check.witness:>14.6g}  {check.detail}")
        return "\n".join(lines)


class RateCertificate(BaseModel):
    """Constants certifying local linear convergence at a KKT point."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    variant: Variant
    alpha: float
    alpha_bar: float
    beta: float
    rho_min: float
    gamma_bar: Optional[float] = None
    P_bar: np.ndarray
    Q: np.ndarray
    C: float
    C0: float
    C1: float
    spectral_radius: float
    gdd_norm: Optional[float] = None
    gdd_spectral_radius: Optional[float] = None
    assumptions: Optional[AssumptionReport] = None

    def weighted_norm(self, delta: np.ndarray) -> float:
        return float(np.sqrt(max(delta @ self.P_bar @ delta, 0.0)))

    def report(self) -> str:
        """Plain-text certificate with every constant and the assumption table."""
        rows = [
            ("variant", self.variant.value),
            ("alpha", f"{self.alpha:.6g}"),
            ("alpha_bar", f"{self.alpha_bar:.6g}"),
            ("beta", f"{self.beta:.6g}"),
            ("rho_min", f"{self.rho_min:.6g}"),
            ("gamma_bar", "-" if self.gamma_bar is None else f"{self.gamma_bar:.6g}"),
            ("C", f"{self.C:.6g}"),
            ("C0", f"{self.C0:.6g}"),
            ("C1", f"{self.C1:.6g}"),
            ("spectral_radius", f"{self.spectral_radius:.6g}"),
            ("gdd_norm", "-" if self.gdd_norm is None else f"{self.gdd_norm:.6g}"),
            ("gdd_spectral_radius", "-" if self.gdd_spectral_radius is None else f"{self.gdd_spectral_radius:.6g}"),
            ("lambda_min(P_bar)", f"{np.linalg.eigvalsh(self.P_bar)[0]:.6g}"),
            ("lambda_max(P_bar)", f"{np.linalg.eigvalsh(self.P_bar)[-1]:.6g}"),
        ]
        text = "\n".join(f"{key:<22}{value}" for key, value in rows)
        if self.assumptions is not None:
            text += "\n\n" + self.assumptions.table()
        return text + "\n"

    def write(self, path: Path) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.report(), encoding="utf-8")
        logger.info(f"Certificate written to {path}")


class BudgetCheck(BaseModel):
    """Measured against closed-form communication load of one iteration."""

    iteration: int
    expected_floats: int
    measured_floats: int
    expected_steps: int
    measured_steps: int

    @property
    def ok(self) -> bool:
        return self.expected_floats == self.measured_floats and self.expected_steps == self.measured_steps


class Scenario(BaseModel):
    """
    Flat scenario file: problem selection and parameters, engine settings,
    analysis toggles and outputs. ``alpha``/``beta`` left empty are supplied
    by the convergence analysis at the reference solution.
    """

    model_config = ConfigDict(extra="forbid")

    name: str
    problem: str

    # --- problem parameters ---
    a: Optional[float] = None
    with_g2: Optional[bool] = None
    m: Optional[int] = None
    n: Optional[int] = None
    agents: Optional[int] = Field(default=None, description="Number of agents M for split problems.")
    seed: Optional[int] = None
    eps_reg: Optional[float] = None
    box: Optional[float] = None

    # --- engine ---
    variant: Variant = Variant.SBDP_PLUS
    alpha: Optional[float] = None
    alpha_safety: float = Field(default=0.875, description="Fraction of the certified step bound used when alpha is empty.")
    beta: Optional[float] = None
    rho: float = 0.0
    gamma: float = 0.0
    epsilon: float = 1e-8
    max_iter: int = 200
    local_tol: float = Field(default_factory=lambda: settings.LOCAL_TOL)
    neighbor_affine: bool = False
    p0: Optional[List[float]] = None

    # --- analysis ---
    analyze: bool = True
    certify: bool = False
    q_weight: float = Field(default=1.0, description="Lyapunov weight Q = q_weight·I.")

    # --- ADMM baseline ---
    admm: bool = False
    admm_penalty: float = 0.1
    admm_max_iter: int = 3000
    admm_tol: float = 1e-6

    # --- outputs ---
    out_dir: Optional[str] = None
    message_log: bool = False
    wall_time: bool = Field(default=True, description="Fill the wall_ms column; off for byte-identical traces.")

    @model_validator(mode="after")
    def check_finite(self) -> "Scenario":
        for key, value in self.model_dump().items():
            values = value if isinstance(value, list) else [value]
            for item in values:
                if isinstance(item, float) and not math.isfinite(item):
                    raise ValueError(f"{key} must be finite, got {item}")
        return self

    def engine_config(self, alpha: float, beta: float) -> EngineConfig:
        return EngineConfig(
            alpha=alpha,
            beta=beta,
            rho=self.rho,
            gamma=self.gamma,
            epsilon=self.epsilon,
            max_iter=self.max_iter,
            variant=self.variant,
            local_tol=self.local_tol,
            neighbor_affine=self.neighbor_affine,
        )

    @classmethod
    def from_file(cls, path: Path) -> "Scenario":
        """Read a scenario from a flat YAML file.

        Args:
            path: scenario file

        Returns:
            Scenario: validated scenario

        Raises:
            ConfigurationError: YAML syntax error (with line number), non-mapping
                content or invalid / unknown keys
        """
        path = Path(path)
        text = path.read_text(encoding="utf-8")
        try:
            data = yaml.safe_load(text)
            root = yaml.compose(text, Loader=yaml.SafeLoader)
        except yaml.MarkedYAMLError as e:
            mark = e.problem_mark
            line = mark.line + 1 if mark is not None else "?"
            raise ConfigurationError(f"{path}: line {line}: {e.problem}") from e
        if not isinstance(data, dict):
            raise ConfigurationError(f"{path}: expected a flat key/value mapping")
        data.setdefault("name", path.stem)
        try:
            return cls(**data)
        except ValidationError as e:
            lines = _key_lines(root)
            problems = []
            for error in e.errors():
                key = error["loc"][0] if error["loc"] else None
                where = f"line {lines[key]}: " if key in lines else ""
                problems.append(f"{where}{key}: {error['msg']}" if key is not None else error["msg"])
            raise ConfigurationError(f"{path}: " + "; ".join(problems)) from e
        except ValueError as e:
            raise ConfigurationError(f"{path}: {e}") from e

    def problem_params(self) -> Dict[str, object]:
        keys = ("a", "with_g2", "m", "n", "agents", "seed", "eps_reg", "box")
        return {key: getattr(self, key) for key in keys if getattr(self, key) is not None}


def _key_lines(root: Optional[yaml.Node]) -> Dict[str, int]:
    """1-based line of every top-level key of a YAML mapping."""
    if not isinstance(root, yaml.MappingNode):
        return {}
    return {key.value: key.start_mark.line + 1 for key, _ in root.value if isinstance(key, yaml.ScalarNode)}


RunStatus = Literal["converged", "max_iter", "diverged", "solver_error"]
