"""Round-based neighbor-to-neighbor message passing with exact float accounting."""

from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np

from sbdp_plus.core.problem import ProblemGraph
from sbdp_plus.errors import GraphError
from sbdp_plus.logging import get_logger_loguru
from sbdp_plus.models import BudgetCheck, Variant

logger = get_logger_loguru(__name__, "netsim.log")


class MessageKind(str, Enum):
    SENSITIVITY = "SENSITIVITY"
    DECISION = "DECISION"
    CORRECTION = "CORRECTION"
    FLAG = "FLAG"


@dataclass(frozen=True)
class Message:
    sender: int
    receiver: int
    kind: MessageKind
    payload: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def float_count(self) -> int:
        """Flags are bits and never count as floats."""
        return 0 if self.kind is MessageKind.FLAG else int(np.size(self.payload))


@dataclass(frozen=True)
class MessageRecord:
    iteration: int
    step: int
    sender: int
    receiver: int
    kind: MessageKind
    float_count: int

    def line(self) -> str:
        return f"{self.iteration}\t{self.step}\t{self.sender}\t{self.receiver}\t{self.kind.value}\t{self.float_count}"


@dataclass
class IterationLoad:
    floats_by_kind: Dict[MessageKind, int] = field(default_factory=lambda: defaultdict(int))
    steps: int = 0
    flag_bits: int = 0
    flag_rounds: int = 0
    floats_received: int = 0

    @property
    def floats(self) -> int:
        return sum(self.floats_by_kind.values())


class CommLedger:
    """Per-iteration communication totals, reproducible from the message log."""

    def __init__(self):
        self.records: List[MessageRecord] = []
        self.iterations: Dict[int, IterationLoad] = defaultdict(IterationLoad)

    def load(self, iteration: int) -> IterationLoad:
        return self.iterations[iteration]

    def floats(self, iteration: int) -> int:
        return self.iterations[iteration].floats

    def steps(self, iteration: int) -> int:
        return self.iterations[iteration].steps

    def kind_count(self, kind: MessageKind) -> int:
        return sum(1 for record in self.records if record.kind is kind)

    def totals_from_log(self) -> Dict[int, int]:
        totals: Dict[int, int] = defaultdict(int)
        for record in self.records:
            totals[record.iteration] += record.float_count
        return dict(totals)

    def dump(self, path: Path) -> Path:
        """Write the message log: iter, step, from, to, kind, float_count, tab-separated."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write("iter\tstep\tfrom\tto\tkind\tfloat_count\n")
            for record in self.records:
                f.write(record.line() + "\n")
        logger.info(f"Message log with {len(self.records)} messages written to {path}")
        return path


class NetworkSim:
    """
    Synchronous in-process network over the coupling graph of a problem.

    Every call to ``exchange`` is one round with a barrier: each recipient gets
    exactly the messages addressed to it. Rounds made only of flags are
    counted as flag rounds, not as communication steps.
    """

    def __init__(self, problem: ProblemGraph):
        self.problem = problem
        self.ledger = CommLedger()
        self.iteration = 0
        self._step = 0

    def begin_iteration(self, iteration: int) -> None:
        self.iteration = iteration
        self._step = 0

    def exchange(self, round_messages: Sequence[Message]) -> Dict[int, List[Message]]:
        """
        Deliver one synchronous round.

        Args:
            round_messages: messages of this round

        Returns:
            receiver id -> delivered messages, in send order

        Raises:
            GraphError: a message does not travel along an edge
        """
        for message in round_messages:
            if message.sender == message.receiver or not self.problem.is_edge(message.sender, message.receiver):
                raise GraphError(f"no edge between {message.sender} and {message.receiver}")
        if not round_messages:
            return {}

        load = self.ledger.load(self.iteration)
        flags_only = all(message.kind is MessageKind.FLAG for message in round_messages)
        if flags_only:
            load.flag_rounds += 1
        else:
            self._step += 1
            load.steps += 1

        delivery: Dict[int, List[Message]] = defaultdict(list)
        sent = 0
        for message in round_messages:
            self.ledger.records.append(
                MessageRecord(self.iteration, self._step, message.sender, message.receiver, message.kind, message.float_count)
            )
            if message.kind is MessageKind.FLAG:
                load.flag_bits += 1
            else:
                load.floats_by_kind[message.kind] += message.float_count
            sent += message.float_count
            delivery[message.receiver].append(message)

        received = sum(m.float_count for messages in delivery.values() for m in messages)
        load.floats_received += received
        assert received == sent, "float conservation violated"
        return dict(delivery)


def expected_budget(problem: ProblemGraph, variant: Variant, neighbor_affine: bool = False) -> Tuple[int, int]:
    """Closed-form (floats, steps) of one iteration for a variant and mode."""
    degree = {i: len(problem.neighbors(i)) for i in problem.ids}
    base = sum(problem.agent(i).n * degree[i] for i in problem.ids)
    if neighbor_affine:
        floats = sum(problem.agent(i).p_dim * degree[i] for i in problem.ids)
        steps = 1
    else:
        floats, steps = 2 * base, 2
    if variant.exchanges_corrections:
        floats, steps = floats + base, steps + 1
    return floats, steps


def budget_check(
    ledger: CommLedger, problem: ProblemGraph, variant: Variant, neighbor_affine: bool, iteration: int
) -> BudgetCheck:
    floats, steps = expected_budget(problem, variant, neighbor_affine)
    return BudgetCheck(
        iteration=iteration,
        expected_floats=floats,
        measured_floats=ledger.floats(iteration),
        expected_steps=steps,
        measured_steps=ledger.steps(iteration),
    )


def verify_budget(
    ledger: CommLedger, problem: ProblemGraph, variant: Variant, neighbor_affine: bool = False, iteration: int = 0
) -> bool:
    """True iff floats and communication steps of a completed iteration match the closed form."""
    check = budget_check(ledger, problem, variant, neighbor_affine, iteration)
    if not check.ok:
        logger.warning(
            f"Budget mismatch at iteration {iteration}: floats {check.measured_floats}/{check.expected_floats}, "
            f"steps {check.measured_steps}/{check.expected_steps}"
        )
    return check.ok
