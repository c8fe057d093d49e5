import numpy as np
import pytest

from sbdp_plus.bench.logreg import gen_logreg
from sbdp_plus.bench.problems import nlp61
from sbdp_plus.core.problem import AgentProblem, ProblemGraph
from sbdp_plus.engine.runner import SETUP_ITERATION, run
from sbdp_plus.engine.stopping import aggregate_flags
from sbdp_plus.errors import GraphError
from sbdp_plus.models import EngineConfig, Variant
from sbdp_plus.netsim.network import Message, MessageKind, NetworkSim, expected_budget, verify_budget


class ChainAgent(AgentProblem):
    def __init__(self, agent_id, neighbors):
        super().__init__(agent_id, 1, {j: 1 for j in neighbors})

    def objective(self, z):
        return float(z @ z)

    def objective_gradient(self, z):
        return 2 * z

    def objective_hessian(self, z):
        return 2 * np.eye(z.size)


def chain(length):
    ids = range(1, length + 1)
    return ProblemGraph(
        [ChainAgent(i, [j for j in (i - 1, i + 1) if j in ids]) for i in ids], name=f"chain{length}"
    )


class TestExpectedBudget:
    """Closed-form floats and steps per iteration"""

    @pytest.mark.parametrize("variant, affine, expected", [
        (Variant.SBDP_PLUS, False, (4, 2)),
        (Variant.SBDP_BASELINE, False, (4, 2)),
        (Variant.SBDP_PLUS_PARTIAL_SOSC, False, (4, 2)),
        (Variant.SBDP_PLUS_SOSC, False, (6, 3)),
        (Variant.SBDP_PLUS, True, (4, 1)),
        (Variant.SBDP_PLUS_SOSC, True, (6, 2)),
    ])
    def test_nlp61(self, variant, affine, expected):
        assert expected_budget(nlp61(), variant, affine) == expected

    def test_logreg(self):
        problem = gen_logreg(m=200, n=100, agents=10, seed=0).problem
        assert expected_budget(problem, Variant.SBDP_PLUS_IDENTITY) == (1800, 2)

    def test_chain(self):
        # degrees 1, 2, 2, 1 with one variable each
        assert expected_budget(chain(4), Variant.SBDP_PLUS) == (12, 2)


class TestNetworkSim:
    """Delivery along edges and the message ledger"""

    def setup_method(self):
        self.problem = chain(3)
        self.network = NetworkSim(self.problem)
        self.network.begin_iteration(0)

    def test_delivery_follows_the_edges(self):
        messages = [
            Message(1, 2, MessageKind.DECISION, np.array([1.0])),
            Message(3, 2, MessageKind.DECISION, np.array([3.0])),
            Message(2, 1, MessageKind.SENSITIVITY, np.array([0.5])),
        ]
        delivery = self.network.exchange(messages)
        assert [m.sender for m in delivery[2]] == [1, 3]
        assert [m.kind for m in delivery[1]] == [MessageKind.SENSITIVITY]
        assert 3 not in delivery
        load = self.network.ledger.load(0)
        assert (load.floats, load.floats_received, load.steps) == (3, 3, 1)
        assert load.floats_by_kind[MessageKind.DECISION] == 2

    def test_self_message_is_rejected(self):
        with pytest.raises(GraphError):
            self.network.exchange([Message(2, 2, MessageKind.DECISION, np.array([1.0]))])

    def test_message_off_the_graph_is_rejected(self):
        with pytest.raises(GraphError, match="no edge between 1 and 3"):
            self.network.exchange([Message(1, 3, MessageKind.DECISION, np.array([1.0]))])
        assert self.network.ledger.records == []

    def test_flag_round_is_not_a_step(self):
        self.network.exchange([Message(1, 2, MessageKind.FLAG, np.array([1.0]))])
        load = self.network.ledger.load(0)
        assert (load.steps, load.flag_rounds, load.flag_bits, load.floats) == (0, 1, 1, 0)

    def test_empty_round(self):
        assert self.network.exchange([]) == {}
        assert self.network.ledger.steps(0) == 0

    def test_dump_and_totals(self, tmp_path):
        self.network.exchange([Message(1, 2, MessageKind.DECISION, np.array([1.0, 2.0]))])
        self.network.begin_iteration(1)
        self.network.exchange([Message(2, 3, MessageKind.CORRECTION, np.array([1.0]))])
        path = self.network.ledger.dump(tmp_path / "log" / "messages.tsv")
        lines = path.read_text(encoding="utf-8").splitlines()
        assert lines == [
            "iter\tstep\tfrom\tto\tkind\tfloat_count",
            "0\t1\t1\t2\tDECISION\t2",
            "1\t1\t2\t3\tCORRECTION\t1",
        ]
        assert self.network.ledger.totals_from_log() == {0: 2, 1: 1}


class TestFlagFlooding:
    def test_a_single_false_flag_reaches_every_agent(self):
        problem = chain(4)
        network = NetworkSim(problem)
        network.begin_iteration(0)
        decisions = aggregate_flags(network, problem, {1: True, 2: True, 3: True, 4: False})
        assert decisions == {1: False, 2: False, 3: False, 4: False}
        load = network.ledger.load(0)
        assert load.flag_rounds == problem.diameter() == 3
        assert load.steps == 0 and load.floats == 0

    def test_all_true(self):
        problem = chain(3)
        network = NetworkSim(problem)
        assert all(aggregate_flags(network, problem, {1: True, 2: True, 3: True}).values())


class TestMeasuredBudget:
    """The ledger of a real run matches the closed form at every iteration"""

    @pytest.mark.parametrize("variant, affine", [
        (Variant.SBDP_PLUS, False),
        (Variant.SBDP_PLUS, True),
        (Variant.SBDP_PLUS_SOSC, False),
        (Variant.SBDP_PLUS_PARTIAL_SOSC, False),
        (Variant.SBDP_BASELINE, False),
    ])
    def test_nlp61(self, variant, affine):
        problem = nlp61()
        config = EngineConfig(
            alpha=0.35, beta=2.0, gamma=0.5 if variant.uses_correction else 0.0,
            max_iter=5, variant=variant, neighbor_affine=affine,
        )
        trace = run(problem, config, problem.point_from_vector([1.4, 1.4, 0.0, 0.0]))
        ledger = trace.network.ledger
        assert trace.records
        for record in trace.records:
            assert record.budget.ok, f"iteration {record.q}: {record.budget}"
            assert verify_budget(ledger, problem, variant, affine, record.q)
            assert ledger.totals_from_log()[record.q] == record.comm_floats
        # the setup broadcast of x (with duals in neighbor-affine mode)
        assert ledger.floats(SETUP_ITERATION) == (4 if affine else 2)
