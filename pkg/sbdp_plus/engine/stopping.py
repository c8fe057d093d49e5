from typing import Dict, Mapping

import numpy as np

from sbdp_plus.core.problem import ProblemGraph
from sbdp_plus.netsim.network import Message, MessageKind, NetworkSim


def local_flag(s: np.ndarray, epsilon: float) -> bool:
    """‖s_i‖∞ ≤ ε."""
    return bool(np.size(s) == 0 or np.max(np.abs(s)) <= epsilon)


def stopping(all_s: Mapping[int, np.ndarray], epsilon: float) -> bool:
    """True iff every agent's step satisfies ‖s_i‖∞ ≤ ε."""
    return all(local_flag(s, epsilon) for s in all_s.values())


def aggregate_flags(network: NetworkSim, problem: ProblemGraph, flags: Mapping[int, bool]) -> Dict[int, bool]:
    """
    Flood the conjunction of the local flags for ``diameter`` rounds.

    Afterwards every agent holds the global decision. Each round costs one
    bit per directed edge and no floats.
    """
    known = dict(flags)
    for _ in range(problem.diameter()):
        messages = [
            Message(i, j, MessageKind.FLAG, np.array([float(known[i])]))
            for i in problem.ids
            for j in problem.neighbors(i)
        ]
        delivery = network.exchange(messages)
        known = {
            i: known[i] and all(bool(m.payload[0]) for m in delivery.get(i, []))
            for i in problem.ids
        }
    return known
