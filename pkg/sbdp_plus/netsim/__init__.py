from .network import CommLedger, Message, MessageKind, NetworkSim, expected_budget, verify_budget

__all__ = ["CommLedger", "Message", "MessageKind", "NetworkSim", "expected_budget", "verify_budget"]
