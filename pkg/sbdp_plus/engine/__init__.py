from .runner import IterationRecord, IterationTrace, SbdpEngine, run

__all__ = ["IterationRecord", "IterationTrace", "SbdpEngine", "run"]
