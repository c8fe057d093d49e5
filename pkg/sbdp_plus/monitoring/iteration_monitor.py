import time
import threading
from dataclasses import dataclass
from typing import Optional

from sbdp_plus.logging import get_logger_loguru
from sbdp_plus.settings import settings

logger = get_logger_loguru(__name__, "iteration_monitor.log")


@dataclass
class IterationStats:
    """Running totals of one distributed run."""
    start_time: float
    iterations: int = 0
    comm_floats: int = 0
    local_solver_iterations: int = 0
    last_step_norm: float = float("inf")
    last_activity_time: float = 0


class IterationMonitor:
    """Heartbeat logging every ``heartbeat_every`` iterations of a run."""

    def __init__(self, run_name: str, heartbeat_every: Optional[int] = None):
        """
        Args:
            run_name: Name of the run being monitored
            heartbeat_every: Iterations between heartbeat lines, settings default if None
        """
        self.run_name = run_name
        self.heartbeat_every = heartbeat_every or settings.HEARTBEAT_EVERY
        self.stats = IterationStats(start_time=time.time())
        self._lock = threading.Lock()

    def start_monitoring(self) -> None:
        self.stats.start_time = time.time()
        self.stats.last_activity_time = self.stats.start_time
        logger.info(f"Started monitoring for run: {self.run_name}")

    def stop_monitoring(self) -> None:
        total_time = time.time() - self.stats.start_time
        logger.info(f"Stopped monitoring for run: {self.run_name}. "
                    f"Total time: {total_time:.2f}s, "
                    f"Iterations: {self.stats.iterations}, "
                    f"Floats sent: {self.stats.comm_floats}, "
                    f"Local solver iterations: {self.stats.local_solver_iterations}")

    def update_activity(self, floats: int = 0, solver_iterations: int = 0, step_norm: Optional[float] = None) -> None:
        """Record one completed iteration and log a heartbeat when due."""
        with self._lock:
            self.stats.iterations += 1
            self.stats.comm_floats += floats
            self.stats.local_solver_iterations += solver_iterations
            if step_norm is not None:
                self.stats.last_step_norm = step_norm
            self.stats.last_activity_time = time.time()
            due = self.stats.iterations % self.heartbeat_every == 0
        if due:
            self._heartbeat()

    def get_stats(self) -> IterationStats:
        with self._lock:
            return IterationStats(**vars(self.stats))

    def _heartbeat(self) -> None:
        stats = self.get_stats()
        total_time = time.time() - stats.start_time
        logger.info(f"Heartbeat [{self.run_name}]: "
                    f"Time: {total_time:.1f}s, "
                    f"Iteration: {stats.iterations}, "
                    f"max ||s||: {stats.last_step_norm:.3e}, "
                    f"Floats: {stats.comm_floats}")


class IterationContext:
    """Context manager for run monitoring."""

    def __init__(self, run_name: str, heartbeat_every: Optional[int] = None):
        self.monitor = IterationMonitor(run_name, heartbeat_every)

    def __enter__(self) -> IterationMonitor:
        self.monitor.start_monitoring()
        return self.monitor

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.monitor.stop_monitoring()
