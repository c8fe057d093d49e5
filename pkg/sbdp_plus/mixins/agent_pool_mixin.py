from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from typing import Dict, Generic, Mapping, TypeVar

from sbdp_plus.logging import get_logger_loguru

logger = get_logger_loguru(__name__)

T = TypeVar("T")
R = TypeVar("R")


@dataclass
class PoolConfig:
    """Configuration for per-agent parallel work."""
    max_workers: int = 1


class AgentPoolMixin(ABC, Generic[T, R]):
    """
    Mixin running one unit of work per agent between two communication barriers.

    Results come back keyed and ordered by agent id whatever the completion
    order. A failure is re-raised after the phase finishes; with several
    failures the one of the smallest agent id wins so runs stay reproducible.
    """

    def __init__(self, phase_name: str, config: PoolConfig = None):
        self.phase_name = phase_name
        self.pool_config = config or PoolConfig()

    @abstractmethod
    def process_agent(self, agent_id: int, item: T) -> R:
        """
        Work of one agent. Must be implemented by subclasses.

        Args:
            agent_id: The agent doing the work
            item: Its input for this phase

        Returns:
            The agent's result
        """

    def map_agents(self, items: Mapping[int, T]) -> Dict[int, R]:
        """
        Process every agent's item, in parallel when more than one worker is configured.

        Args:
            items: agent id -> input

        Returns:
            agent id -> result, ascending id order
        """
        ids = sorted(items)
        if self.pool_config.max_workers <= 1 or len(ids) <= 1:
            return {i: self.process_agent(i, items[i]) for i in ids}

        results: Dict[int, R] = {}
        errors: Dict[int, BaseException] = {}
        with ThreadPoolExecutor(max_workers=self.pool_config.max_workers) as executor:
            futures = {executor.submit(self.process_agent, i, items[i]): i for i in ids}
            for future in as_completed(futures):
                agent_id = futures[future]
                try:
                    results[agent_id] = future.result()
                except Exception as e:
                    logger.error(f"{self.phase_name}: agent {agent_id} failed: {e}")
                    errors[agent_id] = e

        if errors:
            raise errors[min(errors)]
        return {i: results[i] for i in ids}
