from .agent_pool_mixin import AgentPoolMixin, PoolConfig

__all__ = ["AgentPoolMixin", "PoolConfig"]
