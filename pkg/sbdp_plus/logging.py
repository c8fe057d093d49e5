from pathlib import Path
from typing import Dict, Optional

from loguru import logger

# Configured once per (name, file) pair
_logger_cache = {}
_file_sinks: Dict[Optional[str], int] = {}
_console_sink: Optional[int] = None
_log_dir = Path("log")
_level = "INFO"

CONSOLE_FORMAT = (
    "<green>{time:YYYY-MM-DD HH:mm:ss}</green> | <level>{level: <8}</level> | "
    "<cyan>{name}</cyan>:<cyan>{function}</cyan>:<cyan>{line}</cyan>{extra[agent_tag]} - "
    "<level>{message}</level>"
)
FILE_FORMAT = "{time:YYYY-MM-DD HH:mm:ss} | {level: <8} | {name}:{function}:{line}{extra[agent_tag]} - {message}"


def _patch_agent_tag(record):
    agent = record["extra"].get("agent")
    record["extra"]["agent_tag"] = f" [agent {agent}]" if agent is not None else ""


def _add_console_sink() -> None:
    global _console_sink
    _console_sink = logger.add(
        sink=lambda msg: print(msg, end=""),
        format=CONSOLE_FORMAT,
        level=_level,
    )


def _add_file_sink(name_file: Optional[str]) -> None:
    _log_dir.mkdir(parents=True, exist_ok=True)
    log_file = _log_dir / (name_file if name_file else "sbdp.log")
    _file_sinks[name_file] = logger.add(
        sink=str(log_file),
        format=FILE_FORMAT,
        level="DEBUG",
        rotation="10 MB",
        retention="7 days",
        compression="zip",
        filter=(lambda record, target=name_file: record["extra"].get("log_file") == target)
        if name_file
        else None,
    )


def get_logger_loguru(name: str = None, name_file: str = None):
    """
    Get a loguru logger with console output and a rotating file sink.

    The console sink is installed once; every distinct ``name_file`` gets
    its own file sink under the log directory set by ``configure_logging``.

    Args:
        name: Module name (usually __name__)
        name_file: Log file name, defaults to ``sbdp.log``

    Returns:
        loguru logger instance
    """
    if name is None:
        name = "sbdp_plus"

    key = (name, name_file)
    if key in _logger_cache:
        return _logger_cache[key]

    if _console_sink is None:
        # Drop loguru's default stderr handler to avoid duplicates
        logger.remove()
        logger.configure(patcher=_patch_agent_tag)
        _add_console_sink()

    if name_file not in _file_sinks:
        _add_file_sink(name_file)

    bound = logger.bind(log_file=name_file) if name_file else logger
    _logger_cache[key] = bound
    return bound


def configure_logging(log_dir: str, level: str) -> None:
    """Move every file sink to ``log_dir`` and set the console level. Called once settings are loaded."""
    global _log_dir, _level
    _log_dir, _level = Path(log_dir), level.upper()
    if _console_sink is not None:
        logger.remove(_console_sink)
        _add_console_sink()
    for name_file, sink_id in list(_file_sinks.items()):
        logger.remove(sink_id)
        _add_file_sink(name_file)


def get_agent_logger(base_logger, agent_id: int):
    """Bind an agent id so per-agent lines are tagged in console and file output."""
    return base_logger.bind(agent=agent_id)
