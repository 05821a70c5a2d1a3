import logging
from functools import lru_cache

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s: %(message)s"

_level = logging.INFO


@lru_cache(maxsize=32)
def get_logger(name: str) -> logging.Logger:
    logger = logging.getLogger(f"onlinefw.{name}")
    logger.setLevel(_level)
    logger.propagate = False

    sh = logging.StreamHandler()
    sh.setLevel(logging.DEBUG)
    sh.setFormatter(logging.Formatter(LOG_FORMAT))

    logger.addHandler(sh)
    return logger


def set_log_level(level: str | int) -> None:
    """Apply a level to every logger handed out so far and to later ones."""
    global _level
    if isinstance(level, str):
        resolved = logging.getLevelName(level.upper())
        if not isinstance(resolved, int):
            raise ValueError(f"unknown log level {level!r}")
        level = resolved
    _level = level
    for name in list(logging.Logger.manager.loggerDict):
        if name.startswith("onlinefw."):
            logging.getLogger(name).setLevel(level)
