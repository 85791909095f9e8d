import logging
import os

LOG_FORMAT = '%(asctime)s - %(levelname)s - %(message)s'
LOG_ENV_VAR = "DDKF_LOG"


def resolve_level(level=None):
    """Turn a level name, number or None (read ``DDKF_LOG``) into a logging level."""
    if level is None:
        level = os.getenv(LOG_ENV_VAR, "INFO")
    if isinstance(level, int):
        return level
    text = str(level).strip()
    if text.isdigit():
        return int(text)
    resolved = logging.getLevelName(text.upper())
    if isinstance(resolved, int):
        return resolved
    logging.getLogger(__name__).warning(f"Unknown log level {level!r}, using INFO")
    return logging.INFO


def setup_logging(level=None):
    level = resolve_level(level)
    logging.basicConfig(level=level, format=LOG_FORMAT)
    logging.getLogger("ddkf").setLevel(level)
    return level
