"""
Logging setup
Configures the loguru sinks shared by the CLI and the API
"""

import sys

from loguru import logger

from utils.config import settings


def configure_logging(level: str = None, log_file: str = None) -> None:
    """
    Replace loguru's default sink with the configured ones

    Args:
        level: Minimum level for stderr (defaults to settings.LOG_LEVEL)
        log_file: Optional file sink path (defaults to settings.LOG_FILE)
    """
    level = (level or settings.LOG_LEVEL).upper()
    log_file = settings.LOG_FILE if log_file is None else log_file

    logger.remove()
    logger.add(
        sys.stderr,
        level=level,
        format="<green>{time:HH:mm:ss}</green> | <level>{level: <8}</level> | {name}:{line} - {message}",
    )
    if log_file:
        logger.add(log_file, level=level, rotation="10 MB", retention=5, enqueue=False)
