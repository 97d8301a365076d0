import sys
from typing import Optional

from loguru import logger

LOG_FORMAT = "{time:HH:mm:ss} | {level: <7} | {name}:{line} | {message}"


def configure_logging(level: str = "INFO", log_file: Optional[str] = None) -> None:
    """
    Route loguru output to stderr and optionally to a file.

    Args:
        level (str): Minimum level for emitted records
        log_file (Optional[str]): Extra file sink, appended to if it exists
    """
    logger.remove()
    logger.add(sys.stderr, level=level.upper(), format=LOG_FORMAT)
    if log_file:
        logger.add(log_file, level=level.upper(), format=LOG_FORMAT)
