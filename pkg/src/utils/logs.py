import logging
import os


def setup_logging(level: str = None):
    """Configure root logging once; level falls back to LOG_LEVEL, then INFO."""
    level_name = (level or os.getenv("LOG_LEVEL") or "INFO").upper()
    logging.basicConfig(
        level=getattr(logging, level_name, logging.INFO),
        format="%(asctime)s [%(levelname)s]: %(message)s"
    )
