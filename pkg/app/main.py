"""
Main entry point for the PINN training command line.
"""

import sys

import torch
from loguru import logger

from app.config import LOG_DIR, LOG_LEVEL, NUM_THREADS
from app import cli


def setup_logging():
    """Console sink at LOG_LEVEL plus a rotating file sink."""
    logger.remove()
    logger.add(sys.stderr, level=LOG_LEVEL)
    logger.add(
        LOG_DIR / "pinncw.log",
        rotation="1 day",
        retention="7 days",
        level="INFO",
        format="{time:YYYY-MM-DD HH:mm:ss} | {level} | {message}",
    )


def main(argv=None) -> int:
    setup_logging()
    if NUM_THREADS > 0:
        torch.set_num_threads(NUM_THREADS)
        logger.info(f"Using {NUM_THREADS} torch threads")
    return cli.main(argv)


if __name__ == "__main__":
    sys.exit(main())
