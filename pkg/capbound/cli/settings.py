import logging
import os
from typing import Optional

from dotenv import load_dotenv

logger = logging.getLogger(__name__)

load_dotenv()
LOG_LEVEL = os.environ.get("CAPBOUND_LOG_LEVEL", "INFO")
LOG_EVERY = int(os.environ.get("CAPBOUND_LOG_EVERY", "50"))
TRIALS = int(os.environ.get("CAPBOUND_TRIALS", "100000"))
NETS = int(os.environ.get("CAPBOUND_NETS", "200"))
BALL_SAMPLES = int(os.environ.get("CAPBOUND_BALL_SAMPLES", "256"))
DEFAULT_SEED = 0


def resolve_seed(seed: Optional[int]) -> int:
    """CAPBOUND_SEED wins over the command line, which wins over the default seed."""
    override = os.environ.get("CAPBOUND_SEED")
    if override is not None and override.strip():
        try:
            return int(override)
        except ValueError:
            raise ValueError(f"CAPBOUND_SEED must be an integer, got '{override}'")
    return DEFAULT_SEED if seed is None else seed
