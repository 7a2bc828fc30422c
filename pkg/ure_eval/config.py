import os

from dotenv import load_dotenv

# Load .env before any getter reads the environment
load_dotenv()

DEFAULT_BUDGET = 10**7
DEFAULT_WORKERS = 1


def enumeration_budget() -> int:
    """Placement x subset pairs an oracle may enumerate (env URE_BUDGET)."""
    raw = os.getenv("URE_BUDGET")
    if not raw:
        return DEFAULT_BUDGET
    try:
        value = int(raw.replace("_", ""))
    except ValueError:
        raise ValueError(f"URE_BUDGET must be an integer, got {raw!r}")
    if value < 1:
        raise ValueError("URE_BUDGET must be positive")
    return value


def log_level() -> str:
    return os.getenv("URE_LOG_LEVEL", "INFO").upper()


def default_workers() -> int:
    try:
        return max(1, int(os.getenv("URE_WORKERS", DEFAULT_WORKERS)))
    except ValueError:
        return DEFAULT_WORKERS
