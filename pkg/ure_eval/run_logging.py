import logging
import time
import uuid
from contextlib import contextmanager
from typing import Iterator, Optional

from ure_eval import config

LOG_FORMAT = "[%(levelname)s] %(name)s: %(message)s"

logger = logging.getLogger("ure_eval.run")


def configure_logging(level: Optional[str] = None) -> None:
    """Configure root logging once; safe to call repeatedly."""
    logging.basicConfig(level=level or config.log_level(), format=LOG_FORMAT, force=True)


def _fields(fields: dict) -> str:
    return " ".join(f"{k}={v}" for k, v in fields.items() if v is not None)


@contextmanager
def log_run(subcommand: str, **fields) -> Iterator[str]:
    """Span around one CLI invocation.

    Logs START, then END with duration_ms, or ERROR with the exception repr
    before re-raising. Yields the run id, which only ever reaches the log.
    """
    start = time.perf_counter()
    run_id = str(uuid.uuid4())
    extra = _fields(fields)

    logger.info(f"[START] run_id={run_id} subcommand={subcommand} {extra}".rstrip())
    try:
        yield run_id
    except Exception as e:
        duration_ms = int((time.perf_counter() - start) * 1000)
        logger.error(f"[ERROR] run_id={run_id} subcommand={subcommand} duration_ms={duration_ms} err={e!r}")
        raise

    duration_ms = int((time.perf_counter() - start) * 1000)
    logger.info(f"[END]   run_id={run_id} subcommand={subcommand} duration_ms={duration_ms}")
