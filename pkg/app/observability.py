from __future__ import annotations

import json
import logging
import time
from contextlib import contextmanager
from typing import Any, Dict, Iterator, Optional

from .settings import get_settings


def record_metric(event: str, payload: Dict[str, Any]) -> None:
    settings = get_settings()
    if not settings.metrics_enabled:
        return
    entry = {"ts": time.time(), "event": event, **payload}
    path = settings.metrics_path
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("a", encoding="utf-8") as f:
        f.write(json.dumps(entry, default=str) + "\n")


@contextmanager
def timed(event: str, extra: Optional[Dict[str, Any]] = None) -> Iterator[Dict[str, Any]]:
    """Record ``event`` with its wall time; callers may add fields to the yielded dict."""
    payload: Dict[str, Any] = dict(extra or {})
    start = time.perf_counter()
    try:
        yield payload
    finally:
        dur_ms = (time.perf_counter() - start) * 1000.0
        record_metric(event, {"latency_ms": dur_ms, **payload})


def configure_logging(verbosity: int = 0) -> None:
    level = logging.getLevelName(get_settings().log_level.upper())
    if verbosity == 1:
        level = logging.INFO
    elif verbosity >= 2:
        level = logging.DEBUG
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
