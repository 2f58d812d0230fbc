"""Shared registry of acceptance verdicts, printed at the end of the session."""

import time

SESSION_START = time.perf_counter()
LINES: list[tuple[str, bool, str]] = []


def record(criterion: str, ok: bool, detail: str) -> bool:
    LINES.append((criterion, bool(ok), detail))
    return bool(ok)
