import os


def max_workers() -> int:
    """Worker cap from ``LOEWNER_LAB_THREADS`` (default: CPU count, at most 8)."""
    raw = os.environ.get("LOEWNER_LAB_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return min(8, os.cpu_count() or 1)
