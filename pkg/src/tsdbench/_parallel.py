import os

THREADS_ENV = "ROBUSTBENCH_THREADS"


def resolve_threads(n_jobs=None):
    """Worker count: explicit ``n_jobs``, else ``$ROBUSTBENCH_THREADS`` (0 = auto), else 1."""
    if n_jobs is None:
        raw = os.environ.get(THREADS_ENV, "").strip()
        if not raw:
            return 1
        try:
            n_jobs = int(raw)
        except ValueError:
            raise ValueError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if n_jobs < 0:
        raise ValueError(f"thread count must be >= 0, got {n_jobs}")
    if n_jobs == 0:
        return os.cpu_count() or 1
    return n_jobs
