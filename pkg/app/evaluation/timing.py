import time
from typing import Any, Callable

import numpy as np

from app.core.exceptions import InvalidArgument
from app.models.schemas import TimingResult


def time_explainer(explain: Callable[[np.ndarray], Any], samples, repeats: int = 1) -> TimingResult:
    """
    Wall-clock latency of one explanation call, measured on a monotonic clock.

    Args:
        explain: Callable taking one scaled record
        samples: Records to time, one per row
        repeats: Timed calls per record

    Returns:
        TimingResult with |samples| * repeats per-call timings
    """
    if repeats < 1:
        raise InvalidArgument(f"repeats must be >= 1, got {repeats}")
    matrix = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    if matrix.shape[0] == 0:
        raise InvalidArgument("no samples to time")

    # warm-up, not timed
    explain(matrix[0])

    per_sample = []
    for record in matrix:
        for _ in range(repeats):
            start = time.perf_counter_ns()
            explain(record)
            per_sample.append((time.perf_counter_ns() - start) / 1e6)

    timings = np.asarray(per_sample)
    return TimingResult(
        mean_ms=float(timings.mean()),
        std_ms=float(timings.std(ddof=1)) if timings.size > 1 else 0.0,
        per_sample_ms=per_sample
    )
