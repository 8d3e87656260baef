"""Resource limits enforced inside long-running loops (exploration, refinement)."""

from __future__ import annotations

import resource
import time
from typing import Optional

from .errors import ResourceLimitError


class ResourceGuard:
    """Periodic check of state-count, wall-clock, and memory limits.

    `tick()` is rate-limited so it can sit inside hot loops; `check_states`
    is exact.  Memory is judged by the process max RSS, an estimate that
    includes the interpreter itself.
    """

    def __init__(
        self,
        max_states: Optional[int] = None,
        timeout_s: Optional[float] = None,
        max_memory_mb: Optional[float] = None,
        check_every: int = 4096,
    ):
        self.max_states = max_states
        self.deadline = time.monotonic() + timeout_s if timeout_s else None
        self.max_memory_mb = max_memory_mb
        self._check_every = check_every
        self._countdown = check_every

    def check_states(self, n_states: int) -> None:
        if self.max_states is not None and n_states > self.max_states:
            raise ResourceLimitError(
                "states", f"state count {n_states} exceeds limit {self.max_states}"
            )

    def tick(self) -> None:
        self._countdown -= 1
        if self._countdown > 0:
            return
        self._countdown = self._check_every
        if self.deadline is not None and time.monotonic() > self.deadline:
            raise ResourceLimitError("timeout", "wall-clock limit exceeded")
        if self.max_memory_mb is not None:
            rss_mb = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss / 1024.0
            if rss_mb > self.max_memory_mb:
                raise ResourceLimitError(
                    "memory", f"max RSS {rss_mb:.0f} MiB exceeds limit {self.max_memory_mb:.0f} MiB"
                )
