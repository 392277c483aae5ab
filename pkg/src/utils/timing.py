import time
from contextlib import contextmanager
from typing import Dict


class StageTimer:
    """Accumulates wall-clock seconds per named stage."""

    def __init__(self, enabled: bool = True):
        self.enabled = enabled
        self.durations: Dict[str, float] = {}

    @contextmanager
    def stage(self, name: str):
        if not self.enabled:
            yield
            return
        start = time.perf_counter()
        try:
            yield
        finally:
            self.add(name, time.perf_counter() - start)

    def add(self, name: str, seconds: float) -> None:
        if self.enabled:
            self.durations[name] = self.durations.get(name, 0.0) + seconds

    def merge(self, durations: Dict[str, float]) -> None:
        for name, seconds in durations.items():
            self.add(name, seconds)
