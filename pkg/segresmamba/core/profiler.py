"""
Instrumentation of the multiply-accumulate operations actually executed by
the convolution, linear and scan operations.
"""
import threading
from collections import Counter


__all__ = ['MacCounter', 'record_macs']

_counters = []
_lock = threading.Lock()


class MacCounter:
    """
    Context manager counting the multiply-accumulates recorded while active
    (in any thread):

    ```
    with MacCounter() as counter:
        model(x)
    counter.total, counter.by_kind['conv']
    ```
    """
    def __init__(self):
        self.total = 0
        self.by_kind = Counter()

    def add(self, kind, macs):
        self.total += macs
        self.by_kind[kind] += macs

    def __enter__(self):
        with _lock:
            _counters.append(self)
        return self

    def __exit__(self, *exc):
        with _lock:
            _counters.remove(self)
        return False


def record_macs(kind, macs):
    if not _counters:
        return
    with _lock:
        for counter in _counters:
            counter.add(kind, int(macs))
