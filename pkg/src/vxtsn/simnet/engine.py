"""Single-threaded discrete-event engine with integer-nanosecond time."""

import heapq


class SimulationError(RuntimeError):
    pass


class EventQueue:
    """Events run in (time, insertion order); ties never depend on callables."""

    def __init__(self):
        self._heap = []
        self._seq = 0
        self.now = 0
        self.processed = 0

    def schedule(self, time_ns, fn, *args):
        if time_ns < self.now:
            raise SimulationError(f"event scheduled in the past: {time_ns} < {self.now}")
        heapq.heappush(self._heap, (time_ns, self._seq, fn, args))
        self._seq += 1

    def __len__(self):
        return len(self._heap)

    def run(self, until_ns):
        """Process every event with time <= ``until_ns``."""
        heap = self._heap
        pop = heapq.heappop
        while heap and heap[0][0] <= until_ns:
            t, _, fn, args = pop(heap)
            if t < self.now:
                raise SimulationError("event time went backwards")
            self.now = t
            fn(*args)
            self.processed += 1
        return self.processed
