"""Egress port of a TSN bridge: eight PCP queues served by strict priority."""

from collections import deque


class TsnBridgePort:
    def __init__(self, rate_bps):
        if rate_bps <= 0:
            raise ValueError("bridge port rate must be positive")
        self.rate_bps = rate_bps
        self.queues = [deque() for _ in range(8)]
        self.busy = False
        self.sent = 0

    def enqueue(self, pcp, item):
        self.queues[pcp].append(item)

    def dequeue(self):
        """Head of the highest non-empty PCP queue, or None."""
        for pcp in range(7, -1, -1):
            q = self.queues[pcp]
            if q:
                self.sent += 1
                return pcp, q.popleft()
        return None

    def tx_duration_ns(self, size_bytes):
        bits_ns = size_bytes * 8 * 1_000_000_000
        return -(-bits_ns // int(self.rate_bps)) if float(self.rate_bps).is_integer() else int(
            -(-bits_ns // self.rate_bps)
        )

    def backlog(self):
        return sum(len(q) for q in self.queues)
