"""Runtime errors raised by the simulation kernels and harness."""


class SimulationError(RuntimeError):
    pass


class TourLengthExceeded(SimulationError):
    def __init__(self, limit: int):
        self.limit = limit
        super().__init__(f"a job tour exceeded {limit} steps; routing is near-critical")


class EventQueueOverflow(SimulationError):
    def __init__(self, limit: int):
        self.limit = limit
        super().__init__(f"replication exceeded the cap of {limit} events")


class UnstableRefused(SimulationError):
    def __init__(self, detail: str):
        super().__init__(f"refusing to simulate an unstable network ({detail}); use force to override")
