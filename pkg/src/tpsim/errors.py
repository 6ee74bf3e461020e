"""Exception hierarchy shared by all tpsim modules."""


class TpsimError(Exception):
    """Base class for every error raised by tpsim."""


class ConfigError(TpsimError, ValueError):
    """Invalid or unknown architecture configuration."""


class SchedulingViolation(TpsimError):
    """A resource was used in a way the single-host interconnect forbids."""


class CapacityError(TpsimError):
    """A transfer or buffer does not fit into a scratchpad."""


class InfeasiblePlanError(TpsimError):
    """No block width satisfies the scratchpad footprint constraint."""

    def __init__(self, message, required_bytes):
        super().__init__(message)
        self.required_bytes = required_bytes


class InvalidScheduleError(TpsimError):
    """A schedule failed validation; ``violations`` holds the report."""

    def __init__(self, message, violations=()):
        super().__init__(message)
        self.violations = list(violations)


class TimeTriggerFault(TpsimError):
    """A time-triggered entry was released before it could legally start."""

    def __init__(self, entry_id, cycle, reason):
        super().__init__(f"entry {entry_id} released at cycle {cycle}: {reason}")
        self.entry_id = entry_id
        self.cycle = cycle
        self.reason = reason
