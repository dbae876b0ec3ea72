"""Exception types shared across the package."""


class StepPlanError(Exception):
    """Base class for all errors raised by this package."""


class ContractViolation(StepPlanError):
    """An operation was called with arguments outside its contract."""


class ConfigurationError(StepPlanError):
    """A model, table or scenario was built with invalid parameters."""


class DomainError(StepPlanError):
    """A value was evaluated outside the domain it was built for."""


class AssemblyError(StepPlanError):
    """The optimization problem could not be assembled (e.g. unbounded row)."""


class InfeasibleScenarioError(StepPlanError):
    """The scenario is provably unsolvable (e.g. goal foothold outside every region)."""


class ScenarioParseError(StepPlanError):
    """A scenario or plan file failed to parse.

    ``location`` carries a JSON-path style hint ("regions[2].polygon") so the
    offending key can be found in the file.
    """

    def __init__(self, message: str, location: str = ""):
        self.location = location
        super().__init__(f"{location}: {message}" if location else message)


class PlanningError(StepPlanError):
    """Chunked planning failed; carries the failing chunk's scenario snapshot."""

    def __init__(self, message: str, chunk_index: int, chunk_scenario=None, reason: str = "infeasible"):
        self.chunk_index = chunk_index
        self.chunk_scenario = chunk_scenario
        self.reason = reason
        super().__init__(message)
