"""Exception types shared across the package."""


class MfabcError(Exception):
    """Base class for all errors raised by this package."""


class DegenerateSampleError(MfabcError):
    """A weighted sample carries no usable information (e.g. all weights zero)."""


class DegenerateGenerationError(MfabcError):
    """An SMC generation produced a sample no subsequent generation can build on."""

    def __init__(self, generation: int, message: str):
        self.generation = generation
        super().__init__(f"generation {generation}: {message}")


class ProposalLimitError(MfabcError):
    """A sampling loop exceeded its proposal ceiling without satisfying its goal."""


class ImportanceSupportError(MfabcError):
    """An importance distribution is zero somewhere the prior is positive."""


class EstimationError(MfabcError):
    """Monte Carlo coefficient estimation produced unusable values."""


class ConfigError(MfabcError):
    """An experiment configuration file is malformed or inconsistent."""
