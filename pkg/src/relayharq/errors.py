"""Exception types shared across the package."""


class RelayHarqError(Exception):
    """Base class for all package errors."""


class DomainError(RelayHarqError, ValueError):
    """An argument is outside the mathematical domain of an operation."""


class ContractError(RelayHarqError, ValueError):
    """An internal usage contract was broken (e.g. querying an undefined table entry)."""


class DegeneratePolicyError(RelayHarqError, ValueError):
    """Operation requires a policy that transmits a nonzero amount."""


class NumericsError(RelayHarqError, RuntimeError):
    """A numerical routine failed to converge to the requested accuracy."""


class SolverError(RelayHarqError, RuntimeError):
    """An optimization search could not produce a usable result."""


class ConfigError(RelayHarqError, ValueError):
    """Invalid experiment configuration."""


class PolicyParseError(RelayHarqError, ValueError):
    """A policy file could not be parsed."""
