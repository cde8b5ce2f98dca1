"""Exception hierarchy shared across certlab modules."""


class CertlabError(Exception):
    """Base class for all certlab errors."""


class ConfigError(CertlabError, ValueError):
    """Invalid prior, outcome model, design or experiment configuration."""


class DomainError(CertlabError, ValueError):
    """An argument lies outside the domain of an operation."""


class InfeasibleDesignError(CertlabError, ValueError):
    """A budget cannot cover the requested allocation."""


class InsufficientDataError(CertlabError, ValueError):
    """An arm lacks the samples an operation needs."""


class PolicyError(CertlabError):
    """A policy produced an invalid arm set."""


class AllocationError(CertlabError):
    """A non-uniform allocation assigned no pulls at all."""


class VerificationError(CertlabError):
    """A verification check failed or cannot be run on the given instance."""
