"""Exception hierarchy shared by all modules."""


class CWError(Exception):
    """Base class for errors raised by cwscaler."""


class DomainError(CWError, ValueError):
    """An argument lies outside the domain where the operation is defined."""


class PhaseError(DomainError):
    """The operation needs the subcritical phase (beta > 1, h != 0)."""


class ResourceError(CWError):
    """The requested computation exceeds a configured size cap."""


class SearchError(CWError, RuntimeError):
    """A numerical search did not produce a valid certificate."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
