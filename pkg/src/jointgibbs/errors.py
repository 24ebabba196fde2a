"""Exception types shared across the package."""


class JointGibbsError(Exception):
    """Base class for package errors."""


class CapExceededError(JointGibbsError):
    """An enumeration cap was exceeded; carries a size report."""

    def __init__(self, what: str, size: int, cap: int):
        self.what = what
        self.size = size
        self.cap = cap
        super().__init__(f"{what}: size {size} exceeds cap {cap}")


class ConfigError(JointGibbsError):
    """Invalid run configuration or config file."""


class UnsupportedObservableError(JointGibbsError):
    """Observable not defined for this spin alphabet."""


class SchemeError(JointGibbsError):
    """Malformed regrouping scheme (cells not nested / not covering)."""


class WindowMismatchError(JointGibbsError):
    """A potential table was queried outside the window it was built on."""
