class PawlabError(Exception):
    """Base class for library errors."""


class ShapeError(PawlabError, ValueError):
    pass


class NotHermitianError(PawlabError, ValueError):
    pass


class SpectrumError(PawlabError, ValueError):
    """Malformed or degenerate level structure."""


class ConstraintError(PawlabError, ValueError):
    """A global constraint cannot be met, or is violated beyond tolerance."""


class NumericContractError(PawlabError, RuntimeError):
    """A computed quantity broke one of its guaranteed bounds."""
