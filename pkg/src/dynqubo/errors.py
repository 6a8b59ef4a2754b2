"""Exception types shared across the toolkit."""


class DynQuboError(Exception):
    """Base class for all errors raised by this package."""


class SelfReferenceError(DynQuboError):
    """Substitution replacement contains the variable being replaced."""


class UnboundVariableError(DynQuboError):
    """Evaluation assignment is missing variables; carries the missing ids."""

    def __init__(self, missing):
        self.missing = tuple(sorted(missing))
        names = ", ".join(str(v) for v in self.missing)
        super().__init__(f"assignment missing variables: {names}")


class NonExplicitDynamicsError(DynQuboError):
    """A stage polynomial references variables outside its own stage."""


class MissingSchemeError(DynQuboError):
    """Binarization scheme does not cover an input variable."""


class NotMultilinearError(DynQuboError):
    """Quadratization input is not multilinear over binary variables."""


class DegreeTooHighError(DynQuboError):
    """QUBO assembly requires total degree at most two."""


class TooLargeError(DynQuboError):
    """Instance exceeds an exhaustive-solver size guard."""


class LengthMismatchError(DynQuboError):
    """Sequence lengths are inconsistent with the problem shape."""


class ShapeMismatchError(DynQuboError):
    """Sub-sample, variable map, and incumbent shapes are inconsistent."""


class EmbeddingNotFoundError(DynQuboError):
    """No valid minor embedding found; carries attempt diagnostics."""

    def __init__(self, message, attempts=None):
        self.attempts = attempts or []
        super().__init__(message)


class InvalidEmbeddingError(DynQuboError):
    """Embedding violates disjointness, connectivity, or edge coverage."""
