"""Shared exception types."""


class ShapeError(ValueError):
    """An array or layer chain does not have the declared shape."""


class ContractError(ValueError):
    """A documented precondition was violated by the caller."""


class ParseError(ValueError):
    """A manifest or config document is malformed."""
