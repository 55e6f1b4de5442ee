"""Exception types shared across the package.

The CLI maps these onto its stable exit codes: bad input or usage ends with
code 2, ``NumericError`` with 3 and ``FormatError`` with 4.
"""


class ShapeError(ValueError):
    """An array does not have the shape an operation requires.

    Messages always name both the offending and the expected shape.
    """


class FormatError(ValueError):
    """A file does not conform to its binary or textual schema."""


class NumericError(ArithmeticError):
    """A computation produced non-finite values or failed a numeric contract."""
