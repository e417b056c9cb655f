from typing import Optional


class DynaRankError(Exception):
    """Base class for every error raised by dynarank_cli."""


class ConfigError(DynaRankError):
    pass


class CatalogParseError(DynaRankError):
    def __init__(self, message: str, line_number: Optional[int] = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class UnknownCategoryError(CatalogParseError):
    pass


class NegativeGmvError(CatalogParseError):
    pass


class DuplicateItemError(CatalogParseError):
    pass


class EmptyInputError(DynaRankError, ValueError):
    pass


class MissingClassError(DynaRankError):
    """Pair generation needs at least one ordered and one unordered item."""


class DimensionMismatchError(DynaRankError, ValueError):
    pass


class TrainingDivergedError(DynaRankError):
    pass


class DoubleFeedbackError(DynaRankError):
    pass


class InvalidArmError(DynaRankError, IndexError):
    pass


class PageOutOfRangeError(DynaRankError, IndexError):
    pass


class InfeasibleSpecError(DynaRankError):
    pass
