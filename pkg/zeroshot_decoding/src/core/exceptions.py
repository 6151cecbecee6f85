from typing import Optional


class ZeroShotError(Exception):
    """Base class for every error raised by the decoding pipeline"""


class UsageError(ZeroShotError):
    """Invalid command-line usage (bad or unknown flag)"""


class DataError(ZeroShotError):
    """Error tied to input data, optionally located by file and line"""

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        self.message = message
        self.path = path
        self.line = line
        super().__init__(self.__str__())

    def __str__(self) -> str:
        location = ""
        if self.path is not None:
            location = f"{self.path}:"
        if self.line is not None:
            location += f"{self.line}:" if location else f"line {self.line}:"
        return f"{location} {self.message}" if location else self.message


# Romanization
class EmptyInput(DataError, ValueError):
    pass


class IoFailure(DataError):
    pass


class TableFormatError(DataError):
    pass


# Lexicon
class EmptyLexicon(DataError):
    pass


class ParseError(DataError):
    pass


class DuplicateWord(ParseError):
    pass


# Language model
class EmptyCorpus(DataError):
    pass


class InvalidDiscount(ZeroShotError, ValueError):
    pass


class InvalidOrder(ZeroShotError, ValueError):
    pass


class ArpaParseError(DataError):
    pass


class CountMismatch(ArpaParseError):
    pass


# Emissions
class FormatError(DataError):
    pass


class DimensionError(DataError):
    pass


class VocabMismatch(DataError):
    pass


class InvalidEmissions(DataError):
    pass


class EmptyReference(DataError, ValueError):
    pass


# Decoding
class DimensionMismatch(DataError):
    pass


class InvalidConfig(ZeroShotError, ValueError):
    pass


class SearchSpaceTooLarge(ZeroShotError):
    pass


# Evaluation
class EmptyLanguage(DataError):
    pass


class SizeExceedsCorpus(DataError):
    pass
