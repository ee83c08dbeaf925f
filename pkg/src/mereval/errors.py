"""Exception hierarchy shared across the toolkit."""


class MerEvalError(Exception):
    """Base class for every error raised by mereval."""


class DataError(MerEvalError):
    """Input data is missing, malformed or inconsistent."""


class ParseError(DataError):
    pass


class InvariantViolation(DataError):
    pass


class EmptyLabel(DataError):
    pass


class MissingField(DataError):
    pass


class EmptyEvaluation(DataError):
    pass


class EmptyInput(DataError):
    pass


class NoVotes(DataError):
    pass


class OutOfRange(DataError):
    pass


class MissingDataset(DataError):
    def __init__(self, name: str):
        super().__init__(name)
        self.name = name


class MalformedReply(MerEvalError):
    """An LLM reply could not be parsed into the expected structure."""


class NetworkError(MerEvalError):
    pass


class KernelError(MerEvalError):
    pass


class DimMismatch(KernelError):
    pass


class OddDim(KernelError):
    pass


class NonFinite(KernelError):
    pass


class IndexOutOfRange(KernelError):
    pass
