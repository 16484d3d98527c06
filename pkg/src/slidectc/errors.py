"""Exception hierarchy shared by all modules.

The CLI maps the three base classes onto exit codes: InvalidInput -> 2,
IoError -> 3, Incompatible -> 4.
"""


class SlideCTCError(Exception):
    pass


class InvalidInput(SlideCTCError, ValueError):
    pass


class InvalidConfig(InvalidInput):
    pass


class UnknownSymbol(InvalidInput, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class EmptyCorpus(InvalidInput):
    pass


class TooLargeForOracle(InvalidInput):
    pass


class InfeasibleTarget(InvalidInput):
    pass


class NoFeasibleWord(InvalidInput):
    pass


class TrainingDiverged(SlideCTCError, ArithmeticError):
    pass


class IoError(SlideCTCError, OSError):
    pass


class Incompatible(SlideCTCError):
    pass


class IncompatibleCheckpoint(Incompatible):
    pass


class IncompatibleModel(Incompatible):
    pass


class CorruptCheckpoint(Incompatible):
    pass
