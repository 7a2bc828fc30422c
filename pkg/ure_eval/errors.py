"""Exception hierarchy.

Every error raised by the toolkit derives from EvalError. The three families
below decide the CLI exit code (usage 1, data 2, failed verification 3).
"""

from typing import Optional


class EvalError(ValueError):
    """Root of all toolkit errors."""

    exit_code = 2


class UsageError(EvalError):
    exit_code = 1


class DataError(EvalError):
    exit_code = 2


class VerificationFailed(EvalError):
    exit_code = 3


# -------- usage --------
class InvalidCutoff(UsageError):
    def __init__(self, k: int, low: int, high: int):
        self.k, self.low, self.high = k, low, high
        super().__init__(f"cutoff {k} outside [{low}, {high}]")


class IncompatibleCutoffs(UsageError):
    pass


class InvalidTrials(UsageError):
    pass


class InvalidSampleSize(UsageError):
    pass


class EnumerationTooLarge(UsageError):
    def __init__(self, cost: int, budget: int):
        self.cost, self.budget = cost, budget
        super().__init__(f"enumeration needs {cost} pairs, budget is {budget} (raise --budget or URE_BUDGET)")


class InvalidSpec(UsageError):
    pass


# -------- data --------
class MissingPrediction(DataError):
    def __init__(self, user, item, path: Optional[str] = None):
        self.user, self.item, self.path = user, item, path
        where = f" in {path}" if path else ""
        super().__init__(f"missing prediction for user={user} item={item}{where}")


class InvalidScore(DataError):
    def __init__(self, user, item, score, line: Optional[int] = None):
        self.user, self.item, self.score, self.line = user, item, score, line
        where = f" at line {line}" if line is not None else ""
        super().__init__(f"non-finite score {score!r} for user={user} item={item}{where}")


class NoPositives(DataError):
    reason = "no_positives"

    def __init__(self, user=None, detail: str = "has no positive labels"):
        self.user = user
        super().__init__(f"user={user} {detail}")


class NoObservedPositives(NoPositives):
    reason = "no_observed_positives"

    def __init__(self, user=None):
        super().__init__(user, "has no positive labels in the randomly-exposed sample")


class EmptyEvaluation(DataError):
    pass


class ParseError(DataError):
    def __init__(self, message: str, line: Optional[int] = None, path: Optional[str] = None):
        self.line, self.path = line, path
        loc = ":".join(str(p) for p in (path, line) if p is not None)
        super().__init__(f"{loc}: {message}" if loc else message)


class DuplicatePair(ParseError):
    def __init__(self, user, item, line: Optional[int] = None, path: Optional[str] = None):
        self.user, self.item = user, item
        super().__init__(f"duplicate (user={user}, item={item})", line=line, path=path)


class InvalidLabel(ParseError):
    def __init__(self, label, line: Optional[int] = None, path: Optional[str] = None):
        self.label = label
        super().__init__(f"label {label!r} not in {{0,1}}", line=line, path=path)


class InvalidItem(ParseError):
    def __init__(self, item, line: Optional[int] = None, path: Optional[str] = None):
        self.item = item
        super().__init__(f"item {item!r} outside the catalog", line=line, path=path)


class IncompleteFullExposure(DataError):
    def __init__(self, user, labeled: int, item_count: int):
        self.user, self.labeled, self.item_count = user, labeled, item_count
        super().__init__(f"user={user} labels {labeled} of {item_count} items in a fully-exposed dataset")


class UndefinedCorrelation(DataError):
    pass


class EmptyCurve(DataError):
    pass


class IoError(DataError):
    pass
