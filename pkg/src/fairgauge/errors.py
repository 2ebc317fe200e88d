"""Exception types raised across the package."""


class FairgaugeError(Exception):
    """Base class for all package-specific errors."""


class MalformedRow(FairgaugeError):
    """A CSV data row is missing or has an unparseable score/group/label."""

    def __init__(self, line: int, reason: str):
        self.line = line
        self.reason = reason
        super().__init__(f"line {line}: {reason}")


class UnknownGroupLabel(FairgaugeError):
    """A row references a group that was not declared."""


class EmptyDataset(FairgaugeError):
    """The ingested file contains no data rows."""


class NTooLarge(FairgaugeError):
    """Requested labeled-subset size exceeds the dataset size."""


class InvalidPrior(FairgaugeError):
    """Beta prior parameters must be strictly positive."""


class NonFiniteDensity(FairgaugeError):
    """The model log-density evaluated to NaN; indicates a data bug."""


class DivergedChain(FairgaugeError):
    """A sampler block's post-adaptation acceptance rate collapsed."""


class TooFewChains(FairgaugeError):
    """Convergence diagnostics need at least two split half-chains."""


class EmptyGroup(FairgaugeError):
    """A group has no examples at all (labeled or unlabeled)."""


class DegenerateDenominator(FairgaugeError):
    """Every posterior draw had a near-zero conditional denominator."""


class InvalidSpec(FairgaugeError):
    """A synthetic-population spec violates its invariants."""
