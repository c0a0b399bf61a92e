"""Exception types raised across the package."""


class RingSqueezeError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(RingSqueezeError):
    """A configuration field violates one of its invariants.

    Args:
        field (str): dotted path of the offending field
        message (str): human readable explanation
    """

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class InvalidCoupling(ConfigError):
    pass


class BinOverlap(ConfigError):
    pass


class MisalignedPhantom(ConfigError):
    pass


class BranchOverflow(RingSqueezeError):
    """Inverse dispersion requested outside the monotonic branch."""


class SingularNetwork(RingSqueezeError):
    pass


class IllConditioned(RingSqueezeError):
    pass


class NoFeature(RingSqueezeError):
    pass


class MissingQuad(RingSqueezeError):
    pass


class StepUnstable(RingSqueezeError):
    pass


class SeriesDiverged(RingSqueezeError):
    pass


class NotPositiveDefinite(RingSqueezeError):
    pass


class NotSymplectic(RingSqueezeError):
    pass


class EmptySubset(RingSqueezeError):
    pass


class PartialFailure(RingSqueezeError):
    """Some sweep points failed; ``errors`` maps grid index to message."""

    def __init__(self, errors):
        self.errors = dict(errors)
        super().__init__(f"{len(self.errors)} sweep point(s) failed")
