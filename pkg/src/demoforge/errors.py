"""Exception hierarchy shared across the package."""


class DemoforgeError(Exception):
    """Base class for all errors raised by demoforge."""


class InvalidTeam(DemoforgeError):
    pass


class DecodeError(DemoforgeError):
    """Raised when an ESDM stream cannot be decoded."""


class BadMagic(DecodeError):
    pass


class UnsupportedVersion(DecodeError):
    pass


class TruncatedRecord(DecodeError):
    pass


class TickRegression(DecodeError):
    pass


class CorruptRecord(DecodeError):
    """Payload length or reserved bytes disagree with the record type."""


class UnencodableEvent(DemoforgeError):
    pass


class ParseError(DemoforgeError):
    pass


class EmptyMatch(DemoforgeError):
    pass


class InvalidConfig(DemoforgeError):
    pass


class UnsupportedKind(DemoforgeError):
    pass


class UnknownActionType(DemoforgeError):
    pass


class EmptyCorpus(DemoforgeError):
    pass


class EmptyTest(DemoforgeError):
    pass


class NonFiniteLoss(DemoforgeError):
    pass


class DegenerateLabels(DemoforgeError):
    """Training labels contain a single class; trainers fall back to a constant model."""


class ModelFormatError(DemoforgeError):
    """A saved model file is missing, unreadable or of an unknown version."""
