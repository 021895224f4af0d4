"""Exception hierarchy shared by the simulator modules."""


class TokenGovError(Exception):
    """Base class for all simulator errors."""


# ledger
class UnknownToken(TokenGovError):
    pass


class DoubleTokenization(TokenGovError):
    pass


class NotApproved(TokenGovError):
    pass


class HoldingsNonZero(TokenGovError):
    pass


class CapabilityError(TokenGovError):
    """Raised when a caller lacks the capability for a privileged ledger call."""


class ParamRangeError(TokenGovError, ValueError):
    pass


# agents
class UnknownOwner(TokenGovError):
    pass


class RequestValidationError(TokenGovError, ValueError):
    pass


class InvalidTransition(TokenGovError):
    pass


# staking
class UnknownAgent(TokenGovError):
    pass


class InsufficientStake(TokenGovError):
    pass


class BarredAgent(TokenGovError):
    pass


class NotCertified(TokenGovError):
    pass


# governance
class NoReplacementConfigured(TokenGovError):
    pass


# harness
class ScenarioParseError(TokenGovError):
    pass


class ExpectationFailed(TokenGovError):
    pass


class ParseError(TokenGovError):
    """A ledger export could not be parsed."""
