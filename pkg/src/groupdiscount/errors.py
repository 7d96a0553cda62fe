"""Exception hierarchy shared by every layer of the package."""


class GroupDiscountError(Exception):
    """Base class for all errors raised by this package."""


class ContractViolation(GroupDiscountError):
    """An operation was called with operands it is not defined for."""


class SerializationError(GroupDiscountError):
    """Bytes could not be decoded into the requested object."""


class ConfigurationError(GroupDiscountError):
    pass


class DomainError(GroupDiscountError):
    """An input lies outside the admissible domain (identity, identifier...)."""


class PolicyError(GroupDiscountError):
    """A threshold policy is malformed or a signer is not part of it."""


class ThresholdError(PolicyError):
    """Fewer partial signatures than the policy threshold were supplied."""


class BindingError(GroupDiscountError):
    """An object is bound to a different message, policy or precomputation."""


class AuthError(GroupDiscountError):
    pass


class ReplayError(GroupDiscountError):
    pass


class ScenarioError(GroupDiscountError):
    """A scenario file is malformed. ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
