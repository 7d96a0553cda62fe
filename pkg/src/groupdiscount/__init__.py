"""Anonymous group-size accreditation with prepaid group payments.

A group of users proves how many members it has to a verifying device with
an identity-based dynamic threshold signature over identifier-derived
pseudonyms, then settles a size-dependent fee with scratch-card codes.
"""

from .errors import (AuthError, BindingError, ConfigurationError, ContractViolation, DomainError,
                     GroupDiscountError, PolicyError, ReplayError, ScenarioError,
                     SerializationError, ThresholdError)

__version__ = "0.1.0"
