"""Exception hierarchy with stable error codes.

Every error carries a short machine-readable ``code`` so CLI output and HTTP
responses stay greppable across refactors.
"""

from __future__ import annotations


class HtapxplainError(Exception):
    """Base class for all package errors."""

    code = "E_INTERNAL"

    def __init__(self, message: str = ""):
        super().__init__(message or self.__class__.__name__)

    def __str__(self) -> str:
        return f"{self.code}: {super().__str__()}"


# plan parsing / validation
class PlanSyntaxError(HtapxplainError):
    code = "E_SYNTAX"


class PlanSchemaError(HtapxplainError):
    code = "E_SCHEMA"


class PlanArityError(HtapxplainError):
    code = "E_ARITY"


# workload generation
class ParamError(HtapxplainError):
    code = "E_PARAM"


class UnsupportedQueryError(HtapxplainError):
    code = "E_UNSUPPORTED"


class EngineMismatchError(HtapxplainError):
    code = "E_MISMATCH"


class BalanceError(HtapxplainError):
    code = "E_BALANCE"


# router
class VocabError(HtapxplainError):
    code = "E_VOCAB"


class DegenerateDataError(HtapxplainError):
    code = "E_DEGENERATE"


class DivergenceError(HtapxplainError):
    code = "E_DIVERGE"


# persistence
class StoreIoError(HtapxplainError):
    code = "E_IO"


class FormatVersionError(HtapxplainError):
    code = "E_VERSION"


# knowledge base
class DimensionError(HtapxplainError):
    code = "E_DIM"


class NotFoundError(HtapxplainError):
    code = "E_NOT_FOUND"


# LLM provider boundary
class LlmError(HtapxplainError):
    code = "E_LLM"


class LlmTimeoutError(LlmError):
    code = "E_TIMEOUT"


class LlmAuthError(LlmError):
    code = "E_AUTH"


class LlmHttpError(LlmError):
    code = "E_HTTP"

    def __init__(self, status: int, message: str = ""):
        self.status = status
        super().__init__(message or f"HTTP {status}")
        self.code = f"E_HTTP({status})"


# pipeline / harness
class StateError(HtapxplainError):
    code = "E_STATE"


class LabelMismatchError(HtapxplainError):
    code = "E_LABELS"


# service
class BindError(HtapxplainError):
    code = "E_BIND"


class LoadError(HtapxplainError):
    code = "E_LOAD"
