"""Exception types raised by the client."""

from __future__ import annotations


class ClientError(Exception):
    """Base class for everything this package raises on purpose."""


class MarshalError(ClientError):
    """A value or byte string does not fit the wire format."""


class TranslationError(ClientError):
    """A Python function uses a construct the translator cannot express.

    The message always names the offending construct so the caller knows
    what to rewrite.
    """


class EvaluationFailed(ClientError):
    """The runtime reported an error instead of a value.

    Carries the pipeline stage the runtime blamed (``typecheck``,
    ``evaluate``, ...) alongside its message.
    """

    def __init__(self, stage: str, message: str):
        super().__init__(f"{stage}: {message}")
        self.stage = stage
        self.message = message
