"""Exception hierarchy shared by all decodekit modules."""


class DecodeKitError(Exception):
    """Base class for every error raised by this package."""


class InvalidInputError(DecodeKitError, ValueError):
    pass


class EmptySupportError(DecodeKitError, ValueError):
    pass


class LogitSourceError(DecodeKitError):
    """A logit source could not produce a next-token distribution."""


class UnknownTokenError(LogitSourceError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class MissingFixtureError(LogitSourceError, KeyError):
    def __init__(self, prompt_hash, prompt=None):
        super().__init__(prompt_hash)
        self.prompt_hash = prompt_hash
        self.prompt = prompt

    def __str__(self):
        return f"no fixture recorded for prompt hash {self.prompt_hash}"


class FixtureConflictError(DecodeKitError):
    pass


class RemoteError(LogitSourceError):
    """Transport or protocol failure talking to a remote endpoint.

    ``payload`` carries the raw response body (or ``None`` when no response
    was received) so callers can log exactly what the server sent.
    """

    def __init__(self, message, payload=None, status=None, attempts=None):
        super().__init__(message)
        self.payload = payload
        self.status = status
        self.attempts = attempts


class RemoteHTTPError(RemoteError):
    pass


class MalformedResponseError(RemoteError):
    pass


class RemoteTimeoutError(RemoteError):
    pass


class TemplateError(DecodeKitError, ValueError):
    pass


class ScoringError(DecodeKitError):
    def __init__(self, message, top_tokens=()):
        super().__init__(message)
        self.top_tokens = list(top_tokens)


class DegenerateSeriesError(DecodeKitError, ValueError):
    pass


class DatasetError(DecodeKitError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ConfigError(DecodeKitError, ValueError):
    pass


class RunAbortedError(DecodeKitError):
    def __init__(self, message, n_failed, n_total):
        super().__init__(message)
        self.n_failed = n_failed
        self.n_total = n_total


class TreeSampleError(DecodeKitError):
    """Raised when the search is interrupted; ``partial`` holds what was found."""

    def __init__(self, message, partial):
        super().__init__(message)
        self.partial = partial
