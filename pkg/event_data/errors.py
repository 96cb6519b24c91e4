"""
exception hierarchy shared by all modules
"""


class AETError(Exception):
    """
    base class of all errors raised by the event pipeline
    """


class EventParseError(AETError, ValueError):
    """
    malformed event record; offset is the byte offset (binary) or 1-based line number (csv)
    """

    def __init__(self, message, offset=None, path=None):
        self.offset = offset
        self.path = path
        if offset is not None:
            message = "%s (offset %d)" % (message, offset)
        if path is not None:
            message = "%s: %s" % (path, message)
        super().__init__(message)


class EventValidationError(AETError, ValueError):
    """
    event sample violates an invariant; index names the offending event
    """

    def __init__(self, message, index=None):
        self.index = index
        if index is not None:
            message = "event %d: %s" % (index, message)
        super().__init__(message)


class ShapeError(AETError, ValueError):
    pass


class FormatError(AETError, ValueError):
    pass


class ConfigError(AETError, ValueError):
    pass


class GenerationError(AETError, RuntimeError):
    pass


class EventIOError(AETError, OSError):
    """
    I/O failure, the message always contains the path
    """

    def __init__(self, path, reason):
        self.path = str(path)
        super().__init__("%s: %s" % (path, reason))
