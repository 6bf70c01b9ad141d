"""
.. module:: errors
    :synopsis: Exceptions raised by the simulator

Every error derives from :class:`FpsimError` and from the built-in exception
it specialises, so callers may catch either.
"""


class FpsimError(Exception):
    """Base class of all simulator errors"""


class RejectedInputError(FpsimError, ValueError):

    def __init__(self, message):
        ValueError.__init__(self, message)


class NumericalFailureError(FpsimError, ArithmeticError):
    """
    A non-finite value appeared while training or aggregating

    `parameter_index` points at the first offending parameter. The server
    fills in `round_index` and `client_id` before re-raising.
    """

    def __init__(self, message, parameter_index=-1, round_index=None,
                 client_id=None):
        self.parameter_index = parameter_index
        self.round_index = round_index
        self.client_id = client_id
        ArithmeticError.__init__(self, self._describe(message))
        self.message = message

    def _describe(self, message):
        text = message + ' (parameter %d)' % self.parameter_index
        if self.round_index is not None:
            text += ', round %d' % self.round_index
        if self.client_id is not None:
            text += ', client %s' % self.client_id
        return text

    def located(self, round_index, client_id):
        """Return a copy tagged with the round and client it happened in"""
        return NumericalFailureError(
            self.message, self.parameter_index, round_index, client_id)


class ConfigurationError(FpsimError, ValueError):

    def __init__(self, message, field=''):
        self.field = field
        if field:
            message = '%s: %s' % (field, message)
        ValueError.__init__(self, message)


class IdxParseError(FpsimError, ValueError):

    def __init__(self, message, path, offset):
        self.path = path
        self.offset = offset
        ValueError.__init__(
            self, '%s (%s, byte offset %d)' % (message, path, offset))


class BadMagicError(IdxParseError):
    pass


class TruncatedFileError(IdxParseError):
    pass


class CountMismatchError(IdxParseError):
    pass


class CheckpointError(FpsimError, ValueError):

    def __init__(self, message, path=''):
        self.path = path
        ValueError.__init__(self, '%s: %s' % (path, message) if path
                            else message)


class AggregationError(FpsimError, ValueError):
    pass


class UndefinedMetricError(FpsimError, ArithmeticError):
    pass


class DataFreeViolation(FpsimError, RuntimeError):
    """A data-free attack tried to read the benign updates"""
