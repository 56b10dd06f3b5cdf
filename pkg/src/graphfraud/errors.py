"""Exception hierarchy. Anything deriving from GraphFraudError is a data or
model problem (CLI exit code 1), never a usage error."""


class GraphFraudError(Exception):
    pass


class HeaderMismatchError(GraphFraudError):
    pass


class RowValidationError(GraphFraudError):
    def __init__(self, errors):
        self.errors = list(errors)
        first = self.errors[0]
        more = f" (+{len(self.errors) - 1} more)" if len(self.errors) > 1 else ""
        super().__init__(f"line {first.line}: field {first.field!r}: {first.reason}{more}")


class EmptyDatasetError(GraphFraudError):
    pass


class ConfigError(GraphFraudError):
    pass


class ShapeMismatchError(GraphFraudError):
    pass


class DimensionMismatchError(GraphFraudError):
    pass


class MissingEmbeddingError(GraphFraudError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class NonFiniteError(GraphFraudError, FloatingPointError):
    pass


class CheckpointError(GraphFraudError):
    pass
