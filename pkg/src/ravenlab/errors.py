"""Exception types raised across the package."""


class RavenLabError(Exception):
    pass


# tensor engine
class ShapeMismatch(RavenLabError, ValueError):
    pass


class NotScalar(RavenLabError, ValueError):
    pass


# puzzle generation
class NoValidThird(RavenLabError):
    """A rule cannot be completed inside the attribute domain."""


class GenerationExhausted(RavenLabError):
    pass


class FoilCollision(RavenLabError):
    pass


class FormatError(RavenLabError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


# student / teacher / harness
class ConfigMismatch(RavenLabError, ValueError):
    pass


class DimensionMismatch(RavenLabError, ValueError):
    pass


class EmptyBuffer(RavenLabError):
    pass


class EmptyValidationSet(RavenLabError, ValueError):
    pass


class EmptyCategory(RavenLabError, ValueError):
    pass


class EmptyPool(RavenLabError, ValueError):
    pass
