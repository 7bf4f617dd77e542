class DimensionMismatchError(Exception): ...


class DuplicateTargetError(Exception): ...


class ZeroNormError(Exception): ...


class PostSelectionError(Exception): ...


class DenseCapExceededError(Exception): ...


class InvalidModelError(Exception): ...


class InvalidSchemeError(Exception): ...


class DilationError(Exception): ...


class SingularOverlapError(Exception): ...


class BruteForceCapError(Exception): ...


class ParameterCountError(Exception): ...


class InvalidConfigError(Exception): ...
