"""Exception hierarchy. Every error carries a short machine-parsable tag that the
CLI prints as ``error[<tag>]: <message>``."""


class AptError(Exception):
    tag = "apt"


class ShapeError(AptError):
    tag = "shape"


class NumericError(AptError):
    tag = "numeric"


class ContractError(AptError):
    tag = "contract"


class ConfigError(AptError):
    tag = "config"


class SerializationError(AptError):
    tag = "serialization"


class BadMagicError(SerializationError):
    tag = "bad_magic"


class VersionMismatchError(SerializationError):
    tag = "version"


class TruncatedFileError(SerializationError):
    tag = "truncated"


def shape_error(op: str, *shapes: tuple[int, ...]) -> ShapeError:
    joined = " vs ".join(str(tuple(s)) for s in shapes)
    return ShapeError(f"{op}: incompatible shapes {joined}")
