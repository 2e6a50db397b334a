"""Exception and warning classes shared across the package."""


class LayoutError(Exception):
    """Base class for all errors raised by roomlayout."""


class InvalidParameter(LayoutError, ValueError):
    pass


class EmptyCloud(LayoutError, ValueError):
    pass


class DegenerateCloud(LayoutError, ValueError):
    pass


class ParseError(LayoutError):
    """Malformed input file. Carries the path and, when known, the line or byte offset."""

    def __init__(self, message, path=None, line=None, offset=None):
        self.path = str(path) if path is not None else None
        self.line = line
        self.offset = offset
        where = []
        if self.path:
            where.append(self.path)
        if line is not None:
            where.append(f"line {line}")
        if offset is not None:
            where.append(f"offset {offset}")
        prefix = ":".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)
        self.message = message


class MissingFile(LayoutError, FileNotFoundError):
    pass


class IndexOutOfRange(LayoutError, IndexError):
    pass


class EmptyVolume(LayoutError):
    pass


class DimensionMismatch(LayoutError, ValueError):
    pass


class NoValidPixels(LayoutError, ValueError):
    pass


class TooSmall(LayoutError, ValueError):
    pass


class NonFinite(LayoutError, ValueError):
    pass


class MissingCategory(LayoutError):
    def __init__(self, category):
        self.category = category
        super().__init__(f"scene has no instance labeled {category!r}")


class UnknownCategory(LayoutError, KeyError):
    def __str__(self):
        return f"no models of category {self.args[0]!r} in database"


class UnknownInstance(LayoutError, KeyError):
    def __str__(self):
        return f"unknown instance id {self.args[0]!r}"


class InvalidSpec(LayoutError, ValueError):
    pass


class CameraOutsideRoom(LayoutError, ValueError):
    pass


# warnings

class UnsupportedFeature(UserWarning):
    """An input directive that is recognized as valid but not supported is skipped."""


class NonNormalizedQuaternion(UserWarning):
    pass


class DuplicateAssignment(UserWarning):
    pass
