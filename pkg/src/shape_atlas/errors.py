"""Exception hierarchy shared by the library and the CLI.

Each error carries an ``exit_code`` so the CLI can map failures onto its
documented process exit statuses without a lookup table.
"""


class AtlasError(Exception):
    exit_code = 1

    def to_json(self):
        return {"error": type(self).__name__, "message": str(self), "exit_code": self.exit_code}


class FormatError(AtlasError):
    exit_code = 2


class ConfigError(AtlasError):
    exit_code = 5


class AssignmentInfeasible(AtlasError):
    exit_code = 3


class NothingVisible(AtlasError):
    exit_code = 4


class EmptyCloud(AtlasError, ValueError):
    pass


class EmptyMesh(AtlasError, ValueError):
    pass


class DegenerateFace(AtlasError, ValueError):
    pass


class MissingNormals(AtlasError, ValueError):
    pass


class NotPerfectSquare(AtlasError, ValueError):
    pass


class NotUnitVector(AtlasError, ValueError):
    pass


class SizeMismatch(AtlasError, ValueError):
    pass


class DimensionMismatch(FormatError, ValueError):
    pass


class ShapeMismatch(AtlasError, ValueError):
    pass


class UnpairedSample(AtlasError):
    pass
