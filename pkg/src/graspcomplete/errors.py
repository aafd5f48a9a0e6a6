class GraspCompleteError(Exception):
    """Base class for domain errors raised by this package."""


class GeometryError(GraspCompleteError, ValueError):
    pass


class OpenMeshError(GeometryError):
    def __init__(self, message="open mesh", boundary_edges=None):
        super().__init__(message)
        self.boundary_edges = boundary_edges


class NoSurfaceError(GraspCompleteError):
    def __init__(self, message="no surface"):
        super().__init__(message)


class FitDivergedError(GraspCompleteError):
    def __init__(self, iteration, loss):
        super().__init__(f"loss diverged at iteration {iteration} (loss={loss})")
        self.iteration = iteration
        self.loss = loss


class NoCandidatesError(GraspCompleteError):
    def __init__(self, message="no candidates"):
        super().__init__(message)


class DegenerateAlignmentError(GraspCompleteError):
    def __init__(self, message="degenerate alignment"):
        super().__init__(message)


class InsufficientPairsError(GraspCompleteError, ValueError):
    def __init__(self, message="insufficient pairs"):
        super().__init__(message)


class NotVisibleError(GraspCompleteError):
    def __init__(self, message="object not visible"):
        super().__init__(message)


class ConfigError(GraspCompleteError, ValueError):
    def __init__(self, message, path=None, line=None):
        where = ""
        if path is not None:
            where = f"{path}:"
            if line is not None:
                where += f"{line}:"
            where += " "
        super().__init__(f"{where}{message}")
        self.path = path
        self.line = line
