"""Exception types shared across the package."""


class LatinCutError(Exception):
    """Base class for solver errors."""


class InvalidMeshError(LatinCutError):
    """Mesh connectivity is inconsistent (non-manifold, bad orientation...)."""


class InvalidGeometryError(LatinCutError):
    """Level-set or decomposition input is malformed."""


class DegenerateCutError(InvalidGeometryError):
    """A level set vanishes identically on an element."""


class EmptyDomainError(InvalidGeometryError):
    """A subdomain has no physical cells on this mesh."""


class EmptyInterfaceError(InvalidGeometryError):
    """A subdomain pair shares no interface segments."""


class NotSpdError(LatinCutError):
    """A matrix expected to be SPD has a non-positive pivot."""


class StabilizationConfigError(LatinCutError):
    """A stabilized interface system is still singular (gamma too small)."""


class NonNestedMeshError(LatinCutError):
    """Field transfer was requested between non-nested meshes."""


class ConfigError(LatinCutError):
    """A run configuration is syntactically or semantically invalid."""


class SolverFailure(LatinCutError):
    """A linear solve or iteration failed irrecoverably."""
