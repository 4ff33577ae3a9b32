"""Exception types shared across the package."""


class GeometryError(ValueError):
    """Degenerate or out-of-domain geometry (coincident points, bad angles)."""


class InfeasibleError(RuntimeError):
    """An optimization or bound evaluation has no feasible solution.

    ``constraint`` names the binding constraint so callers (and the CLI)
    can report it in machine-readable form.
    """

    def __init__(self, message, constraint, **details):
        super().__init__(message)
        self.constraint = constraint
        self.details = details

    def as_dict(self):
        return {"constraint": self.constraint, "message": str(self), **self.details}


class ConfigError(ValueError):
    """Invalid configuration document; ``path`` is the offending key path."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path
