"""Exception hierarchy shared by every sub-package."""


class DaVaeError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(DaVaeError, ValueError):
    """A tensor does not have the shape the latent layout requires."""


class GeometryError(ShapeError):
    """Pretrained DiT and latent layout disagree on patchify geometry."""


class LayoutError(DaVaeError, ValueError):
    """Invalid latent layout."""


class ConfigError(DaVaeError, ValueError):
    """Invalid stage configuration.

    Args:
        field: Dotted path of the offending field ("optim.betas[1]")
        message: What is wrong with it
    """

    def __init__(self, field: str, message: str) -> None:
        self.field = field
        self.message = message
        super().__init__(f"{field}: {message}" if field else message)


class NonFiniteLossError(DaVaeError, FloatingPointError):
    """A loss term became NaN or Inf."""

    def __init__(self, term: str, step: int | None = None) -> None:
        self.term = term
        self.step = step
        where = f" at step {step}" if step is not None else ""
        super().__init__(f"Non-finite value in loss term '{term}'{where}")


class CheckpointError(DaVaeError, OSError):
    """Checkpoint is corrupt or does not match its manifest."""


class MissingArtifactError(DaVaeError, FileNotFoundError):
    """A prerequisite checkpoint for a stage is missing."""

    def __init__(self, artifact: str, path: str | None) -> None:
        self.artifact = artifact
        self.path = path
        hint = f" (expected at {path})" if path else " (no path configured)"
        super().__init__(f"Missing prerequisite {artifact}{hint}")
