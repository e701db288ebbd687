"""Exception hierarchy shared by every stage of the pipeline."""

from __future__ import annotations


class SRMeshError(Exception):
    """Base class for all errors raised by this package."""


class MeshFormatError(SRMeshError, ValueError):
    """A mesh file could not be parsed."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(f"{where}{message}")


class DegenerateMeshError(MeshFormatError):
    """A face repeats a vertex, has zero area, or the mesh has no extent."""


class TopologyMismatchError(SRMeshError, ValueError):
    """Two meshes that must share connectivity do not, or a mesh is non-manifold."""


class ConfigError(SRMeshError, ValueError):
    """Invalid pipeline configuration."""


class LayoutError(SRMeshError, ValueError):
    """A patch layout cannot be built or filled."""


class ShapeMismatchError(SRMeshError, ValueError):
    """Array shapes, channel counts or lattice shapes do not fit together."""


class FitDivergenceError(SRMeshError, ArithmeticError):
    """Semi-regular surface fitting blew up."""


class TrainingDivergedError(SRMeshError, ArithmeticError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch: int, batch: int, layer_norms: list[float]):
        self.epoch = epoch
        self.batch = batch
        self.layer_norms = layer_norms
        norms = ", ".join(f"{n:.3g}" for n in layer_norms)
        super().__init__(
            f"non-finite loss at epoch {epoch}, batch {batch}; parameter norms [{norms}]"
        )


class CheckpointError(SRMeshError, ValueError):
    """A checkpoint file is corrupt or belongs to another architecture."""


class SimplifyWarning(UserWarning):
    """Simplification stopped before reaching the requested face count."""
