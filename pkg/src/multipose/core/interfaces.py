"""Protocol interfaces for pluggable file formats and worker pools."""

from typing import Callable, Iterable, Protocol, TypeVar, runtime_checkable

from multipose.library.mesh import MeshModel

T = TypeVar("T")
R = TypeVar("R")


@runtime_checkable
class IMeshFormat(Protocol):
    """Interface for triangle-mesh file formats."""

    @property
    def extensions(self) -> tuple[str, ...]:
        """
        File extensions supported by this format (e.g., ('.ply',)).

        Returns:
            Tuple of supported file extensions (lowercase, with dot).
        """
        ...

    def can_load(self, path: str) -> bool:
        """
        Check if this format can load the given file.

        Args:
            path: Path to mesh file.

        Returns:
            True if this format can load the file, False otherwise.
        """
        ...

    def load(self, path: str) -> MeshModel:
        """
        Load a mesh file.

        Args:
            path: Path to mesh file.

        Returns:
            Indexed triangle mesh in meters.

        Raises:
            MeshFormatError: If the file cannot be parsed.
            FileNotFoundError: If file does not exist.
        """
        ...

    def save(self, mesh: MeshModel, path: str) -> None:
        """Write ``mesh`` to ``path``."""
        ...


class IWorkerPool(Protocol):
    """Interface for the pool that runs independent work items."""

    @property
    def workers(self) -> int:
        """Number of worker threads."""
        ...

    def start(self) -> None:
        """Start the pool."""
        ...

    def stop(self) -> None:
        """Stop the pool (blocks until running items finish)."""
        ...

    def map(self, func: Callable[[T], R], items: Iterable[T]) -> list[R]:
        """Apply ``func`` to every item and return results in item order."""
        ...
