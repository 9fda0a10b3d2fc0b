"""Registry of known objects and their per-object pipeline state."""

import threading
from dataclasses import dataclass
from typing import Dict, Optional

from multipose.core.models import TrackingMode
from multipose.library.crops import ObjectModel
from multipose.services.tracking import TrackState


@dataclass
class ObjectEntry:
    """A known object and what the pipeline currently believes about it."""

    model: ObjectModel
    state: Optional[TrackState] = None
    """Filter state; None until the first accepted acquisition."""

    last_crop_id: Optional[int] = None
    """Crop of the most recent accepted acquisition, for warm starts."""

    @property
    def mode(self) -> TrackingMode:
        if self.state is None:
            return TrackingMode.ACQUISITION
        return self.state.mode


class ObjectRegistry:
    """
    Registry of objects keyed by class id.

    Responsibilities:
    - Store and retrieve object models
    - Hold each object's tracking state between frames
    - Provide thread-safe access to entries
    """

    def __init__(self):
        """Initialize the registry."""
        self._entries: Dict[int, ObjectEntry] = {}
        self._lock = threading.Lock()

    def register(self, model: ObjectModel) -> None:
        """
        Register an object model under its class id.

        Raises:
            ValueError: If the class id is background (0) or already registered.
        """
        if model.class_id == 0:
            raise ValueError("Class id 0 is reserved for background")
        with self._lock:
            if model.class_id in self._entries:
                raise ValueError(f"Class id {model.class_id} is already registered")
            self._entries[model.class_id] = ObjectEntry(model=model)

    def get(self, class_id: int) -> Optional[ObjectEntry]:
        with self._lock:
            return self._entries.get(class_id)

    def set_state(self, class_id: int, state: Optional[TrackState], last_crop_id: Optional[int] = None) -> None:
        """Replace an object's filter state (and warm-start crop when given)."""
        with self._lock:
            entry = self._entries[class_id]
            entry.state = state
            if last_crop_id is not None:
                entry.last_crop_id = last_crop_id

    def class_ids(self) -> list[int]:
        """Registered class ids, ascending."""
        with self._lock:
            return sorted(self._entries)

    def reset(self) -> None:
        """Forget every object's state; models stay registered."""
        with self._lock:
            for entry in self._entries.values():
                entry.state = None
                entry.last_crop_id = None

    def clear(self) -> None:
        with self._lock:
            self._entries.clear()

    def count(self) -> int:
        with self._lock:
            return len(self._entries)
