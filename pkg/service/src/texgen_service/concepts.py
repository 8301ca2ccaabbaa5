"""Concept store: fine-tuned weight sets keyed by concept id.

Weights live in memory and, when a directory is configured, are also
written to disk as ``<concept_id>.pt`` so they survive restarts.  There is
no automatic eviction; the capacity cap returns an error instead.
"""

from __future__ import annotations

from pathlib import Path
from typing import Callable


class StoreFull(RuntimeError):
    pass


class ConceptStore:
    def __init__(
        self,
        capacity: int = 64,
        directory: str | Path | None = None,
        factory: Callable[[], tuple] | None = None,
    ):
        self.capacity = capacity
        self.directory = Path(directory) if directory else None
        self.factory = factory
        self._items: dict[str, tuple] = {}
        if self.directory:
            self.directory.mkdir(parents=True, exist_ok=True)

    def _known_ids(self) -> set[str]:
        ids = set(self._items)
        if self.directory:
            ids |= {p.stem for p in self.directory.glob("*.pt")}
        return ids

    def put(self, concept_id: str, denoiser, projection) -> None:
        known = self._known_ids()
        if concept_id not in known and len(known) >= self.capacity:
            raise StoreFull(f"concept store holds {self.capacity} entries")
        self._items[concept_id] = (denoiser, projection)
        if self.directory:
            import torch

            torch.save(
                {"denoiser": denoiser.state_dict(), "projection": projection.state_dict()},
                self.directory / f"{concept_id}.pt",
            )

    def get(self, concept_id: str):
        if concept_id in self._items:
            return self._items[concept_id]
        if self.directory and self.factory:
            path = self.directory / f"{concept_id}.pt"
            if path.exists():
                import torch

                blob = torch.load(path, weights_only=True)
                denoiser, projection = self.factory()
                denoiser.load_state_dict(blob["denoiser"])
                projection.load_state_dict(blob["projection"])
                self._items[concept_id] = (denoiser, projection)
                return self._items[concept_id]
        return None

    def __contains__(self, concept_id: str) -> bool:
        return concept_id in self._known_ids()

    def __len__(self) -> int:
        return len(self._known_ids())
