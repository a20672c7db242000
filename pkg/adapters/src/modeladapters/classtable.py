"""Reader for the engine's class-table file (classes.json).

The format is shared with the pseudo-label engine: a JSON object with a
``classes`` array of ``{"id", "name", "aliases"}`` entries, ids dense
from 0, id 0 being background.  This module reimplements just enough to
resolve prompt names to canonical class ids; the adapters talk to the
engine only through files, never through its Python API.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .errors import AdapterError


@dataclass(frozen=True)
class ClassEntry:
    class_id: int
    name: str
    aliases: tuple[str, ...] = ()


class ClassTable:
    def __init__(self, entries: list[ClassEntry]):
        ids = [e.class_id for e in entries]
        if ids != list(range(len(ids))):
            raise AdapterError(f"class ids must be dense from 0, got {ids}")
        if len(entries) < 2:
            raise AdapterError("class table needs background plus at least one class")
        self.entries = tuple(entries)
        self._by_name: dict[str, int] = {}
        for e in entries:
            for name in (e.name, *e.aliases):
                if name in self._by_name and self._by_name[name] != e.class_id:
                    raise AdapterError(f"class name {name!r} maps to two ids")
                self._by_name[name] = e.class_id

    @classmethod
    def load(cls, path: Path | str) -> "ClassTable":
        path = Path(path)
        try:
            data = json.loads(path.read_text("utf-8"))
        except FileNotFoundError:
            raise AdapterError(f"class table {path} does not exist") from None
        except json.JSONDecodeError as exc:
            raise AdapterError(f"malformed class table {path}: {exc}") from exc
        try:
            entries = [
                ClassEntry(int(e["id"]), str(e["name"]), tuple(e.get("aliases", ())))
                for e in data["classes"]
            ]
        except (KeyError, TypeError) as exc:
            raise AdapterError(f"malformed class table {path}: {exc}") from exc
        return cls(entries)

    def resolve(self, name: str) -> int:
        """Canonical name or alias -> class id."""
        if name not in self._by_name:
            known = sorted(self._by_name)
            raise AdapterError(f"unknown class name {name!r} (known: {known})")
        return self._by_name[name]

    def name_of(self, class_id: int) -> str:
        if not 0 <= class_id < len(self.entries):
            raise AdapterError(f"class id {class_id} not in table")
        return self.entries[class_id].name

    def foreground_names(self) -> list[str]:
        return [e.name for e in self.entries[1:]]

    def unknown_names(self, names) -> list[str]:
        return sorted({n for n in names if n not in self._by_name})
