"""Parameter and gradient containers keyed by template weight slot."""

from __future__ import annotations

from pathlib import Path
from typing import Iterator, Mapping

import numpy as np

from .errors import ParseError, ShapeMismatch
from .logic import SourceSpan


class ParameterStore:
    """All slot tensors live in one flat float64 buffer.

    ``view(slot)`` returns a writable reshaped view into the buffer; writes
    through views should be followed by :meth:`touch` so the version counter
    reflects the change.  :meth:`set` and :meth:`assign_flat` do that
    themselves.
    """

    def __init__(self, shapes: Mapping[str, tuple[int, int]], data: np.ndarray | None = None):
        self.shapes: dict[str, tuple[int, int]] = {s: (int(r), int(c)) for s, (r, c) in shapes.items()}
        self.offsets: dict[str, int] = {}
        off = 0
        for slot, (r, c) in self.shapes.items():
            self.offsets[slot] = off
            off += r * c
        self.size = off
        if data is None:
            self.data = np.zeros(off)
        else:
            data = np.asarray(data, dtype=np.float64)
            if data.shape != (off,):
                raise ValueError(f"flat buffer has shape {data.shape}, expected ({off},)")
            self.data = data.copy()
        self.version = 0

    @property
    def layout(self) -> tuple:
        return tuple(self.shapes.items())

    def __contains__(self, slot: str) -> bool:
        return slot in self.shapes

    def __iter__(self) -> Iterator[str]:
        return iter(self.shapes)

    def __len__(self) -> int:
        return len(self.shapes)

    def view(self, slot: str) -> np.ndarray:
        r, c = self.shapes[slot]
        off = self.offsets[slot]
        return self.data[off : off + r * c].reshape(r, c)

    def __getitem__(self, slot: str) -> np.ndarray:
        return self.view(slot).copy()

    def set(self, slot: str, value) -> None:
        value = np.asarray(value, dtype=np.float64)
        shape = self.shapes[slot]
        if value.size != shape[0] * shape[1] or (value.ndim == 2 and value.shape != shape):
            raise ShapeMismatch(slot, shape, value.shape)
        self.view(slot)[...] = value.reshape(shape)
        self.version += 1

    def assign_flat(self, flat: np.ndarray) -> None:
        self.data[...] = flat
        self.version += 1

    def touch(self) -> None:
        self.version += 1

    def copy(self) -> "ParameterStore":
        return ParameterStore(self.shapes, self.data)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, ParameterStore)
            and self.layout == other.layout
            and np.array_equal(self.data, other.data)
        )

    # -- text format: `slotId rows cols v11 v12 ...` -----------------------

    def dumps(self) -> str:
        lines = ["% slot rows cols values (row-major)"]
        for slot, (r, c) in self.shapes.items():
            values = " ".join(repr(float(v)) for v in self.view(slot).ravel())
            lines.append(f"{slot} {r} {c} {values}")
        return "\n".join(lines) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def loads(cls, text: str, file: str | None = None) -> "ParameterStore":
        shapes: dict[str, tuple[int, int]] = {}
        chunks = []
        for no, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("%", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            try:
                slot, r, c = parts[0], int(parts[1]), int(parts[2])
                values = np.array([float(v) for v in parts[3:]])
            except (IndexError, ValueError) as exc:
                raise ParseError(f"malformed parameter line: {exc}", SourceSpan(file, no, 1)) from None
            if values.size != r * c:
                raise ParseError(f"slot {slot} declares {r}x{c} but lists {values.size} values", SourceSpan(file, no, 1))
            if slot in shapes:
                raise ParseError(f"slot {slot} listed twice", SourceSpan(file, no, 1))
            shapes[slot] = (r, c)
            chunks.append(values)
        data = np.concatenate(chunks) if chunks else np.zeros(0)
        return cls(shapes, data)

    @classmethod
    def load(cls, path: str | Path) -> "ParameterStore":
        p = Path(path)
        return cls.loads(p.read_text(encoding="utf-8"), str(p))


class GradientStore(Mapping):
    """Slot -> gradient array, holding only slots the evaluated graph used."""

    def __init__(self, grads: dict[str, np.ndarray]):
        self._grads = grads

    @classmethod
    def from_flat(cls, store: ParameterStore, flat: np.ndarray, slots) -> "GradientStore":
        out = {}
        for slot in store.shapes:
            if slot in slots:
                r, c = store.shapes[slot]
                off = store.offsets[slot]
                out[slot] = flat[off : off + r * c].reshape(r, c).copy()
        return cls(out)

    def __getitem__(self, slot: str) -> np.ndarray:
        return self._grads[slot]

    def __iter__(self):
        return iter(self._grads)

    def __len__(self) -> int:
        return len(self._grads)

    def get_or_zero(self, slot: str, shape) -> np.ndarray:
        g = self._grads.get(slot)
        return np.zeros(shape) if g is None else g
