"""Slot layouts for square matrices inside fixed-width plaintext vectors.

A single d x d matrix occupies slots [0, d*d) in row-major order.  A batch
of g matrices of the same order is laid out batch-major: matrix t occupies
slots [t*d*d, (t+1)*d*d), each block row-major.  Unused slots are zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, DimensionError, LayoutError


@dataclass(frozen=True)
class Layout:
    """Describes how matrices are packed into slots: order d, batch size g."""

    d: int
    g: int = 1

    def __post_init__(self):
        if self.d < 1 or self.g < 1:
            raise LayoutError(f"layout must have d >= 1 and g >= 1, got {self}")

    @property
    def used(self) -> int:
        return self.d * self.d * self.g


@dataclass
class PackedPlaintext:
    """A flat slot vector plus the layout describing its contents."""

    slots: np.ndarray
    layout: Layout

    def __post_init__(self):
        self.slots = np.ascontiguousarray(self.slots, dtype=np.float64)
        if self.slots.ndim != 1:
            raise LayoutError(f"slots must be 1-D, got shape {self.slots.shape}")
        if self.layout.used > self.slots.shape[0]:
            raise CapacityError(
                f"layout {self.layout} needs {self.layout.used} slots, "
                f"have {self.slots.shape[0]}"
            )

    @property
    def slot_count(self) -> int:
        return self.slots.shape[0]


def _check_square(m) -> np.ndarray:
    a = np.ascontiguousarray(m, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {a.shape}")
    return a


def encode_matrix(m, slot_count: int) -> PackedPlaintext:
    """Pack one square matrix row-major into a zero-filled slot vector."""
    a = _check_square(m)
    d = a.shape[0]
    if d * d > slot_count:
        raise CapacityError(f"order-{d} matrix needs {d * d} slots, have {slot_count}")
    slots = np.zeros(slot_count, dtype=np.float64)
    slots[: d * d] = a.ravel()
    return PackedPlaintext(slots, Layout(d, 1))


def decode_matrix(p: PackedPlaintext) -> np.ndarray:
    """Inverse of encode_matrix for a g=1 layout."""
    if p.layout.g != 1:
        raise LayoutError(f"decode_matrix needs g=1, got {p.layout}")
    d = p.layout.d
    return p.slots[: d * d].reshape(d, d).copy()


def encode_batch(ms, slot_count: int) -> PackedPlaintext:
    """Pack g same-order square matrices batch-major into one slot vector."""
    mats = [_check_square(m) for m in ms]
    if not mats:
        raise DimensionError("empty batch")
    d = mats[0].shape[0]
    for m in mats[1:]:
        if m.shape[0] != d:
            raise DimensionError(f"mixed orders in batch: {d} vs {m.shape[0]}")
    g = len(mats)
    if d * d * g > slot_count:
        raise CapacityError(
            f"batch of {g} order-{d} matrices needs {d * d * g} slots, have {slot_count}"
        )
    slots = np.zeros(slot_count, dtype=np.float64)
    for t, m in enumerate(mats):
        slots[t * d * d : (t + 1) * d * d] = m.ravel()
    return PackedPlaintext(slots, Layout(d, g))


def decode_batch(p: PackedPlaintext) -> list[np.ndarray]:
    """Inverse of encode_batch; returns the g matrices."""
    d, g = p.layout.d, p.layout.g
    return [p.slots[t * d * d : (t + 1) * d * d].reshape(d, d).copy() for t in range(g)]
