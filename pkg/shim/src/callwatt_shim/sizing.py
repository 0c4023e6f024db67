"""Recursive serialized-byte estimate for call arguments.

Convention: numbers count as their machine width (8 bytes, bool as 1),
strings as their UTF-8 length, arrays as element count times element
width (duck-typed via `nbytes`), containers as the sum of their
children. Generators, iterators, and other opaque objects are not
sizable; they yield size None plus a flag so the record states the gap
instead of guessing.
"""

from __future__ import annotations

FLAG_NON_SIZABLE = "non-sizable-arg"

_NUMBER_BYTES = 8


def estimate_size(value) -> int | None:
    """Best-effort byte estimate; None when the value is not sizable."""
    if value is None:
        return 0
    if isinstance(value, bool):
        return 1
    if isinstance(value, (int, float, complex)):
        return _NUMBER_BYTES if not isinstance(value, complex) else 2 * _NUMBER_BYTES
    if isinstance(value, str):
        return len(value.encode("utf-8"))
    if isinstance(value, (bytes, bytearray, memoryview)):
        return len(value)
    nbytes = getattr(value, "nbytes", None)
    if isinstance(nbytes, int):
        return nbytes
    if isinstance(value, dict):
        return _sum_children(list(value.keys()) + list(value.values()))
    if isinstance(value, (list, tuple, set, frozenset)):
        return _sum_children(value)
    return None


def _sum_children(children) -> int | None:
    total = 0
    for child in children:
        size = estimate_size(child)
        if size is None:
            return None
        total += size
    return total


def size_arguments(args, kwargs) -> tuple[dict, list[str]]:
    """Per-argument and total sizes for a call's args and kwarg values.

    Returns the record's args_sizes block and any flags raised by
    non-sizable arguments.
    """
    values = list(args or []) + list((kwargs or {}).values())
    per_arg = [estimate_size(v) for v in values]
    flags = [FLAG_NON_SIZABLE] if any(size is None for size in per_arg) else []
    total = sum(size for size in per_arg if size is not None)
    return {"per_arg": per_arg, "total_bytes": total}, flags
