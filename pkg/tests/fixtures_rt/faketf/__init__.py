"""Miniature deterministic stand-in for a DL framework.

Exists so instrumentation fixtures can execute quickly with stable
stdout. No randomness, no state shared between calls, constructors
never print.
"""

from . import data, keras


class Tensor:
    def __init__(self, values):
        self.values = list(values) if isinstance(values, (list, tuple)) else [values]

    def __len__(self):
        return len(self.values)

    def __repr__(self):
        return f"Tensor({self.values})"


def constant(values):
    return Tensor(values)


def zeros(n):
    return Tensor([0] * n)


def add(a, b):
    av = a.values if isinstance(a, Tensor) else [a]
    bv = b.values if isinstance(b, Tensor) else [b]
    size = max(len(av), len(bv))
    av = av * size if len(av) == 1 else av
    bv = bv * size if len(bv) == 1 else bv
    return Tensor([x + y for x, y in zip(av, bv)])


def multiply(a, b):
    av = a.values if isinstance(a, Tensor) else [a]
    bv = b.values if isinstance(b, Tensor) else [b]
    size = max(len(av), len(bv))
    av = av * size if len(av) == 1 else av
    bv = bv * size if len(bv) == 1 else bv
    return Tensor([x * y for x, y in zip(av, bv)])


def reduce_sum(a):
    return sum(a.values)
