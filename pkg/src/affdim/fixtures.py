"""Shipped example systems.

F1-F4 are the reference fixtures; the remaining entries are small controls
used by the tests and the CLI (``affdim fixtures`` lists them all).
"""

import numpy as np

from .affine import AffineMap2, rotation
from .ifs import IfsSystem


def parabola_map(s, t):
    """``(x, y) -> (s x + t, 2 s t x + s^2 y + t^2)``, which preserves ``y = x^2``."""
    return AffineMap2([[s, 0.0], [2 * s * t, s * s]], [t, t * t])


def f1():
    D = np.diag([0.3, 0.2])
    A = [rotation(0.7) @ D, rotation(2.1) @ D]
    return IfsSystem.from_arrays(A, [[0.0, 0.0], [0.6, 0.1]], name="F1")


def f2(ts=(0.0, 0.53, 1.0), s=0.5, name="F2"):
    maps = tuple(parabola_map(s, t) for t in ts)
    return IfsSystem(maps, np.full(len(maps), 1.0 / len(maps)), name)


def f2_rational():
    """F2 with ``t in {0, 1/2, 1}``: ``phi_0 phi_2 = phi_1 phi_0`` exactly."""
    return f2((0.0, 0.5, 1.0), name="F2R")


def f3():
    A = np.diag([0.5, 0.25])
    b = [[0.0, 0.0], [0.5, 0.0], [0.0, 0.5], [0.5, 0.75]]
    return IfsSystem.from_arrays([A] * 4, b, name="F3")


def f4():
    D = np.diag([0.3, 0.2])
    A = [rotation(0.7) @ D, rotation(2.1) @ D]
    return IfsSystem.from_arrays(A, [[0.0, 0.0], [0.35, 0.05]], name="F4")


def f5():
    """Five rotated copies of ``diag(0.55, 0.4)``; ``H(p) > |chi1| + |chi2|`` forces overlaps."""
    D = np.diag([0.55, 0.4])
    angles = [0.7, 2.1, 1.3, 2.9, 0.2]
    b = [[0.0, 0.0], [0.5, 0.1], [0.2, 0.45], [0.45, 0.5], [0.25, 0.2]]
    return IfsSystem.from_arrays([rotation(a) @ D for a in angles], b, name="F5")


def dyadic():
    """``x/2``, ``x/2 + 1/2`` on the first axis, ratio 1/3 on the second."""
    A = np.diag([0.5, 1.0 / 3.0])
    return IfsSystem.from_arrays([A, A], [[0.0, 0.0], [0.5, 0.0]], name="DYADIC")


REGISTRY = {
    "F1": (f1, "non-conformal, totally irreducible, separated"),
    "F2": (f2, "Bandt-Kravchenko parabola system (lower triangular)"),
    "F2R": (f2_rational, "F2 with rationally related translations (exact overlaps)"),
    "F3": (f3, "diagonal carpet control (reducible)"),
    "F4": (f4, "F1 linear parts with translations (0,0), (0.35,0.05)"),
    "F5": (f5, "five-map overlapping irreducible system"),
    "DYADIC": (dyadic, "dyadic homotheties embedded with second-axis ratio 1/3"),
}


def get_fixture(name):
    try:
        factory, _ = REGISTRY[name.upper()]
    except KeyError:
        raise KeyError(f"unknown fixture {name!r}; choose from {sorted(REGISTRY)}") from None
    return factory()
