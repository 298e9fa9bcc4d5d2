"""Weighted point clouds used as stand-ins for measures."""

from dataclasses import dataclass

import numpy as np

CARRIERS = ("plane", "line", "projective-line", "affine-group")


@dataclass(frozen=True, eq=False)
class EmpiricalMeasure:
    """Atoms with positive weights summing to one.

    ``points`` has shape ``(N, d)``; one-dimensional carriers may pass a flat
    array. ``weights=None`` means uniform weights and avoids materialising a
    length-N array for large samples.
    """

    points: np.ndarray
    weights: np.ndarray = None
    carrier: str = "plane"

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if len(pts) == 0:
            raise ValueError("an empirical measure needs at least one atom")
        object.__setattr__(self, "points", pts)
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float).ravel()
            if w.shape[0] != pts.shape[0]:
                raise ValueError("weights and points differ in length")
            if np.any(w <= 0):
                raise ValueError("weights must be positive")
            object.__setattr__(self, "weights", w / w.sum())
        if self.carrier not in CARRIERS:
            raise ValueError(f"unknown carrier {self.carrier!r}")

    def __len__(self):
        return self.points.shape[0]

    @property
    def dim(self):
        return self.points.shape[1]

    @property
    def w(self):
        if self.weights is None:
            return np.full(len(self), 1.0 / len(self))
        return self.weights

    def subset(self, mask):
        w = None if self.weights is None else self.weights[mask]
        return EmpiricalMeasure(self.points[mask], w, self.carrier)

    def map_points(self, fn):
        return EmpiricalMeasure(fn(self.points), self.weights, self.carrier)


def as_measure(obj, carrier="plane"):
    if isinstance(obj, EmpiricalMeasure):
        return obj
    points = getattr(obj, "points", None)
    if points is not None:
        return EmpiricalMeasure(points, None, carrier)
    return EmpiricalMeasure(np.asarray(obj, dtype=float), None, carrier)
