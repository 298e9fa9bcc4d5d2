"""Exponential separation of cylinder maps.

Every level-n cylinder map is embedded as the six free entries of its 3x3
matrix, so ``norm_distance`` is plain Euclidean distance in R^6 and the
minimum over distinct words is a closest-pair problem.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from . import _parallel as par
from .exceptions import BudgetExceeded
from .ifs import DEFAULT_WORD_CAP, IfsSystem

COINCIDENCE_TOL = 1e-13
FIT_FROM = 3
BRUTE_FORCE_LIMIT = 1 << 12


def _decode(index, k, n):
    # lexicographic rank -> word; all_words uses the same order
    word = []
    for _ in range(n):
        index, s = divmod(index, k)
        word.append(int(s))
    return tuple(reversed(word))


def cylinder_vectors(system, n, cap=DEFAULT_WORD_CAP):
    """Six-vectors of all ``phi_w``, ``w in Lambda^n``, in lexicographic order."""
    k = system.k
    if k**n > cap:
        raise BudgetExceeded(f"|Lambda|^n = {k}^{n} exceeds the cap {cap}")
    A = np.eye(2)[None]
    b = np.zeros((1, 2))
    for _ in range(n):
        m = len(A)
        sym = np.tile(np.arange(k), m)
        parent = np.repeat(np.arange(m), k)
        b = b[parent] + np.einsum("nij,nj->ni", A[parent], system.translations[sym])
        A = A[parent] @ system.linear[sym]
    return np.concatenate([A.reshape(-1, 4), b], axis=1)


def normalize_system(system, level=8, cap=1 << 14):
    """Conjugate by a homothety so the attractor's bounding box has unit diameter.

    The box is taken from the images of a fixed point under cylinders of
    ``k^j <= cap``; linear parts are unchanged, translations are rescaled.
    """
    k = system.k
    depth = max(1, min(level, int(np.log(cap) / np.log(max(k, 2)))))
    x0 = system.maps[0].fixed_point()
    V = cylinder_vectors(system, depth, cap=max(cap, k**depth))
    pts = np.einsum("nij,j->ni", V[:, :4].reshape(-1, 2, 2), x0) + V[:, 4:]
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    diam = float(np.hypot(*(hi - lo)))
    if diam <= 0:
        return system, 1.0
    b = (system.translations + np.einsum("nij,j->ni", system.linear, lo) - lo) / diam
    return IfsSystem.from_arrays(system.linear, b, system.probs, name=system.name), diam


def _lex_min_pair(tree, X, d, r):
    # smallest (i, j) in lexicographic order among pairs at distance <= r
    best = None
    for i in np.flatnonzero(d <= r):
        for j in tree.query_ball_point(X[i], r):
            if j == i:
                continue
            pair = (min(i, j), max(i, j))
            if best is None or pair < best:
                best = pair
    return best


def closest_pair(X):
    """Exact closest pair of rows of ``X``; returns ``(distance, (i, j))`` with ``i < j``.

    Ties are broken by the lexicographically smallest index pair.
    """
    X = np.asarray(X, dtype=float)
    if len(X) < 2:
        return None, None
    tree = cKDTree(X)
    d, _ = tree.query(X, k=2)
    d = d[:, 1]
    m = float(d.min())
    # the tree's distances carry rounding; recompute exactly for the candidates
    r = m * (1 + 1e-12) + 1e-300
    i, j = _lex_min_pair(tree, X, d, r)
    return float(np.linalg.norm(X[i] - X[j])), (int(i), int(j))


def closest_pair_brute(X):
    """O(N^2) reference used to cross-check ``closest_pair``."""
    X = np.asarray(X, dtype=float)
    N = len(X)
    if N < 2:
        return None, None
    if N > BRUTE_FORCE_LIMIT:
        raise BudgetExceeded(f"brute force limited to {BRUTE_FORCE_LIMIT} points")
    best = min(float(np.linalg.norm(X[i + 1 :] - X[i], axis=1).min()) for i in range(N - 1))
    # same tie rule as closest_pair
    ties = [
        (i, j)
        for i in range(N - 1)
        for j in np.flatnonzero(np.linalg.norm(X[i + 1 :] - X[i], axis=1) <= best * (1 + 1e-12) + 1e-300) + i + 1
    ]
    i, j = min(ties)
    return float(np.linalg.norm(X[i] - X[j])), (int(i), int(j))


def distinct_representatives(X, tol=COINCIDENCE_TOL):
    """Indices of one representative (the smallest index) per coincidence class.

    Classes are the connected components of the graph joining points closer
    than ``tol``.
    """
    N = len(X)
    pairs = cKDTree(X).query_pairs(tol, output_type="ndarray")
    if len(pairs) == 0:
        return np.arange(N)
    g = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(N, N))
    _, labels = connected_components(g, directed=False)
    _, first = np.unique(labels, return_index=True)
    return np.sort(first)


def min_pair_distance(system, n, cap=DEFAULT_WORD_CAP, distinct=False):
    """Minimum ``norm_distance`` between ``phi_v`` and ``phi_w`` over words ``v != w`` of length n.

    Returns ``(distance, (v, w))``, or ``(None, None)`` when there is no pair
    (a single map, or a single coincidence class with ``distinct=True``).
    """
    X = cylinder_vectors(system, n, cap)
    idx = distinct_representatives(X) if distinct else np.arange(len(X))
    dist, pair = closest_pair(X[idx])
    if pair is None:
        return None, None
    i, j = idx[pair[0]], idx[pair[1]]
    return dist, (_decode(int(i), system.k, n), _decode(int(j), system.k, n))


@dataclass
class SeparationRecord:
    n: int
    word_count: int
    min_distance: float | None
    pair: tuple | None

    def to_dict(self):
        return {
            "n": self.n,
            "word_count": self.word_count,
            "min_distance": self.min_distance,
            "pair": None if self.pair is None else [list(w) for w in self.pair],
        }


@dataclass
class SeparationReport:
    records: list
    slope: float | None
    intercept: float | None
    coincidence: bool
    mode: str
    metric: str = "norm_distance (Frobenius, 3x3 embedding)"
    scale: float = 1.0
    cap: int = DEFAULT_WORD_CAP
    all_pairs: list = field(default_factory=list)

    @property
    def c_hat(self):
        return None if self.slope is None else 2.0**self.slope

    def slope_so_far(self):
        out = []
        for r in self.records:
            out.append(_fit([q for q in self.records if q.n <= r.n])[0])
        return out

    def to_dict(self):
        return {
            "records": [r.to_dict() for r in self.records],
            "slope": self.slope,
            "intercept": self.intercept,
            "c_hat": self.c_hat,
            "coincidence": self.coincidence,
            "mode": self.mode,
            "metric": self.metric,
            "normalization_scale": self.scale,
            "cap": self.cap,
            "all_pairs_records": [r.to_dict() for r in self.all_pairs],
        }

    def table(self):
        return [
            {"n": r.n, "count": r.word_count, "min_distance": r.min_distance, "slope_so_far": s}
            for r, s in zip(self.records, self.slope_so_far())
        ]


def _fit(records):
    pts = [(r.n, r.min_distance) for r in records if r.n >= FIT_FROM and r.min_distance]
    if len(pts) < 2:
        return None, None
    n, d = np.array(pts, dtype=float).T
    slope, intercept = np.polyfit(n, np.log2(d), 1)
    return float(slope), float(intercept)


def _records(system, n_max, cap, distinct, threads):
    def one(n):
        X = cylinder_vectors(system, n, cap)
        idx = distinct_representatives(X) if distinct else np.arange(len(X))
        dist, pair = closest_pair(X[idx])
        if pair is not None:
            pair = tuple(_decode(int(idx[q]), system.k, n) for q in pair)
        return SeparationRecord(n, len(idx), dist, pair)

    return par.parallel_map(one, range(1, n_max + 1), threads)


def separation_report(system, n_max, cap=DEFAULT_WORD_CAP, normalize=True, threads=None):
    """Per-level minimum separation, a log2-slope fit over ``n >= 3`` and coincidence handling.

    When some level has two words closer than ``COINCIDENCE_TOL`` the report
    is recomputed over distinct maps only (mode ``DistinctMaps``); the
    all-pairs records are kept alongside.
    """
    if n_max < FIT_FROM:
        raise ValueError(f"n_max must be at least {FIT_FROM}")
    if system.k**n_max > cap:
        raise BudgetExceeded(f"|Lambda|^n_max = {system.k}^{n_max} exceeds the cap {cap}")
    scale = 1.0
    if normalize:
        system, scale = normalize_system(system)
    records = _records(system, n_max, cap, False, threads)
    coincidence = any(r.min_distance is not None and r.min_distance < COINCIDENCE_TOL for r in records)
    all_pairs = []
    mode = "AllPairs"
    if coincidence:
        all_pairs = records
        records = _records(system, n_max, cap, True, threads)
        mode = "DistinctMaps"
    slope, intercept = _fit(records)
    return SeparationReport(records, slope, intercept, coincidence, mode, scale=scale, cap=cap, all_pairs=all_pairs)
