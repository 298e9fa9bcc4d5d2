"""Scale entropy of empirical measures.

Dyadic frames, Shannon and conditional entropy, components, entropy
dimension, projection and thickened-slice entropies, and the
concentration / saturation predicates used by the inverse theorems.

All entropies are base 2. Cells are half-open, ``[k 2^-n, (k+1) 2^-n)``,
so boundary points go up/right.
"""

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from . import _parallel as par
from .affine import AffineMap2, ProjectivePoint, singular_values, svd2
from .exceptions import BiasRuleViolated, EmptyMeasure, WindowTooWide
from .measures import EmpiricalMeasure, as_measure

LN2 = np.log(2.0)
# an estimate at level n is trusted when N >= BIAS_FACTOR * (occupied cells)
BIAS_FACTOR = 10
KEY_DECIMALS = 12


# ---------------------------------------------------------------- frames


@dataclass(frozen=True, eq=False)
class DyadicFrame:
    """A level-``n`` dyadic partition in some coordinate system.

    ``kind`` is one of ``standard2d``, ``rotated`` (needs ``W``),
    ``nonconformal`` (needs ``g``), ``affine`` (six-coordinate grid on the
    affine group, points given as ``vec6``) and ``standard1d``.
    """

    kind: str
    level: int
    W: ProjectivePoint = None
    g: AffineMap2 = None

    def __post_init__(self):
        if self.kind not in ("standard2d", "rotated", "nonconformal", "affine", "standard1d"):
            raise ValueError(f"unknown frame kind {self.kind!r}")
        if self.kind == "rotated" and self.W is None:
            raise ValueError("a rotated frame needs W")
        if self.kind == "nonconformal":
            if self.g is None:
                raise ValueError("a non-conformal frame needs g")
            a1, a2 = singular_values(self.g.A)
            if not a1 > a2:
                raise ValueError("non-conformal frames need alpha1(A_g) > alpha2(A_g)")
            s = svd2(self.g.A)
            object.__setattr__(self, "_inv", np.linalg.inv(s.V @ s.D))
        object.__setattr__(self, "level", int(self.level))

    @classmethod
    def standard2d(cls, n):
        return cls("standard2d", n)

    @classmethod
    def rotated(cls, W, n):
        return cls("rotated", n, W=W if isinstance(W, ProjectivePoint) else ProjectivePoint(W))

    @classmethod
    def nonconformal(cls, g, n):
        return cls("nonconformal", n, g=g)

    @classmethod
    def affine_grid(cls, n):
        return cls("affine", n)

    @classmethod
    def standard1d(cls, n):
        return cls("standard1d", n)

    def with_level(self, n):
        return DyadicFrame(self.kind, n, self.W, self.g)

    @property
    def dim(self):
        return {"standard1d": 1, "affine": 6}.get(self.kind, 2)

    @property
    def name(self):
        if self.kind == "rotated":
            return f"rotated({self.W.angle:.12g})"
        if self.kind == "nonconformal":
            return "nonconformal(" + ",".join(f"{x:.12g}" for x in self.g.vec6()) + ")"
        return self.kind

    def coordinates(self, points):
        """Coordinates in which this frame is the standard grid."""
        x = np.asarray(points, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.shape[1] != self.dim:
            raise ValueError(f"{self.kind} frame expects {self.dim}-dimensional points, got {x.shape[1]}")
        if self.kind == "rotated":
            w = self.W.vector
            return np.stack([x @ w, x @ self.W.perp.vector], axis=1)
        if self.kind == "nonconformal":
            return x @ self._inv.T
        return x

    def cell_floats(self, points):
        """Cell coordinates as exact float integers; valid at any level."""
        return np.floor(self.coordinates(points) * 2.0**self.level)

    def cells(self, points):
        c = self.cell_floats(points)
        if c.size and np.abs(c).max() >= 2.0**62:
            raise ValueError(f"cell indices overflow int64 at level {self.level}; use cell_floats")
        return c.astype(np.int64)


def cell_index(point, frame):
    """Integer cell coordinates of one point."""
    return tuple(int(c) for c in frame.cells(np.asarray(point, dtype=float)[None])[0])


def group_ids(cells):
    """Dense integer labels for the rows of an integer array, plus the group count."""
    cells = np.asarray(cells, dtype=np.int64)
    if cells.ndim == 1:
        cells = cells[:, None]
    lo = cells.min(axis=0)
    span = cells.max(axis=0) - lo + 1
    if np.sum(np.log2(span.astype(float))) < 62:
        key = np.zeros(len(cells), dtype=np.int64)
        for j in range(cells.shape[1]):
            key = key * span[j] + (cells[:, j] - lo[j])
        _, inv = np.unique(key, return_inverse=True)
    else:
        _, inv = np.unique(cells, axis=0, return_inverse=True)
    inv = inv.ravel()
    return inv, int(inv.max()) + 1 if len(inv) else 0


# ---------------------------------------------------------------- entropy


@dataclass(frozen=True)
class EntropyValue:
    bits: float
    atoms_used: int
    correction: float
    cells: int = 0

    @property
    def corrected_bits(self):
        return self.bits + self.correction


def _plugin(masses):
    m = masses[masses > 0]
    m = m / m.sum()
    return float(-np.sum(m * np.log2(m)))


def _miller_madow(cells, atoms):
    return (cells - 1) / (2 * atoms * LN2) if atoms else 0.0


def _masses(ids, count, weights):
    if weights is None:
        return np.bincount(ids, minlength=count).astype(float)
    return np.bincount(ids, weights=weights, minlength=count)


def _entropy_of_cells(cells, weights):
    ids, count = group_ids(cells)
    masses = _masses(ids, count, weights)
    N = len(ids)
    return EntropyValue(_plugin(masses), N, _miller_madow(count, N), count)


def entropy(nu, frame):
    """Plug-in ``H(nu, frame)``; the Miller-Madow term is recorded separately."""
    nu = as_measure(nu)
    return _entropy_of_cells(frame.cells(nu.points), nu.weights)


def joint_entropy(nu, frames):
    """Entropy of the common refinement of several frames."""
    nu = as_measure(nu)
    cells = np.concatenate([f.cells(nu.points) for f in frames], axis=1)
    return _entropy_of_cells(cells, nu.weights)


def conditional_entropy(nu, fine, coarse):
    """``H(nu, fine | coarse) = H(nu, fine v coarse) - H(nu, coarse)``."""
    joint = joint_entropy(nu, [fine, coarse])
    base = entropy(nu, coarse)
    return EntropyValue(
        joint.bits - base.bits, joint.atoms_used, joint.correction - base.correction, joint.cells
    )


def grouped_entropy(groups, cells, weights=None):
    """Entropy of ``cells`` within each group.

    Returns ``(mass, bits, atoms)`` per group, where ``mass`` is the group's
    total weight and ``bits`` the plug-in entropy of the normalised
    restriction.
    """
    g_ids, G = group_ids(groups)
    pair = np.concatenate([np.asarray(groups).reshape(len(g_ids), -1), np.asarray(cells).reshape(len(g_ids), -1)], axis=1)
    p_ids, P = group_ids(pair)
    w = np.ones(len(g_ids)) if weights is None else np.asarray(weights, float)
    pm = np.bincount(p_ids, weights=w, minlength=P)
    # group of every pair
    pg = np.zeros(P, dtype=np.int64)
    pg[p_ids] = g_ids
    gm = np.bincount(pg, weights=pm, minlength=G)
    q = pm / gm[pg]
    bits = -np.bincount(pg, weights=q * np.log2(q), minlength=G)
    atoms = np.bincount(g_ids, minlength=G)
    total = gm.sum()
    return gm / total, np.maximum(bits, 0.0), atoms


def entropy_table(nu, levels, frame=None):
    """Rows ``(n, frame, bits, corrected_bits, atoms_used)`` for a range of levels."""
    frame = frame or DyadicFrame.standard2d(0)
    rows = []
    for n in levels:
        f = frame.with_level(n)
        h = entropy(nu, f)
        rows.append(
            {"n": int(n), "frame": f.name, "bits": h.bits, "corrected_bits": h.corrected_bits, "atoms_used": h.atoms_used}
        )
    return rows


# ---------------------------------------------------------------- components


@dataclass(frozen=True, eq=False)
class ComponentDraw:
    cell: tuple
    mass: float
    conditional: EmpiricalMeasure
    rescaled: EmpiricalMeasure


def _component(nu, frame, ids, gid, cells):
    mask = ids == gid
    sub = nu.subset(mask)
    cell = cells[np.nonzero(mask)[0][0]]
    scaled = frame.coordinates(sub.points) * 2.0**frame.level - cell
    mass = float(nu.w[mask].sum())
    return ComponentDraw(tuple(int(c) for c in cell), mass, sub, EmpiricalMeasure(scaled, sub.weights, nu.carrier))


def draw_component(nu, n, seed, frame=None):
    """Draw the level-``n`` component ``nu_{x,n}``: cell ``D`` with probability ``nu(D)``."""
    nu = as_measure(nu)
    if len(nu) == 0:
        raise EmptyMeasure("cannot draw a component of an empty measure")
    frame = (frame or DyadicFrame.standard2d(0)).with_level(n)
    rng = par.substream(seed, par.TAG_COMPONENT, n)
    x = int(rng.choice(len(nu), p=nu.w)) if nu.weights is not None else int(rng.integers(len(nu)))
    cells = frame.cells(nu.points)
    ids, _ = group_ids(cells)
    return _component(nu, frame, ids, ids[x], cells)


def components(nu, n, frame=None):
    """All level-``n`` components with their masses (full enumeration)."""
    nu = as_measure(nu)
    frame = (frame or DyadicFrame.standard2d(0)).with_level(n)
    cells = frame.cells(nu.points)
    ids, count = group_ids(cells)
    return [_component(nu, frame, ids, g, cells) for g in range(count)]


def expected_component_entropy(nu, n, m, frame=None):
    """``E H(nu_{x,n}, D_{n+m})`` with the expectation enumerated over cells."""
    nu = as_measure(nu)
    frame = frame or DyadicFrame.standard2d(0)
    coarse = frame.with_level(n).cells(nu.points)
    fine = frame.with_level(n + m).cells(nu.points)
    mass, bits, _ = grouped_entropy(coarse, fine, nu.weights)
    return float(np.sum(mass * bits))


def _component_keys(nu, level, frame):
    """Masses of level-``level`` components keyed by their rescaled measure."""
    f = frame.with_level(level)
    cells = f.cell_floats(nu.points)
    _, ids = np.unique(cells, axis=0, return_inverse=True)
    ids = ids.ravel()
    count = int(ids.max()) + 1
    scaled = np.round(f.coordinates(nu.points) * 2.0**level - cells, KEY_DECIMALS) + 0.0
    w = nu.w
    mass = np.bincount(ids, weights=w, minlength=count)
    order = np.lexsort((*scaled.T[::-1], ids))
    out = {}
    bounds = np.searchsorted(ids[order], np.arange(count + 1))
    for g in range(count):
        rows = order[bounds[g] : bounds[g + 1]]
        pts = scaled[rows]
        ww = np.round(w[rows] / mass[g], KEY_DECIMALS)
        key = (pts.tobytes(), ww.tobytes())
        out[key] = out.get(key, 0.0) + mass[g]
    return out


def component_tv(nu, n, m, frame=None):
    """Total variation between component laws ``P_n`` and ``Q_{n,m}``.

    ``P_n``: level ``i`` uniform on ``0..n``, then the rescaled component
    ``nu^{x,i}``. ``Q_{n,m}``: a component of a component, i.e. level
    ``i + j`` with ``j`` uniform on ``0..m``. Components are identified by
    their rescaled measure. Returns ``(tv, tv * n / m)``.
    """
    nu = as_measure(nu)
    frame = frame or DyadicFrame.standard2d(0)
    per_level = [_component_keys(nu, lvl, frame) for lvl in range(n + m + 1)]
    P, Q = {}, {}
    for i in range(n + 1):
        for key, mass in per_level[i].items():
            P[key] = P.get(key, 0.0) + mass / (n + 1)
        for j in range(m + 1):
            for key, mass in per_level[i + j].items():
                Q[key] = Q.get(key, 0.0) + mass / ((n + 1) * (m + 1))
    keys = set(P) | set(Q)
    tv = 0.5 * sum(abs(P.get(k, 0.0) - Q.get(k, 0.0)) for k in keys)
    return tv, tv * n / m


# ---------------------------------------------------------------- dimension


def occupied_cells(nu, frame):
    nu = as_measure(nu)
    _, count = group_ids(frame.cells(nu.points))
    return count


@dataclass(frozen=True)
class DimensionFit:
    slope: float
    intercept: float
    corrected_slope: float
    levels: tuple
    bits: tuple
    corrected_bits: tuple
    residuals: tuple

    def to_dict(self):
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


def check_bias_rule(nu, frame, factor=BIAS_FACTOR, error=WindowTooWide):
    cells = occupied_cells(nu, frame)
    if len(as_measure(nu)) < factor * cells:
        raise error(
            f"{cells} occupied cells at level {frame.level} need N >= {factor * cells}, "
            f"have N = {len(as_measure(nu))}"
        )
    return cells


def entropy_dimension(samples, window, frame=None, check_bias=True):
    """Least-squares slope of ``H(nu, D_n)`` against ``n`` over ``window``.

    Returns ``(alpha_hat, fit)``. The bias rule requires ``N`` to be at least
    ten times the number of occupied cells at the finest level.
    """
    nu = as_measure(samples)
    n0, n1 = int(window[0]), int(window[1])
    if n1 <= n0:
        raise ValueError("window needs n1 > n0")
    frame = frame or (DyadicFrame.standard1d(0) if nu.dim == 1 else DyadicFrame.standard2d(0))
    if check_bias:
        check_bias_rule(nu, frame.with_level(n1))
    levels = np.arange(n0, n1 + 1)
    values = [entropy(nu, frame.with_level(n)) for n in levels]
    bits = np.array([v.bits for v in values])
    corr = np.array([v.corrected_bits for v in values])
    slope, intercept = np.polyfit(levels, bits, 1)
    cslope, _ = np.polyfit(levels, corr, 1)
    resid = bits - (slope * levels + intercept)
    fit = DimensionFit(
        float(slope),
        float(intercept),
        float(cslope),
        tuple(int(x) for x in levels),
        tuple(float(x) for x in bits),
        tuple(float(x) for x in corr),
        tuple(float(x) for x in resid),
    )
    return float(slope), fit


def multiscale_check(nu, k, n, m, frame=None):
    """``|(1/n) H(nu, D_{k+n}) - E_{k<=i<=k+n} (1/m) H(nu_{x,i}, D_{i+m})|`` by enumeration."""
    nu = as_measure(nu)
    frame = frame or (DyadicFrame.standard1d(0) if nu.dim == 1 else DyadicFrame.standard2d(0))
    lhs = entropy(nu, frame.with_level(k + n)).bits / n
    rhs = np.mean([expected_component_entropy(nu, i, m, frame) / m for i in range(k, k + n + 1)])
    return float(abs(lhs - rhs))


# ---------------------------------------------------------------- projections


def project(nu, W):
    """Push ``nu`` forward by ``x -> <x, w>``."""
    nu = as_measure(nu)
    w = (W if isinstance(W, ProjectivePoint) else ProjectivePoint(W)).vector
    return EmpiricalMeasure(nu.points @ w, nu.weights, "line")


def projection_entropy(nu, W, n):
    return entropy(project(nu, W), DyadicFrame.standard1d(n))


def _line_entropy(t, n, weights):
    c = np.floor(t * 2.0**n).astype(np.int64)
    c -= c.min()
    masses = np.bincount(c, weights=weights) if c.max() < 1 << 26 else _masses(*group_ids(c), weights)
    return _plugin(masses)


@dataclass(frozen=True)
class SweepResult:
    inf_bits: float
    argmin: float
    angles: np.ndarray
    bits: np.ndarray
    level: int


def projection_entropy_sweep(nu, n, grid_size=256, threads=None):
    """``H(pi_W nu, D_n)`` on ``grid_size`` equally spaced directions; returns the minimum."""
    if grid_size < 64:
        raise ValueError("grid_size must be at least 64")
    nu = as_measure(nu)
    angles = np.arange(grid_size) * np.pi / grid_size
    pts = nu.points
    weights = nu.weights

    def work(a):
        return _line_entropy(pts[:, 0] * np.cos(a) + pts[:, 1] * np.sin(a), n, weights)

    bits = np.array(par.parallel_map(work, angles, threads))
    j = int(np.argmin(bits))
    return SweepResult(float(bits[j]), float(angles[j]), angles, bits, int(n))


@dataclass(frozen=True)
class SliceSummary:
    mean: float
    quantiles: dict
    strips: int
    strip_mass: np.ndarray
    strip_bits: np.ndarray


def thickened_slice_entropy(nu, W, strip_level, fine_level, threshold=1e-3):
    """Entropy of ``pi_{W perp}`` of ``nu`` restricted to each level-``strip_level`` strip of ``pi_W``.

    Strips with mass at most ``threshold`` are dropped; the summary is
    mass-weighted over the rest.
    """
    nu = as_measure(nu)
    frame = DyadicFrame.rotated(W, 0)
    coords = frame.coordinates(nu.points)
    strips = np.floor(coords[:, 0] * 2.0**strip_level).astype(np.int64)
    fine = np.floor(coords[:, 1] * 2.0**fine_level).astype(np.int64)
    mass, bits, _ = grouped_entropy(strips, fine, nu.weights)
    keep = mass > threshold
    if not keep.any():
        raise EmptyMeasure("no strip carries more than the threshold mass")
    m, b = mass[keep], bits[keep]
    order = np.argsort(b)
    cdf = np.cumsum(m[order]) / m.sum()
    q = {str(p): float(b[order][np.searchsorted(cdf, p)]) for p in (0.1, 0.5, 0.9)}
    return SliceSummary(float(np.sum(m * b) / m.sum()), q, int(keep.sum()), m, b)


# ---------------------------------------------------------------- predicates


def max_window_mass(t, width, weights=None):
    """Largest mass in a closed window ``[u, u + width]`` of the line (exact)."""
    t = np.asarray(t, dtype=float)
    order = np.argsort(t)
    ts = t[order]
    w = np.full(len(t), 1.0 / len(t)) if weights is None else np.asarray(weights, float)[order]
    cum = np.concatenate([[0.0], np.cumsum(w)])
    hi = np.searchsorted(ts, ts + width, side="right")
    gains = cum[hi] - cum[np.arange(len(ts))]
    j = int(np.argmax(gains))
    return float(gains[j]), float(ts[j]), order[j : hi[j]]


def _perp_coordinate(nu, W):
    W = W if isinstance(W, ProjectivePoint) else ProjectivePoint(W)
    return nu.points @ W.perp.vector


def is_concentrated(nu, W, delta):
    """Is some translate of ``W`` carrying mass ``>= 1 - delta`` within distance ``delta``?"""
    nu = as_measure(nu)
    mass, _, _ = max_window_mass(_perp_coordinate(nu, W), 2 * delta, nu.w)
    return mass >= 1 - delta


def is_concentrated_multi(nu, W, delta, m):
    """Greedy version with ``m`` translates of ``W``."""
    nu = as_measure(nu)
    t = _perp_coordinate(nu, W)
    w = nu.w.copy()
    alive = np.ones(len(t), dtype=bool)
    total = 0.0
    for _ in range(m):
        if not alive.any():
            break
        idx = np.nonzero(alive)[0]
        mass, _, taken = max_window_mass(t[idx], 2 * delta, w[idx])
        total += mass
        alive[idx[taken]] = False
    return total >= 1 - delta


def is_point_concentrated(nu, delta, max_centers=4096):
    """Does a disc of radius ``delta`` carry mass ``>= 1 - delta``?

    Centres are tried at the atoms (up to ``max_centers`` of the heaviest)
    and at the coordinate-wise median, so a ``True`` answer is always
    witnessed.
    """
    nu = as_measure(nu)
    pts = nu.points
    w = nu.w
    centers = pts[np.argsort(-w, kind="stable")[:max_centers]]
    centers = np.vstack([centers, np.median(pts, axis=0)])
    tree = cKDTree(pts)
    best = 0.0
    for c in centers:
        idx = tree.query_ball_point(c, delta)
        best = max(best, float(w[idx].sum()))
        if best >= 1 - delta:
            return True
    return False


def is_saturated(nu, V, eps, m):
    """``H_m(nu) >= 1 + H_m(pi_{V perp} nu) - eps`` in the ``V + V perp`` frame."""
    nu = as_measure(nu)
    V = V if isinstance(V, ProjectivePoint) else ProjectivePoint(V)
    h = entropy(nu, DyadicFrame.rotated(V, m)).bits / m
    hp = projection_entropy(nu, V.perp, m).bits / m
    return h >= 1 + hp - eps


def uniform_entropy_dimension_test(samples, alpha, eps, m, n, frame=None, check_bias=True):
    """``P_{0<=i<=n}(|H_m(nu^{x,i}) - alpha| < eps)`` with components enumerated."""
    nu = as_measure(samples)
    frame = frame or (DyadicFrame.standard1d(0) if nu.dim == 1 else DyadicFrame.standard2d(0))
    if check_bias:
        check_bias_rule(nu, frame.with_level(n + m), error=BiasRuleViolated)
    total = 0.0
    for i in range(n + 1):
        coarse = frame.with_level(i).cells(nu.points)
        fine = frame.with_level(i + m).cells(nu.points)
        mass, bits, _ = grouped_entropy(coarse, fine, nu.weights)
        total += float(np.sum(mass[np.abs(bits / m - alpha) < eps]))
    return total / (n + 1)
