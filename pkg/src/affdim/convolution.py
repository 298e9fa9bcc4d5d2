"""Measures on the affine group acting on measures on the plane.

``theta.nu`` is the law of ``phi(x)`` with ``phi ~ theta`` and ``x ~ nu``.
Atomic measures on the group are stored as stacked linear parts and
translations.
"""

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from . import _parallel as par
from .affine import AffineMap2, affine_invert, invariant_distance, rotation, singular_values
from .entropy import DyadicFrame, conditional_entropy, entropy
from .exceptions import EmptyFiber, InvalidEccentricity, PreconditionViolated
from .ifs import all_words, sample_attractor
from .measures import EmpiricalMeasure, as_measure
from .separation import distinct_representatives
from .spectral import lyapunov_exponents

THIN_TARGET = 1_000_000
DEDUP_TOL = 1e-13
SURPLUS_EPS = 0.05


class AffineAtomMeasure:
    """Finitely many affine maps with positive weights summing to one."""

    def __init__(self, A, b, weights=None):
        A = np.asarray(A, dtype=float).reshape(-1, 2, 2)
        b = np.asarray(b, dtype=float).reshape(-1, 2)
        if len(A) != len(b) or len(A) == 0:
            raise ValueError("need matching, non-empty linear parts and translations")
        w = np.full(len(A), 1.0 / len(A)) if weights is None else np.asarray(weights, dtype=float).ravel()
        if np.any(w <= 0):
            raise ValueError("weights must be positive")
        if abs(w.sum() - 1) > 1e-9:
            raise ValueError(f"weights sum to {w.sum()}, not 1")
        self.A, self.b, self.weights = A, b, w / w.sum()

    @classmethod
    def from_maps(cls, maps, weights=None):
        return cls([m.A for m in maps], [m.b for m in maps], weights)

    @classmethod
    def delta(cls, phi=None):
        phi = phi or AffineMap2.identity()
        return cls([phi.A], [phi.b])

    @classmethod
    def from_system(cls, system):
        return cls(system.linear, system.translations, system.probs)

    def __len__(self):
        return len(self.A)

    @property
    def atoms(self):
        return [(AffineMap2(A, b), float(w)) for A, b, w in zip(self.A, self.b, self.weights)]

    def vec6(self):
        return np.concatenate([self.A.reshape(-1, 4), self.b], axis=1)

    def as_measure(self):
        """The atoms as points of R^6 (for the affine-group grid)."""
        return EmpiricalMeasure(self.vec6(), self.weights, carrier="affine-group")

    def dedup(self, tol=DEDUP_TOL):
        """Merge atoms whose six-vectors are closer than ``tol``."""
        X = self.vec6()
        reps = distinct_representatives(X, tol)
        if len(reps) == len(X):
            return self
        # assign every atom to its nearest representative
        _, owner = cKDTree(X[reps]).query(X)
        w = np.bincount(owner, self.weights, len(reps))
        return AffineAtomMeasure(self.A[reps], self.b[reps], w)

    def compose_left(self, g):
        """``g o theta``: every atom ``phi`` becomes ``g phi``."""
        return AffineAtomMeasure(g.A @ self.A, np.einsum("ij,nj->ni", g.A, self.b) + g.b, self.weights)

    def compose_right(self, g):
        """``theta o g``."""
        return AffineAtomMeasure(self.A @ g.A, np.einsum("nij,j->ni", self.A, g.b) + self.b, self.weights)

    def convolve(self, other):
        """``theta * theta'``, the law of ``phi o phi'``."""
        i = np.repeat(np.arange(len(self)), len(other))
        j = np.tile(np.arange(len(other)), len(self))
        A = self.A[i] @ other.A[j]
        b = np.einsum("nij,nj->ni", self.A[i], other.b[j]) + self.b[i]
        return AffineAtomMeasure(A, b, self.weights[i] * other.weights[j])

    def entropy_bits(self):
        """Shannon entropy of the weights after merging coincident atoms."""
        w = self.dedup().weights
        return float(-(w * np.log2(w)).sum())

    def max_distance_to(self, g):
        return max(invariant_distance(phi, g) for phi, _ in self.atoms)


def pstar(system, n, cap=None, dedup=False):
    """``p^{*n}``: the maps ``phi_w`` with weights ``p_w`` over ``w in Lambda^n``."""
    kw = {} if cap is None else {"cap": cap}
    _, A, b, p = all_words(system, n, **kw)
    theta = AffineAtomMeasure(A, b, p)
    return theta.dedup() if dedup else theta


def act_convolve(theta, nu, seed=0, target=THIN_TARGET):
    """``theta.nu``: exact product cloud, or ``target`` weighted resamples of it.

    The product is kept exactly when ``|theta| * |nu| <= target``; otherwise
    pairs ``(phi, x)`` are drawn with probability ``theta(phi) nu(x)`` and the
    result carries uniform weights.
    """
    nu = as_measure(nu)
    pts = nu.points
    if pts.shape[1] != 2:
        raise ValueError("theta acts on planar measures")
    m, N = len(theta), len(nu)
    if m * N <= target:
        i = np.repeat(np.arange(m), N)
        j = np.tile(np.arange(N), m)
        # same arithmetic as AffineMap2.__call__, so a point mass theta is bit-exact
        out = np.concatenate([pts @ A.T + b for A, b in zip(theta.A, theta.b)])
        if m == 1 and nu.weights is None:
            return EmpiricalMeasure(out)
        w = theta.weights[i] * nu.w[j]
        return EmpiricalMeasure(out, w)
    rng = par.substream(seed, par.TAG_CONVOLVE, 0)
    i = rng.choice(m, size=target, p=theta.weights)
    j = rng.integers(0, N, size=target) if nu.weights is None else rng.choice(N, size=target, p=nu.weights)
    out = np.einsum("nij,nj->ni", theta.A[i], pts[j]) + theta.b[i]
    return EmpiricalMeasure(out)


def histogram_tv(a, b, level=8):
    """Total variation between two planar measures on the level-``level`` dyadic grid."""
    a, b = as_measure(a), as_measure(b)
    frame = DyadicFrame.standard2d(level)
    ca, cb = frame.cells(a.points), frame.cells(b.points)
    keys, inv = np.unique(np.concatenate([ca, cb]), axis=0, return_inverse=True)
    inv = inv.ravel()
    fa = np.bincount(inv[: len(ca)], a.w, len(keys))
    fb = np.bincount(inv[len(ca) :], b.w, len(keys))
    return float(0.5 * np.abs(fa - fb).sum())


# ------------------------------------------------------------ growth experiments


@dataclass
class GrowthRecord:
    n: int
    frame: str
    levels: list
    H_mu: list
    H_conv: list
    gain: float
    theta_bits_per_level: float
    non_decrease_ok: bool

    def to_dict(self):
        return dict(self.__dict__)

    def rows(self):
        return [
            {"n": k, "frame": self.frame, "H_mu": a, "H_conv": c, "gain": (c - a) / self.n}
            for k, a, c in zip(self.levels, self.H_mu, self.H_conv)
        ]


def random_translations(count, scale, seed):
    """``count`` translations drawn uniformly from ``[-scale, scale]^2``."""
    rng = par.substream(seed, par.TAG_EXPERIMENT, 1)
    t = rng.uniform(-scale, scale, size=(count, 2))
    return AffineAtomMeasure(np.broadcast_to(np.eye(2), (count, 2, 2)), t)


def rotations_about(center, count, seed):
    rng = par.substream(seed, par.TAG_EXPERIMENT, 2)
    c = np.asarray(center, dtype=float)
    R = np.stack([rotation(a) for a in rng.uniform(0, 2 * np.pi, count)])
    return AffineAtomMeasure(R, c - np.einsum("nij,j->ni", R, c))


def _theta_grid_bits(theta, n):
    return entropy(theta.as_measure(), DyadicFrame.affine_grid(n)).bits


def _growth(nu, theta, n, frame_mu, frame_conv, seed, levels):
    conv = act_convolve(theta, nu, seed)
    H_mu = [entropy(nu, frame_mu.with_level(k)).bits for k in levels]
    H_conv = [entropy(conv, frame_conv.with_level(k)).bits for k in levels]
    gain = (H_conv[-1] - H_mu[-1]) / n
    return conv, H_mu, H_conv, gain


def entropy_growth_experiment(system, theta, n, seed=0, N=1_000_000, samples=None, threads=None):
    """Gain ``(1/n) H(theta.mu, D_n) - (1/n) H(mu, D_n)`` in the standard frame."""
    nu = samples if samples is not None else sample_attractor(system, N, seed=seed, threads=threads).points
    nu = as_measure(nu)
    frame = DyadicFrame.standard2d(n)
    levels = list(range(1, n + 1))
    _, H_mu, H_conv, gain = _growth(nu, theta, n, frame, frame, seed, levels)
    return GrowthRecord(
        n, frame.name, levels, H_mu, H_conv, float(gain),
        _theta_grid_bits(theta, n) / n, bool(gain >= -2.0 / n),
    )


def _eccentricity(g, n):
    a1, a2 = singular_values(g.A)
    c1, c2 = -np.log2(a1) / n, -np.log2(a2) / n
    return float(c1), float(c2)


@dataclass
class NonconformalRecord:
    growth: GrowthRecord
    conditional_form: float
    g_frame_form: float
    interpolation_gap: float
    c1: float
    c2: float
    M: int

    def to_dict(self):
        d = dict(self.__dict__)
        d["growth"] = self.growth.to_dict()
        return d


def nonconformal_growth_experiment(system, theta, g, n, M=1, seed=0, R=None, N=1_000_000, samples=None, threads=None):
    """Gain of ``theta.mu`` in the frame ``D_n^g`` and the two readings of the interpolation identity.

    The readings are ``(1/Mn) H(theta.mu, D_{(M+c2)n} | D_{c2 n})`` and
    ``(1/Mn) H(theta.mu, D^g_{Mn})``, with ``2^{-c_i n}`` the singular values
    of ``A_g``; ``c2 n`` is rounded to the nearest level.
    """
    c1, c2 = _eccentricity(g, n)
    if not c2 > c1:
        raise InvalidEccentricity("A_g must have distinct singular values")
    if R is not None and c2 - c1 <= 1.0 / R:
        raise InvalidEccentricity(f"c2 - c1 = {c2 - c1:.4g} must exceed 1/R = {1 / R:.4g}")
    nu = samples if samples is not None else sample_attractor(system, N, seed=seed, threads=threads).points
    nu = as_measure(nu)
    gframe = DyadicFrame.nonconformal(g, n)
    std = DyadicFrame.standard2d(n)
    levels = list(range(1, n + 1))
    conv, H_mu, H_conv, gain = _growth(nu, theta, n, std, gframe, seed, levels)
    growth = GrowthRecord(
        n, "nonconformal", levels, H_mu, H_conv, float(gain),
        _theta_grid_bits(theta, n) / n, bool(gain >= -2.0 / n),
    )
    k2 = int(round(c2 * n))
    cond = conditional_entropy(conv, DyadicFrame.standard2d(M * n + k2), DyadicFrame.standard2d(k2)).bits / (M * n)
    gform = entropy(conv, gframe.with_level(M * n)).bits / (M * n)
    return NonconformalRecord(growth, float(cond), float(gform), float(abs(cond - gform)), c1, c2, int(M))


@dataclass
class WrongFrameDemo:
    n: int
    standard_bits: float
    g_frame_bits: float
    mu_bits: float

    def to_dict(self):
        return dict(self.__dict__)


def wrong_frame_demo(samples, n=10):
    """Entropy of ``A mu`` with ``A = diag(1, 2^-n)`` in the standard frame and in ``D_n^g``."""
    nu = as_measure(samples)
    g = AffineMap2(np.diag([1.0, 2.0**-n]), [0.0, 0.0])
    pushed = nu.map_points(lambda x: x @ g.A.T)
    return WrongFrameDemo(
        n,
        entropy(pushed, DyadicFrame.standard2d(n)).bits,
        entropy(pushed, DyadicFrame.nonconformal(g, n)).bits,
        entropy(nu, DyadicFrame.standard2d(n)).bits,
    )


# ------------------------------------------------------------ linearization


def linearization_check(theta, nu, psi0, x0, k, delta, seed=0):
    """``|(1/k) H(theta.nu, D_L) - (1/k) H((theta.x0) * (psi0 nu) - psi0(x0), D_L)|`` with ``L = k - log2 delta``.

    Near ``(psi0, x0)``, ``phi(x) = phi(x0) + psi0(x) - psi0(x0)`` up to
    second order, which is the convolution on the right.
    """
    nu = as_measure(nu)
    x0 = np.asarray(x0, dtype=float)
    if theta.max_distance_to(psi0) > delta * (1 + 1e-9):
        raise PreconditionViolated("theta is not supported in the delta-ball around psi0")
    if np.max(np.linalg.norm(nu.points - x0, axis=1)) > delta * (1 + 1e-9):
        raise PreconditionViolated("nu is not supported in the delta-ball around x0")
    level = int(round(k - np.log2(delta)))
    frame = DyadicFrame.standard2d(level)
    left = act_convolve(theta, nu, seed)
    ax = np.einsum("nij,j->ni", theta.A, x0) + theta.b
    py = nu.points @ psi0.A.T + psi0.b - psi0(x0)
    # independent sum of the two clouds
    i = np.repeat(np.arange(len(ax)), len(py))
    j = np.tile(np.arange(len(py)), len(ax))
    if len(i) > THIN_TARGET:
        rng = par.substream(seed, par.TAG_CONVOLVE, 1)
        i = rng.choice(len(ax), THIN_TARGET, p=theta.weights)
        j = rng.choice(len(py), THIN_TARGET, p=nu.w)
        right = EmpiricalMeasure(ax[i] + py[j])
    else:
        right = EmpiricalMeasure(ax[i] + py[j], theta.weights[i] * nu.w[j])
    return abs(entropy(left, frame).bits - entropy(right, frame).bits) / k


# ------------------------------------------------------------ fibers and surplus


def default_cell_level(system, n, seed=0):
    chi1 = lyapunov_exponents(system, trials=8, length=2000, seed=seed).chi1
    return int(np.ceil(n * abs(chi1)))


def _fiber_weights(words_A, words_b, p, inner, cell, frame):
    # mass of phi_w(inner) inside ``cell`` for every word w
    imgs = np.einsum("wij,nj->wni", words_A, inner) + words_b[:, None, :]
    c = frame.cell_floats(imgs.reshape(-1, 2)).reshape(len(p), len(inner), 2)
    hits = np.all(c == cell, axis=2).mean(axis=1)
    return p * hits


def fiber_decomposition(system, x, n, cell_level=None, N=4096, seed=0, inner=None, words=None):
    """Approximate ``[xi_x]_n`` by conditioning ``p^{*n}`` on the dyadic cell of ``x``.

    The weight of ``phi_w`` is proportional to ``p_w`` times the mass that
    ``phi_w mu`` gives to ``D_{cell_level}(x)``, estimated with ``N`` inner
    samples of ``mu``. Coincident maps are merged.
    """
    if cell_level is None:
        cell_level = default_cell_level(system, n, seed)
    if inner is None:
        inner = sample_attractor(system, N, seed=seed).points
    if words is None:
        _, A, b, p = all_words(system, n)
    else:
        A, b, p = words
    frame = DyadicFrame.standard2d(cell_level)
    cell = frame.cell_floats(np.asarray(x, dtype=float)[None])[0]
    w = _fiber_weights(A, b, p, inner, cell, frame)
    if w.sum() <= 0:
        raise EmptyFiber(f"no level-{n} cylinder reaches the level-{cell_level} cell of x")
    keep = w > 0
    return AffineAtomMeasure(A[keep], b[keep], w[keep] / w.sum()).dedup()


@dataclass
class FiberStats:
    n: int
    cell_level: int
    fibers: int
    empty: int
    entropies: np.ndarray
    threshold_bits: float

    @property
    def fraction_above(self):
        return float(np.mean(self.entropies >= self.threshold_bits)) if len(self.entropies) else 0.0

    def fraction_below(self, bits):
        return float(np.mean(self.entropies < bits)) if len(self.entropies) else 0.0

    def to_dict(self):
        return {
            "n": self.n,
            "cell_level": self.cell_level,
            "fibers": self.fibers,
            "empty": self.empty,
            "mean_bits": float(self.entropies.mean()) if len(self.entropies) else None,
            "threshold_bits": self.threshold_bits,
            "fraction_above": self.fraction_above,
        }


def fiber_entropies(system, n, fibers=200, cell_level=None, N=4096, seed=0, threshold=0.1, threads=None):
    """Entropy in bits of ``fibers`` sampled fiber measures ``[xi_x]_n``."""
    if cell_level is None:
        cell_level = default_cell_level(system, n, seed)
    _, A, b, p = all_words(system, n)
    inner = sample_attractor(system, N, seed=seed, threads=threads).points
    outer = sample_attractor(system, fibers, seed=seed + 1, threads=threads).points

    def one(x):
        try:
            return fiber_decomposition(system, x, n, cell_level, inner=inner, words=(A, b, p)).entropy_bits()
        except EmptyFiber:
            return None

    vals = par.parallel_map(one, list(outer), threads)
    ent = np.array([v for v in vals if v is not None])
    return FiberStats(n, int(cell_level), len(ent), sum(v is None for v in vals), ent, threshold * n)


def fiber_mixture_tv(system, n, fibers=500, cell_level=None, N=4096, seed=0):
    """TV between ``p^{*n}`` and the average of fiber measures over sampled ``x``."""
    if cell_level is None:
        cell_level = default_cell_level(system, n, seed)
    _, A, b, p = all_words(system, n)
    inner = sample_attractor(system, N, seed=seed).points
    outer = sample_attractor(system, fibers, seed=seed + 1).points
    frame = DyadicFrame.standard2d(cell_level)
    acc = np.zeros(len(p))
    used = 0
    for x in outer:
        cell = frame.cell_floats(x[None])[0]
        w = _fiber_weights(A, b, p, inner, cell, frame)
        if w.sum() > 0:
            acc += w / w.sum()
            used += 1
    acc /= max(used, 1)
    # compare on merged atoms
    theta = AffineAtomMeasure(A, b, p)
    X = theta.vec6()
    reps = distinct_representatives(X)
    _, owner = cKDTree(X[reps]).query(X)
    return float(0.5 * np.abs(np.bincount(owner, acc, len(reps)) - np.bincount(owner, p, len(reps))).sum())


@dataclass
class SurplusReport:
    n: int
    M: int
    eps: float
    fibers: int
    fraction: float
    exponent_band: float
    component_entropies: list

    def to_dict(self):
        return dict(self.__dict__)


def surplus_experiment(system, n, M=1, seed=0, fibers=100, cell_level=None, N=4096, eps=SURPLUS_EPS, threads=None):
    """Components of normalized fiber measures and their entropy at grid level ``M n``.

    Each fiber ``[xi_x]_n`` is normalized by its heaviest atom ``g``
    (atoms become ``g^-1 phi``), split into level-0 cells of the affine-group
    grid, and each component's ``(1/Mn) H(., D_{Mn})`` is recorded. Reports
    the mass fraction of components above ``eps`` and the largest
    ``|chi_i - (1/n) log2 alpha_i(A_phi)|`` over fiber atoms.
    """
    if cell_level is None:
        cell_level = default_cell_level(system, n, seed)
    lyap = lyapunov_exponents(system, trials=8, length=2000, seed=seed)
    _, A, b, p = all_words(system, n)
    inner = sample_attractor(system, N, seed=seed, threads=threads).points
    outer = sample_attractor(system, fibers, seed=seed + 1, threads=threads).points
    grid0 = DyadicFrame.affine_grid(0)
    fine = DyadicFrame.affine_grid(M * n)
    above = 0.0
    total = 0.0
    band = 0.0
    comps = []
    for x in outer:
        try:
            th = fiber_decomposition(system, x, n, cell_level, inner=inner, words=(A, b, p))
        except EmptyFiber:
            continue
        a1, a2 = singular_values(th.A)
        band = max(band, float(np.max(np.abs(np.log2(a1) / n - lyap.chi1))), float(np.max(np.abs(np.log2(a2) / n - lyap.chi2))))
        g = AffineMap2(th.A[np.argmax(th.weights)], th.b[np.argmax(th.weights)])
        normed = th.compose_left(affine_invert(g))
        X = normed.vec6()
        cells = grid0.cells(X)
        _, inv = np.unique(cells, axis=0, return_inverse=True)
        inv = inv.ravel()
        for c in range(inv.max() + 1):
            mask = inv == c
            mass = normed.weights[mask].sum()
            comp = EmpiricalMeasure(X[mask], normed.weights[mask], carrier="affine-group")
            bits = entropy(comp, fine).bits / (M * n)
            comps.append(float(bits))
            total += mass
            if bits > eps:
                above += mass
    fraction = above / total if total else 0.0
    return SurplusReport(n, M, eps, len(outer), float(fraction), band, comps)
