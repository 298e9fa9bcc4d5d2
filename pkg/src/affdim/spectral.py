"""Random matrix products: Lyapunov exponents, Furstenberg measures, the
direction function ``L(omega)`` and the structural checks on the linear parts
(non-conformality, total irreducibility, triangular form)."""

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from . import _parallel as par
from .affine import (
    E1,
    GAP_TOL,
    ProjectivePoint,
    major_angles,
    major_direction,
    rotation,
    singular_values,
)
from .exceptions import DegenerateSystem, EqualSingularValues, NotTriangular
from .ifs import compose_word, sample_attractor
from .measures import EmpiricalMeasure

BURNIN = 200
START_ANGLES = 16
INVARIANT_TOL = 1e-9
BORDERLINE_TOL = 1e-6


def _log2_abs_det(system):
    det = np.abs(np.linalg.det(system.linear))
    if np.any(det == 0):
        raise DegenerateSystem("a linear part is singular")
    return np.log2(det)


def _angles(v):
    return np.mod(np.arctan2(v[..., 1], v[..., 0]), np.pi)


def _unit(angles):
    return np.stack([np.cos(angles), np.sin(angles)], axis=-1)


def apply_to_lines(B, angles):
    """Push lines (given by angles) through ``B``; ``B`` may be one matrix or one per line."""
    v = _unit(np.asarray(angles, dtype=float))
    if np.ndim(B) == 2:
        w = v @ np.asarray(B).T
    else:
        w = np.einsum("nij,nj->ni", B, v)
    return _angles(w)


# ---------------------------------------------------------------- exponents


@dataclass(frozen=True)
class LyapunovEstimate:
    chi1: float
    chi2: float
    stderr1: float
    sum_exact: float
    trials: int
    length: int
    exact: bool = False

    def to_dict(self):
        return {
            "chi1": self.chi1,
            "chi2": self.chi2,
            "stderr1": self.stderr1,
            "sum_exact": self.sum_exact,
            "trials": self.trials,
            "length": self.length,
            "exact": self.exact,
        }


def _all_equal(mats):
    return bool(np.all(mats == mats[0]))


def lyapunov_exponents(system, trials=16, length=10_000, seed=0, reverse=False):
    """Estimate ``chi1 >= chi2`` (base 2, per step).

    ``chi1`` is the mean over trials of ``(1/length) sum log2 |A_{w_k} v_k|``
    with ``v_k`` renormalised every step. ``chi1 + chi2`` is exact:
    ``sum p_i log2 |det A_i|``. When every linear part is the same matrix the
    product is deterministic and ``chi1`` is read off the eigenvalue moduli.
    ``reverse=True`` multiplies in the opposite order (through transposes).
    """
    if length < 100:
        raise ValueError("length must be at least 100")
    logdet = _log2_abs_det(system)
    sum_exact = float(system.probs @ logdet)
    mats = system.linear
    if _all_equal(mats):
        chi1 = float(np.log2(np.max(np.abs(np.linalg.eigvals(mats[0])))))
        return LyapunovEstimate(chi1, sum_exact - chi1, 0.0, sum_exact, 0, length, True)
    B = np.transpose(mats, (0, 2, 1)) if reverse else mats
    symbols = np.empty((trials, length), dtype=np.int8)
    v = np.empty((trials, 2))
    for t in range(trials):
        rng = par.substream(seed, par.TAG_LYAPUNOV, int(reverse), t)
        a = rng.uniform(0, np.pi)
        v[t] = np.cos(a), np.sin(a)
        symbols[t] = rng.choice(system.k, size=length, p=system.probs)
    acc = np.zeros(trials)
    # fold each symbol column into one batched 2x2 product
    for j in range(length):
        Bj = B[symbols[:, j]]
        v = np.einsum("nij,nj->ni", Bj, v)
        norm = np.hypot(v[:, 0], v[:, 1])
        acc += np.log2(norm)
        v /= norm[:, None]
    per_trial = acc / length
    chi1 = float(per_trial.mean())
    stderr = float(per_trial.std(ddof=1) / np.sqrt(trials)) if trials > 1 else float("nan")
    return LyapunovEstimate(chi1, sum_exact - chi1, stderr, sum_exact, trials, length)


# ---------------------------------------------------------------- Furstenberg


@dataclass(frozen=True, eq=False)
class ProjectiveMeasure:
    """Atoms on the projective line (angles in ``[0, pi)``)."""

    measure: EmpiricalMeasure
    transpose: bool = False

    @property
    def angles(self):
        return self.measure.points[:, 0]

    @property
    def weights(self):
        return self.measure.w

    def __len__(self):
        return len(self.measure)

    def max_atom(self, tol=1e-9):
        """Largest mass carried by a cluster of atoms of angular width ``tol``."""
        a = np.sort(self.angles)
        w = self.weights[np.argsort(self.angles)]
        breaks = np.nonzero(np.diff(a) > tol)[0] + 1
        mass = np.add.reduceat(w, np.concatenate([[0], breaks]))
        # clusters straddling 0 ~ pi
        if len(mass) > 1 and (a[0] + np.pi - a[-1]) <= tol:
            mass[0] += mass[-1]
            mass = mass[:-1]
        return float(mass.max())


def _walk_lines(mats, probs, angles, steps, rng):
    v = _unit(angles)
    for _ in range(steps):
        s = rng.choice(len(mats), size=len(v), p=probs)
        v = np.einsum("nij,nj->ni", mats[s], v)
        v /= np.hypot(v[:, 0], v[:, 1])[:, None]
    return _angles(v)


def furstenberg_measure(system, transpose=False, samples=10_000, burnin=BURNIN, seed=0, threads=None):
    """Sample the stationary measure ``eta`` (or ``eta*`` with ``transpose``).

    Atom ``j`` starts at the ``j mod 16``-th of 16 equally spaced lines and is
    pushed through ``burnin`` independent random ``A_i`` (or ``A_i^T``).
    """
    mats = np.transpose(system.linear, (0, 2, 1)) if transpose else system.linear
    starts = np.arange(START_ANGLES) * np.pi / START_ANGLES

    def work(item):
        c, (lo, hi) = item
        rng = par.substream(seed, par.TAG_FURSTENBERG, int(transpose), c)
        a0 = starts[np.arange(lo, hi) % START_ANGLES]
        return _walk_lines(mats, system.probs, a0, burnin, rng)

    parts = par.parallel_map(work, list(enumerate(par.chunk_bounds(int(samples)))), threads)
    angles = np.concatenate(parts)
    return ProjectiveMeasure(EmpiricalMeasure(angles, None, "projective-line"), bool(transpose))


def circular_w1(a, wa, b, wb, period=np.pi):
    """Exact 1-Wasserstein distance between atomic measures on ``R / period Z``.

    Uses ``W1 = min_c int |F - G - c|``; the minimiser is a length-weighted
    median of the CDF difference.
    """
    a = np.mod(np.asarray(a, dtype=float), period)
    b = np.mod(np.asarray(b, dtype=float), period)
    wa = np.full(len(a), 1.0 / len(a)) if wa is None else np.asarray(wa, float) / np.sum(wa)
    wb = np.full(len(b), 1.0 / len(b)) if wb is None else np.asarray(wb, float) / np.sum(wb)
    x = np.concatenate([a, b])
    w = np.concatenate([wa, -wb])
    order = np.argsort(x, kind="stable")
    x = x[order]
    D = np.cumsum(w[order])
    lengths = np.diff(np.concatenate([x, [x[0] + period]]))
    keep = lengths > 0
    D, lengths = D[keep], lengths[keep]
    if len(D) == 0:
        return 0.0
    o = np.argsort(D)
    cum = np.cumsum(lengths[o])
    c = D[o][np.searchsorted(cum, 0.5 * cum[-1])]
    return float(np.sum(lengths * np.abs(D - c)))


def stationarity_residual(system, m):
    """``W1(m, sum_i p_i A_i m)`` on the circle of lines (``A_i^T`` for ``eta*``)."""
    mats = np.transpose(system.linear, (0, 2, 1)) if m.transpose else system.linear
    pushed = np.concatenate([apply_to_lines(B, m.angles) for B in mats])
    weights = np.concatenate([p * m.weights for p in system.probs])
    return circular_w1(m.angles, m.weights, pushed, weights)


# ---------------------------------------------------------------- L(omega)


def direction_function(system, word):
    """``L(A_word)``, the finite-word approximation of ``L(omega)``.

    ``L`` is invariant under positive rescaling, so the product is
    renormalised as it is built.
    """
    word = tuple(int(s) for s in word)
    if word and (min(word) < 0 or max(word) >= system.k):
        compose_word(system, word)  # raises IndexOutOfRange
    A = np.eye(2)
    for s in word:
        A = A @ system.linear[s]
        A /= np.abs(A).max()
    # long products are numerically rank one, which is fine for L but fails
    # the invertibility guard in major_direction
    alpha1, alpha2 = singular_values(A)
    if alpha1 - alpha2 <= GAP_TOL * alpha1:
        raise EqualSingularValues("L(A) is undefined when alpha1 == alpha2")
    return ProjectivePoint(float(major_angles(A)))


def sample_directions(system, linear, seed, threads=None, burnin=BURNIN):
    """``L(omega)`` for coded samples with prefix matrices ``linear``.

    Uses ``L(omega) = A_{omega|m} L(sigma^m omega)``; the tail direction is a
    fresh draw from ``eta``, which has the law of ``L`` and is independent of
    the prefix.
    """
    tails = furstenberg_measure(system, False, len(linear), burnin, seed, threads).angles
    return apply_to_lines(linear, tails)


def circular_dispersion(angles, weights=None):
    """``1 - |E exp(2 i theta)|``: zero for a point mass, one for the uniform law."""
    z = np.exp(2j * np.asarray(angles))
    if weights is None:
        return float(1 - abs(z.mean()))
    return float(1 - abs(np.sum(z * weights) / np.sum(weights)))


def _dispersion_by_group(keys, angles):
    uniq, inv, counts = np.unique(keys, return_inverse=True, return_counts=True)
    z = np.exp(2j * angles)
    re = np.bincount(inv, z.real, len(uniq))
    im = np.bincount(inv, z.imag, len(uniq))
    return counts, 1 - np.hypot(re, im) / counts


@dataclass(frozen=True)
class LDescendsReport:
    cluster_level: int
    samples: int
    tolerance: float
    low_dispersion_mass: float
    cells: int
    cells_with_pairs: int
    median_dispersion: float
    global_dispersion: float

    def to_dict(self):
        return dict(self.__dict__)


def l_descends_test(system, N=100_000, cluster_level=10, seed=0, tolerance=0.05, threads=None):
    """Does ``L`` look constant on small dyadic cells of the attractor?

    Groups ``N`` coded samples by their level-``cluster_level`` dyadic cell and
    measures the circular dispersion of ``L`` inside each cell. Reports the
    sample mass in cells with dispersion below ``tolerance``, among cells
    holding at least two samples.
    """
    cloud = sample_attractor(system, N, depth_target=cluster_level + 10, seed=seed, threads=threads)
    if _all_equal(system.linear):
        L = np.full(N, major_direction(system.linear[0]).angle)
    else:
        L = sample_directions(system, cloud.linear, seed, threads)
    cells = np.floor(cloud.points * 2.0**cluster_level).astype(np.int64)
    keys = cells[:, 0] * (1 << 31) + cells[:, 1]
    counts, disp = _dispersion_by_group(keys, L)
    multi = counts > 1
    mass = counts[multi].sum()
    good = counts[multi & (disp < tolerance)].sum()
    return LDescendsReport(
        cluster_level=int(cluster_level),
        samples=int(N),
        tolerance=float(tolerance),
        low_dispersion_mass=float(good / mass) if mass else 1.0,
        cells=int(len(counts)),
        cells_with_pairs=int(multi.sum()),
        median_dispersion=float(np.median(disp[multi])) if multi.any() else 0.0,
        global_dispersion=circular_dispersion(L),
    )


# ---------------------------------------------------------------- structure


def _form_operator(A):
    """Matrix of ``Q -> A^T Q A`` on symmetric forms in the basis ``(q11, q12, q22)``."""
    a, b, c, d = np.asarray(A, dtype=float).ravel()
    # A^T Q A for Q = [[x, y], [y, z]]
    return np.array(
        [
            [a * a, 2 * a * c, c * c],
            [a * b, a * d + b * c, c * d],
            [b * b, 2 * b * d, d * d],
        ]
    )


def _as_form(q):
    return np.array([[q[0], q[1]], [q[1], q[2]]])


@dataclass(frozen=True)
class ConformalityVerdict:
    conformal: bool
    Q: np.ndarray = None
    residual: float = 0.0
    nullity: int = 0

    @property
    def status(self):
        return "Conformal" if self.conformal else "NonConformal"

    def to_dict(self):
        return {
            "status": self.status,
            "Q": None if self.Q is None else self.Q.tolist(),
            "residual": self.residual,
            "nullity": self.nullity,
        }


def check_nonconformality(system, tol=1e-9):
    """Look for a positive definite ``Q`` with ``A_i^T Q A_i = |det A_i| Q`` for all ``i``.

    Such a ``Q`` makes every ``A_i`` a similarity for the norm ``sqrt(x^T Q x)``.
    The scalar is forced to be ``|det A_i|`` by taking determinants, so the
    candidates form the common null space of ``T_i - |det A_i| I``.
    """
    rows = [
        (_form_operator(A) - abs(np.linalg.det(A)) * np.eye(3)) / max(np.abs(A).max() ** 2, 1e-300)
        for A in system.linear
    ]
    M = np.vstack(rows)
    _, s, vt = np.linalg.svd(M)
    s = np.concatenate([s, np.zeros(3 - len(s))])
    null = vt[s <= tol]
    if len(null) == 0:
        return ConformalityVerdict(False, None, float(s.min()), 0)
    if len(null) == 3:
        return ConformalityVerdict(True, np.eye(2), 0.0, 3)
    best, best_score = None, -np.inf
    if len(null) == 1:
        cands = [null[0], -null[0]]
    else:
        t = np.linspace(0, 2 * np.pi, 3600, endpoint=False)
        cands = np.cos(t)[:, None] * null[0] + np.sin(t)[:, None] * null[1]
    for q in cands:
        Q = _as_form(q)
        score = np.linalg.eigvalsh(Q)[0] / np.linalg.norm(Q)
        if score > best_score:
            best, best_score = Q, score
    if best_score <= tol:
        return ConformalityVerdict(False, None, float(s[s <= tol].max()), len(null))
    Q = 2 * best / np.trace(best)
    return ConformalityVerdict(True, Q, float(s[s <= tol].max()), len(null))


def _eigenlines(A, tol=1e-12):
    """Real eigendirections of ``A``; empty for scalar matrices and complex spectra."""
    A = np.asarray(A, dtype=float)
    if np.allclose(A, A[0, 0] * np.eye(2), rtol=0, atol=tol * np.abs(A).max()):
        return []
    w, v = np.linalg.eig(A)
    out = []
    for j in range(2):
        if abs(w[j].imag) <= tol * max(abs(w[j]), 1e-300):
            vec = v[:, j].real
            if np.any(vec):
                out.append(ProjectivePoint.from_vector(vec).angle)
    return out


def _set_residual(mats, angles):
    """How far the line set ``angles`` is from being invariant under every matrix."""
    angles = np.asarray(angles)
    worst = 0.0
    for B in mats:
        img = apply_to_lines(B, angles)
        d = np.abs(np.sin(img[:, None] - angles[None, :])).min(axis=1)
        worst = max(worst, float(d.max()))
    return worst


def _dedup(angles, tol=1e-9):
    """Representatives of the clusters of ``angles`` (mod pi) at resolution ``tol``."""
    a = np.sort(np.mod(np.asarray(angles, dtype=float), np.pi))
    if len(a) == 0:
        return []
    keep = np.concatenate([[True], np.diff(a) > tol])
    out = a[keep]
    # the last cluster wraps onto the first
    if len(out) > 1 and a[0] + np.pi - a[-1] <= tol:
        out = out[:-1]
    return [float(x) for x in out]


@dataclass(frozen=True)
class IrreducibilityVerdict:
    status: str
    witness: tuple = ()
    residual: float = float("inf")
    walk_atoms: int = -1
    notes: tuple = field(default_factory=tuple)

    def to_dict(self):
        return {
            "status": self.status,
            "witness": [float(a) for a in self.witness],
            "residual": self.residual if np.isfinite(self.residual) else None,
            "walk_atoms": self.walk_atoms,
            "notes": list(self.notes),
        }


def invariant_lines(system, tol=INVARIANT_TOL):
    """Lines fixed by every ``A_i`` (angles); ``None`` means every line is fixed."""
    mats = system.linear
    lines = []
    for A in mats:
        lines.extend(_eigenlines(A))
    if not lines:
        scalar = all(not _eigenlines(A) and np.isreal(np.linalg.eigvals(A)).all() for A in mats)
        return None if scalar else []
    return [a for a in _dedup(lines) if _set_residual(mats, [a]) < tol]


def _walk_support(system, seed, samples=4096, steps=BURNIN):
    rng = par.substream(seed, par.TAG_IRREDUCIBLE, 0)
    starts = np.arange(samples) % START_ANGLES * np.pi / START_ANGLES
    ang = _walk_lines(system.linear, system.probs, starts, steps, rng)
    atoms = _dedup(ang, 1e-6)
    return atoms


def check_total_irreducibility(system, seed=0):
    """Search for a finite set of one or two lines invariant under every ``A_i``.

    Candidates are the real eigendirections of the ``A_i`` and of all products
    ``A_i A_j`` (including ``i = j``, which catches swapped pairs). A random
    projective walk from 16 starting lines is run as an extra diagnostic; if it
    collapses onto at most two verified-invariant atoms the system is reducible.
    """
    mats = system.linear
    fixed = invariant_lines(system)
    if fixed is None:
        return IrreducibilityVerdict("Reducible", (E1.angle,), 0.0, notes=("every line is invariant",))
    if fixed:
        return IrreducibilityVerdict("Reducible", tuple(fixed), _set_residual(mats, fixed))
    cands = []
    for A in mats:
        cands.extend(_eigenlines(A))
    for A in mats:
        for B in mats:
            cands.extend(_eigenlines(A @ B))
    cands = _dedup(cands)
    best = float("inf")
    best_set = ()
    for pair in combinations(cands, 2):
        r = _set_residual(mats, pair)
        if r < best:
            best, best_set = r, pair
    for a in cands:
        r = _set_residual(mats, [a])
        if r < best:
            best, best_set = r, (a,)
    if best < INVARIANT_TOL:
        return IrreducibilityVerdict("Reducible", tuple(best_set), best)
    atoms = _walk_support(system, seed)
    if len(atoms) <= 2:
        r = _set_residual(mats, atoms)
        if r < INVARIANT_TOL:
            return IrreducibilityVerdict("Reducible", tuple(atoms), r, len(atoms))
        return IrreducibilityVerdict(
            "Inconclusive", tuple(atoms), r, len(atoms), ("walk collapsed onto non-invariant atoms",)
        )
    if best <= BORDERLINE_TOL:
        return IrreducibilityVerdict("Inconclusive", tuple(best_set), best, len(atoms))
    return IrreducibilityVerdict("TotallyIrreducible", (), best, len(atoms))


@dataclass(frozen=True)
class TriangularReport:
    direction: float
    rotation: np.ndarray
    a: np.ndarray
    c: np.ndarray
    rate: float
    chi1: float
    chi2: float
    contracted_at_chi2: bool
    jointly_diagonalizable: bool
    induced_maps: tuple

    def to_dict(self):
        return {
            "direction": self.direction,
            "rotation": self.rotation.tolist(),
            "a": self.a.tolist(),
            "c": self.c.tolist(),
            "rate": self.rate,
            "chi1": self.chi1,
            "chi2": self.chi2,
            "contracted_at_chi2": self.contracted_at_chi2,
            "jointly_diagonalizable": self.jointly_diagonalizable,
            "induced_maps": [list(m) for m in self.induced_maps],
        }


def triangular_diagnostics(system):
    """Conjugate to lower-triangular form when the ``A_i`` share an eigendirection.

    In the rotated frame ``A_i = [[a_i, 0], [b_i, c_i]]`` and the shared line is
    the second axis. For triangular products the exponents are exactly
    ``sum p log2|a|`` and ``sum p log2|c|``, so the rate on the invariant line
    is compared against them directly. The induced one-dimensional system is
    ``x -> a_i x + pi_1(v_i)``.
    """
    fixed = invariant_lines(system)
    if fixed is None:
        fixed = [np.pi / 2]
    if not fixed:
        raise NotTriangular("the linear parts share no real eigendirection")
    p = system.probs

    def frame(angle):
        R = rotation(np.pi / 2 - angle)
        T = R @ system.linear @ R.T
        a, c = T[:, 0, 0], T[:, 1, 1]
        return R, a, c, float(p @ np.log2(np.abs(a))), float(p @ np.log2(np.abs(c)))

    # with two invariant lines keep the more contracted one on the second axis
    frames = [frame(a) for a in fixed]
    j = int(np.argmin([f[4] for f in frames]))
    R, a, c, ra, rc = frames[j]
    direction = fixed[j]
    t = (R @ system.translations.T)[0]
    return TriangularReport(
        direction=float(direction),
        rotation=R,
        a=a,
        c=c,
        rate=rc,
        chi1=max(ra, rc),
        chi2=min(ra, rc),
        contracted_at_chi2=bool(rc < ra),
        jointly_diagonalizable=len(fixed) >= 2,
        induced_maps=tuple((float(ai), float(ti)) for ai, ti in zip(a, t)),
    )
