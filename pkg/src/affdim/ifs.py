"""Self-affine systems: validation, cylinder words, stopping-time partitions
and coding-map sampling of the self-affine measure."""

from dataclasses import dataclass, field

import numpy as np

from . import _parallel as par
from .affine import AffineMap2, singular_values
from .exceptions import BudgetExceeded, IndexOutOfRange

DEFAULT_WORD_CAP = 1 << 22
# slack for "alpha <= 2^-n" so exact powers of two survive rounding in products
STOP_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class IfsSystem:
    """Affine maps ``phi_i`` with weights ``p_i``."""

    maps: tuple
    probs: np.ndarray
    name: str = ""

    def __post_init__(self):
        maps = tuple(m if isinstance(m, AffineMap2) else AffineMap2(*m) for m in self.maps)
        probs = np.asarray(self.probs, dtype=float).ravel()
        if probs.shape[0] != len(maps):
            raise ValueError("one probability per map is required")
        probs.setflags(write=False)
        object.__setattr__(self, "maps", maps)
        object.__setattr__(self, "probs", probs)
        A = np.array([m.A for m in maps]).reshape(-1, 2, 2)
        b = np.array([m.b for m in maps]).reshape(-1, 2)
        A.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "_A", A)
        object.__setattr__(self, "_b", b)

    @classmethod
    def from_arrays(cls, A, b, p=None, name=""):
        A = np.asarray(A, dtype=float).reshape(-1, 2, 2)
        b = np.asarray(b, dtype=float).reshape(-1, 2)
        if p is None:
            p = np.full(len(A), 1.0 / len(A))
        return cls(tuple(AffineMap2(a, t) for a, t in zip(A, b)), p, name)

    @property
    def k(self):
        return len(self.maps)

    @property
    def linear(self):
        """Stack of linear parts, shape ``(k, 2, 2)``."""
        return self._A

    @property
    def translations(self):
        return self._b

    def entropy(self):
        p = self.probs
        return float(-(p * np.log2(p)).sum())

    def conjugate(self, h, h_inv):
        """The system ``h o phi_i o h^-1``."""
        from .affine import affine_compose

        maps = tuple(affine_compose(h, affine_compose(m, h_inv)) for m in self.maps)
        return IfsSystem(maps, self.probs, self.name)


@dataclass
class CheckResult:
    passed: bool
    detail: str = ""
    witness: object = None


@dataclass
class ValidationReport:
    checks: dict = field(default_factory=dict)

    @property
    def ok(self):
        return all(c.passed for c in self.checks.values())

    def failures(self):
        return [name for name, c in self.checks.items() if not c.passed]

    def to_dict(self):
        return {
            name: {"passed": bool(c.passed), "detail": c.detail}
            for name, c in self.checks.items()
        }


def validate(system):
    """Check the standing assumptions on ``(Phi, p)`` and report each one."""
    checks = {}
    p = system.probs
    checks["at_least_two_maps"] = CheckResult(system.k >= 2, f"k = {system.k}")
    checks["positive_probabilities"] = CheckResult(
        bool(np.all(p > 0)), f"min p = {p.min():.6g}", witness=int(np.argmin(p))
    )
    checks["probability_sum"] = CheckResult(
        abs(p.sum() - 1.0) <= 1e-12, f"sum p = {p.sum():.15g}"
    )
    det = np.linalg.det(system.linear)
    scale = np.einsum("kij,kij->k", system.linear, system.linear)
    singular = np.abs(det) < 1e-14 * np.maximum(scale, np.finfo(float).tiny)
    checks["invertible"] = CheckResult(
        not bool(singular.any()),
        "all linear parts invertible" if not singular.any() else "singular linear part",
        witness=[int(i) for i in np.nonzero(singular)[0]],
    )
    alpha1, _ = singular_values(system.linear)
    bad = np.nonzero(alpha1 >= 1)[0]
    block = contraction_block(system) if checks["invertible"].passed else None
    if len(bad) == 0:
        detail = f"max alpha1 = {alpha1.max():.6g}"
    elif block is not None:
        detail = (
            f"max alpha1 = {alpha1.max():.6g}; contracting after blocks of length "
            f"{block[0]} (max alpha1 over words = {block[1]:.6g})"
        )
    else:
        detail = f"max alpha1 = {alpha1.max():.6g}; no contracting block length found"
    checks["contracting"] = CheckResult(
        block is not None, detail, witness=[int(i) for i in bad]
    )
    spectral = np.max(np.abs(np.linalg.eigvals(system.linear[0]))) if block else 1.0
    if checks["invertible"].passed and spectral < 1:
        x0 = system.maps[0].fixed_point()
        moves = [float(np.linalg.norm(m(x0) - x0)) for m in system.maps]
        mover = int(np.argmax(moves))
        checks["no_common_fixed_point"] = CheckResult(
            max(moves) > 1e-10,
            f"fixed point of map 0 = {x0.tolist()}; map {mover} moves it by {max(moves):.3g}",
            witness={"fixed_point": x0.tolist(), "map": mover},
        )
    else:
        checks["no_common_fixed_point"] = CheckResult(False, "map 0 is not a contraction")
    return ValidationReport(checks)


def contraction_block(system, max_length=12, cap=1 << 16):
    """Smallest ``m`` with ``max_{|w| = m} alpha1(A_w) < 1``.

    Returns ``(m, rho_m, C)`` where ``rho_m`` is that maximum and ``C`` bounds
    ``alpha1`` over all shorter words (at least 1), so that
    ``alpha1(A_w) <= C rho_m^floor(|w|/m)``. Returns ``None`` when no block
    length up to ``max_length`` works within ``cap`` words. A system of
    Euclidean contractions gives ``m = 1``.
    """
    A = np.eye(2)[None]
    C = 1.0
    for m in range(1, max_length + 1):
        if len(A) * system.k > cap:
            return None
        A = (A[:, None] @ system.linear[None]).reshape(-1, 2, 2)
        top = float(singular_values(A)[0].max())
        if top < 1:
            return m, top, C
        C = max(C, top)
    return None


def _check_word(system, word):
    word = tuple(int(s) for s in word)
    for s in word:
        if not 0 <= s < system.k:
            raise IndexOutOfRange(f"symbol {s} outside 0..{system.k - 1}")
    return word


def compose_word(system, word):
    """``phi_{w1} o ... o phi_{wn}``; the empty word gives the identity."""
    word = _check_word(system, word)
    A = np.eye(2)
    b = np.zeros(2)
    for s in word:
        b = b + A @ system.translations[s]
        A = A @ system.linear[s]
    return AffineMap2(A, b)


def word_probability(system, word):
    word = _check_word(system, word)
    return float(np.prod(system.probs[list(word)])) if word else 1.0


def compose_words(system, words):
    """Vectorised :func:`compose_word` for an integer array of equal-length words."""
    words = np.asarray(words, dtype=np.int64)
    if words.ndim == 1:
        words = words[:, None]
    if words.size and (words.min() < 0 or words.max() >= system.k):
        raise IndexOutOfRange("word symbol out of range")
    m = words.shape[0]
    A = np.broadcast_to(np.eye(2), (m, 2, 2)).copy()
    b = np.zeros((m, 2))
    for j in range(words.shape[1]):
        s = words[:, j]
        b += np.einsum("nij,nj->ni", A, system.translations[s])
        A = A @ system.linear[s]
    return A, b


def all_words(system, n, cap=DEFAULT_WORD_CAP):
    """All of ``Lambda^n`` in lexicographic order with their maps and weights.

    Returns ``(words, A, b, p)`` where ``words`` has shape ``(k^n, n)``.
    """
    k = system.k
    if k**n > cap:
        raise BudgetExceeded(f"|Lambda|^n = {k}^{n} exceeds the cap {cap}")
    words = np.zeros((1, 0), dtype=np.int64)
    A = np.eye(2)[None]
    b = np.zeros((1, 2))
    p = np.ones(1)
    for _ in range(n):
        m = len(words)
        sym = np.tile(np.arange(k), m)
        parent = np.repeat(np.arange(m), k)
        words = np.concatenate([words[parent], sym[:, None]], axis=1)
        b = b[parent] + np.einsum("nij,nj->ni", A[parent], system.translations[sym])
        A = A[parent] @ system.linear[sym]
        p = p[parent] * system.probs[sym]
    return words, A, b, p


def _stop_value(A, which):
    alpha1, alpha2 = singular_values(A)
    return alpha1 if which == "psi" else alpha2


def _enumerate_stopping(system, n, which, cap):
    if n < 1:
        raise ValueError("n must be at least 1")
    threshold = 2.0**-n * (1 + STOP_RTOL)
    k = system.k
    done = []
    frontier = [()]
    A = np.eye(2)[None]
    total = 0
    while frontier:
        m = len(frontier)
        sym = np.tile(np.arange(k), m)
        parent = np.repeat(np.arange(m), k)
        A_child = A[parent] @ system.linear[sym]
        value = _stop_value(A_child, which)
        stop = value <= threshold
        children = [frontier[i] + (int(s),) for i, s in zip(parent, sym)]
        total += int(stop.sum())
        if total + int((~stop).sum()) > cap:
            raise BudgetExceeded(f"stopping partition at n={n} exceeds the cap {cap}")
        done.extend(w for w, s in zip(children, stop) if s)
        frontier = [w for w, s in zip(children, stop) if not s]
        A = A_child[~stop]
    return sorted(done)


def enumerate_psi(system, n, cap=DEFAULT_WORD_CAP):
    """Words ``w`` with ``alpha1(A_w) <= 2^-n < alpha1(A_parent)``."""
    return _enumerate_stopping(system, n, "psi", cap)


def enumerate_upsilon(system, n, cap=DEFAULT_WORD_CAP):
    """Words ``w`` with ``alpha2(A_w) <= 2^-n < alpha2(A_parent)``."""
    return _enumerate_stopping(system, n, "upsilon", cap)


def sample_words(system, kind, n, size, seed):
    """Draw ``size`` independent random words.

    ``kind`` is ``"U"`` (uniform-p over ``Lambda^n``), ``"I"`` (the word of
    ``Psi_n`` hit by a p-random sequence) or ``"K"`` (same for ``Upsilon_n``).
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    kind = kind.upper()
    if kind not in ("U", "I", "K"):
        raise ValueError(f"unknown word kind {kind!r}")
    out = []
    for c, (lo, hi) in enumerate(par.chunk_bounds(size)):
        rng = par.substream(seed, par.TAG_WORDS, c)
        m = hi - lo
        if kind == "U":
            syms = rng.choice(system.k, size=(m, n), p=system.probs)
            out.extend(tuple(int(s) for s in row) for row in syms)
            continue
        which = "psi" if kind == "I" else "upsilon"
        threshold = 2.0**-n * (1 + STOP_RTOL)
        A = np.broadcast_to(np.eye(2), (m, 2, 2)).copy()
        active = np.ones(m, dtype=bool)
        cols = []
        while active.any():
            idx = np.nonzero(active)[0]
            s = rng.choice(system.k, size=len(idx), p=system.probs)
            col = np.full(m, -1, dtype=np.int64)
            col[idx] = s
            cols.append(col)
            A[idx] = A[idx] @ system.linear[s]
            active[idx] = _stop_value(A[idx], which) > threshold
        syms = np.stack(cols, axis=1)
        out.extend(tuple(int(s) for s in row if s >= 0) for row in syms)
    return out


def sample_word(system, kind, n, seed):
    return sample_words(system, kind, n, 1, seed)[0]


@dataclass(frozen=True)
class CodedSample:
    point: np.ndarray
    word: tuple


@dataclass(frozen=True, eq=False)
class CodedSamples:
    """Coding-map samples ``phi_{omega|m}(x0)`` stored column-wise.

    ``symbols`` is padded with ``-1`` past each sample's truncation length;
    ``linear`` holds ``A_{omega|m}`` for every sample.
    """

    points: np.ndarray
    symbols: np.ndarray
    lengths: np.ndarray
    linear: np.ndarray
    depth_target: int

    def __len__(self):
        return len(self.points)

    def __getitem__(self, i):
        word = tuple(int(s) for s in self.symbols[i, : self.lengths[i]])
        return CodedSample(self.points[i], word)

    @property
    def first_symbol(self):
        return self.symbols[:, 0]


def _max_steps(system, depth):
    block = contraction_block(system)
    if block is None:
        raise ValueError("the system is not (eventually) contracting; cannot sample it")
    m, rho, C = block
    blocks = np.ceil((depth + np.log2(C)) / -np.log2(rho))
    return int(m * (blocks + 1)) + 2


def _sample_chunk(system, m, depth, rng, x0, max_steps):
    A = np.broadcast_to(np.eye(2), (m, 2, 2)).copy()
    b = np.zeros((m, 2))
    lengths = np.zeros(m, dtype=np.int64)
    active = np.ones(m, dtype=bool)
    syms = np.full((m, max_steps), -1, dtype=np.int16)
    threshold = 2.0**-depth
    step = 0
    while active.any():
        idx = np.nonzero(active)[0]
        s = rng.choice(system.k, size=len(idx), p=system.probs)
        syms[idx, step] = s
        b[idx] += np.einsum("nij,nj->ni", A[idx], system.translations[s])
        A[idx] = A[idx] @ system.linear[s]
        lengths[idx] += 1
        alpha1, _ = singular_values(A[idx])
        active[idx] = alpha1 >= threshold
        step += 1
    points = np.einsum("nij,j->ni", A, x0) + b
    return points, syms, lengths, A


def sample_attractor(system, N, depth_target=21, seed=0, threads=None):
    """Sample ``N`` points of the self-affine measure through the coding map.

    Each sample follows a p-random sequence ``omega`` until
    ``alpha1(A_{omega|m}) < 2^-depth_target`` and returns
    ``phi_{omega|m}(x0)``, with ``x0`` the fixed point of map 0. Substreams
    depend only on ``(seed, chunk index)``.
    """
    x0 = system.maps[0].fixed_point()
    max_steps = _max_steps(system, depth_target)
    bounds = par.chunk_bounds(int(N))

    def work(item):
        c, (lo, hi) = item
        rng = par.substream(seed, par.TAG_ATTRACTOR, c)
        return _sample_chunk(system, hi - lo, depth_target, rng, x0, max_steps)

    parts = par.parallel_map(work, list(enumerate(bounds)), threads)
    points = np.concatenate([p[0] for p in parts])
    syms = np.concatenate([p[1] for p in parts])
    lengths = np.concatenate([p[2] for p in parts])
    linear = np.concatenate([p[3] for p in parts])
    width = int(lengths.max())
    return CodedSamples(points, syms[:, :width], lengths, linear, int(depth_target))
