"""Dimension formulas and the verification pipelines."""

from dataclasses import dataclass, field

import numpy as np

from .entropy import (
    DyadicFrame,
    entropy_dimension,
    group_ids,
    occupied_cells,
    projection_entropy_sweep,
)
from .exceptions import (
    BiasRuleViolated,
    BudgetExceeded,
    DegenerateCloud,
    InvalidExponents,
    InvalidProbabilityVector,
    NotTriangular,
)
from .ifs import sample_attractor, validate
from .separation import separation_report
from .spectral import (
    check_nonconformality,
    check_total_irreducibility,
    furstenberg_measure,
    lyapunov_exponents,
    sample_directions,
    triangular_diagnostics,
)

H3_THRESHOLD = 0.05
H3_SAMPLE_FACTOR = 50
CONIC_THRESHOLD = 1e-6
AFFINE_THRESHOLD = 0.01
SEPARATION_SLOPE_FLOOR = -5.0
DEFAULT_TOLERANCE = 0.1


def shannon(p):
    """Base-2 Shannon entropy of a positive probability vector."""
    p = np.asarray(p, dtype=float).ravel()
    if p.size == 0 or np.any(~np.isfinite(p)) or np.any(p <= 0) or abs(p.sum() - 1) > 1e-9:
        raise InvalidProbabilityVector(f"not a positive probability vector: {p.tolist()}")
    return float(-(p * np.log2(p)).sum())


def _check_exponents(chi1, chi2):
    if not (chi2 < chi1 < 0):
        raise InvalidExponents(f"need chi2 < chi1 < 0, got chi1 = {chi1}, chi2 = {chi2}")


def lyapunov_dimension(H_p, chi1, chi2):
    _check_exponents(chi1, chi2)
    if H_p < 0:
        raise ValueError("H_p must be non-negative")
    a1, a2 = -chi1, -chi2
    if H_p <= a1:
        return H_p / a1
    if H_p <= a1 + a2:
        return 1 + (H_p - a1) / a2
    return 2 * H_p / (a1 + a2)


@dataclass(frozen=True)
class DimensionBudget:
    H_p: float
    chi1: float
    chi2: float
    dim_L: float
    alpha_hat: float
    beta_hat: float
    beta_target: float
    gamma_target: float
    H1: float
    H2: float
    H3: float
    flags: tuple = ()

    def to_dict(self):
        d = dict(self.__dict__)
        d["flags"] = list(self.flags)
        return d


def ly_budget(H_p, chi1, chi2, alpha_hat, beta_hat):
    """Split ``H_p`` as ``H1 + H2 + H3`` from the estimated dimensions.

    ``H1 = beta |chi1|``, ``H2 = (alpha - beta) |chi2|``; ``H3`` is the rest.
    """
    _check_exponents(chi1, chi2)
    H1 = beta_hat * -chi1
    H2 = (alpha_hat - beta_hat) * -chi2
    H3 = H_p - H1 - H2
    dim_L = lyapunov_dimension(H_p, chi1, chi2)
    beta_target = min(1.0, H_p / -chi1)
    flags = []
    if H3 < -H3_THRESHOLD:
        flags.append("H3 < -0.05: estimates are inconsistent")
    if not 0 <= beta_hat <= 1:
        flags.append("H1/|chi1| outside [0, 1]")
    if not 0 <= alpha_hat - beta_hat <= 1:
        flags.append("H2/|chi2| outside [0, 1]")
    return DimensionBudget(
        float(H_p), float(chi1), float(chi2), float(dim_L), float(alpha_hat), float(beta_hat),
        float(beta_target), float(min(2.0, dim_L) - beta_target),
        float(H1), float(H2), float(H3), tuple(flags),
    )


def estimate_H3(system, N, n_cluster, seed=0, threads=None, samples=None):
    """``H(first symbol | D_n cell of the point)`` in bits for ``n = 1..n_cluster``.

    The last entry is the H3 proxy. Requires ``N`` at least 50 times the number
    of occupied cells at ``n_cluster``.
    """
    if system.k == 1:
        return [0.0] * n_cluster
    cloud = samples if samples is not None else sample_attractor(system, N, seed=seed, threads=threads)
    pts = cloud.points
    first = cloud.symbols[:, 0].astype(np.int64)
    frame = DyadicFrame.standard2d(n_cluster)
    cells = occupied_cells(pts, frame)
    if len(pts) < H3_SAMPLE_FACTOR * cells:
        raise BiasRuleViolated(
            f"{cells} occupied cells at level {n_cluster} need N >= {H3_SAMPLE_FACTOR * cells}"
        )
    out = []
    for n in range(1, n_cluster + 1):
        c = frame.with_level(n).cells(pts)
        cid, _ = group_ids(c)
        joint = cid * system.k + first
        out.append(_H_counts(joint) - _H_counts(cid))
    return out


def _H_counts(ids):
    _, counts = np.unique(ids, return_counts=True)
    q = counts / counts.sum()
    return float(-(q * np.log2(q)).sum())


# ------------------------------------------------------------ quadratic curves


@dataclass(frozen=True)
class ConicFit:
    ratio: float
    verdict: str
    coefficients: np.ndarray
    line: bool

    def to_dict(self):
        return {
            "ratio": self.ratio,
            "verdict": self.verdict,
            "coefficients": self.coefficients.tolist(),
            "line": self.line,
        }


def _whiten(pts):
    m = pts.mean(axis=0)
    cov = np.cov((pts - m).T)
    evals, evecs = np.linalg.eigh(cov)
    scale = np.where(evals > 1e-12 * max(evals.max(), 1e-300), 1 / np.sqrt(np.maximum(evals, 1e-300)), 0.0)
    M = (evecs * scale).T
    return m, M, int((scale > 0).sum())


def _conic_design(z):
    x, y = z[:, 0], z[:, 1]
    return np.column_stack([x * x, x * y, y * y, x, y, np.ones_like(x)])


def _pull_back(c, m, M):
    # q(M (x - m)) written in the monomials of x
    Q = np.array([[c[0], c[1] / 2], [c[1] / 2, c[2]]])
    l = c[3:5]
    Qx = M.T @ Q @ M
    lx = M.T @ l - 2 * Qx @ m
    cx = m @ Qx @ m - (M.T @ l) @ m + c[5]
    out = np.array([Qx[0, 0], 2 * Qx[0, 1], Qx[1, 1], lx[0], lx[1], cx])
    out /= np.linalg.norm(out)
    j = int(np.argmax(np.abs(out)))
    return out * np.sign(out[j])


def quadratic_curve_test(points, threshold=CONIC_THRESHOLD):
    """Smallest over largest singular value of the whitened conic design matrix.

    Whitening makes the verdict invariant under affine changes of
    coordinates. Returns a ``ConicFit``; ``verdict`` is ``OnConic`` when the
    ratio is below ``threshold``. A cloud with rank-one covariance is a line,
    a degenerate conic.
    """
    pts = np.asarray(getattr(points, "points", points), dtype=float)
    if len(pts) < 6:
        raise DegenerateCloud("need at least six points")
    if len(np.unique(pts, axis=0)) <= 2:
        raise DegenerateCloud("at most two distinct points")
    m, M, rank = _whiten(pts)
    if rank < 2:
        # collinear cloud: report the line n . (x - m) = 0 as a conic with no quadratic part
        nvec = np.linalg.eigh(np.cov((pts - m).T))[1][:, 0]
        coef = np.array([0.0, 0.0, 0.0, nvec[0], nvec[1], -nvec @ m])
        coef /= np.linalg.norm(coef)
        j = int(np.argmax(np.abs(coef)))
        return ConicFit(0.0, "OnConic", coef * np.sign(coef[j]), True)
    z = (pts - m) @ M.T
    X = _conic_design(z)
    # QR first so the SVD is 6x6 regardless of N
    R = np.linalg.qr(X, mode="r")
    _, s, Vt = np.linalg.svd(R)
    ratio = float(s[-1] / s[0])
    coef = _pull_back(Vt[-1], m, M)
    verdict = "OnConic" if ratio < threshold else "NotOnConic"
    return ConicFit(ratio, verdict, coef, rank < 2)


# ------------------------------------------------------------ affinity of L


@dataclass(frozen=True)
class AffinityFit:
    residual: float
    verdict: str
    B: np.ndarray
    c: np.ndarray
    degenerate: bool

    def to_dict(self):
        return {
            "residual": self.residual,
            "verdict": self.verdict,
            "B": self.B.tolist(),
            "c": self.c.tolist(),
            "degenerate": self.degenerate,
        }


def fit_affine_field(points, angles, weights=None, iters=20):
    """Best affine ``psi(x) = B x + c`` with ``psi(x)`` along the line at angle ``angles``.

    Minimises the weighted mean of ``sin^2`` of the angle between ``psi(x)``
    and the line by iteratively reweighted homogeneous least squares. Fits
    with ``||B|| < 1e-9 ||psi||`` are constant fields and are avoided when
    the near-null space allows it.
    """
    pts = np.asarray(points, dtype=float)
    th = np.asarray(angles, dtype=float)
    w = np.full(len(pts), 1.0 / len(pts)) if weights is None else np.asarray(weights, float) / np.sum(weights)
    s, c = np.sin(th), np.cos(th)
    x, y = pts[:, 0], pts[:, 1]
    # u_perp . (B x + c) is linear in (b11, b12, b21, b22, c1, c2)
    D = np.column_stack([-s * x, -s * y, c * x, c * y, -s, c])
    rw = np.ones(len(pts))
    v = None
    for _ in range(iters):
        Dw = D * np.sqrt(w * rw)[:, None]
        R = np.linalg.qr(Dw, mode="r")
        _, sv, Vt = np.linalg.svd(R)
        near = sv <= sv[-1] * (1 + 1e-6) + 1e-12 * sv[0]
        basis = Vt[near]
        if len(basis) > 1:
            # most non-constant direction inside the near-null space
            G = basis[:, :4] @ basis[:, :4].T
            _, ev = np.linalg.eigh(G)
            v_new = ev[:, -1] @ basis
        else:
            v_new = Vt[-1]
        v_new = v_new / np.linalg.norm(v_new)
        if v is not None and abs(abs(v @ v_new) - 1) < 1e-14:
            v = v_new
            break
        v = v_new
        psi = np.column_stack([v[0] * x + v[1] * y + v[4], v[2] * x + v[3] * y + v[5]])
        rw = 1.0 / np.maximum((psi * psi).sum(axis=1), 1e-12)
    B, cvec = v[:4].reshape(2, 2), v[4:]
    psi = pts @ B.T + cvec
    norm2 = np.maximum((psi * psi).sum(axis=1), 1e-300)
    sin2 = (-s * psi[:, 0] + c * psi[:, 1]) ** 2 / norm2
    residual = float(w @ sin2)
    degenerate = bool(np.linalg.norm(B) < 1e-9 * np.linalg.norm(v))
    verdict = "NotAffine" if residual > AFFINE_THRESHOLD else "Affine"
    return AffinityFit(residual, verdict, B, cvec, degenerate)


def l_affinity_test(system, N=100_000, seed=0, threads=None):
    """Is ``L(x)`` the direction of an affine vector field on the attractor?"""
    cloud = sample_attractor(system, N, seed=seed, threads=threads)
    angles = sample_directions(system, cloud.linear, seed, threads)
    return fit_affine_field(cloud.points, angles)


# ------------------------------------------------------------ projections


@dataclass(frozen=True)
class BourgainCheck:
    inf_bits_per_level: float
    threshold: float
    argmin: float
    holds: bool

    def to_dict(self):
        return dict(self.__dict__)


def bourgain_check_measure(nu, n, alpha_hat, margin=0.0, grid_size=256, threads=None):
    sweep = projection_entropy_sweep(nu, n, grid_size, threads)
    inf = sweep.inf_bits / n
    thr = alpha_hat / 2 + margin
    return BourgainCheck(float(inf), float(thr), sweep.argmin, bool(inf >= thr))


def bourgain_check(system, N=1_000_000, n=10, seed=0, window=(6, 11), margin=0.0, threads=None):
    """Infimum over 256 directions of ``(1/n) H(pi_W mu, D_n)`` against ``alpha_hat / 2``."""
    cloud = sample_attractor(system, N, seed=seed, threads=threads)
    alpha_hat, _ = entropy_dimension(cloud.points, window)
    return bourgain_check_measure(cloud.points, n, alpha_hat, margin, threads=threads)


# ------------------------------------------------------------ verdicts


@dataclass
class VerifyBudget:
    """Sample sizes and tolerances for ``verify_main``."""

    samples: int = 1_000_000
    window: tuple = (6, 11)
    projection_level: int = 10
    lyapunov_trials: int = 16
    lyapunov_length: int = 10_000
    furstenberg_samples: int = 10_000
    separation_nmax: int | None = None
    separation_cap: int = 1 << 16
    tolerance: float = DEFAULT_TOLERANCE
    conic_threshold: float = CONIC_THRESHOLD
    projection_tolerance: float = DEFAULT_TOLERANCE
    threads: int | None = None

    def to_dict(self):
        d = dict(self.__dict__)
        d["window"] = list(self.window)
        d.pop("threads")
        return d


@dataclass
class Verdict:
    route: str
    hypotheses: dict
    estimates: dict
    verdict: str
    tolerance: float
    failures: list = field(default_factory=list)
    notes: list = field(default_factory=list)
    budget: dict = field(default_factory=dict)

    @property
    def passed(self):
        return self.verdict == "Pass"

    @property
    def exit_code(self):
        return 0 if self.verdict == "Pass" else 2

    def to_dict(self):
        return {
            "route": self.route,
            "hypotheses": self.hypotheses,
            "estimates": self.estimates,
            "verdict": self.verdict,
            "tolerance": self.tolerance,
            "failures": list(self.failures),
            "notes": list(self.notes),
            "budget": self.budget,
        }


def _default_nmax(k, cap):
    n = 3
    while k ** (n + 1) <= cap and n < 14:
        n += 1
    return n


def _hyp(status, **detail):
    return {"status": status, **detail}


def _separation_hypothesis(system, budget):
    nmax = budget.separation_nmax or _default_nmax(system.k, budget.separation_cap)
    try:
        rep = separation_report(system, nmax, cap=max(budget.separation_cap, system.k**nmax), threads=budget.threads)
    except BudgetExceeded as exc:
        return _hyp("Inconclusive", reason=str(exc)), None
    if rep.coincidence:
        first = next(r for r in rep.all_pairs if r.min_distance is not None and r.min_distance < 1e-13)
        return _hyp(
            "Fails",
            reason=f"exact coincidence at n = {first.n}",
            pair=[list(w) for w in first.pair],
            distinct_slope=rep.slope,
        ), rep
    if rep.slope is None or rep.slope < SEPARATION_SLOPE_FLOOR:
        return _hyp("Inconclusive", slope=rep.slope, floor=SEPARATION_SLOPE_FLOOR), rep
    return _hyp("Holds", slope=rep.slope, c_hat=rep.c_hat, n_max=nmax), rep


def _slope_stderr(fit):
    n = np.asarray(fit.levels, float)
    r = np.asarray(fit.residuals)
    if len(n) < 3:
        return float("nan")
    return float(np.sqrt((r @ r) / (len(n) - 2) / ((n - n.mean()) ** 2).sum()))


def _alpha(cloud, budget):
    alpha_hat, fit = entropy_dimension(cloud.points, budget.window)
    return alpha_hat, fit


def _verdict_from(route, hyps, estimates, budget, notes, formula_ok):
    failures = [k for k, v in hyps.items() if v["status"] in ("Fails", "Reducible", "Conformal", "OnConic")]
    pending = [k for k, v in hyps.items() if v["status"] == "Inconclusive"]
    if failures:
        verdict = "HypothesisFailure"
    elif pending:
        verdict = "Inconclusive"
    elif formula_ok is None:
        verdict = "Inconclusive"
    else:
        verdict = "Pass" if formula_ok else "Fail"
    return Verdict(route, hyps, estimates, verdict, budget.tolerance, failures, notes, budget.to_dict())


def verify_main(system, budget=None, seed=0):
    """Check the hypotheses of the dimension formula and compare ``alpha_hat`` with ``min{2, dim_L}``.

    Systems whose linear parts share exactly one invariant line go through the
    triangular checklist instead; two or more shared lines are a failure of
    total irreducibility.
    """
    budget = budget or VerifyBudget()
    notes = []
    hyps = {}
    report = validate(system)
    hyps["validation"] = _hyp("Holds" if report.ok else "Fails", failures=report.failures())
    if not report.ok:
        return _verdict_from("main", hyps, {}, budget, notes, None)

    conf = check_nonconformality(system)
    hyps["non_conformality"] = _hyp("Holds" if not conf.conformal else "Conformal", residual=conf.residual)
    irr = check_total_irreducibility(system, seed=seed)
    witness = [float(a) for a in irr.witness]
    if irr.status == "Reducible" and len(witness) == 1:
        return _verify_triangular(system, budget, seed, hyps, notes)
    hyps["total_irreducibility"] = _hyp(
        {"TotallyIrreducible": "Holds", "Reducible": "Reducible"}.get(irr.status, "Inconclusive"),
        witness=witness,
        detail=irr.status,
    )
    if irr.status == "Reducible":
        notes.append("the linear parts preserve a finite set of lines; the formula is not claimed")
        return _verdict_from("main", hyps, {}, budget, notes, None)

    sep, _ = _separation_hypothesis(system, budget)
    hyps["exponential_separation"] = sep

    lyap = lyapunov_exponents(system, budget.lyapunov_trials, budget.lyapunov_length, seed)
    eta = furstenberg_measure(system, False, budget.furstenberg_samples, seed=seed, threads=budget.threads)
    eta_star = furstenberg_measure(system, True, budget.furstenberg_samples, seed=seed, threads=budget.threads)
    cloud = sample_attractor(system, budget.samples, seed=seed, threads=budget.threads)
    alpha_hat, fit = _alpha(cloud, budget)
    H_p = shannon(system.probs)
    dim_L = lyapunov_dimension(H_p, lyap.chi1, lyap.chi2)
    sweep = projection_entropy_sweep(cloud.points, budget.projection_level, threads=budget.threads)
    beta_hat = sweep.inf_bits / budget.projection_level
    lyb = ly_budget(H_p, lyap.chi1, lyap.chi2, alpha_hat, beta_hat)
    notes.extend(lyb.flags)
    notes.append(f"alpha_hat from the entropy slope over levels {budget.window[0]}..{budget.window[1]}, N = {budget.samples}")
    notes.append("the tolerance is a desk-scale calibration; convergence rates of alpha_hat are not known")
    target = min(2.0, dim_L)
    estimates = {
        "chi1": lyap.chi1,
        "chi2": lyap.chi2,
        "H_p": H_p,
        "dim_L": dim_L,
        "target": target,
        "alpha_hat": alpha_hat,
        "alpha_stderr": _slope_stderr(fit),
        "beta_hat": beta_hat,
        "beta_target": lyb.beta_target,
        "H1": lyb.H1,
        "H2": lyb.H2,
        "H3": lyb.H3,
        "eta_max_atom": eta.max_atom(),
        "eta_star_max_atom": eta_star.max_atom(),
        "deviation": abs(alpha_hat - target),
    }
    formula_ok = abs(alpha_hat - target) <= budget.tolerance
    return _verdict_from("main", hyps, estimates, budget, notes, formula_ok)


def _verify_triangular(system, budget, seed, hyps, notes):
    try:
        tri = triangular_diagnostics(system)
    except NotTriangular as exc:
        hyps["triangular"] = _hyp("Inconclusive", reason=str(exc))
        return _verdict_from("triangular", hyps, {}, budget, notes, None)
    notes.append(f"linear parts share the line at angle {tri.direction:.6g}; triangular checklist")
    hyps["not_diagonalizable"] = _hyp(
        "Fails" if tri.jointly_diagonalizable else "Holds", jointly_diagonalizable=tri.jointly_diagonalizable
    )
    sep, _ = _separation_hypothesis(system, budget)
    hyps["exponential_separation"] = sep
    distinct = tri.chi2 < tri.chi1 < 0
    hyps["distinct_exponents"] = _hyp(
        "Holds" if distinct and tri.contracted_at_chi2 else "Fails",
        chi1=tri.chi1,
        chi2=tri.chi2,
        invariant_line_rate=tri.rate,
    )
    cloud = sample_attractor(system, budget.samples, seed=seed, threads=budget.threads)
    conic = quadratic_curve_test(cloud.points, budget.conic_threshold)
    hyps["quadratic_curve"] = _hyp(
        "OnConic" if conic.verdict == "OnConic" else "Holds",
        ratio=conic.ratio,
        coefficients=conic.coefficients.tolist(),
    )
    alpha_hat, fit = _alpha(cloud, budget)
    # pi_1 mu is the self-similar measure of the induced maps x -> a_i x + t_i
    t = (cloud.points @ tri.rotation.T)[:, 0]
    pi1_dim, _ = entropy_dimension(t, budget.window)
    want = min(1.0, alpha_hat)
    hyps["projection_pi1"] = _hyp(
        "Holds" if abs(pi1_dim - want) <= budget.projection_tolerance else "Fails",
        dim_pi1=pi1_dim,
        target=want,
    )
    H_p = shannon(system.probs)
    dim_L = lyapunov_dimension(H_p, tri.chi1, tri.chi2)
    estimates = {
        "chi1": tri.chi1,
        "chi2": tri.chi2,
        "H_p": H_p,
        "dim_L": dim_L,
        "target": min(2.0, dim_L),
        "alpha_hat": alpha_hat,
        "alpha_stderr": _slope_stderr(fit),
        "dim_pi1": pi1_dim,
        "conic_ratio": conic.ratio,
    }
    formula_ok = abs(alpha_hat - min(2.0, dim_L)) <= budget.tolerance
    if conic.verdict == "OnConic":
        notes.append("mu lies on a quadratic curve; alpha_hat is reported without a claim on the formula")
    return _verdict_from("triangular", hyps, estimates, budget, notes, formula_ok)
