"""Command-line entry point: ``affdim <command> [flags]``.

Every command writes ``<command>.json`` plus ``<command>_<table>.csv`` into
``--out-dir`` and prints a short human summary on stdout. Exit codes: 0 on
completion, 2 on a hypothesis-failure verdict, 1 on errors (with a JSON
object on stderr).
"""

import argparse
import json
import sys

import numpy as np

from . import __version__
from . import _parallel as par
from . import convolution, dimension, entropy, fixtures, ifs, separation, spectral
from .config import COMMANDS, TOLERANCES, load_config
from .exceptions import AffdimError, ValidationError
from .reports import write_artifacts

METRICS = {
    "separation": "Frobenius distance of 3x3 affine matrices (norm_distance)",
    "entropy": "Shannon entropy in bits of dyadic partitions",
    "furstenberg": "1-Wasserstein distance on the circle of lines (period pi)",
    "fit": "least-squares slope of bits against level",
}

CALIBRATION = {
    "chunk": par.CHUNK,
    "coincidence_tol": separation.COINCIDENCE_TOL,
    "separation_fit_from": separation.FIT_FROM,
    "separation_slope_floor": dimension.SEPARATION_SLOPE_FLOOR,
    "entropy_bias_factor": entropy.BIAS_FACTOR,
    "h3_threshold": dimension.H3_THRESHOLD,
    "h3_sample_factor": dimension.H3_SAMPLE_FACTOR,
    "affine_threshold": dimension.AFFINE_THRESHOLD,
    "furstenberg_burnin": spectral.BURNIN,
    "invariant_line_tol": spectral.INVARIANT_TOL,
    "thin_target": convolution.THIN_TARGET,
    "word_cap": ifs.DEFAULT_WORD_CAP,
}


class _Parser(argparse.ArgumentParser):
    # usage errors go through the structured error path (exit 1)
    def error(self, message):
        raise ValidationError(message, "argv")


def _split_tolerances(argv):
    """Pull ``--tolerance.<name> V`` and ``--tolerance.<name>=V`` out of ``argv``."""
    rest, tol = [], {}
    it = iter(argv)
    for tok in it:
        if tok.startswith("--tolerance."):
            name, eq, value = tok[len("--tolerance."):].partition("=")
            if not eq:
                value = next(it, None)
                if value is None:
                    raise ValidationError("missing value", f"tolerance.{name}")
            tol[name] = value
        else:
            rest.append(tok)
    return rest, tol


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON system document")
    common.add_argument("--fixture", help="shipped fixture name (see `affdim fixtures`)")
    common.add_argument("--seed", type=int, help="64-bit seed (required by stochastic commands)")
    common.add_argument("--samples", type=int, help="sample size N")
    common.add_argument("--nmax", type=int, help="largest level / word length")
    common.add_argument("--out-dir", default=".", help="directory for JSON and CSV artifacts")
    common.add_argument("--threads", type=int, help="worker threads (default: $AFFDIM_THREADS or 1)")

    parser = _Parser(prog="affdim", description="Dimension diagnostics for planar self-affine measures.")
    parser.add_argument("--version", action="version", version=f"affdim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "validate": "check the standing assumptions on the system",
        "sample": "sample the self-affine measure",
        "lyapunov": "Lyapunov exponents",
        "furstenberg": "Furstenberg measures eta and eta*",
        "separation": "minimum distance between cylinder maps per level",
        "entropy": "dyadic entropies and the entropy-dimension slope",
        "dimension": "Lyapunov dimension, alpha_hat, beta_hat and the entropy budget",
        "verify": "check hypotheses and compare alpha_hat with min{2, dim_L}",
        "convolve": "entropy growth under convolution with a finite measure on the affine group",
        "fixtures": "list the shipped fixtures",
    }
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common], help=helps[name])
        if name == "convolve":
            p.add_argument("--theta", choices=["translations", "rotations"], default="translations")
            p.add_argument("--atoms", type=int, default=9, help="number of atoms of theta")
            p.add_argument("--scale", type=float, default=0.25, help="translation scale")
    parser.epilog = "tolerances: " + ", ".join(f"--tolerance.{k} (default {v[0]})" for k, v in TOLERANCES.items())
    return parser


# ------------------------------------------------------------ commands


def cmd_fixtures(cfg, args):
    rows = []
    for name, (factory, desc) in sorted(fixtures.REGISTRY.items()):
        s = factory()
        rows.append({"name": name, "maps": s.k, "H_p": s.entropy(), "description": desc})
    lines = [f"{r['name']:7s} k={r['maps']}  {r['description']}" for r in rows]
    return {"fixtures": rows}, {"table": (rows, ["name", "maps", "H_p", "description"])}, 0, lines


def cmd_validate(cfg, args):
    rep = ifs.validate(cfg.system)
    rows = [{"check": k, "passed": v["passed"], "detail": v["detail"]} for k, v in rep.to_dict().items()]
    lines = [f"{'ok  ' if r['passed'] else 'FAIL'} {r['check']}: {r['detail']}" for r in rows]
    return {"ok": rep.ok, "checks": rep.to_dict()}, {"checks": (rows, ["check", "passed", "detail"])}, 0 if rep.ok else 2, lines


def cmd_sample(cfg, args):
    N = cfg.samples or 100_000
    cloud = ifs.sample_attractor(cfg.system, N, seed=cfg.seed, threads=cfg.threads)
    pts = cloud.points
    rows = [{"x": float(x), "y": float(y), "length": int(m)} for (x, y), m in zip(pts, cloud.lengths)]
    summary = {
        "N": N,
        "depth_target": cloud.depth_target,
        "mean": pts.mean(axis=0).tolist(),
        "min": pts.min(axis=0).tolist(),
        "max": pts.max(axis=0).tolist(),
        "mean_word_length": float(cloud.lengths.mean()),
    }
    lines = [f"{N} samples, bounding box {summary['min']} .. {summary['max']}"]
    return summary, {"points": (rows, ["x", "y", "length"])}, 0, lines


def cmd_lyapunov(cfg, args):
    length = cfg.samples or 10_000
    fwd = spectral.lyapunov_exponents(cfg.system, 16, length, cfg.seed)
    rev = spectral.lyapunov_exponents(cfg.system, 16, length, cfg.seed, reverse=True)
    rows = [dict(direction=d, **e.to_dict()) for d, e in (("forward", fwd), ("reverse", rev))]
    cols = ["direction", "chi1", "chi2", "stderr1", "sum_exact", "trials", "length", "exact"]
    lines = [f"chi1 = {fwd.chi1:.6f} +- {fwd.stderr1:.2g}, chi2 = {fwd.chi2:.6f} (chi1 + chi2 = {fwd.sum_exact:.6f} exactly)"]
    return {"forward": fwd, "reverse": rev}, {"exponents": (rows, cols)}, 0, lines


def cmd_furstenberg(cfg, args):
    N = cfg.samples or 10_000
    out, rows = {}, []
    for name, tr in (("eta", False), ("eta_star", True)):
        m = spectral.furstenberg_measure(cfg.system, tr, N, seed=cfg.seed, threads=cfg.threads)
        out[name] = {"samples": N, "max_atom": m.max_atom(), "stationarity_residual": spectral.stationarity_residual(cfg.system, m)}
        hist, edges = np.histogram(m.angles, bins=64, range=(0, np.pi), weights=m.weights)
        rows += [{"measure": name, "lo": float(a), "hi": float(b), "mass": float(h)} for a, b, h in zip(edges, edges[1:], hist)]
    lines = [f"{k}: max atom {v['max_atom']:.4g}, stationarity residual {v['stationarity_residual']:.3g}" for k, v in out.items()]
    return out, {"histogram": (rows, ["measure", "lo", "hi", "mass"])}, 0, lines


def cmd_separation(cfg, args):
    nmax = cfg.nmax or 10
    rep = separation.separation_report(cfg.system, nmax, threads=cfg.threads)
    rows = rep.table()
    tables = {"table": (rows, ["n", "count", "min_distance", "slope_so_far"])}
    if rep.all_pairs:
        ap = [{"n": r.n, "count": r.word_count, "min_distance": r.min_distance} for r in rep.all_pairs]
        tables["all_pairs"] = (ap, ["n", "count", "min_distance"])
    lines = [f"mode {rep.mode}; slope {rep.slope}; c_hat {rep.c_hat}"]
    lines += [f"n={r['n']:2d} count={r['count']} min={r['min_distance']}" for r in rows]
    return rep, tables, 0, lines


def cmd_entropy(cfg, args):
    N = cfg.samples or 1_000_000
    nmax = cfg.nmax or 11
    cloud = ifs.sample_attractor(cfg.system, N, seed=cfg.seed, threads=cfg.threads)
    rows = entropy.entropy_table(cloud.points, range(1, nmax + 1))
    window = (max(1, nmax - 5), nmax)
    alpha, fit = entropy.entropy_dimension(cloud.points, window)
    lines = [f"alpha_hat = {alpha:.4f} over levels {window[0]}..{window[1]}, N = {N}"]
    summary = {"N": N, "window": list(window), "alpha_hat": alpha, "fit": fit}
    return summary, {"table": (rows, ["n", "frame", "bits", "corrected_bits", "atoms_used"])}, 0, lines


def cmd_dimension(cfg, args):
    N = cfg.samples or 1_000_000
    nmax = cfg.nmax or 11
    s = cfg.system
    lyap = spectral.lyapunov_exponents(s, 16, 10_000, cfg.seed)
    cloud = ifs.sample_attractor(s, N, seed=cfg.seed, threads=cfg.threads)
    window = (max(1, nmax - 5), nmax)
    alpha, _ = entropy.entropy_dimension(cloud.points, window)
    level = min(10, nmax)
    sweep = entropy.projection_entropy_sweep(cloud.points, level, threads=cfg.threads)
    H_p = dimension.shannon(s.probs)
    budget = dimension.ly_budget(H_p, lyap.chi1, lyap.chi2, alpha, sweep.inf_bits / level)
    # H3 proxy at the finest level the bias rule allows
    n_cluster = nmax
    while n_cluster > 1 and N < dimension.H3_SAMPLE_FACTOR * entropy.occupied_cells(cloud.points, entropy.DyadicFrame.standard2d(n_cluster)):
        n_cluster -= 1
    h3 = dimension.estimate_H3(s, N, n_cluster, samples=cloud)
    rows = [{"n": i + 1, "H_first_symbol_given_cell": v} for i, v in enumerate(h3)]
    summary = {"budget": budget, "window": list(window), "projection_level": level, "H3_levels": h3, "N": N}
    lines = [
        f"dim_L = {budget.dim_L:.4f}, alpha_hat = {alpha:.4f}, beta_hat = {budget.beta_hat:.4f}",
        f"H_p = {H_p:.4f} = H1 {budget.H1:.4f} + H2 {budget.H2:.4f} + H3 {budget.H3:.4f}",
    ] + list(budget.flags)
    return summary, {"h3": (rows, ["n", "H_first_symbol_given_cell"])}, 0, lines


def cmd_verify(cfg, args):
    t = cfg.tolerances
    budget = dimension.VerifyBudget(
        samples=cfg.samples or 1_000_000,
        tolerance=t["alpha"],
        projection_tolerance=t["projection"],
        conic_threshold=t["conic"],
        threads=cfg.threads,
    )
    if cfg.nmax is not None:
        budget.separation_nmax = max(separation.FIT_FROM, cfg.nmax)
    v = dimension.verify_main(cfg.system, budget, seed=cfg.seed)
    rows = [{"hypothesis": k, "status": h["status"]} for k, h in v.hypotheses.items()]
    lines = [f"verdict: {v.verdict} (route {v.route})"]
    lines += [f"  {r['hypothesis']}: {r['status']}" for r in rows]
    if "alpha_hat" in v.estimates:
        e = v.estimates
        lines.append(f"  alpha_hat = {e['alpha_hat']:.4f}, target min(2, dim_L) = {e['target']:.4f}")
    return v, {"hypotheses": (rows, ["hypothesis", "status"])}, v.exit_code, lines


def cmd_convolve(cfg, args):
    n = cfg.nmax or 10
    N = cfg.samples or 1_000_000
    if args.atoms < 1:
        raise ValidationError("needs at least one atom", "atoms")
    if args.theta == "translations":
        theta = convolution.random_translations(args.atoms, args.scale, cfg.seed)
    else:
        theta = convolution.rotations_about((0.5, 0.5), args.atoms, cfg.seed)
    rec = convolution.entropy_growth_experiment(cfg.system, theta, n, seed=cfg.seed, N=N, threads=cfg.threads)
    summary = {"theta": {"kind": args.theta, "atoms": args.atoms, "scale": args.scale}, "N": N, "growth": rec}
    lines = [f"gain = {rec.gain:.4f} bits/level at n = {n}; theta carries {rec.theta_bits_per_level:.4f} bits/level"]
    return summary, {"growth": (rec.rows(), ["n", "frame", "H_mu", "H_conv", "gain"])}, 0, lines


HANDLERS = {name: globals()[f"cmd_{name}"] for name in COMMANDS}


# ------------------------------------------------------------ dispatch


def run(argv=None, stdout=None):
    """Parse ``argv``, run the command, write artifacts; returns the exit code."""
    stdout = stdout or sys.stdout
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        argv, tol = _split_tolerances(argv)
        args = build_parser().parse_args(argv)
        cfg = load_config(
            args.command, args.config, args.fixture, args.seed, args.samples, args.nmax,
            args.out_dir, args.threads, tol,
        )
        cfg.threads = par.resolve_threads(cfg.threads)
        result, tables, code, lines = HANDLERS[args.command](cfg, args)
        summary = {
            "tool": {"name": "affdim", "version": __version__},
            "config": cfg.echo(),
            "seed": cfg.seed,
            "metrics": METRICS,
            "calibration": CALIBRATION,
            "exit_code": code,
            "result": result,
        }
        paths = write_artifacts(cfg.out_dir, args.command, summary, tables)
    except SystemExit as exc:
        # --help and --version
        return int(exc.code or 0)
    except (AffdimError, ValueError, OSError) as exc:
        err = {"error": type(exc).__name__, "message": str(exc)}
        for key in ("path", "line", "column"):
            if getattr(exc, key, None) not in (None, ""):
                err[key] = getattr(exc, key)
        sys.stderr.write(json.dumps(err, sort_keys=True) + "\n")
        return 1
    for line in lines:
        print(line, file=stdout)
    for p in paths:
        print(f"wrote {p}", file=stdout)
    return code


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
