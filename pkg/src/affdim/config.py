"""Run configuration: system documents, flags and defaults."""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import fixtures
from .exceptions import ParseError, ValidationError
from .ifs import IfsSystem

STOCHASTIC = {"sample", "lyapunov", "furstenberg", "entropy", "dimension", "verify", "convolve"}
COMMANDS = (
    "validate", "sample", "lyapunov", "furstenberg", "separation",
    "entropy", "dimension", "verify", "convolve", "fixtures",
)
MAX_SAMPLES = 10_000_000
MAX_NMAX = 24

# name -> (default, description); overridable with --tolerance.<name>
TOLERANCES = {
    "alpha": (0.1, "allowed |alpha_hat - min{2, dim_L}|"),
    "projection": (0.1, "allowed |dim pi_1 mu - min{1, alpha_hat}| on the triangular route"),
    "conic": (1e-6, "sigma_min / sigma_max below which a cloud is on a conic"),
}


def _number(x, path):
    # decimal strings are accepted and parsed to the nearest double
    if isinstance(x, bool):
        raise ValidationError("expected a number, got a boolean", path)
    if isinstance(x, (int, float)):
        return float(x)
    if isinstance(x, str):
        try:
            return float(x.strip())
        except ValueError:
            raise ValidationError(f"not a number: {x!r}", path) from None
    raise ValidationError(f"expected a number, got {type(x).__name__}", path)


def parse_system(doc, source="<inline>"):
    """Build an ``IfsSystem`` from ``{"maps": [{"A": ..., "b": ...}], "p": [...], "name": ...}``.

    Returns ``(system, notes)``; ``notes`` records filled-in defaults.
    """
    notes = []
    if not isinstance(doc, dict):
        raise ValidationError("the system document must be a JSON object", "")
    maps = doc.get("maps")
    if not isinstance(maps, list) or not maps:
        raise ValidationError("needs a non-empty list of maps", "maps")
    A, b = [], []
    for i, m in enumerate(maps):
        if not isinstance(m, dict):
            raise ParseError(f"map {i} must be an object with keys A and b")
        rows = m.get("A")
        if not isinstance(rows, list) or len(rows) != 2 or any(not isinstance(r, list) or len(r) != 2 for r in rows):
            flat = sum(len(r) if isinstance(r, list) else 1 for r in rows) if isinstance(rows, list) else 0
            raise ParseError(f"map {i}: A must be a 2x2 matrix [[a11, a12], [a21, a22]], got {flat} entries")
        vec = m.get("b")
        if not isinstance(vec, list) or len(vec) != 2:
            raise ParseError(f"map {i}: b must have two entries")
        A.append([[_number(x, f"maps[{i}].A[{r}][{c}]") for c, x in enumerate(row)] for r, row in enumerate(rows)])
        b.append([_number(x, f"maps[{i}].b[{c}]") for c, x in enumerate(vec)])
    if "p" in doc and doc["p"] is not None:
        p = doc["p"]
        if not isinstance(p, list) or len(p) != len(maps):
            raise ValidationError(f"p must list {len(maps)} probabilities", "p")
        p = np.array([_number(x, f"p[{i}]") for i, x in enumerate(p)])
        if np.any(p <= 0) or abs(p.sum() - 1) > 1e-9:
            raise ValidationError("p must be positive and sum to 1", "p")
    else:
        p = np.full(len(maps), 1.0 / len(maps))
        notes.append("p omitted: uniform probabilities filled in")
    name = doc.get("name", Path(source).stem if source != "<inline>" else "inline")
    return IfsSystem.from_arrays(A, b, p, name=str(name)), notes


def load_system_text(text, source="<inline>"):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{source}: {exc.msg}", exc.lineno, exc.colno) from None
    return parse_system(doc, source)


def system_to_doc(system):
    return {
        "name": system.name,
        "maps": [{"A": m.A.tolist(), "b": m.b.tolist()} for m in system.maps],
        "p": system.probs.tolist(),
    }


@dataclass
class RunConfig:
    command: str
    system: IfsSystem = None
    source: str = ""
    seed: int = None
    samples: int = None
    nmax: int = None
    out_dir: str = "."
    threads: int = None
    tolerances: dict = field(default_factory=lambda: {k: v[0] for k, v in TOLERANCES.items()})
    notes: list = field(default_factory=list)

    def echo(self):
        """Effective configuration as embedded in every report (no thread count)."""
        return {
            "command": self.command,
            "source": self.source,
            "system": None if self.system is None else system_to_doc(self.system),
            "seed": self.seed,
            "samples": self.samples,
            "nmax": self.nmax,
            "tolerances": dict(sorted(self.tolerances.items())),
            "notes": list(self.notes),
        }


def load_config(command, config=None, fixture=None, seed=None, samples=None, nmax=None,
                out_dir=".", threads=None, tolerances=None):
    """Validate flags and build a ``RunConfig``; the system comes from a file or a fixture."""
    if command not in COMMANDS:
        raise ValidationError(f"unknown command {command!r}", "command")
    cfg = RunConfig(command, out_dir=str(out_dir), threads=threads)
    if config is not None and fixture is not None:
        raise ValidationError("give either --config or --fixture, not both", "config")
    if config is not None:
        path = Path(config)
        if not path.exists():
            raise ValidationError(f"no such file: {config}", "config")
        cfg.system, cfg.notes = load_system_text(path.read_text(), str(path))
        cfg.source = str(path)
    elif fixture is not None:
        try:
            cfg.system = fixtures.get_fixture(fixture)
        except KeyError as exc:
            raise ValidationError(str(exc.args[0]), "fixture") from None
        cfg.source = f"fixture:{cfg.system.name}"
    elif command != "fixtures":
        raise ValidationError("a system is required: --config FILE or --fixture NAME", "config")
    if command in STOCHASTIC and seed is None:
        raise ValidationError(f"{command} is stochastic and needs --seed", "seed")
    if seed is not None:
        seed = int(seed)
        if not 0 <= seed < 2**64:
            raise ValidationError("seed must be a 64-bit unsigned integer", "seed")
    cfg.seed = seed
    if samples is not None and not 1 <= samples <= MAX_SAMPLES:
        raise ValidationError(f"samples must be in [1, {MAX_SAMPLES}]", "samples")
    cfg.samples = samples
    if nmax is not None and not 1 <= nmax <= MAX_NMAX:
        raise ValidationError(f"nmax must be in [1, {MAX_NMAX}]", "nmax")
    cfg.nmax = nmax
    for name, value in (tolerances or {}).items():
        if name not in TOLERANCES:
            raise ValidationError(f"unknown tolerance {name!r}; known: {sorted(TOLERANCES)}", f"tolerance.{name}")
        try:
            cfg.tolerances[name] = float(value)
        except ValueError:
            raise ValidationError(f"not a number: {value!r}", f"tolerance.{name}") from None
    return cfg
