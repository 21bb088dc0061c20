"""Command-line front end: config parsing, run orchestration and artifacts.

Configs are JSON objects with nested blocks ``problem``, ``symmetry``,
``grid``, ``solver``, ``bubble``, ``diagnostics`` and ``sweep``; the keys
``N``, ``p`` and ``j`` may also be given at the top level as shorthand.
Unknown keys are rejected with their key path and line number.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import math
import os
import platform
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from .bubble import BubbleParams, residual_norm, sampled_decay_constant, sampled_norms
from .diagnostics import classify_sequence, profile_record
from .exceptions import ConfigurationError, PNehariError
from .functional import ProblemParams, write_trace_csv
from .grid import DomainMask, Grid
from .io import read_pbf, write_pbf
from .solver import SolveConfig, ps_diagnostics, solve
from .symmetry import SymmetryConfig, check_hypotheses, distinctness_witness

__all__ = ["RunConfig", "parse_config", "serialize_config", "run", "main", "MODES",
           "OUTPUT_ROOT_ENV"]

MODES = ("solve", "validate-bubble", "diagnose", "check-hypotheses", "sweep-j")
OUTPUT_ROOT_ENV = "PNEHARI_OUTPUT_ROOT"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_FAILED = 1


def _pos(x) -> bool:
    return x > 0


def _nonneg(x) -> bool:
    return x >= 0


def _unit(x) -> bool:
    return 0 < x < 1


# block -> key -> (accepted types, default, (predicate, constraint text) or None)
_NUM = (int, float)
SCHEMA: dict[str, dict[str, tuple]] = {
    "problem": {
        "N": (int, 4, (lambda x: x >= 2, "N >= 2")),
        "p": (_NUM, 2.0, None),
    },
    "symmetry": {
        "j": (int, 1, (lambda x: x >= 1, "j >= 1")),
        "samples_per_circle": (int, 8, (lambda x: x >= 8, "samples_per_circle >= 8")),
        "lambda_samples": (int, 8, (_pos, "lambda_samples > 0")),
    },
    "grid": {
        "nodes_per_axis": (int, 33, (lambda x: x >= 3 and x % 2 == 1, "nodes_per_axis odd and >= 3")),
        "half_extent": (_NUM, 2.0, (_pos, "half_extent > 0")),
        "mask": (str, "ball", (lambda x: x in ("ball", "box", "halfspace"), "mask in {ball, box, halfspace}")),
        "radius": (_NUM, None, (_pos, "radius > 0")),
        "normal": (list, None, None),
        "offset": (_NUM, 0.0, None),
    },
    "solver": {
        "init": (str, "projected-bubble", (lambda x: x in ("projected-bubble", "random-smooth"),
                                            "init in {projected-bubble, random-smooth}")),
        "init_center": (list, None, None),
        "init_eps": (_NUM, 0.5, (_pos, "init_eps > 0")),
        "alpha0": (_NUM, None, (_pos, "alpha0 > 0")),
        "beta": (_NUM, 0.5, (_unit, "0 < beta < 1")),
        "c1": (_NUM, 1e-4, (_unit, "0 < c1 < 1")),
        "tol_defect": (_NUM, 1e-6, (_nonneg, "tol_defect >= 0")),
        "tol_residual": (_NUM, 1e-3, (_nonneg, "tol_residual >= 0")),
        "tol_energy": (_NUM, 1e-8, (_nonneg, "tol_energy >= 0")),
        "max_iters": (int, 2000, (_nonneg, "max_iters >= 0")),
        "test_bank": (int, 16, (_pos, "test_bank > 0")),
        "diagnostics_every": (int, 0, (_nonneg, "diagnostics_every >= 0")),
        "ground_state": (bool, False, None),
    },
    "bubble": {
        "eps": (_NUM, 1.0, (_pos, "eps > 0")),
        "radius": (_NUM, 4.0, (_pos, "radius > 0")),
        "spacings": (list, [0.25, 0.125], None),
        "mu": (_NUM, None, (_nonneg, "mu >= 0")),
    },
    "diagnostics": {
        "fields": (list, [], None),
        "delta_fraction": (_NUM, 0.45, (lambda x: 0 < x <= 0.5, "0 < delta_fraction <= 0.5")),
        "eps_min": (_NUM, 0.05, (_pos, "eps_min > 0")),
        "d_ratio_max": (_NUM, 4.0, (_pos, "d_ratio_max > 0")),
    },
    "sweep": {
        "j_values": (list, None, None),
    },
}
TOP_LEVEL = {
    "mode": (str, "solve", (lambda x: x in MODES, "mode in {" + ", ".join(MODES) + "}")),
    "seed": (int, 0, (_nonneg, "seed >= 0")),
    "output_dir": (str, None, None),
    "workers": (int, 1, (_pos, "workers > 0")),
}
SHORTHAND = {"N": "problem", "p": "problem", "j": "symmetry"}


@dataclass
class RunConfig:
    """Validated run configuration with all defaults filled in."""

    mode: str = "solve"
    seed: int = 0
    output_dir: str | None = None
    workers: int = 1
    problem: dict = field(default_factory=dict)
    symmetry: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    bubble: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode, "seed": self.seed, "output_dir": self.output_dir,
            "workers": self.workers,
            **{b: copy.deepcopy(getattr(self, b)) for b in SCHEMA},
        }

    # typed views -----------------------------------------------------------
    def problem_params(self) -> ProblemParams:
        return ProblemParams(self.problem["N"], float(self.problem["p"]))

    def symmetry_config(self, j: int | None = None) -> SymmetryConfig:
        s = self.symmetry
        return SymmetryConfig(self.problem["N"], s["j"] if j is None else j,
                              s["samples_per_circle"], s["lambda_samples"], self.seed)

    def make_grid(self) -> Grid:
        g = self.grid
        N = self.problem["N"]
        L = float(g["half_extent"])
        if g["mask"] == "ball":
            mask = DomainMask.ball(float(g["radius"] if g["radius"] is not None else L))
        elif g["mask"] == "halfspace":
            mask = DomainMask.halfspace(g["normal"], g["offset"])
        else:
            mask = DomainMask.box()
        return Grid(N, g["nodes_per_axis"], L, mask)

    def solve_config(self, j: int | None = None, symmetric: bool = True) -> SolveConfig:
        s = self.solver
        center = None if s["init_center"] is None else tuple(float(c) for c in s["init_center"])
        return SolveConfig(
            problem=self.problem_params(), grid=self.make_grid(),
            symmetry=self.symmetry_config(j) if symmetric else None,
            init=s["init"], init_center=center, init_eps=float(s["init_eps"]), seed=self.seed,
            alpha0=None if s["alpha0"] is None else float(s["alpha0"]),
            beta=float(s["beta"]), c1=float(s["c1"]), tol_defect=float(s["tol_defect"]),
            tol_residual=float(s["tol_residual"]), tol_energy=float(s["tol_energy"]),
            max_iters=s["max_iters"], test_bank=s["test_bank"],
            diagnostics_every=s["diagnostics_every"])


class ConfigError(ConfigurationError):
    """Invalid configuration text, with the offending key path and line."""

    def __init__(self, message: str, path: str = "", line: int | None = None):
        where = f"{path}: " if path else ""
        at = f" (line {line})" if line else ""
        super().__init__(f"{where}{message}{at}")
        self.path = path
        self.line = line


def _line_of(text: str, path: list[str]) -> int | None:
    """Line of the last key in ``path``, searching each key after its parent."""
    pos = 0
    for key in path:
        i = text.find(f'"{key}"', pos)
        if i < 0:
            return None
        pos = i + 1
    return text.count("\n", 0, pos) + 1


def _check_value(value, spec: tuple, path: list[str], text: str):
    types, _, rule = spec
    name = ".".join(path)
    line = _line_of(text, path)
    if value is None:
        return None
    if types is bool:
        ok = isinstance(value, bool)
    elif isinstance(value, bool):
        ok = False
    else:
        ok = isinstance(value, types)
    if not ok:
        tname = getattr(types, "__name__", None) or "number"
        raise ConfigError(f"expected {tname}, got {type(value).__name__}", name, line)
    if isinstance(value, float) and not math.isfinite(value):
        raise ConfigError("must be finite", name, line)
    if rule is not None and not isinstance(value, list):
        pred, text_rule = rule
        if not pred(value):
            raise ConfigError(f"violates {text_rule} (got {value!r})", name, line)
    return value


def parse_config(text: str) -> RunConfig:
    """Parse and validate JSON config text; defaults are filled in."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", "", exc.lineno) from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    blocks: dict[str, dict] = {b: {} for b in SCHEMA}
    top: dict[str, Any] = {}
    for key, value in raw.items():
        if key in TOP_LEVEL:
            top[key] = _check_value(value, TOP_LEVEL[key], [key], text)
        elif key in SHORTHAND:
            block = SHORTHAND[key]
            nested = raw.get(block)
            if isinstance(nested, dict) and key in nested:
                raise ConfigError(f"given both at top level and in '{block}'", key,
                                  _line_of(text, [key]))
            blocks[block][key] = _check_value(value, SCHEMA[block][key], [key], text)
        elif key in SCHEMA:
            if not isinstance(value, dict):
                raise ConfigError("expected an object", key, _line_of(text, [key]))
            for sub, v in value.items():
                if sub not in SCHEMA[key]:
                    raise ConfigError("unknown key", f"{key}.{sub}", _line_of(text, [key, sub]))
                blocks[key][sub] = _check_value(v, SCHEMA[key][sub], [key, sub], text)
        else:
            raise ConfigError("unknown key", key, _line_of(text, [key]))
    cfg = RunConfig(**{k: (top[k] if k in top and top[k] is not None else d[1])
                       for k, d in TOP_LEVEL.items()})
    for b, spec in SCHEMA.items():
        filled = {k: copy.deepcopy(d[1]) for k, d in spec.items()}
        filled.update({k: v for k, v in blocks[b].items() if v is not None})
        setattr(cfg, b, filled)
    cfg.problem["p"] = float(cfg.problem["p"])
    _cross_check(cfg, text)
    return cfg


def _cross_check(cfg: RunConfig, text: str) -> None:
    N, p = cfg.problem["N"], cfg.problem["p"]
    if not 1 < p < N:
        line = _line_of(text, ["problem", "p"]) or _line_of(text, ["p"])
        raise ConfigError(f"violates 1 < p < N (p = {p}, N = {N})", "problem.p", line)
    j = cfg.symmetry["j"]
    if cfg.mode != "sweep-j" and 4 * j > N:
        line = _line_of(text, ["symmetry", "j"]) or _line_of(text, ["j"])
        raise ConfigError(f"violates 4j <= N (j = {j}, N = {N})", "symmetry.j", line)
    if N < 4 and cfg.mode in ("solve", "check-hypotheses", "sweep-j"):
        raise ConfigError("the symmetry groups need N >= 4", "problem.N",
                          _line_of(text, ["problem", "N"]) or _line_of(text, ["N"]))
    for k in ("init_center",):
        c = cfg.solver[k]
        if c is not None and (len(c) != N or not all(isinstance(x, (int, float)) for x in c)):
            raise ConfigError(f"expected {N} numbers", f"solver.{k}",
                              _line_of(text, ["solver", k]))
    if cfg.grid["mask"] == "halfspace":
        nrm = cfg.grid["normal"]
        if nrm is None or len(nrm) != N:
            raise ConfigError(f"halfspace mask needs a {N}-vector normal", "grid.normal",
                              _line_of(text, ["grid", "normal"]))
    for h in cfg.bubble["spacings"]:
        if not isinstance(h, (int, float)) or isinstance(h, bool) or not h > 0:
            raise ConfigError("spacings must be positive numbers", "bubble.spacings",
                              _line_of(text, ["bubble", "spacings"]))
    if cfg.mode == "diagnose" and not cfg.diagnostics["fields"]:
        raise ConfigError("diagnose needs at least one field file", "diagnostics.fields",
                          _line_of(text, ["diagnostics", "fields"]))
    js = cfg.sweep["j_values"]
    if js is not None:
        for jj in js:
            if not isinstance(jj, int) or isinstance(jj, bool) or not 1 <= jj or 4 * jj > N:
                raise ConfigError(f"each j must satisfy 1 <= j and 4j <= N (got {jj!r})",
                                  "sweep.j_values", _line_of(text, ["sweep", "j_values"]))
    try:
        cfg.make_grid()
    except PNehariError as exc:
        raise ConfigError(str(exc), "grid", _line_of(text, ["grid"])) from None


def serialize_config(cfg: RunConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# artifacts


def _versions() -> dict:
    import scipy
    import sklearn

    from . import __version__

    return {"pnehari": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__, "scikit-learn": sklearn.__version__}


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_jsonable) + "\n",
                    encoding="utf-8")


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    raise TypeError(f"not serializable: {type(obj).__name__}")


def _write_manifest(out: Path, cfg: RunConfig, extra: dict | None = None) -> None:
    payload = {"config": cfg.to_dict(), "versions": _versions(), "seed": cfg.seed}
    payload.update(extra or {})
    _write_json(out / "manifest.json", payload)


def _solve_and_write(cfg: RunConfig, out: Path, j: int | None = None) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    sc = cfg.solve_config(j)
    result = solve(sc)
    (out / "trace.csv").write_text(write_trace_csv(result.trace), encoding="utf-8")
    write_pbf(result.field, out / "field.pbf")
    diag: dict = {"result": result.summary(), "solver_diagnostics": list(result.diagnostics)}
    if len(result.trace) >= 2:
        diag["ps"] = ps_diagnostics(result.trace).to_dict()
    if result.field.max_abs() > 0:
        rec = profile_record(result.field, sc.problem, sc.symmetry,
                             reference=None, rescale=False)
        diag["profile"] = rec.to_dict()
    if cfg.solver["ground_state"]:
        gs = solve(sc.ground_state())
        diag["ground_state"] = gs.summary()
        diag["energy_ratio"] = result.energy / gs.energy
    _write_json(out / "diagnostics.json", diag)
    _write_manifest(out, cfg, {"symmetry_j": sc.symmetry.j if sc.symmetry else None})
    return diag["result"]


def _run_solve(cfg: RunConfig, out: Path) -> int:
    summary = _solve_and_write(cfg, out)
    print(f"solve: {summary['termination']} after {summary['iterations']} iterations, "
          f"J = {summary['J']:.12g}")
    return EXIT_OK


def _run_validate_bubble(cfg: RunConfig, out: Path) -> int:
    out.mkdir(parents=True, exist_ok=True)
    N, p = cfg.problem["N"], cfg.problem["p"]
    bp = BubbleParams(N, p, float(cfg.bubble["eps"]))
    R = float(cfg.bubble["radius"])
    rows = []
    for h in cfg.bubble["spacings"]:
        grid = Grid.from_spacing(N, R, float(h), DomainMask.ball(R))
        sup, l1 = residual_norm(bp, grid, mu=cfg.bubble["mu"])
        gp, crit = sampled_norms(bp, grid, masked=False)
        J = gp / p - crit / bp.problem.p_star
        rows.append([float(h), sup, l1, J, sampled_decay_constant(bp, grid)])
        print(f"validate-bubble: h = {h}: sup = {sup:.6g}, l1 = {l1:.6g}")
    with (out / "bubble.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["h", "sup_residual", "l1_residual", "J", "C_u"])
        for r in rows:
            w.writerow([repr(float(v)) for v in r])
    _write_manifest(out, cfg)
    return EXIT_OK


def _run_diagnose(cfg: RunConfig, out: Path) -> int:
    out.mkdir(parents=True, exist_ok=True)
    paths = cfg.diagnostics["fields"]
    params = cfg.problem_params()
    frac = float(cfg.diagnostics["delta_fraction"])
    records = []
    for path in paths:
        u = read_pbf(path)
        total = float((np.abs(u.values) ** params.p_star).sum()) * u.grid.cell_volume
        records.append(profile_record(u, params, None, frac * total))
    payload: dict = {"records": [r.to_dict() for r in records]}
    if len(records) >= 2:
        cls = classify_sequence(records, read_pbf(paths[-1]).grid,
                                cfg.diagnostics["eps_min"], cfg.diagnostics["d_ratio_max"],
                                p=params.p)
        payload["classification"] = cls.to_dict()
    payload["trend"] = {"eps": [r.eps for r in records], "xi": [r.xi.tolist() for r in records]}
    _write_json(out / "diagnostics.json", payload)
    _write_manifest(out, cfg)
    return EXIT_OK


def _run_check_hypotheses(cfg: RunConfig, out: Path) -> int:
    out.mkdir(parents=True, exist_ok=True)
    rep = check_hypotheses(cfg.symmetry_config())
    _write_json(out / "hypotheses.json", rep.to_dict())
    _write_manifest(out, cfg)
    print(f"check-hypotheses: S1={rep.s1} S2={rep.s2} S3={rep.s3}")
    return EXIT_OK


def _sweep_one(args: tuple[str, str, int]) -> dict:
    text, out, j = args
    cfg = parse_config(text)
    return _solve_and_write(cfg, Path(out), j)


def _run_sweep(cfg: RunConfig, out: Path) -> int:
    out.mkdir(parents=True, exist_ok=True)
    N = cfg.problem["N"]
    js = cfg.sweep["j_values"] or list(range(1, N // 4 + 1))
    text = serialize_config(cfg)
    jobs = [(text, str(out / f"j{j}"), j) for j in js]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            summaries = list(pool.map(_sweep_one, jobs))
    else:
        summaries = [_sweep_one(job) for job in jobs]
    fields = {j: read_pbf(out / f"j{j}" / "field.pbf") for j in js}
    matrix = []
    for a in js:
        row = []
        for b in js:
            if a == b:
                row.append(None)
                continue
            lo, hi = min(a, b), max(a, b)
            w = distinctness_witness(fields[lo], fields[hi], lo, hi)
            row.append(w.to_dict())
        matrix.append(row)
    _write_json(out / "sweep.json", {"j_values": js, "runs": dict(zip(map(str, js), summaries)),
                                     "distinctness": matrix})
    _write_manifest(out, cfg)
    for j, s in zip(js, summaries):
        print(f"sweep-j: j = {j}: {s['termination']}, J = {s['J']:.12g}")
    return EXIT_OK


RUNNERS: dict[str, Callable[[RunConfig, Path], int]] = {
    "solve": _run_solve,
    "validate-bubble": _run_validate_bubble,
    "diagnose": _run_diagnose,
    "check-hypotheses": _run_check_hypotheses,
    "sweep-j": _run_sweep,
}


def default_output_dir(mode: str) -> Path:
    root = os.environ.get(OUTPUT_ROOT_ENV, "runs")
    return Path(root) / mode


def run(cfg: RunConfig) -> int:
    """Run one configured mode; returns the process exit status."""
    out = Path(cfg.output_dir) if cfg.output_dir else default_output_dir(cfg.mode)
    return RUNNERS[cfg.mode](cfg, out)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pnehari",
        description="Equivariant sign-changing solutions of the critical p-Laplace equation.",
        epilog=f"Default output root: ${OUTPUT_ROOT_ENV} (else ./runs).")
    parser.add_argument("--config", metavar="PATH", help="JSON run configuration")
    parser.add_argument("--mode", choices=MODES, help="override the configured mode")
    parser.add_argument("--output-dir", metavar="DIR", help="artifact directory")
    parser.add_argument("--seed", type=int, help="master seed")
    parser.add_argument("--workers", type=int, help="parallel solves for sweep-j")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {"mode": args.mode, "output_dir": args.output_dir, "seed": args.seed,
                 "workers": args.workers}
    overrides = {k: v for k, v in overrides.items() if v is not None}
    try:
        text = Path(args.config).read_text(encoding="utf-8") if args.config else "{}"
        if overrides:
            try:
                raw = json.loads(text)
            except json.JSONDecodeError:
                parse_config(text)  # raises with the line number
                raise
            if not isinstance(raw, dict):
                raise ConfigError("config must be a JSON object")
            raw.update(overrides)
            text = json.dumps(raw, indent=2)
        cfg = parse_config(text)
    except (ConfigurationError, OSError) as exc:
        print(f"pnehari: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return run(cfg)
    except PNehariError as exc:
        print(f"pnehari: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
