"""Command-line runner.

Subcommands::

    solve        solve the manufactured case on each level
    convergence  error table with observed orders
    infsup       coercivity and inf-sup estimates per level

Settings come from flags or from a ``key = value`` file given with
``--config``; flags win. Exit status is 0 on success, 2 for invalid input
and 3 for solver failures, with a JSON error document on stderr.
"""
import argparse
import json
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .assembly import AssemblyError, MaterialParams, assemble_norm_gram
from .mesh import MeshError
from .solver import SolverError, estimate_coercivity, estimate_inf_sup
from .verification import (ConvergenceTable, StudyError, compute_error_norms, interpolation_error,
                           manufactured_case, run_convergence_study, solve_level, validate_levels)

EXIT_USAGE = 2
EXIT_SOLVER = 3

COMMANDS = ("solve", "convergence", "infsup")
DEFAULT_LEVELS = {"solve": [8], "convergence": [4, 8, 16, 32], "infsup": [2, 4, 8]}


class UsageError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    levels: list = field(default_factory=list)
    mu: float = 1.0
    alpha1: float = 1.0
    K: list = field(default_factory=lambda: [1.0, 0.0, 0.0, 1.0])   # row-major
    penalty_stokes_weight: float = None
    quadrature_degree: int = 10
    output_dir: str = "out"
    emit_vtk: bool = False
    emit_matrices: bool = False
    seed: int = 0

    def validate(self):
        if self.command not in COMMANDS:
            raise UsageError(f"unknown command {self.command!r}")
        if not self.levels or any(n < 1 for n in self.levels):
            raise UsageError(f"levels must be a nonempty list of positive integers: {self.levels}")
        if self.command == "convergence":
            try:
                validate_levels(self.levels)
            except ValueError as exc:
                raise UsageError(str(exc)) from None
        if self.quadrature_degree < 1:
            raise UsageError("quadrature degree must be at least 1")
        if self.penalty_stokes_weight is not None and not self.penalty_stokes_weight > 0:
            raise UsageError("penalty weight must be positive")
        try:
            self.params()
        except AssemblyError as exc:
            raise UsageError(str(exc)) from None
        return self

    def params(self):
        return MaterialParams(mu=self.mu, K=np.array(self.K).reshape(2, 2), alpha1=self.alpha1,
                              penalty_stokes_weight=self.penalty_stokes_weight)

    def as_dict(self):
        return asdict(self)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _levels(text):
    try:
        return [int(s) for s in str(text).split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid level list {text!r}") from None


def build_parser():
    parser = _Parser(prog="stokes-darcy-cr", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="key = value file; command-line flags take precedence")
    parser.add_argument("--levels", type=_levels, help="comma-separated mesh parameters n")
    parser.add_argument("--mu", type=float)
    parser.add_argument("--alpha1", type=float)
    parser.add_argument("--kxx", type=float)
    parser.add_argument("--kxy", type=float)
    parser.add_argument("--kyy", type=float)
    parser.add_argument("--penalty-weight", type=float, dest="penalty_weight",
                        help="weight of the Stokes jump penalty (default 1 + 2 mu)")
    parser.add_argument("--quad-degree", type=int, dest="quad_degree")
    parser.add_argument("--out")
    parser.add_argument("--emit-vtk", action="store_true", default=None, dest="emit_vtk")
    parser.add_argument("--emit-matrices", action="store_true", default=None, dest="emit_matrices")
    parser.add_argument("--seed", type=int)
    return parser


_FILE_KEYS = {
    "levels": _levels, "mu": float, "alpha1": float, "kxx": float, "kxy": float, "kyy": float,
    "penalty_weight": float, "quad_degree": int, "out": str, "seed": int,
    "emit_vtk": lambda s: s.strip().lower() in ("1", "true", "yes", "on"),
    "emit_matrices": lambda s: s.strip().lower() in ("1", "true", "yes", "on"),
}


def read_config_file(path):
    """Parse ``key = value`` lines; ``#`` starts a comment. Keys use the flag
    names with dashes or underscores."""
    values = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}") from None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep or key not in _FILE_KEYS:
            raise UsageError(f"{path}:{lineno}: cannot parse {raw.strip()!r}")
        try:
            values[key] = _FILE_KEYS[key](value.strip().strip('"'))
        except (ValueError, argparse.ArgumentTypeError):
            raise UsageError(f"{path}:{lineno}: bad value for {key}") from None
    return values


def config_from_args(argv):
    args = build_parser().parse_args(argv)
    merged = read_config_file(args.config) if args.config else {}
    merged.update({k: v for k, v in vars(args).items() if v is not None and k not in ("command", "config")})
    K = [merged.get("kxx", 1.0), merged.get("kxy", 0.0), merged.get("kxy", 0.0), merged.get("kyy", 1.0)]
    cfg = RunConfig(
        command=args.command,
        levels=merged.get("levels", DEFAULT_LEVELS[args.command]),
        mu=merged.get("mu", 1.0),
        alpha1=merged.get("alpha1", 1.0),
        K=[float(k) for k in K],
        penalty_stokes_weight=merged.get("penalty_weight"),
        quadrature_degree=merged.get("quad_degree", 10),
        output_dir=merged.get("out", "out"),
        emit_vtk=bool(merged.get("emit_vtk", False)),
        emit_matrices=bool(merged.get("emit_matrices", False)),
        seed=merged.get("seed", 0),
    )
    return cfg.validate()


# ---------------------------------------------------------------------------
# commands

def _run_solve(cfg, out):
    params = cfg.params()
    exact = manufactured_case(params)
    meta = cfg.as_dict()
    summaries = []
    for n in cfg.levels:
        mesh, dofmap, blocks, sol = solve_level(n, params, exact, cfg.quadrature_degree)
        report = compute_error_norms(mesh, dofmap, sol, exact, params, n=n)
        summary = {
            "n": n, "h": mesh.h,
            "n_velocity": dofmap.n_velocity, "n_pressure": dofmap.n_pressure,
            "residuals": sol.residuals,
            "mass_residual": float(np.linalg.norm(blocks.B @ sol.u.coefficients - blocks.G)),
            "errors": {"err_u_h": report.err_u_h, "err_p": report.err_p, **report.components},
        }
        io.write_json(out / f"summary_n{n}.json", summary, meta)
        if cfg.emit_vtk:
            io.write_vtk(out / f"solution_n{n}.vtk", mesh, sol.u, sol.p, meta)
        if cfg.emit_matrices:
            io.write_matrix(out / f"A_n{n}.mtx", blocks.A, meta)
            io.write_matrix(out / f"B_n{n}.mtx", blocks.B, meta)
            io.write_vector(out / f"F_n{n}.mtx", blocks.F, meta)
            io.write_vector(out / f"G_n{n}.mtx", blocks.G, meta)
        summaries.append(summary)
    return {"levels": summaries}


def _write_convergence(table: ConvergenceTable, out, meta):
    io.write_csv(out / "convergence.csv", ConvergenceTable.CSV_HEADER, table.csv_rows(), meta)
    lines = [io.provenance_line(meta), "# h err_u_h err_p jump_J interp_u best_p"]
    for h, *vals in zip(table.h, *(table.column(k) for k in
                                   ("err_u_h", "err_p", "jump_J", "interp_u", "best_p"))):
        lines.append(" ".join(f"{v:.12e}" for v in (h, *vals)))
    (out / "convergence.dat").write_text("\n".join(lines) + "\n")


def _run_convergence(cfg, out):
    meta = cfg.as_dict()
    table = run_convergence_study(cfg.levels, cfg.params(), quad_degree=cfg.quadrature_degree)
    _write_convergence(table, out, meta)
    return {name: table.eoc(name).tolist() for name in ("err_u_h", "err_p", "jump_J")}


def _run_infsup(cfg, out):
    params = cfg.params()
    exact = manufactured_case(params)
    rows = []
    for n in cfg.levels:
        mesh, dofmap, blocks, _ = solve_level(n, params, exact, cfg.quadrature_degree)
        N = assemble_norm_gram(mesh, dofmap, params)
        rows.append((n, mesh.h, estimate_coercivity(blocks, N), estimate_inf_sup(blocks, N)))
    io.write_csv(out / "infsup.csv", "n,h,alpha_h,beta_h",
                 [[str(n)] + [f"{v:.12g}" for v in r] for n, *r in rows], cfg.as_dict())
    return {"alpha_h": [r[2] for r in rows], "beta_h": [r[3] for r in rows]}


RUNNERS = {"solve": _run_solve, "convergence": _run_convergence, "infsup": _run_infsup}


def run(cfg):
    """Execute a validated configuration; returns a summary dict."""
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return RUNNERS[cfg.command](cfg, out)


def _fail(kind, message, status):
    print(json.dumps({"status": "error", "kind": kind, "message": message}), file=sys.stderr)
    return status


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    try:
        cfg = config_from_args(argv)
    except UsageError as exc:
        return _fail("usage", str(exc), EXIT_USAGE)
    print(io.provenance_line(cfg.as_dict()))
    try:
        result = run(cfg)
    except (SolverError, StudyError) as exc:
        return _fail("solver", str(exc), EXIT_SOLVER)
    except (MeshError, AssemblyError, ValueError) as exc:
        return _fail("usage", str(exc), EXIT_USAGE)
    print(json.dumps({"status": "ok", "command": cfg.command, "result": result}, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
