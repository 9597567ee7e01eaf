"""Benchmark runs, convergence rates and CSV/text reports.

Usage::

    msbsde --problem ex1 --ky 3 --kz 3 --n 128 --n 256 --format text

Settings may also come from a flat ``key=value`` file passed with
``--config``; flags given on the command line override it. Exit status is
0 on success, 2 for a bad configuration and 3 when a run failed.
"""
from __future__ import annotations

import argparse
import io
import math
import sys
import time
from dataclasses import dataclass, field, fields

import numpy as np

from .exceptions import ConfigError, InsufficientDataError, InvalidArgumentError
from .problems import PROBLEMS, get_problem
from .scheme import BootstrapOptions, SolverConfig, make_grids, solve_backward
from .validation import check_domain

CSV_HEADER = "K,N,M,y_error,z_error,t_total_s,t_interp_s,t_expect_s,t_update_s,picard_avg"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3


@dataclass
class RunConfig:
    problem: str = "ex1"
    ky: int = 3
    kz: int = 3
    n: list = field(default_factory=lambda: [128])
    gh_points: int = 32
    picard_max: int = 30
    picard_tol: float = 1e-14
    domain: tuple | None = None
    threads: int = 1
    r: int = 4
    smooth: bool | None = None
    out: str | None = None
    format: str = "csv"
    bootstrap: str = "extrapolated"
    timing: bool = True

    def validate(self) -> "RunConfig":
        if self.problem not in PROBLEMS:
            raise ConfigError(f"unknown problem {self.problem!r}; choose from {sorted(PROBLEMS)}")
        for name in ("ky", "kz", "gh_points", "picard_max", "threads", "r"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int) or v < 1:
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")
        for name in ("ky", "kz"):
            if getattr(self, name) > 6:
                raise ConfigError(f"{name} must be at most 6, got {getattr(self, name)}")
        if self.gh_points > 64:
            raise ConfigError(f"gh_points must be at most 64, got {self.gh_points}")
        if not self.n:
            raise ConfigError("at least one N is required")
        if any(isinstance(v, bool) or not isinstance(v, int) or v < 1 for v in self.n):
            raise ConfigError(f"every N must be a positive integer, got {self.n}")
        if any(b <= a for a, b in zip(self.n, self.n[1:])):
            raise ConfigError(f"N values must be strictly increasing, got {self.n}")
        if not (self.picard_tol >= 0):
            raise ConfigError(f"picard_tol must be >= 0, got {self.picard_tol}")
        if self.format not in ("csv", "text"):
            raise ConfigError(f"format must be csv or text, got {self.format!r}")
        if self.bootstrap not in ("extrapolated", "fine"):
            raise ConfigError(f"bootstrap must be extrapolated or fine, got {self.bootstrap!r}")
        try:
            check_domain(self.domain)
        except InvalidArgumentError as exc:
            raise ConfigError(str(exc)) from None
        return self

    def solver_config(self, N: int) -> SolverConfig:
        return SolverConfig(ky=self.ky, kz=self.kz, N=N, L=self.gh_points,
                            picard_max=self.picard_max, picard_tol=self.picard_tol, r=self.r,
                            threads=self.threads, domain=self.domain, smoothing=self.smooth,
                            bootstrap=BootstrapOptions(method=self.bootstrap))


@dataclass
class ReportRow:
    K: str
    N: int
    M: int
    y_error: float = math.nan
    z_error: float = math.nan
    t_total: float = 0.0
    t_interp: float = 0.0
    t_expect: float = 0.0
    t_update: float = 0.0
    picard_avg: float = 0.0
    y0: tuple = ()
    z0: tuple = ()
    failed: str | None = None


def _label(ky: int, kz: int) -> str:
    return str(ky) if ky == kz else f"{ky}/{kz}"


def run_experiment(config: RunConfig, log=None) -> list:
    """One report row per ``N``; a failing run yields a row with ``failed`` set."""
    config.validate()
    problem = get_problem(config.problem)
    rows = []
    for N in config.n:
        sc = config.solver_config(N)
        try:
            _, grid = make_grids(problem, sc)
            M = grid.M
        except (InvalidArgumentError, ArithmeticError, RuntimeError) as exc:
            rows.append(ReportRow(_label(config.ky, config.kz), N, 0, failed=str(exc)))
            continue
        row = ReportRow(_label(config.ky, config.kz), N, M)
        t0 = time.monotonic()
        try:
            res = solve_backward(problem, sc)
        except (InvalidArgumentError, ArithmeticError, RuntimeError, MemoryError) as exc:
            row.failed = f"{type(exc).__name__}: {exc}"
            rows.append(row)
            if log:
                print(f"N={N}: failed: {row.failed}", file=log)
            continue
        elapsed = time.monotonic() - t0
        row.y0 = tuple(np.ravel(res.y0).tolist())
        row.z0 = tuple(np.ravel(res.z0).tolist())
        if problem.analytic is not None:
            ya, za = problem.analytic(res.time_grid.t0, res.x_eval)
            row.y_error = float(np.max(np.abs(np.ravel(res.y0) - np.ravel(ya))))
            row.z_error = float(np.linalg.norm(np.ravel(res.z0) - np.ravel(za)))
        if config.timing:
            row.t_total = elapsed
            row.t_interp = res.timings["interp"]
            row.t_expect = res.timings["expect"]
            row.t_update = res.timings["update"]
        row.picard_avg = res.picard_avg
        rows.append(row)
        if log:
            print(f"N={N} M={M} y_error={row.y_error:.3e} z_error={row.z_error:.3e}", file=log)
    return rows


def estimate_order(rows) -> tuple:
    """Least-squares slopes of ``-log(error)`` against ``log(N)`` for y and z."""
    slopes = []
    for attr in ("y_error", "z_error"):
        pts = [(r.N, getattr(r, attr)) for r in rows
               if r.failed is None and math.isfinite(getattr(r, attr)) and getattr(r, attr) > 0]
        if len({n for n, _ in pts}) < 2:
            raise InsufficientDataError(
                f"need at least 2 rows with positive {attr}, got {len(pts)}")
        logn = np.log([n for n, _ in pts])
        loge = np.log([e for _, e in pts])
        slopes.append(-float(np.polyfit(logn, loge, 1)[0]))
    return tuple(slopes)


def _fmt(v: float) -> str:
    return "nan" if not math.isfinite(v) else f"{v:.5e}"


def _cells(row: ReportRow) -> list:
    return [row.K, str(row.N), str(row.M), _fmt(row.y_error), _fmt(row.z_error),
            _fmt(row.t_total), _fmt(row.t_interp), _fmt(row.t_expect), _fmt(row.t_update),
            _fmt(row.picard_avg)]


def format_report(rows, format: str = "csv") -> str:
    if not rows:
        raise InvalidArgumentError("no rows to report")
    if format == "csv":
        return "\n".join([CSV_HEADER] + [",".join(_cells(r)) for r in rows]) + "\n"
    if format != "text":
        raise InvalidArgumentError(f"format must be csv or text, got {format!r}")
    head = ["K", "N", "M", "|y err|", "|z err|", "t total", "t interp", "t expect",
            "t update", "picard"]
    body = [_cells(r) for r in rows]
    widths = [max(len(h), *(len(b[i]) for b in body)) for i, h in enumerate(head)]
    out = io.StringIO()
    out.write("  ".join(h.rjust(w) for h, w in zip(head, widths)).rstrip() + "\n")
    out.write("  ".join("-" * w for w in widths) + "\n")
    for b, r in zip(body, rows):
        line = "  ".join(c.rjust(w) for c, w in zip(b, widths))
        if r.failed:
            line += f"  FAILED: {r.failed}"
        out.write(line + "\n")
    return out.getvalue()


def emit_report(rows, format: str = "csv", path=None) -> str:
    """Write the report to ``path`` (stdout when ``None``) and return its text."""
    text = format_report(rows, format)
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    return text


# ---------------------------------------------------------------- parsing

def _on_off(value: str) -> bool:
    v = value.strip().lower()
    if v in ("on", "true", "1", "yes"):
        return True
    if v in ("off", "false", "0", "no"):
        return False
    raise ConfigError(f"expected on or off, got {value!r}")


def _domain(value: str):
    try:
        lo, hi = value.split(":")
        return float(lo), float(hi)
    except ValueError:
        raise ConfigError(f"domain must look like lo:hi, got {value!r}") from None


def _n_list(value: str) -> list:
    try:
        return [int(v) for v in value.replace(",", " ").split()]
    except ValueError:
        raise ConfigError(f"N values must be integers, got {value!r}") from None


def _int(value: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"expected an integer, got {value!r}") from None


def _float(value: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"expected a number, got {value!r}") from None


_PARSERS = {
    "problem": str, "ky": _int, "kz": _int, "n": _n_list, "gh_points": _int,
    "picard_max": _int, "picard_tol": _float, "domain": _domain, "threads": _int, "r": _int,
    "smooth": _on_off, "out": str, "format": str, "bootstrap": str, "timing": _on_off,
}


def parse_config_text(text: str) -> dict:
    """Parse ``key=value`` lines; ``#`` starts a comment, dashes in keys are allowed."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _PARSERS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _PARSERS[key](value)
    return values


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="msbsde", description="Run the multistep BSDE solver on a benchmark problem.")
    p.add_argument("--config", help="flat key=value file; flags override it")
    p.add_argument("--problem", choices=sorted(PROBLEMS))
    p.add_argument("--ky", type=int)
    p.add_argument("--kz", type=int)
    p.add_argument("--n", type=int, action="append", help="number of time steps (repeatable)")
    p.add_argument("--gh-points", dest="gh_points", type=int)
    p.add_argument("--picard-max", dest="picard_max", type=int)
    p.add_argument("--picard-tol", dest="picard_tol", type=float)
    p.add_argument("--threads", type=int)
    p.add_argument("--r", type=int, help="interpolation order used for grid balancing")
    p.add_argument("--domain", help="Brownian box lo:hi")
    p.add_argument("--smooth", choices=["on", "off"])
    p.add_argument("--bootstrap", choices=["extrapolated", "fine"])
    p.add_argument("--timing", choices=["on", "off"],
                   help="off writes zero times so reports are byte-identical across runs")
    p.add_argument("--out", help="output file (stdout if omitted)")
    p.add_argument("--format", choices=["csv", "text"])
    p.add_argument("--order", action="store_true", help="also print fitted convergence rates")
    return p


def resolve_config(args) -> RunConfig:
    values = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                values.update(parse_config_text(fh.read()))
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from None
    for f in fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is None:
            continue
        if f.name == "domain":
            v = _domain(v)
        elif f.name in ("smooth", "timing"):
            v = _on_off(v)
        values[f.name] = v
    return RunConfig(**values).validate()


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        config = resolve_config(args)
    except ConfigError as exc:
        print(f"msbsde: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    rows = run_experiment(config, log=sys.stderr)
    try:
        emit_report(rows, config.format, config.out)
    except OSError as exc:
        print(f"msbsde: cannot write report: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    if args.order:
        try:
            y_rate, z_rate = estimate_order(rows)
            print(f"order: y {y_rate:.3f}  z {z_rate:.3f}", file=sys.stderr)
        except InsufficientDataError as exc:
            print(f"order: {exc}", file=sys.stderr)
    failed = [r for r in rows if r.failed]
    for r in failed:
        print(f"msbsde: N={r.N} failed: {r.failed}", file=sys.stderr)
    return EXIT_SOLVER if failed else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
