"""Command-line entry point.

``kpilab <experiment> [--config FILE] [flags]``.  A config file holds
``key = value`` lines (``#`` starts a comment; lists are comma separated);
keys are the long flag names with dashes or underscores.  Precedence:
built-in defaults, then the config file, then command-line flags.

Exit codes: 0 all verdicts pass, 1 some verdict fails, 2 numerical
instability, 3 parameter constraint violated, 4 inconclusive fit,
64 usage error.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from . import experiments as ex
from .bumps import ApproxParams, ConstraintError

EXIT_OK, EXIT_FAIL, EXIT_INSTABILITY, EXIT_CONSTRAINT, EXIT_INCONCLUSIVE, EXIT_USAGE = 0, 1, 2, 3, 4, 64
OUTPUT_ENV = "KPILAB_OUTPUT"

EXPERIMENTS = (
    "residual-scan",
    "initial-closeness",
    "divergence",
    "gronwall",
    "sobolev-audit",
    "solve",
    "conserve",
    "moments",
    "linear",
    "estimates",
    "bounds",
    "ledger",
    "all",
)


@dataclass
class RunConfig:
    experiment: str = "residual-scan"
    eps: float = 0.1
    alpha: float | None = None
    beta: float | None = None
    lambdas: list = field(default_factory=list)
    omega: list = field(default_factory=lambda: [1.0, -1.0])
    t: list = field(default_factory=list)
    t_end: float = 1.0
    c_factor: int = 3
    points_per_wavelength: float | None = None
    dt_cap: float | None = None
    monitor_stride: int = 10
    draws: int = 100
    output: str = ""
    seed: int = 0
    workers: int = 1

    @property
    def exponents(self):
        """``eps`` or the explicit ``(alpha, beta)`` pair."""
        if self.alpha is None and self.beta is None:
            return self.eps
        beta = self.beta if self.beta is not None else 4.0 / 3.0 - self.eps
        alpha = self.alpha if self.alpha is not None else beta / 2.0
        return (alpha, beta)

    @property
    def setup(self) -> ex.SolverSetup:
        """Solver discretization.  Conservation runs default to 8 points per
        carrier wavelength and a 1e-3 step cap; scaling runs to 4 points
        and the CFL bound alone."""
        conserving = self.experiment in ("conserve", "solve")
        cap = self.dt_cap if self.dt_cap is not None else (1e-3 if conserving else float("inf"))
        ppw = self.points_per_wavelength or (8.0 if conserving else 4.0)
        return ex.SolverSetup(self.c_factor, ppw, cap, self.monitor_stride)

    def validate(self) -> None:
        e = self.exponents
        if isinstance(e, tuple):
            ApproxParams(1.0, alpha=e[0], beta=e[1])
        else:
            ApproxParams.from_epsilon(1.0, e)
        for w in self.omega:
            if abs(w) > 1.0:
                raise ConstraintError(f"|ω|≤1 violated (ω={w})")
        for lam in self.lambdas:
            if lam < 1.0:
                raise ConstraintError(f"λ≥1 violated (λ={lam})")


_LIST_KEYS = {"lambdas": float, "omega": float, "t": float}
_SCALAR = {f.name: f for f in fields(RunConfig)}


def _coerce(key: str, raw):
    if key in _LIST_KEYS:
        if isinstance(raw, list):
            return [float(v) for v in raw]
        return [float(v) for v in str(raw).replace(" ", "").split(",") if v]
    if key in ("alpha", "beta", "dt_cap", "points_per_wavelength"):
        return None if raw in (None, "", "none") else float(raw)
    if key in ("c_factor", "monitor_stride", "draws", "seed", "workers"):
        return int(raw)
    if key in ("eps", "t_end"):
        return float(raw)
    return str(raw)


def read_config_file(path) -> dict:
    out = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{n}: expected key = value")
        k, v = (s.strip() for s in line.split("=", 1))
        k = k.replace("-", "_")
        if k == "lambda":
            k = "lambdas"
        if k not in _SCALAR:
            raise ValueError(f"{path}:{n}: unknown key {k!r}")
        out[k] = _coerce(k, v)
    return out


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kpilab", description="KP-I norm-inflation experiments")
    ap.add_argument("experiment", help=", ".join(EXPERIMENTS))
    ap.add_argument("--config", help="key = value config file (flags override it)")
    ap.add_argument("--eps", type=float)
    ap.add_argument("--alpha", type=float)
    ap.add_argument("--beta", type=float)
    ap.add_argument("--lambda", "--lambdas", dest="lambdas", help="comma-separated lambda values")
    ap.add_argument("--omega", help="omega pair, e.g. 1,-1")
    ap.add_argument("--t", help="comma-separated times")
    ap.add_argument("--t-end", dest="t_end", type=float)
    ap.add_argument("--c-factor", dest="c_factor", type=int)
    ap.add_argument("--points-per-wavelength", dest="points_per_wavelength", type=float)
    ap.add_argument("--dt-cap", dest="dt_cap", type=float)
    ap.add_argument("--monitor-stride", dest="monitor_stride", type=int)
    ap.add_argument("--draws", type=int)
    ap.add_argument("--output", "-o")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--workers", type=int)
    return ap


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def parse_config(argv=None) -> RunConfig:
    """Defaults, then the config file, then flags."""
    parser = build_parser()
    parser.__class__ = _Parser
    args = parser.parse_args(argv)
    if args.experiment not in EXPERIMENTS:
        raise UsageError(f"unknown experiment {args.experiment!r}; choose from {', '.join(EXPERIMENTS)}")
    values = {}
    if args.config:
        values.update(read_config_file(args.config))
    for k, v in vars(args).items():
        if k in ("config", "experiment") or v is None:
            continue
        values[k] = _coerce(k, v)
    values["experiment"] = args.experiment
    cfg = RunConfig(**values)
    if not cfg.output:
        cfg.output = os.environ.get(OUTPUT_ENV, "kpilab-output")
    cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------


def _lams(cfg, default):
    return [int(v) if float(v).is_integer() else v for v in (cfg.lambdas or default)]


def _times(cfg, default):
    return cfg.t or list(default)


def _job(name: str, cfg: RunConfig):
    """Run one experiment; returns ``(results, extra csv tables)``."""
    e = cfg.exponents
    if name == "residual-scan":
        res = ex.run_residual_scan(e, _lams(cfg, ex.DEFAULT_LAMBDAS), _times(cfg, (0.0, 0.5, 1.0)), cfg.omega[0])
        ab, info = ex.run_cancellation_ab(e, _lams(cfg, ex.DEFAULT_LAMBDAS), omega=cfg.omega[0])
        return res + ab + info, {}
    if name == "initial-closeness":
        return [ex.run_initial_closeness(e, _lams(cfg, ex.DEFAULT_LAMBDAS))], {}
    if name == "divergence":
        lams = _lams(cfg, [128])
        times = _times(cfg, (0.25, 0.5, 1.0))
        out = []
        for lam in lams:
            out.append(_divergence_check(e, lam, times))
            if lam <= 8:
                out.append(ex.run_divergence_solver(lam, times, e, cfg.setup))
        if len(lams) >= 4:
            out.append(ex.run_divergence(e, lams[-1], times, lambdas=lams)[1])
        elif not cfg.lambdas:
            out.append(ex.run_divergence(e, 128, times)[1])
        return out, {}
    if name == "gronwall":
        res, series = ex.run_gronwall(e, _lams(cfg, ex.SOLVER_LAMBDAS), cfg.t_end, cfg.omega[0], cfg.setup)
        return res, {"gronwall_series": series}
    if name == "sobolev-audit":
        res, two = ex.run_sobolev_audit(cfg.draws, cfg.seed)
        return res + [two], {}
    if name == "solve":
        return [_solve(cfg)], {}
    if name == "conserve":
        lam = _lams(cfg, [4])[0]
        check, _, _ = ex.run_conservation(lam, e, cfg.t_end, cfg.omega[0], cfg.setup)
        order, _ = ex.run_self_convergence(lam, e, setup=cfg.setup)
        return [check, order], {}
    if name == "moments":
        return [ex.run_moments(_lams(cfg, (2, 4, 8, 16, 32)), eps=e)], {}
    if name == "linear":
        return [ex.run_zero_velocity(), ex.run_plane_wave_orbit()], {}
    if name == "estimates":
        lams, times = _lams(cfg, ex.DEFAULT_LAMBDAS), _times(cfg, (0.0, 0.5, 1.0))
        return ex.run_estimate_scan("II", e, lams, times) + ex.run_estimate_scan("III", e, lams, times), {}
    if name == "bounds":
        lams = _lams(cfg, ex.DEFAULT_LAMBDAS)
        return ex.run_energy_bound(e, lams) + ex.run_f_bound(e, lams) + ex.run_uniform_bound(e, lams), {}
    if name == "ledger":
        check, _ = ex.run_cancellation_ledger(e, _lams(cfg, ex.DEFAULT_LAMBDAS), omega=cfg.omega[0])
        return [check], {}
    raise UsageError(f"unknown experiment {name!r}")


def _divergence_check(e, lam, times):
    check, _ = ex.run_divergence(e, lam, times, lambdas=None)
    return check


def _solve(cfg: RunConfig):
    from .solver import solve, write_diagnostics_csv, write_snapshot

    lam = _lams(cfg, [4])[0]
    p = ex._solver_params(lam, cfg.exponents, cfg.omega[0], cfg.setup)
    _, u0, scfg = ex._config_for(p, cfg.t_end, cfg.setup)
    traj = solve(u0, scfg)
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    write_diagnostics_csv(traj.diagnostics, out / "solve_diagnostics.csv")
    t, u = traj.snapshots[-1]
    write_snapshot(out / "solve_final.bin", u, t)
    rows = [d.row() for d in traj.diagnostics]
    return ex.CheckResult("solve", "trajectory", rows, ex.PASS, note=f"lam={lam:g} steps={scfg.n_steps}")


ALL_JOBS = ("linear", "residual-scan", "estimates", "divergence", "initial-closeness", "bounds", "ledger", "moments",
            "sobolev-audit", "gronwall")


def _run_named(args):
    name, cfg = args
    return _job(name, cfg)


def dispatch(cfg: RunConfig) -> int:
    from .solver import InstabilityError

    names = ALL_JOBS if cfg.experiment == "all" else (cfg.experiment,)
    try:
        if cfg.workers > 1 and len(names) > 1:
            with ProcessPoolExecutor(cfg.workers) as pool:
                outs = list(pool.map(_run_named, [(n, cfg) for n in names]))
        else:
            outs = [_job(n, cfg) for n in names]
    except InstabilityError as err:
        print(f"instability: {err}", file=sys.stderr)
        return EXIT_INSTABILITY
    except ConstraintError as err:
        print(f"constraint: {err}", file=sys.stderr)
        return EXIT_CONSTRAINT
    results, extra = [], {}
    for r, x in outs:
        results.extend(r)
        extra.update(x)
    ex.write_results(results, cfg.output, asdict(cfg), extra)
    for r in results:
        print(r.line())
    verdicts = {r.verdict for r in results if not getattr(r, "note", "").startswith("informational")}
    if ex.FAIL in verdicts:
        return EXIT_FAIL
    if ex.INCONCLUSIVE in verdicts:
        return EXIT_INCONCLUSIVE
    return EXIT_OK


def main(argv=None) -> int:
    try:
        cfg = parse_config(argv)
    except UsageError as err:
        print(f"usage error: {err}", file=sys.stderr)
        build_parser().print_usage(sys.stderr)
        return EXIT_USAGE
    except ConstraintError as err:
        print(f"constraint: {err}", file=sys.stderr)
        return EXIT_CONSTRAINT
    except ValueError as err:
        print(f"usage error: {err}", file=sys.stderr)
        return EXIT_USAGE
    return dispatch(cfg)


if __name__ == "__main__":
    raise SystemExit(main())
