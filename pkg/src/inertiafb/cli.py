"""Benchmark command-line driver.

Subcommands:

* ``run``      build one problem/solver pair from a config, write trace.csv,
               report.txt, summary.txt and restored images.
* ``suite``    run several solvers on the same problem concurrently (one
               thread each, capped by ``INERTIAFB_THREADS``).
* ``fstar``    long suite run that records the smallest final objective
               value, for later relative-gap reporting.
* ``certify``  replay the certifier over an existing trace.csv.

Configs are flat ``key=value`` text files; any ``--key value`` pair on the
command line overrides the file.  Exit codes: 0 ok, 2 config error, 3 solver
failure, 4 certification failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from inertiafb import imaging
from inertiafb.certify import summarize
from inertiafb.i2piano import I2PianoConfig, SolverError, i2piano_solve
from inertiafb.iista import IistaConfig, iista_solve
from inertiafb.ipila import IPilaConfig, ipila_solve
from inertiafb.problem import (Block, CompositeProblem, IdentityOp, L1Norm,
                               SmoothOracle, StructuredConvexTerm,
                               ZeroFunction)
from inertiafb.prox_engine import EngineError
from inertiafb.trace import Trace

PROBLEMS = ("impulse-l1", "gaussian-sd-tv", "synthetic-quadratic-l1")
SOLVERS = ("i2piano", "ipila-strict", "ipila-practical", "iista")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_CERTIFY = 4

DEFAULTS = {
    "problem": "synthetic-quadratic-l1",
    "solver": "i2piano",
    "out": "runs",
    "size": "64",
    "n": "100",
    "l1_weight": "0.3",
    "blur_size": "5",
    "blur_sigma": "1.0",
    "noise_fraction": "0.15",
    "seed": "0",
    "peak": "255",
    "rho": "0.08",
    "rho_tv": "0.25",
    "a": "0.01",
    "c": "1.0",
    "tau": "1e6",
    "L0": "1.0",
    "eta": "1.5",
    "delta": "0.5",
    "gamma": "1e-5",
    "omega": "0.95",
    "sigma": "1e-4",
    "ls_shrink": "0.5",
    "max_halvings": "60",
    "alpha_max": "1.0",
    "beta_max": "0.5",
    "max_outer": "1000",
    "max_inner": "2000",
    "stop_tol": "0",
    "solvers": "i2piano,ipila-practical,ipila-strict,iista",
    "fstar_iters": "20000",
}


class ConfigError(ValueError):
    pass


def load_config(path) -> dict:
    cfg = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            key, _, val = line.partition("=")
            cfg[key.strip()] = val.strip()
    return cfg


def parse_overrides(extra) -> dict:
    out = {}
    i = 0
    while i < len(extra):
        tok = extra[i]
        if not tok.startswith("--"):
            raise ConfigError(f"unexpected argument {tok!r}")
        key = tok[2:]
        if "=" in key:
            key, _, val = key.partition("=")
        else:
            if i + 1 >= len(extra):
                raise ConfigError(f"missing value for --{key}")
            i += 1
            val = extra[i]
        out[key] = val
        i += 1
    return out


def build_settings(args, extra) -> dict:
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        if not Path(args.config).exists():
            raise ConfigError(f"config file not found: {args.config}")
        cfg.update(load_config(args.config))
    cfg.update(parse_overrides(extra))
    return cfg


def _f(cfg, key) -> float:
    try:
        return float(cfg[key])
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad numeric value for {key!r}") from exc


def _i(cfg, key) -> int:
    try:
        return int(float(cfg[key]))
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad integer value for {key!r}") from exc


def build_problem(cfg: dict):
    """Returns ``(problem, x0, context)`` for the configured benchmark."""
    name = cfg["problem"]
    seed = _i(cfg, "seed")
    if name == "synthetic-quadratic-l1":
        n = _i(cfg, "n")
        rng = np.random.default_rng(seed)
        b = rng.standard_normal(n)
        lam = _f(cfg, "l1_weight")
        f0 = SmoothOracle(lambda x: 0.5 * float(np.dot(x - b, x - b)),
                          lambda x: x - b, lipschitz_hint=1.0)
        f1 = StructuredConvexTerm([Block(IdentityOp(n), L1Norm(lam))],
                                  xi=ZeroFunction(), n=n, op_norm_sq_bound=1.0)
        return CompositeProblem(f0, f1, n), np.zeros(n), {"b": b, "lam": lam}

    size = _i(cfg, "size")
    peak = _f(cfg, "peak")
    if "image" in cfg:
        path = cfg["image"]
        if not Path(path).exists():
            raise ConfigError(f"image file not found: {path}")
        truth = imaging.read_pgm(path) * (peak / 255.0)
    else:
        truth = imaging.phantom(size, peak=peak)
    shape = truth.shape
    H = imaging.ConvOperator(
        imaging.gaussian_kernel(_i(cfg, "blur_size"), _f(cfg, "blur_sigma")),
        shape)
    blurred = H.matvec(truth.ravel())

    if name == "impulse-l1":
        g = imaging.impulse_noise(blurred.reshape(shape),
                                  _f(cfg, "noise_fraction"), seed,
                                  peak=peak).ravel()
        f0 = imaging.log_filter_regularizer(
            imaging.dct_filter_bank(_f(cfg, "rho")), shape)
        f1 = imaging.l1_fidelity_term(H, g)
        x0 = np.clip(g, 0.0, None)
        return (CompositeProblem(f0, f1, H.in_dim), x0,
                {"truth": truth, "g": g, "shape": shape, "peak": peak})

    if name == "gaussian-sd-tv":
        a, c = _f(cfg, "a"), _f(cfg, "c")
        rng = np.random.default_rng(seed)
        std = np.sqrt(np.clip(a * blurred + c, 0.0, None))
        g = blurred + std * rng.standard_normal(blurred.size)
        f0 = imaging.gaussian_sd_fidelity(H, g, a=a, c=c)
        f1 = imaging.tv_term(_f(cfg, "rho_tv"), shape)
        x0 = np.clip(g, 0.0, None)
        return (CompositeProblem(f0, f1, H.in_dim), x0,
                {"truth": truth, "g": g, "shape": shape, "peak": peak})

    raise ConfigError(f"unknown problem {name!r}; choose from {PROBLEMS}")


def run_solver(problem, x0, cfg: dict) -> Trace:
    name = cfg["solver"]
    common = dict(tau=_f(cfg, "tau"), max_outer=_i(cfg, "max_outer"),
                  stop_tol=_f(cfg, "stop_tol"), max_inner=_i(cfg, "max_inner"))
    if name == "i2piano":
        sc = I2PianoConfig(delta=_f(cfg, "delta"), gamma=_f(cfg, "gamma"),
                           eta=_f(cfg, "eta"), omega=_f(cfg, "omega"),
                           L0=_f(cfg, "L0"), **common)
        return i2piano_solve(problem, x0, sc)
    if name in ("ipila-strict", "ipila-practical"):
        sc = IPilaConfig(
            sigma=_f(cfg, "sigma"), ls_shrink=_f(cfg, "ls_shrink"),
            max_halvings=_i(cfg, "max_halvings"),
            alpha_max=_f(cfg, "alpha_max"), beta_max=_f(cfg, "beta_max"),
            gamma_min=_f(cfg, "gamma"), gamma_max=_f(cfg, "gamma"),
            L0=_f(cfg, "L0"), eta=_f(cfg, "eta"), delta=_f(cfg, "delta"),
            variant=("strict-alg3" if name == "ipila-strict"
                     else "practical-sec5"),
            **common)
        return ipila_solve(problem, x0, cfg=sc)
    if name == "iista":
        sc = IistaConfig(L0=_f(cfg, "L0"), eta=_f(cfg, "eta"), **common)
        return iista_solve(problem, x0, sc)
    raise ConfigError(f"unknown solver {name!r}; choose from {SOLVERS}")


def _write_outputs(outdir: Path, trace: Trace, context: dict, cfg: dict):
    outdir.mkdir(parents=True, exist_ok=True)
    f_star = float(cfg["f_star"]) if "f_star" in cfg else None
    trace.write_csv(outdir / "trace.csv", f_star=f_star)
    report = summarize(trace)
    (outdir / "report.txt").write_text(report.format())

    summary = dict(report.summary)
    summary["solver"] = trace.meta.get("solver", cfg["solver"])
    summary["problem"] = cfg["problem"]
    summary["stop_reason"] = trace.meta.get("stop_reason", "")
    if f_star is not None:
        summary["rel_gap_final"] = (summary["f_final"] - f_star) / f_star
    lines = [f"{k}={summary[k]}" for k in sorted(summary)]
    (outdir / "summary.txt").write_text("\n".join(lines) + "\n")
    return report


def cmd_run(args, extra) -> int:
    cfg = build_settings(args, extra)
    problem, x0, context = build_problem(cfg)
    outdir = Path(cfg["out"])
    try:
        trace = run_solver(problem, x0, cfg)
    except (SolverError, EngineError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    _write_outputs(outdir, trace, context, cfg)

    if "shape" in context and trace.x_final is not None:
        shape, peak = context["shape"], context["peak"]
        img = trace.x_final.reshape(shape)
        imaging.write_pgm(outdir / "restored.pgm", img, peak=peak)
        imaging.write_raw(outdir / "restored.raw", img)
        if "truth" in context:
            val = imaging.psnr(img, context["truth"], peak=peak)
            with open(outdir / "summary.txt", "a") as fh:
                fh.write(f"psnr_db={val}\n")
    print(f"wrote {outdir}/trace.csv ({len(Trace.read_csv(outdir / 'trace.csv'))} rows)")
    return EXIT_OK


def _suite_worker(item):
    cfg, outdir = item
    problem, x0, context = build_problem(cfg)
    trace = run_solver(problem, x0, cfg)
    _write_outputs(outdir, trace, context, cfg)
    return cfg["solver"], float(trace.meta["f_final"])


def _thread_cap(n_jobs: int) -> int:
    cap = os.environ.get("INERTIAFB_THREADS")
    if cap:
        try:
            return max(1, min(n_jobs, int(cap)))
        except ValueError:
            raise ConfigError("INERTIAFB_THREADS must be an integer")
    return max(1, n_jobs)


def cmd_suite(args, extra, max_outer_override=None) -> int:
    cfg = build_settings(args, extra)
    solvers = [s.strip() for s in cfg["solvers"].split(",") if s.strip()]
    for s in solvers:
        if s not in SOLVERS:
            raise ConfigError(f"unknown solver {s!r}; choose from {SOLVERS}")
    base = Path(cfg["out"])
    jobs = []
    for s in solvers:
        sub = dict(cfg)
        sub["solver"] = s
        if max_outer_override is not None:
            sub["max_outer"] = str(max_outer_override)
        jobs.append((sub, base / s))
    try:
        with ThreadPoolExecutor(max_workers=_thread_cap(len(jobs))) as pool:
            results = list(pool.map(_suite_worker, jobs))
    except (SolverError, EngineError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    best = min(f for _, f in results)
    base.mkdir(parents=True, exist_ok=True)
    with open(base / "fstar.txt", "w") as fh:
        fh.write(f"f_star={best!r}\n")
        for name, f in results:
            fh.write(f"f_final.{name}={f!r}\n")
    for name, f in results:
        print(f"{name}: f_final={f}")
    print(f"f_star={best}")
    return EXIT_OK


def cmd_fstar(args, extra) -> int:
    cfg = build_settings(args, extra)
    return cmd_suite(args, extra, max_outer_override=_i(cfg, "fstar_iters"))


def cmd_certify(args, extra) -> int:
    path = Path(args.trace)
    if not path.exists():
        print(f"trace file not found: {path}", file=sys.stderr)
        return EXIT_CONFIG
    trace = Trace.read_csv(path)
    if not trace.rows:
        print("empty trace", file=sys.stderr)
        return EXIT_CONFIG
    report = summarize(trace)
    sys.stdout.write(report.format())
    return EXIT_OK if report.ok else EXIT_CERTIFY


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="inertiafb",
        description="Inertial inexact forward-backward solver benchmarks")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (
            ("run", "run one solver on one problem"),
            ("suite", "run several solvers on the same problem"),
            ("fstar", "long suite run recording the best objective value")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("-c", "--config", help="key=value config file")

    p = sub.add_parser("certify", help="verify an existing trace.csv")
    p.add_argument("trace", help="path to trace.csv")
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args, extra = parser.parse_known_args(argv)
    handlers = {"run": cmd_run, "suite": cmd_suite, "fstar": cmd_fstar,
                "certify": cmd_certify}
    try:
        return handlers[args.command](args, extra)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
