"""Command-line entry point.

Every subcommand turns its flags into the same ``key = value`` text a config
file would contain, so ``--config FILE`` and flags share one code path.
"""

from __future__ import annotations

import argparse
import contextlib
import logging
import math
import sys
from pathlib import Path
from typing import TextIO

import numpy as np

from . import _accel
from .config import ExperimentConfig, format_config, load_config, parse_config
from .errors import ConfigError
from .fraccalc import apply_frac_power, rl_integral_oracle
from .material import MaterialLaw, fokker_planck_material, kelvin_voigt_material, read_law
from .solver import (
    DeltaSource,
    EvolutionaryProblem,
    ivp_solve_delta,
    ivp_solve_history,
    solve,
    time_stepping_oracle,
)
from .spatial import SkewOperator, parse_spatial
from .timegrid import (
    Signal,
    TimeGrid,
    read_signal_csv,
    weighted_mass,
    weighted_norm,
    write_signal_csv,
)
from .wellposed import (
    positivity_lower_bound,
    read_projectors,
    sampled_symbol_positivity,
    verify_condition,
)

log = logging.getLogger("evofrac")


class CliFailure(Exception):
    pass


@contextlib.contextmanager
def stage(name: str):
    """Re-raise library errors with the responsible module name in front."""
    try:
        yield
    except (ValueError, ArithmeticError, OSError) as exc:
        raise CliFailure(f"{name}: {exc}") from exc


# ---------------------------------------------------------------------------
# config -> objects
# ---------------------------------------------------------------------------

def _smooth_bump(t: np.ndarray, a: float, b: float) -> np.ndarray:
    out = np.zeros_like(t)
    inside = (t > a) & (t < b)
    y = (t[inside] - a) / (b - a)
    out[inside] = np.exp(4.0 - 1.0 / (y * (1.0 - y)))
    return out


def build_law(cfg: ExperimentConfig, a: SkewOperator) -> MaterialLaw:
    if cfg.has("law", "file"):
        return read_law(cfg.get("law", "file"))
    d0, d1 = a.block_dims
    alpha = cfg.get("law", "alpha")
    if cfg.get("law", "builder") == "fokker_planck":
        kappa = cfg.get("law", "kappa", 1.0) * np.eye(d0)
        mu = [
            [cfg.get("law", "mu00", 0.0) * np.eye(d0), np.zeros((d0, d1))],
            [np.zeros((d1, d0)), cfg.get("law", "mu11", 1.0) * np.eye(d1)],
        ]
        return fokker_planck_material(kappa, mu, alpha)
    return kelvin_voigt_material(
        cfg.get("law", "eta", 1.0) * np.eye(d0),
        cfg.get("law", "c", 1.0) * np.eye(d1),
        cfg.get("law", "d", 1.0) * np.eye(d1),
        alpha,
        cfg.get("law", "tail_terms", 8),
    )


def build_rhs(cfg: ExperimentConfig, dim: int) -> Signal:
    rho = cfg.get("grid", "rho")
    damping = cfg.get("grid", "damping", 30.0)
    if cfg.has("rhs", "file"):
        f = read_signal_csv(cfg.get("rhs", "file"), rho, damping)
        return f
    grid = TimeGrid.spanning(
        cfg.get("grid", "t_start"), cfg.get("grid", "t_stop"), cfg.get("grid", "n_steps"), rho,
        damping=damping,
    )
    t = grid.times
    amp = cfg.get("rhs", "amplitude", 1.0)
    start = cfg.get("rhs", "start")
    wave = cfg.get("rhs", "waveform")
    if wave == "step":
        prof = (t >= start - 1e-9 * grid.dt).astype(float)
    elif wave == "bump":
        prof = _smooth_bump(t, start, cfg.get("rhs", "stop"))
    else:
        prof = np.zeros_like(t)
        prof[grid.node_index(start)] = 1.0 / grid.dt
    comp = cfg.get("rhs", "component", 0)
    if not 0 <= comp < dim:
        raise ValueError(f"rhs component {comp} is outside 0..{dim - 1}")
    vals = np.zeros((grid.n_steps, dim), dtype=np.complex128)
    vals[:, comp] = amp * prof
    return Signal(grid, vals)


# ---------------------------------------------------------------------------
# runners
# ---------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return format(float(x), ".12g")


def _support_start(f: Signal) -> float | None:
    nz = np.flatnonzero(np.any(f.values != 0, axis=1))
    return float(f.grid.times[nz[0]]) if nz.size else None


def _run_solve(cfg: ExperimentConfig, out: TextIO) -> int:
    with stage("spatial"):
        a = parse_spatial(cfg.get("spatial", "spec"))
    with stage("material"):
        law = build_law(cfg, a)
    with stage("timegrid"):
        f = build_rhs(cfg, law.dim)
    with stage("solver"):
        p = EvolutionaryProblem(law, a, f.grid)
        defect = None
        if cfg.kind == "ivp":
            node = cfg.get("ivp", "node")
            vec = np.array(cfg.get("ivp", "vector"), dtype=np.complex128)
            if cfg.get("ivp", "mode") == "delta":
                res = ivp_solve_delta(p, f, DeltaSource(node, vec))
                u, defect = res.solution, res.jump_defect
            else:
                u = ivp_solve_history(p, f, vec, node)
        else:
            u = solve(p, f)
    with stage("timegrid"):
        write_signal_csv(u, cfg.get("output", "solution"))
    print(f"backend: {_accel.backend_name()}", file=out)
    print(f"weighted-norm: {_fmt(weighted_norm(u))}", file=out)
    starts = [_support_start(f)]
    if cfg.kind == "ivp":
        starts.append(float(f.grid.times[cfg.get("ivp", "node")]))
    starts = [t for t in starts if t is not None]
    t_a = min(starts) if starts else None
    if t_a is not None and weighted_mass(u) > 0:
        print(f"causality-ratio: {_fmt(weighted_mass(u, before=t_a) / weighted_mass(u))}", file=out)
    if defect is not None:
        print(f"jump-defect: {_fmt(defect)}", file=out)
    oracle_path = cfg.get("output", "oracle")
    if oracle_path is not None:
        if cfg.kind == "ivp":
            raise CliFailure("solver: the oracle is only available for plain solves")
        with stage("solver"):
            t0 = t_a if t_a is not None else f.grid.t_start
            o = time_stepping_oracle(p, f, t0)
        with stage("timegrid"):
            write_signal_csv(o, oracle_path)
        print(f"max-difference: {_fmt(np.abs(u.values - o.values).max())}", file=out)
    return 0


def _run_check(cfg: ExperimentConfig, out: TextIO) -> int:
    with stage("material"):
        law = read_law(cfg.get("law", "file"))
    with stage("wellposed"):
        proj = read_projectors(cfg.get("check", "projectors"))
        lo, hi = cfg.get("check", "rho_min"), cfg.get("check", "rho_max")
        report = verify_condition(law, proj, rho_max=hi)
        ok = report.passed and report.rho_threshold <= hi
        rho_eval = max(lo, report.rho_threshold * (1.0 + 1e-9)) if math.isfinite(report.rho_threshold) else None
        if ok and rho_eval is not None and rho_eval <= hi:
            report = verify_condition(law, proj, rho=rho_eval, rho_max=hi)
            ok = report.passed
    print(report.format(), file=out)
    if rho_eval is not None and rho_eval <= hi and report.passed:
        with stage("wellposed"):
            rhos = np.geomspace(rho_eval, hi, 5) if hi > rho_eval else np.array([rho_eval])
            for rho in rhos:
                b = positivity_lower_bound(law, proj, rho)
                s = sampled_symbol_positivity(law, rho)
                print(f"rho {_fmt(rho):>14}  bound {_fmt(b):>14}  sampled {_fmt(s):>14}", file=out)
    print(f"result: {'PASS' if ok else 'FAIL'} on [{_fmt(lo)}, {_fmt(hi)}]", file=out)
    return 0 if ok else 1


def _read_input(cfg: ExperimentConfig) -> Signal:
    path = cfg.get("frac", "input")
    rho = cfg.get("grid", "rho")
    damping = cfg.get("grid", "damping", 30.0)
    if rho is None:
        probe = read_signal_csv(path, 1.0, damping)
        rho = damping / probe.grid.span
    return read_signal_csv(path, rho, damping)


def _run_fracapply(cfg: ExperimentConfig, out: TextIO) -> int:
    with stage("timegrid"):
        u = _read_input(cfg)
    with stage("fraccalc"):
        v = apply_frac_power(cfg.get("frac", "gamma"), u)
    with stage("timegrid"):
        write_signal_csv(v, cfg.get("output", "path"))
    print(f"weighted-norm: {_fmt(weighted_norm(v))}", file=out)
    return 0


def _run_compare(cfg: ExperimentConfig, out: TextIO) -> int:
    with stage("timegrid"):
        u = _read_input(cfg)
    alpha = cfg.get("frac", "alpha")
    with stage("fraccalc"):
        spec = apply_frac_power(-alpha, u)
        rl = rl_integral_oracle(alpha, u)
    err = np.linalg.norm(spec.values - rl.values, axis=1)
    cols = ["t"]
    for name in ("spec", "rl"):
        for c in range(u.dim):
            cols += [f"{name}_re_{c}", f"{name}_im_{c}"]
    cols.append("error")
    lines = [",".join(cols)]
    for j, t in enumerate(u.grid.times):
        row = [format(t, ".17g")]
        for vals in (spec.values[j], rl.values[j]):
            for z in vals:
                row += [format(z.real, ".17g"), format(z.imag, ".17g")]
        row.append(format(err[j], ".17g"))
        lines.append(",".join(row))
    text = "\n".join(lines) + "\n"
    dest = cfg.get("output", "path")
    rel = weighted_norm(spec - rl) / max(weighted_norm(rl), 1e-300)
    if dest is None:
        out.write(text)
    else:
        Path(dest).write_text(text)
    print(f"relative-difference: {_fmt(rel)}", file=out if dest is not None else sys.stderr)
    return 0


RUNNERS = {
    "solve": _run_solve,
    "ivp": _run_solve,
    "check": _run_check,
    "fracapply": _run_fracapply,
    "compare-kernels": _run_compare,
}


def run(cfg: ExperimentConfig, out: TextIO | None = None) -> int:
    """Execute a validated configuration; returns the exit status."""
    out = sys.stdout if out is None else out
    log.info("running %s", cfg.kind)
    log.debug("config:\n%s", format_config(cfg))
    return RUNNERS[cfg.kind](cfg, out)


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _ivp_flag(value: str) -> tuple[int, str]:
    node, _, vec = value.partition(",")
    if not vec:
        raise argparse.ArgumentTypeError("expected node,v0[,v1,...]")
    try:
        return int(node), vec
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad node index {node!r}") from None


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="evofrac", description=__doc__.splitlines()[0])
    ap.add_argument("--config", help="experiment config file (replaces subcommand flags)")
    ap.add_argument("--verbose", "-v", action="store_true")
    sub = ap.add_subparsers(dest="command")

    s = sub.add_parser("solve", help="spectral solve of (d0 M + A) U = f")
    s.add_argument("--law", required=True)
    s.add_argument("--spatial", required=True)
    s.add_argument("--rho", required=True, type=float)
    s.add_argument("--rhs", required=True)
    s.add_argument("--out", required=True)
    g = s.add_mutually_exclusive_group()
    g.add_argument("--ivp-delta", type=_ivp_flag, metavar="NODE,VEC")
    g.add_argument("--ivp-history", type=_ivp_flag, metavar="NODE,VEC")
    s.add_argument("--oracle", action="store_true", help="also run the time-stepping oracle")

    i = sub.add_parser("ivp", help="initial-value solve (delta source or history term)")
    i.add_argument("--law", required=True)
    i.add_argument("--spatial", required=True)
    i.add_argument("--rho", required=True, type=float)
    i.add_argument("--rhs", required=True)
    i.add_argument("--out", required=True)
    i.add_argument("--mode", choices=("delta", "history"), required=True)
    i.add_argument("--node", type=int, required=True)
    i.add_argument("--vector", required=True, help="comma-separated complex entries")

    c = sub.add_parser("check", help="certify the well-posedness condition")
    c.add_argument("--law", required=True)
    c.add_argument("--projectors", required=True)
    c.add_argument("--rho-min", type=float, required=True)
    c.add_argument("--rho-max", type=float, required=True)

    f = sub.add_parser("fracapply", help="apply d0**gamma to a signal")
    f.add_argument("--gamma", type=float, required=True)
    f.add_argument("--input", required=True)
    f.add_argument("--rho", type=float, required=True)
    f.add_argument("--output", required=True)

    k = sub.add_parser("compare-kernels", help="spectral vs quadrature fractional integral")
    k.add_argument("--alpha", type=float, required=True)
    k.add_argument("--input", required=True)
    k.add_argument("--rho", type=float)
    k.add_argument("--output")
    return ap


def _flags_to_text(ns: argparse.Namespace) -> str:
    cmd = ns.command
    lines: list[str] = []

    def section(name: str, **items) -> None:
        items = {k: v for k, v in items.items() if v is not None}
        if items:
            lines.append(f"[{name}]")
            lines.extend(f"{k} = {v}" for k, v in items.items())

    if cmd in ("solve", "ivp"):
        kind = cmd
        ivp = None
        if cmd == "solve" and (ns.ivp_delta or ns.ivp_history):
            kind = "ivp"
            mode = "delta" if ns.ivp_delta else "history"
            node, vec = ns.ivp_delta or ns.ivp_history
            ivp = (mode, node, vec)
        elif cmd == "ivp":
            ivp = (ns.mode, ns.node, ns.vector)
        lines.append(f"kind = {kind}")
        section("grid", rho=repr(ns.rho))
        section("law", file=ns.law)
        section("spatial", spec=ns.spatial)
        section("rhs", file=ns.rhs)
        if ivp:
            section("ivp", mode=ivp[0], node=ivp[1], vector=ivp[2].replace(",", " "))
        oracle = None
        if getattr(ns, "oracle", False):
            p = Path(ns.out)
            oracle = str(p.with_name(p.stem + ".oracle" + (p.suffix or ".csv")))
        section("output", solution=ns.out, oracle=oracle)
    elif cmd == "check":
        lines.append("kind = check")
        section("law", file=ns.law)
        section("check", projectors=ns.projectors, rho_min=repr(ns.rho_min), rho_max=repr(ns.rho_max))
    elif cmd == "fracapply":
        lines.append("kind = fracapply")
        section("grid", rho=repr(ns.rho))
        section("frac", gamma=repr(ns.gamma), input=ns.input)
        section("output", path=ns.output)
    elif cmd == "compare-kernels":
        lines.append("kind = compare-kernels")
        section("grid", rho=None if ns.rho is None else repr(ns.rho))
        section("frac", alpha=repr(ns.alpha), input=ns.input)
        section("output", path=ns.output)
    return "\n".join(lines) + "\n"


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    ns = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        if ns.config:
            if ns.command:
                ap.error("--config replaces the subcommand; give one or the other")
            cfg = load_config(ns.config)
        elif ns.command:
            cfg = parse_config(_flags_to_text(ns))
        else:
            ap.error("a subcommand or --config is required")
        return run(cfg)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config: {problem}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"config: {exc}", file=sys.stderr)
        return 2
    except CliFailure as exc:
        print(str(exc), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
