"""Command-line front end: ``seqdet {interact,wigner,trajectories,optimize,sweep}``."""
from __future__ import annotations

import argparse
import logging
import os
import sys
import tempfile
from pathlib import Path

from . import __version__
from .config import RunConfig, load_config, parse_config
from .errors import ConfigError, InvariantViolation, SeqdetError, StepSizeUnderflow
from .metrics import wigner
from .optimize import configure, minimize_error, sweep_gamma_c, write_sweep_csv
from .params import to_si_rate, to_si_time
from .probe import run_ensemble, write_ensemble_csv, write_histogram_csv, write_summary
from .sequence import apply_unconditional_displacement, run_interaction

__all__ = ["main", "run_subcommand", "EXIT_OK", "EXIT_CONFIG", "EXIT_NUMERIC"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

log = logging.getLogger("seqdet")


def _header(cfg: RunConfig, command: str, *extra: str) -> str:
    """Comment block for an artifact; the resolved config always comes last so it can be replayed."""
    return "\n".join(
        [f"seqdet {__version__} {command}", f"base_seed = {cfg.system.probe.base_seed}", *extra,
         "--- resolved config ---", cfg.resolved_text()]
    )


def _atomic_write(path: Path, write) -> Path:
    """Write through a temporary file so a failure never leaves a partial artifact."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    os.close(fd)
    try:
        write(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _kv_writer(rows, header):
    def write(tmp):
        with open(tmp, "w") as f:
            for line in header.splitlines():
                f.write(f"# {line}\n")
            for k, v in rows:
                f.write(f"{k} = {v}\n")
    return write


def _g(x) -> str:
    return f"{x:.12g}"


def _interaction(cfg: RunConfig):
    run = cfg.section("run")
    return run_interaction(cfg.system, run["hamiltonian"], run["n_cut"], method=run["method"], step=run["step"])


def _cmd_interact(cfg, out: Path, args) -> list:
    s = _interaction(cfg)
    rows = [
        ("hamiltonian", cfg.section("run")["hamiltonian"]),
        ("T_interact", _g(s.T_interact_used)),
        ("p_e_m", _g(s.p_error_projective())),
        ("p_e_opt", _g(s.p_error_optimal())),
        ("source_residual_0", _g(s.source_residual[0])),
        ("source_residual_1", _g(s.source_residual[1])),
    ]
    if args.si:
        rows.append(("T_interact_si_s", _g(to_si_time(s.T_interact_used))))
        rows.append(("gamma_c_si_rad_per_s", _g(to_si_rate(cfg.system.gamma_c))))
    return [_atomic_write(out / "interact_summary.txt", _kv_writer(rows, _header(cfg, "interact")))]


def _cmd_wigner(cfg, out: Path, args) -> list:
    w = cfg.section("wigner")
    s = _interaction(cfg)
    if w["displaced"]:
        s = apply_unconditional_displacement(s, cfg.system.alpha)
    files = []
    for b, rho in ((0, s.rho_res_0), (1, s.rho_res_1)):
        grid = wigner(rho, (w["x_min"], w["x_max"]), (w["p_min"], w["p_max"]), w["resolution"])
        hdr = _header(cfg, "wigner", f"branch = {b}")
        files.append(_atomic_write(out / f"wigner_branch{b}.csv", lambda tmp, g=grid, h=hdr: g.to_csv(tmp, h)))
    return files


def _cmd_trajectories(cfg, out: Path, args) -> list:
    tr = cfg.section("trajectories")
    p = cfg.system
    s = apply_unconditional_displacement(_interaction(cfg), p.alpha)
    res = run_ensemble(
        p, s.rho_joint_0, s.rho_joint_1, p.probe.n_traj,
        n_cut=cfg.n_cut, workers=args.workers, scheme=tr["scheme"], backend=tr["backend"],
        chunk=tr["chunk"], bins=tr["bins"],
    )
    hdr = _header(cfg, "trajectories", f"kernel_backend = {res.meta['backend']}")
    files = [
        _atomic_write(out / "ensemble.csv", lambda tmp: write_ensemble_csv(res, tmp, hdr)),
        _atomic_write(out / "histogram.csv", lambda tmp: write_histogram_csv(res, tmp, hdr)),
        _atomic_write(out / "summary.txt", lambda tmp: write_summary(res, tmp, hdr)),
    ]
    log.info("p_error_real = %.4g +- %.2g", res.p_error_real, res.standard_error)
    return files


def _cmd_optimize(cfg, out: Path, args) -> list:
    o = cfg.section("optimize")
    q, kind = configure(cfg.system, o["config"])
    r = minimize_error(
        q, kind, ((o["delta1_min"], o["delta1_max"]), (o["delta2_min"], o["delta2_max"])),
        n_restarts=o["restarts"], max_evals=o["max_evals"], n_cut_search=o["n_cut_search"], n_cut_final=cfg.n_cut,
    )
    rows = [
        ("config", o["config"]),
        ("delta1", _g(r.delta1)),
        ("delta2", _g(r.delta2)),
        ("T_interact", _g(r.T_interact)),
        ("p_e_m", _g(r.p_e_m)),
        ("p_e_opt", _g(r.p_e_opt)),
        ("n_evals", str(r.n_evals)),
        ("converged", str(r.converged).lower()),
        ("rugged", str(r.rugged).lower()),
    ]
    if args.si:
        rows.append(("T_interact_si_s", _g(to_si_time(r.T_interact))))
    return [_atomic_write(out / "optimize.txt", _kv_writer(rows, _header(cfg, "optimize")))]


def _cmd_sweep(cfg, out: Path, args) -> list:
    sw, o = cfg.section("sweep"), cfg.section("optimize")
    pts = sweep_gamma_c(
        sw["gamma_c"], sw["configurations"], base=cfg.system,
        bounds=((o["delta1_min"], o["delta1_max"]), (o["delta2_min"], o["delta2_max"])),
        n_restarts=o["restarts"], max_evals=o["max_evals"], n_cut_search=o["n_cut_search"], n_cut_final=cfg.n_cut,
    )
    return [_atomic_write(out / "sweep.csv", lambda tmp: write_sweep_csv(pts, tmp, _header(cfg, "sweep")))]


COMMANDS = {
    "interact": _cmd_interact,
    "wigner": _cmd_wigner,
    "trajectories": _cmd_trajectories,
    "optimize": _cmd_optimize,
    "sweep": _cmd_sweep,
}


def run_subcommand(name: str, cfg: RunConfig, args=None) -> list:
    """Run one subcommand and return the written paths."""
    if name not in COMMANDS:
        raise ConfigError(f"unknown subcommand {name!r}")
    args = args or argparse.Namespace(workers=None, si=False, output_dir=None)
    out = Path(args.output_dir or cfg.section("run")["output_dir"])
    return COMMANDS[name](cfg, out, args)


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="seqdet", description="Sequential single-photon detector simulations.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, help_ in (
        ("interact", "error probabilities after the interaction window"),
        ("wigner", "Wigner functions of both resonator branches"),
        ("trajectories", "homodyne trajectory ensemble and threshold"),
        ("optimize", "search detunings and interaction time"),
        ("sweep", "optimized error versus photon bandwidth"),
    ):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("-c", "--config", help="run configuration file (defaults to the headline preset)")
        sp.add_argument("-o", "--output-dir", help="directory for artifacts (overrides [run] output_dir)")
        sp.add_argument("--workers", type=int, default=None, help="worker processes (env SEQDET_WORKERS)")
        sp.add_argument("--si", action="store_true", help="also report times and rates in SI units")
        sp.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        if args.workers is not None and args.workers < 1:
            raise ConfigError("--workers must be at least 1")
        cfg = load_config(args.config) if args.config else parse_config("", "<defaults>")
        for path in run_subcommand(args.command, cfg, args):
            print(path)
    except ConfigError as exc:
        print(f"seqdet: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InvariantViolation, StepSizeUnderflow, ArithmeticError) as exc:
        print(f"seqdet: numerical invariant violated: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except SeqdetError as exc:
        print(f"seqdet: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
