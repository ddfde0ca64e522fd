"""Command line entry point: ``lilypond <command> [options]``.

Exit codes: 0 success, 1 property violations found by ``verify``, 2 usage
errors and malformed input.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import clusters as cl
from . import experiments as ex
from . import tolerance
from .geometry import GeometryError, as_point
from .io import (
    InputError,
    RunConfig,
    parse_list,
    read_config_file,
    read_points,
    read_radii,
    serialize_report,
    write_radii,
)
from .model import solve, verify
from .stabilization import external_radius, stab_radius, stopping_set

EXIT_OK, EXIT_VIOLATION, EXIT_USAGE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    """Raises instead of exiting so :func:`run` owns the exit code."""

    def error(self, message):
        raise InputError(f"{self.prog}: {message}")


def _common(p, experiment: bool):
    p.add_argument("--config", help="flat key=value file; command line flags take precedence")
    p.add_argument("--eps", type=float, help="geometric tolerance (default 1e-9)")
    p.add_argument("--out", help="output path (report base name for experiments)")
    if experiment:
        p.add_argument("--d", type=int, help="dimension")
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--reps", type=int, help="replicates per cell")
        p.add_argument("--threads", type=int, help=f"worker threads (default ${ex.THREADS_ENV} or 1)")
        p.add_argument("--raw", action="store_true", help="also write line-delimited raw records")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lilypond", description="Lilypond model simulator and certified experiments.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)

    p = sub.add_parser("solve", help="lilypond radii of a point file")
    p.add_argument("--points", help="point file, one point per line")
    _common(p, False)

    p = sub.add_parser("verify", help="check hard-core and smaller-neighbour properties")
    p.add_argument("--points")
    p.add_argument("--radii", help="radius file; solved afresh when omitted")
    _common(p, False)

    p = sub.add_parser("stab", help="stopping set of a point")
    p.add_argument("--points")
    p.add_argument("--y", help="comma separated anchor (default: the origin)")
    p.add_argument("--r-cap", dest="r_cap", type=int, help="largest r tried for Rex (default 64)")
    _common(p, False)

    p = sub.add_parser("cluster", help="components of the (enhanced) union set")
    p.add_argument("--points")
    p.add_argument("--delta", type=float, help="enhancement (default 0)")
    _common(p, False)

    p = sub.add_parser("pz", help="volume fraction estimators")
    p.add_argument("--Lmax", type=float)
    _common(p, True)

    p = sub.add_parser("tails", help="survival curves of origin-cluster sizes")
    p.add_argument("--thresholds", help="diameter thresholds, comma separated")
    p.add_argument("--volume-thresholds", dest="volume_thresholds")
    p.add_argument("--card-thresholds", dest="card_thresholds")
    p.add_argument("--certificate", choices=["G", "stopping"])
    p.add_argument("--L0", type=float)
    p.add_argument("--Lmax", type=float)
    _common(p, True)

    p = sub.add_parser("clt", help="variance scaling and normality of H_g and H_kappa")
    p.add_argument("--functionals", help="comma separated: volume, kappa, const:c, power:p")
    p.add_argument("--process", choices=["poisson", "binomial"])
    p.add_argument("--n-grid", dest="n_grid", help="window volumes, comma separated")
    p.add_argument("--shape", choices=["cube", "ball"])
    _common(p, True)

    p = sub.add_parser("perc", help="face-crossing sweep of the enhanced union set")
    p.add_argument("--deltas", help="enhancement grid, comma separated")
    p.add_argument("--scales", help="window volumes, comma separated")
    p.add_argument("--axis", type=int)
    p.add_argument("--check-r", dest="check_r", type=float)
    _common(p, True)

    p = sub.add_parser("field", help="renormalized site field")
    p.add_argument("--r", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--half-extent", dest="half_extent", type=int)
    p.add_argument("--samples", type=int)
    _common(p, True)
    return parser


_NOT_CONFIG = {"command", "config", "raw"}


def _resolve(args) -> RunConfig:
    cli = {k: v for k, v in vars(args).items() if k not in _NOT_CONFIG}
    file_values = read_config_file(args.config) if args.config else {}
    return RunConfig.build(args.command, file_values, cli, allowed=cli.keys())


def _need(value, name: str):
    if value is None:
        raise InputError(f"missing required setting {name!r}")
    return value


def _emit(text: str, out: str | None):
    if out:
        with open(out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _fmt_list(vals) -> str:
    return " ".join(repr(float(v)) for v in vals)


def _cmd_solve(cfg: RunConfig) -> int:
    phi = read_points(_need(cfg.options.get("points"), "points"))
    radii = solve(phi).radii
    if cfg.out:
        write_radii(cfg.out, radii)
    else:
        print(_fmt_list(radii))
    return EXIT_OK


def _cmd_verify(cfg: RunConfig) -> int:
    phi = read_points(_need(cfg.options.get("points"), "points"))
    path = cfg.options.get("radii")
    radii = read_radii(path, len(phi)) if path else solve(phi).radii
    rep = verify(phi, radii)
    worst = rep.worst_pair
    text = json.dumps(
        {
            "ok": rep.ok,
            "hard_core": rep.hard_core,
            "smaller_neighbour": rep.smaller_neighbour,
            "max_hard_core_excess": rep.max_hard_core_excess,
            "worst_pair": list(worst) if worst else None,
            "max_neighbour_residual": float(np.max(rep.neighbour_residuals)) if len(phi) else None,
        }
    )
    _emit(text, cfg.out)
    return EXIT_OK if rep.ok else EXIT_VIOLATION


def _cmd_stab(cfg: RunConfig) -> int:
    phi = read_points(_need(cfg.options.get("points"), "points"))
    y = cfg.options.get("y")
    y = as_point(parse_list(y), phi.dim) if y else np.zeros(phi.dim)
    S = stopping_set(y, phi)
    R = stab_radius(phi)
    rex = external_radius(phi, cfg.options.get("r_cap", 64))
    text = json.dumps(
        {
            "R": R if np.isfinite(R) else "inf",
            "Rex": rex if np.isfinite(rex) else "inf",
            "anchor": S.anchor.tolist(),
            "bounded": S.bounded,
            "enclosing_radius": S.enclosing_radius if S.bounded else "inf",
            "balls": [{"center": c, "radius": r} for c, r in S.balls()] if S.bounded else [],
        }
    )
    _emit(text, cfg.out)
    return EXIT_OK


def _cmd_cluster(cfg: RunConfig) -> int:
    phi = read_points(_need(cfg.options.get("points"), "points"))
    delta = float(cfg.options.get("delta") or 0.0)
    if len(phi) < 2:
        raise InputError("cluster needs at least two points (a single grain has infinite radius)")
    rho = solve(phi)
    labels = cl.components(phi, rho, delta)
    stats = [s.record() for s in cl.all_cluster_stats(phi, rho, delta)]
    text = json.dumps({"delta": delta, "labels": labels.tolist(), "clusters": stats})
    _emit(text, cfg.out)
    return EXIT_OK


def _report(cfg: RunConfig, report: ex.ExperimentReport) -> int:
    if cfg.out:
        paths = serialize_report(report, cfg.out)
        print(json.dumps({k: str(v) for k, v in paths.items()}))
    print(json.dumps(report.summary, default=str))
    return EXIT_OK


def _cmd_pz(cfg, raw):
    d = _need(cfg.d, "d")
    return _report(cfg, ex.estimate_pZ(d, cfg.reps or 1000, cfg.seed, cfg.window.get("Lmax", 1024.0), cfg.threads))


def _cmd_tails(cfg, raw):
    d = _need(cfg.d, "d")
    g = cfg.grids
    rep = ex.tail_survey(
        d,
        g.get("thresholds", [0.5, 1.0, 1.5, 2.0]),
        cfg.reps or 1000,
        cfg.seed,
        volume_thresholds=g.get("volume_thresholds"),
        card_thresholds=g.get("card_thresholds"),
        L0=cfg.window.get("L0"),
        Lmax=cfg.window.get("Lmax", 1024.0),
        certificate=cfg.options.get("certificate", "stopping"),
        threads=cfg.threads,
        keep_raw=raw,
    )
    return _report(cfg, rep)


def _cmd_clt(cfg, raw):
    d = _need(cfg.d, "d")
    funcs = (cfg.options.get("functionals") or "volume,kappa").split(",")
    rep = ex.clt_run(
        d,
        funcs,
        cfg.options.get("process", "poisson"),
        cfg.grids.get("n_grid", [250, 500, 1000, 2000]),
        cfg.reps or 2000,
        cfg.seed,
        shape=cfg.window.get("shape", "cube"),
        threads=cfg.threads,
        keep_raw=raw,
    )
    return _report(cfg, rep)


def _cmd_perc(cfg, raw):
    d = _need(cfg.d, "d")
    rep = ex.percolation_sweep(
        d,
        cfg.grids.get("deltas", list(np.round(np.arange(0, 1.0001, 0.05), 10))),
        cfg.grids.get("scales", [64, 256]),
        cfg.reps or 200,
        cfg.seed,
        axis=cfg.options.get("axis", 0),
        check_r=cfg.options.get("check_r", 2.5),
        threads=cfg.threads,
    )
    return _report(cfg, rep)


def _cmd_field(cfg, raw):
    d = _need(cfg.d, "d")
    rep = ex.field_experiment(
        d,
        cfg.options.get("r", 40.0),
        cfg.options.get("delta", 1e-4),
        cfg.window.get("half_extent", 10),
        cfg.options.get("samples", cfg.reps or 100),
        cfg.seed,
        threads=cfg.threads,
    )
    return _report(cfg, rep)


_POINT_COMMANDS = {"solve": _cmd_solve, "verify": _cmd_verify, "stab": _cmd_stab, "cluster": _cmd_cluster}
_EXPERIMENTS = {"pz": _cmd_pz, "tails": _cmd_tails, "clt": _cmd_clt, "perc": _cmd_perc, "field": _cmd_field}


def run(argv=None) -> int:
    parser = build_parser()
    old_eps = tolerance.EPS_GEO
    try:
        args = parser.parse_args(argv)
        cfg = _resolve(args)
        if cfg.eps is not None:
            tolerance.set_eps(cfg.eps)
        if args.command in _POINT_COMMANDS:
            return _POINT_COMMANDS[args.command](cfg)
        return _EXPERIMENTS[args.command](cfg, args.raw)
    except (InputError, GeometryError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    finally:
        tolerance.set_eps(old_eps)


def main() -> None:
    sys.exit(run())
