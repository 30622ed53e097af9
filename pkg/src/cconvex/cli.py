"""Command-line front end.

Exit codes: 0 pass, 2 certificate or verification failure, 1 error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .certifier import certify, make_grid
from .config import ConfigError, RunConfig, load_config
from .mechanics import CotangentState, flow, hamiltonian
from .riccati import constant_source, riccati_integrate
from .transport import c_transform, verify_optimality, write_pairs_csv

log = logging.getLogger("cconvex")

EXIT_PASS, EXIT_ERROR, EXIT_FAIL = 0, 1, 2


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path: Path, payload: dict) -> None:
    text = json.dumps(_clean(payload), sort_keys=True, indent=2, allow_nan=False)
    path.write_text(text + "\n", encoding="utf-8")


def _out_dir(args, cfg: Optional[RunConfig]) -> Path:
    out = Path(args.out or (cfg.output.dir if cfg else "out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    if args.seed is not None:
        cfg.verification.seed = args.seed
    if args.grid is not None:
        if args.grid < 1:
            raise ConfigError("--grid must be positive")
        cfg.grid.resolution = args.grid
    return cfg


def _header(cfg: RunConfig) -> dict:
    return {"manifold": cfg.manifold.__dict__, "field": cfg.field.__dict__,
            "potential": cfg.system.potential.__dict__, "version": __version__}


def cmd_certify(cfg: RunConfig, out: Path) -> int:
    system = cfg.build_system()
    f = cfg.build_field(system.model)
    grid = make_grid(system.model, cfg.grid.resolution)
    cert = certify(system, f, cfg.certify.theorem, grid, cfg.certify.k, cfg.certify.delta)
    write_json(out / "certificate.json", {"config": _header(cfg), "certificate": cert.to_dict()})
    log.info("certificate %s: worst margin %s", "pass" if cert.verdict else "fail", cert.worst_margin)
    for c in cert.caveats:
        log.info("caveat: %s", c)
    return EXIT_PASS if cert.verdict else EXIT_FAIL


def cmd_verify(cfg: RunConfig, out: Path) -> int:
    system = cfg.build_system()
    f = cfg.build_field(system.model)
    v = cfg.verification
    cert = None
    try:
        cert = certify(system, f, cfg.certify.theorem, make_grid(system.model, cfg.grid.resolution),
                       cfg.certify.k, cfg.certify.delta)
    except ValueError as exc:
        log.info("no certificate: %s", exc)
    report = verify_optimality(system, f, v.n, v.seed, v.step, cert)
    passed = report.identity_optimal and report.duality_gap <= v.duality_tol
    payload = report.to_dict()
    payload["duality_tol"] = v.duality_tol
    payload["verdict"] = "pass" if passed else "fail"
    write_json(out / "report.json", {"config": _header(cfg), "report": payload})
    write_pairs_csv(out / "pairs.csv", report)
    log.info("monge %.12g, assignment %.12g, duality gap %.3g: %s", report.monge_cost,
             report.assignment_cost, report.duality_gap, payload["verdict"])
    return EXIT_PASS if passed else EXIT_FAIL


def cmd_ctransform(cfg: RunConfig, out: Path) -> int:
    system = cfg.build_system()
    f = cfg.build_field(system.model)
    res = c_transform(system, f, cfg.verification.ctransform_resolution,
                      cfg.verification.shooting_step)
    d = res.to_dict()
    arrays = {k: d.pop(k) for k in ("f", "f_c", "f_cc")}
    write_json(out / "ctransform.json", {"config": _header(cfg), "ctransform": d})
    n = res.points.coords.shape[1]
    with open(out / "ctransform.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["chart"] + [f"x{k}" for k in range(n)] + ["f", "f_c", "f_cc"])
        for i in range(len(res.points)):
            w.writerow([int(res.points.charts[i])] + [repr(float(x)) for x in res.points.coords[i]]
                       + [repr(arrays[k][i]) for k in ("f", "f_c", "f_cc")])
    log.info("max defect %.3g against tolerance %.3g", res.max_defect, res.tol_grid)
    return EXIT_PASS if res.is_c_convex else EXIT_FAIL


def cmd_flow(cfg: RunConfig, out: Path) -> int:
    system = cfg.build_system()
    model = system.model
    fc = cfg.flow
    x = model.point(fc.x if fc.x is not None else np.zeros(model.dim), fc.chart)
    p = np.asarray(fc.p, dtype=float) if fc.p is not None else cfg.build_field(model).gradient(x)
    state = CotangentState(x, p)
    res = flow(system, state, fc.t_end, cfg.verification.step)
    fin = res.final
    write_json(out / "flow.json", {
        "config": _header(cfg),
        "flow": {"t_end": fc.t_end, "step": res.step, "energy_drift": res.energy_drift,
                 "initial": {"chart": x.chart, "x": x.coords, "p": p},
                 "final": {"chart": fin.x.chart, "x": fin.x.coords, "p": fin.p},
                 "energy": hamiltonian(system, state)}})
    with open(out / "trajectory.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        n = model.dim
        w.writerow(["t", "chart"] + [f"x{k}" for k in range(n)] + [f"p{k}" for k in range(n)] + ["H"])
        for t, s in zip(res.times, res.states):
            w.writerow([repr(float(t)), s.x.chart] + [repr(float(v)) for v in s.x.coords]
                       + [repr(float(v)) for v in s.p] + [repr(hamiltonian(system, s))])
    log.info("energy drift %.3g", res.energy_drift)
    return EXIT_PASS


def cmd_riccati_demo(k: float, s0: float, t_end: float, out: Path, step: float = 1e-3,
                     dim: int = 1) -> int:
    """Scalar-matrix demo ``S0 = s0 I``, ``R = k I``; CSV of eigenvalues of ``S_t`` and ``det a_t``."""
    traj = riccati_integrate(constant_source(k * np.eye(dim)), s0 * np.eye(dim), t_end, step)
    with open(out / "riccati.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"s{i}" for i in range(dim)] + ["det_gamma2"])
        for t, S, d in zip(traj.times, traj.S, traj.det_a):
            eig = np.linalg.eigvalsh(S) if np.all(np.isfinite(S)) else np.full(dim, np.nan)
            w.writerow([repr(float(t))] + [repr(float(e)) for e in eig] + [repr(float(d))])
    if traj.blow_up is None:
        log.info("bounded on [0, %g]", t_end)
    else:
        log.info("blow-up at t = %.6g", traj.blow_up)
    return EXIT_PASS


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cconvex", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="output directory (default from config, else ./out)")
    common.add_argument("--quiet", action="store_true", help="only log errors")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (("certify", "evaluate a curvature certificate on a grid"),
                        ("verify", "empirical optimality against an exact assignment"),
                        ("flow", "integrate one Hamiltonian trajectory"),
                        ("ctransform", "brute-force double c-transform on a grid")):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.add_argument("--config", required=True, help="YAML run configuration")
        p.add_argument("--seed", type=int, help="override verification.seed")
        p.add_argument("--grid", type=int, help="override grid.resolution")
    p = sub.add_parser("riccati-demo", parents=[common], help="scalar Riccati demo as CSV")
    p.add_argument("--k", type=float, required=True)
    p.add_argument("--s0", type=float, required=True)
    p.add_argument("--t-end", type=float, default=1.0)
    p.add_argument("--step", type=float, default=1e-3)
    p.add_argument("--dim", type=int, default=1)
    return parser


COMMANDS = {"certify": cmd_certify, "verify": cmd_verify, "flow": cmd_flow,
            "ctransform": cmd_ctransform}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr, force=True)
    try:
        if args.command == "riccati-demo":
            if args.dim < 1 or args.step <= 0 or args.t_end < 0:
                raise ConfigError("riccati-demo needs dim >= 1, step > 0 and t-end >= 0")
            return cmd_riccati_demo(args.k, args.s0, args.t_end, _out_dir(args, None),
                                    args.step, args.dim)
        cfg = _apply_overrides(load_config(args.config), args)
        return COMMANDS[args.command](cfg, _out_dir(args, cfg))
    except (ConfigError, ValueError, RuntimeError, ArithmeticError, OSError, MemoryError) as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
