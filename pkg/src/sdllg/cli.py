"""Command line interface.

Subcommands: ``run`` (time loop with outputs), ``study`` (refinement
ladder), ``check`` (invariant battery), ``mesh`` (emit the mesh only).
Exit codes: 0 success, 2 configuration error, 3 solver failure,
4 invariant violation from ``check``.
"""
from __future__ import annotations

import argparse
import dataclasses
import os
import sys

import numpy as np

from . import output as out
from .config import SimConfig, load_config
from .driver import check_suite, initialize, refinement_study, run
from .errors import ConfigurationError, SolverError
from .mesh import build_multilayer_mesh

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_INVARIANT = 4


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("config", nargs="?", help="path to the TOML configuration")
    p.add_argument("--config", dest="config_flag", metavar="PATH",
                   help="alternative way to pass the configuration")
    p.add_argument("--output", metavar="DIR", help="override the output directory")
    p.add_argument("--tol", type=float, help="override the linear solver tolerance")
    p.add_argument("--threads", type=int, help="limit BLAS thread count")
    p.add_argument("--seed", type=int, default=0,
                   help="seed for randomized diagnostics")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sdllg",
        description="Finite-element integrator for coupled magnetization "
                    "and spin-accumulation dynamics in multilayers.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the time loop")
    _add_common(p_run)
    p_run.add_argument("--checkpoint", metavar="PATH",
                       help="resume from PATH if it exists; always write the "
                            "final state there")

    p_study = sub.add_parser("study", help="refinement ladder")
    _add_common(p_study)
    p_study.add_argument("--levels", type=int, default=3)
    p_study.add_argument("--halve-h", action="store_true",
                         help="refine the mesh together with the step size")

    p_check = sub.add_parser("check", help="run the invariant battery")
    _add_common(p_check)

    p_mesh = sub.add_parser("mesh", help="emit the mesh only")
    _add_common(p_mesh)
    return parser


def _load(args) -> SimConfig:
    path = args.config_flag or args.config
    if not path:
        raise ConfigurationError("no configuration file given")
    cfg = load_config(path)
    if args.output:
        cfg = dataclasses.replace(cfg, output=dataclasses.replace(
            cfg.output, directory=args.output))
    if args.tol:
        cfg = dataclasses.replace(cfg, solver=dataclasses.replace(
            cfg.solver, tol=args.tol))
    return cfg


def _cmd_run(args) -> int:
    cfg = _load(args)
    init = initialize(cfg)
    ckpt_path = args.checkpoint or cfg.output.checkpoint_path or ""
    start_state = None
    if ckpt_path and os.path.exists(ckpt_path):
        m, s, step_idx, k = out.load_checkpoint(ckpt_path, init.mesh)
        if abs(k - cfg.k) > 1e-15 * cfg.k:
            raise ConfigurationError("checkpoint step size differs from config")
        from .driver import SimState
        start_state = SimState(m=m, s=s, step=step_idx, k=cfg.k)
        print(f"resuming from step {step_idx}")

    on_step = None
    if ckpt_path and cfg.output.checkpoint_every > 0:
        def on_step(st, every=cfg.output.checkpoint_every):
            if st.step % every == 0:
                out.save_checkpoint(ckpt_path, init.mesh, st.m, st.s,
                                    st.step, st.k)
    result = run(init, start_state=start_state, on_step=on_step)

    outdir = out.ensure_dir(cfg.output.directory)
    if cfg.output.ledger:
        ledger_path = os.path.join(outdir, cfg.output.ledger)
        out.write_ledger_csv(ledger_path, result.ledger)
        print(f"ledger: {ledger_path}")
    if cfg.output.vtk_every > 0:
        for st in result.states[::cfg.output.vtk_every]:
            path = os.path.join(outdir, f"state_{st.step:06d}.vtk")
            out.write_vtk(path, init.mesh,
                          point_data=out.state_point_data(init.mesh, st.m, st.s),
                          cell_data={"region": init.mesh.tet_region.astype(float)})
        print(f"vtk snapshots in {outdir}")
    if ckpt_path:
        final = result.final_state
        out.save_checkpoint(ckpt_path, init.mesh, final.m, final.s,
                            final.step, final.k)
        print(f"checkpoint: {ckpt_path}")
    final = result.final_state
    m_norm = float(np.linalg.norm(final.m.values, axis=1).mean())
    print(f"completed {final.step} steps to t = {final.t:g}; "
          f"mean |m| = {m_norm:.6f}; E = "
          f"{result.ledger.E[-1] if len(result.ledger) else result.initial_energy:.6g}")
    return EXIT_OK


def _cmd_study(args) -> int:
    cfg = _load(args)
    rows = refinement_study(cfg, levels=args.levels, halve_h=args.halve_h)
    outdir = out.ensure_dir(cfg.output.directory)
    path = os.path.join(outdir, "study.csv")
    with open(path, "w") as fh:
        fh.write("level,h,k,m_cauchy,s_cauchy,spin_stability_sum,"
                 "magnetization_stability_sum\n")
        for r in rows:
            fh.write(f"{r.level},{r.h:.17g},{r.k:.17g},"
                     f"{'' if r.m_cauchy is None else format(r.m_cauchy, '.17g')},"
                     f"{'' if r.s_cauchy is None else format(r.s_cauchy, '.17g')},"
                     f"{r.spin_stability_sum:.17g},"
                     f"{r.magnetization_stability_sum:.17g}\n")
    print(f"{'level':>5} {'h':>12} {'k':>12} {'|dm|':>12} {'|ds|':>12}")
    for r in rows:
        dm = "-" if r.m_cauchy is None else f"{r.m_cauchy:.4e}"
        ds = "-" if r.s_cauchy is None else f"{r.s_cauchy:.4e}"
        print(f"{r.level:>5} {r.h:>12.4e} {r.k:>12.4e} {dm:>12} {ds:>12}")
    print(f"study table: {path}")
    return EXIT_OK


def _cmd_check(args) -> int:
    cfg = _load(args)
    results = check_suite(cfg, seed=args.seed)
    failed = 0
    for r in results:
        mark = "PASS" if r.passed else "FAIL"
        detail = f"  ({r.detail})" if r.detail else ""
        print(f"[{mark}] {r.name}{detail}")
        failed += 0 if r.passed else 1
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_INVARIANT


def _cmd_mesh(args) -> int:
    cfg = _load(args)
    mesh = build_multilayer_mesh(cfg.geometry.layers, cfg.geometry.cross_section,
                                 cfg.geometry.resolution)
    outdir = out.ensure_dir(cfg.output.directory)
    path = os.path.join(outdir, "mesh.vtk")
    out.write_vtk(path, mesh, cell_data={"region": mesh.tet_region.astype(float)})
    print(f"mesh: {mesh.n_nodes} nodes, {mesh.n_tets} tets -> {path}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads:
        try:
            from threadpoolctl import threadpool_limits
            threadpool_limits(limits=args.threads)
        except ImportError:
            print("threadpoolctl not available; --threads ignored", file=sys.stderr)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "study":
            return _cmd_study(args)
        if args.command == "check":
            return _cmd_check(args)
        if args.command == "mesh":
            return _cmd_mesh(args)
        raise ConfigurationError(f"unknown command {args.command}")
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
