"""Command line entry point: ``stokes-lps {study,eig,postprocess,infsup}``.

Flags override keys read from ``--config``. On failure a single line
``error: <category>: <message>`` goes to stderr and the exit code is 1
(2 for argument errors, as usual for argparse).
"""

from __future__ import annotations

import argparse
import sys
import time

from .assembly import ALPHA_SCALINGS, assemble_blocks, form_eval
from .eigensolver import infsup_global, solve_smallest
from .errors import InvalidArgumentError, StokesLPSError
from .mesh import unit_square_mesh
from .postprocess import MODES, postprocess
from .study import ELEMENT_PAIRS, POSTPROCESS_MODES, export_outputs, load_config, run_study


def _levels(text):
    try:
        return tuple(int(t) for t in text.replace(",", " ").split())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"levels must be integers, got {text!r}") from exc


def _reference(text):
    if text in ("default", "richardson"):
        return text
    try:
        return float(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"reference must be a number, 'default' or 'richardson'") from exc


def _depth(text):
    return "auto" if text == "auto" else int(text)


def _common(p):
    p.add_argument("--config", help="flat key = value configuration file")
    p.add_argument("--element", choices=sorted(ELEMENT_PAIRS))
    p.add_argument("--alpha0", type=float)
    p.add_argument("--alpha-scaling", choices=ALPHA_SCALINGS)
    p.add_argument("--count", type=int, help="number of eigenpairs")
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iterations", type=int)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="stokes-lps", description="LPS-stabilized Stokes eigenvalue solver")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("study", help="convergence study over several levels")
    _common(p)
    p.add_argument("--levels", type=_levels, help='e.g. "8,16,32,64"')
    p.add_argument("--postprocess", choices=POSTPROCESS_MODES)
    p.add_argument("--two-grid-levels", type=_depth, help="refinement depth or 'auto'")
    p.add_argument("--two-grid-max-levels", type=int)
    p.add_argument("--reference", type=_reference)
    p.add_argument("--output-dir")
    p.add_argument("--no-vtk", action="store_true")

    p = sub.add_parser("eig", help="eigenpairs on one level")
    _common(p)
    p.add_argument("-n", type=int, default=16, help="subdivisions per side")

    p = sub.add_parser("postprocess", help="eigenvalue postprocessing on one level")
    _common(p)
    p.add_argument("-n", type=int, default=16)
    p.add_argument("--mode", choices=MODES, default="two-space")
    p.add_argument("--two-grid-levels", type=_depth)
    p.add_argument("--two-grid-max-levels", type=int)

    p = sub.add_parser("infsup", help="discrete inf-sup estimates over several levels")
    _common(p)
    p.add_argument("--levels", type=_levels)
    return ap


def _config(args, **extra):
    keys = ("element", "alpha0", "alpha_scaling", "count", "tol", "max_iterations")
    over = {k: getattr(args, k, None) for k in keys}
    over.update(extra)
    over = {k: v for k, v in over.items() if v is not None}
    depth = getattr(args, "two_grid_levels", None)
    cfg = load_config(args.config, **over)
    if depth is not None:
        from dataclasses import replace
        cfg = replace(cfg, two_grid_levels=None if depth == "auto" else depth)
    return cfg


def _system(cfg, n):
    vel, proj = cfg.pair
    return assemble_blocks(unit_square_mesh(n), vel, proj=proj, alpha0=cfg.alpha0,
                           alpha_scaling=cfg.alpha_scaling)


def cmd_study(args, out):
    cfg = _config(args, levels=args.levels, postprocess=args.postprocess, reference=args.reference,
                  output_dir=args.output_dir, two_grid_max_levels=args.two_grid_max_levels,
                  write_vtk=False if args.no_vtk else None)
    table = run_study(cfg)
    paths = export_outputs(table, cfg)
    print(f"reference = {table.reference:.10f} ({table.reference_kind})", file=out)
    print(f"{'n':>5} {'lambda_h':>18} {'err':>11} {'lambda_tilde':>18} {'err':>11} {'time[s]':>8}", file=out)
    for r in table.rows:
        print(f"{r.n:5d} {r.lambda_h:18.10f} {r.error_lambda_h:11.3e} {r.lambda_tilde:18.10f} "
              f"{r.error_lambda_tilde:11.3e} {r.wall_time:8.2f}", file=out)
    for name, path in paths.items():
        print(f"wrote {path}", file=out)


def cmd_eig(args, out):
    cfg = _config(args)
    sys_ = _system(cfg, args.n)
    t0 = time.perf_counter()
    pairs = solve_smallest(sys_, count=cfg.count, tol=cfg.tol, max_iterations=cfg.max_iterations)
    dt = time.perf_counter() - t0
    print(f"n={args.n} element={cfg.element} velocity_dofs={sys_.n_u} pressure_dofs={sys_.n_p} "
          f"time={dt:.2f}s", file=out)
    for pr in pairs:
        spp = form_eval(sys_, "S", pr.p, pr.p)
        print(f"{pr.index + 1:3d} lambda={pr.lam:.12f} residual={pr.residual:.2e} S(p,p)={spp:.3e} "
              f"iterations={pr.iterations}", file=out)


def cmd_postprocess(args, out):
    cfg = _config(args)
    sys_ = _system(cfg, args.n)
    pair = solve_smallest(sys_, count=1, tol=cfg.tol, max_iterations=cfg.max_iterations)[0]
    depth = None if args.two_grid_levels in (None, "auto") else args.two_grid_levels
    pp = postprocess(pair, sys_, args.mode, levels=depth, max_levels=args.two_grid_max_levels or 4)
    print(f"lambda_h={pair.lam:.12f} lambda_tilde={pp.lambda_tilde:.12f} mode={pp.mode} "
          f"extra_levels={pp.extra_levels} source_residual={pp.source_residual:.2e} "
          f"source_time={pp.source_time:.2f}s", file=out)


def cmd_infsup(args, out):
    cfg = _config(args, levels=args.levels or (4, 8, 16))
    for n in cfg.levels:
        print(f"n={n} beta_A={infsup_global(_system(cfg, n)):.6f}", file=out)


COMMANDS = {"study": cmd_study, "eig": cmd_eig, "postprocess": cmd_postprocess, "infsup": cmd_infsup}


def main(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    args = build_parser().parse_args(argv)
    try:
        COMMANDS[args.command](args, out)
    except StokesLPSError as exc:
        print(f"error: {exc.category}: {exc}".replace("\n", " "), file=err)
        return 1
    except OSError as exc:
        print(f"error: io: {exc}".replace("\n", " "), file=err)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
