"""Command-line interface.

Exit codes: 0 success, 1 validation/configuration error, 2 numerical
failure (path degeneracy, training divergence).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .datasets import gen_dataset
from .errors import (
    ConfigError,
    InvalidInputError,
    PathDegeneracyError,
    TrainingDivergedError,
    UnsupportedConfigError,
)
from .experiments import (
    ExperimentConfig,
    barrier_csv,
    load_config,
    run_scaling,
    scaling_csv,
    train,
)
from .geometry import find_cluster, relu_perturbation_bound
from .linalg import unit_rows
from .losses import check_assumption1, objective
from .models import LinearSkipParams, SkipNetParams
from .paths import connect, connect_linear, solve_lterm
from .serialize import load_checkpoint, load_dataset, save_checkpoint, save_dataset

_FMT = ".10g"


def _cfg_from_args(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if getattr(args, "seed", None) is not None:
        from dataclasses import replace

        cfg = replace(cfg, seed=args.seed)
    return cfg


def _cmd_gen(args) -> int:
    cfg = _cfg_from_args(args)
    d = gen_dataset(cfg.dataset, cfg.seed)
    save_dataset(d, args.out)
    print(f"wrote {d.count} samples (n={d.n}, d_y={d.d_y}, bound_B={d.bound_B:{_FMT}}) "
          f"to {args.out}")
    return 0


def _cmd_train(args) -> int:
    cfg = _cfg_from_args(args)
    d = load_dataset(args.data)
    if d.n != cfg.n or d.d_y != cfg.d_y:
        raise ConfigError(
            f"dataset dims (n={d.n}, d_y={d.d_y}) do not match config "
            f"(n={cfg.n}, d_y={cfg.d_y})")
    m = args.m if args.m is not None else cfg.m_list[0]
    p, trace = train(args.family, d, cfg, m, seed=cfg.seed)
    save_checkpoint(p, args.out)
    print(f"family={args.family} m={m} final_loss={trace[-1]:{_FMT}} -> {args.out}")
    return 0


def _report_lines(report, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "barrier.csv").write_text(barrier_csv(report))
    lines = [
        f"lambda {report.lam:.17g}",
        f"f_star {'' if report.f_star is None else format(report.f_star, '.17g')}",
        f"max_loss {report.max_loss:.17g}",
        f"depth_epsilon {report.depth_epsilon:.17g}",
    ]
    if report.eps_m_eta is not None:
        lines.append(f"eps_m_eta {report.eps_m_eta:.17g}")
    (out_dir / "report.txt").write_text("\n".join(lines) + "\n")


def _cmd_connect(args) -> int:
    d = load_dataset(args.data)
    cfg = _cfg_from_args(args)
    pA = load_checkpoint(args.ckpt_a)
    pB = load_checkpoint(args.ckpt_b)
    if not isinstance(pA, SkipNetParams) or not isinstance(pB, SkipNetParams):
        raise InvalidInputError("connect expects two skip-network checkpoints")
    path, report = connect(pA, pB, d, cfg.loss_config(), eta=args.eta,
                           l=args.l, grid=args.grid, seed=cfg.seed,
                           budget=cfg.budget, restarts=cfg.lterm_restarts,
                           lterm_iters=cfg.lterm_iters)
    out_dir = Path(args.out)
    _report_lines(report, out_dir)
    for i, seg in enumerate(path.segments):
        save_checkpoint(seg.start, out_dir / f"joint_{i:03d}.ckpt")
    save_checkpoint(path.segments[-1].end, out_dir / f"joint_{len(path.segments):03d}.ckpt")
    print(f"segments={len(path.segments)} lambda={report.lam:{_FMT}} "
          f"max_loss={report.max_loss:{_FMT}} depth={report.depth_epsilon:{_FMT}}")
    return 0


def _cmd_connect_linear(args) -> int:
    d = load_dataset(args.data)
    cfg = _cfg_from_args(args)
    pA = load_checkpoint(args.ckpt_a)
    pB = load_checkpoint(args.ckpt_b)
    if not isinstance(pA, LinearSkipParams) or not isinstance(pB, LinearSkipParams):
        raise InvalidInputError("connect-linear expects two linear-skip checkpoints")
    path, report = connect_linear(pA, pB, d, cfg.loss_config(), grid=args.grid,
                                  seed=cfg.seed)
    _report_lines(report, Path(args.out))
    print(f"segments={len(path.segments)} lambda={report.lam:{_FMT}} "
          f"f_star={report.f_star:{_FMT}} max_loss={report.max_loss:{_FMT}} "
          f"depth={report.depth_epsilon:{_FMT}}")
    return 0


def _cmd_lterm(args) -> int:
    d = load_dataset(args.data)
    cfg = _cfg_from_args(args)
    m_solver = args.m if args.m is not None else max(args.l, 1)
    sol = solve_lterm(d, cfg.loss_config(), args.l, m_solver,
                      restarts=cfg.lterm_restarts, seed=cfg.seed,
                      iters=cfg.lterm_iters)
    if args.out:
        save_checkpoint(sol.two_layer, args.out)
    print(f"l={sol.l} e_l={sol.e_l:.17g}")
    return 0


def _cmd_cluster(args) -> int:
    p = load_checkpoint(args.ckpt)
    W1 = p.W1 if hasattr(p, "W1") else None
    if W1 is None:
        raise InvalidInputError("checkpoint has no first-layer matrix to cluster")
    w2 = p.W2 if isinstance(p, SkipNetParams) else None
    c = find_cluster(W1, args.eta, w2=w2)
    print(f"members={c.size} representative={c.representative_index} "
          f"max_angle={c.max_pairwise_angle:{_FMT}} eps={c.epsilon_m_eta:{_FMT}} "
          f"quota={c.quota} quota_met={c.quota_met}")
    if args.out:
        lines = ["index,role"]
        lines.append(f"{c.representative_index},representative")
        lines += [f"{i},member" for i in c.member_indices]
        Path(args.out).write_text("\n".join(lines) + "\n")
    return 0


def _cmd_lemma4(args) -> int:
    d = load_dataset(args.data)
    rng = np.random.default_rng(args.seed if args.seed is not None else 0)
    rows = ["pair,alpha,lhs,rhs,ok"]
    failures = 0
    for k in range(args.pairs):
        u = unit_rows(rng, 1, d.n)[0]
        v = unit_rows(rng, 1, d.n)[0]
        lhs, rhs = relu_perturbation_bound(u, v, d)
        from .linalg import angle

        a = angle(u, v)
        ok = lhs <= rhs + 1e-12
        failures += 0 if ok else 1
        rows.append(f"{k},{a:.17g},{lhs:.17g},{rhs:.17g},{int(ok)}")
    if args.out:
        Path(args.out).write_text("\n".join(rows) + "\n")
    print(f"pairs={args.pairs} violations={failures}")
    return 0 if failures == 0 else 2


def _cmd_scaling(args) -> int:
    cfg = _cfg_from_args(args)
    result, _ = run_scaling(cfg, progress=args.progress)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "scaling.csv").write_text(scaling_csv(result))
    if result.slope is None:
        print(f"slope=none ({result.note}); target={result.target_slope:{_FMT}}")
    else:
        print(f"slope={result.slope:{_FMT}} +- {result.slope_stderr:{_FMT}} "
              f"target={result.target_slope:{_FMT}} active_widths={result.active_widths}")
    return 0


def _cmd_check_assumptions(args) -> int:
    d = load_dataset(args.data)
    cfg = _cfg_from_args(args)
    p = load_checkpoint(args.ckpt)
    if not isinstance(p, SkipNetParams):
        raise InvalidInputError("check-assumptions expects a skip-network checkpoint")
    rep = check_assumption1(p, d, cfg.loss_config(), grad_tol=args.grad_tol)
    print(f"objective {rep.objective_value:{_FMT}}")
    print(f"w2_group {rep.w2_group:{_FMT}}")
    print(f"v2_group {rep.v2_group:{_FMT}}")
    print(f"w2v1_l1 {rep.w2v1_l1:{_FMT}}")
    print(f"theta_frob {rep.theta_frob:{_FMT}}")
    print(f"c_bound {rep.c_bound:{_FMT}}")
    print(f"grad_norm {rep.grad_norm:{_FMT}} (stationary={rep.stationary})")
    print(f"g_lipschitz {rep.g_lipschitz:{_FMT}}")
    print(f"radial_residual {rep.radial_residual:{_FMT}}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="skippath",
                                 description="Loss-landscape paths for skip networks")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    def add_common(p, seed=True, config=True):
        if config:
            p.add_argument("--config", help="flat key=value config file")
        if seed:
            p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("gen", help="generate a dataset file")
    add_common(p)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_gen)

    p = sub.add_parser("train", help="train one network")
    add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--family", choices=("two-layer", "skip", "linear-skip"),
                   default="skip")
    p.add_argument("--m", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("connect", help="build a path between two skip checkpoints")
    add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt-a", required=True)
    p.add_argument("--ckpt-b", required=True)
    p.add_argument("--eta", type=float, default=0.5)
    p.add_argument("--l", type=int, default=None)
    p.add_argument("--grid", type=int, default=200)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_connect)

    p = sub.add_parser("connect-linear", help="linear-case path between checkpoints")
    add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt-a", required=True)
    p.add_argument("--ckpt-b", required=True)
    p.add_argument("--grid", type=int, default=200)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_connect_linear)

    p = sub.add_parser("lterm", help="solve the l-column two-layer problem")
    add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--l", type=int, required=True)
    p.add_argument("--m", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=_cmd_lterm)

    p = sub.add_parser("cluster", help="report the densest direction cluster")
    add_common(p, config=False)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--eta", type=float, default=0.5)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=_cmd_cluster)

    p = sub.add_parser("lemma4", help="Monte-Carlo check of the perturbation bound")
    add_common(p, config=False)
    p.add_argument("--data", required=True)
    p.add_argument("--pairs", type=int, default=100)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=_cmd_lemma4)

    p = sub.add_parser("scaling", help="full width sweep with slope fit")
    add_common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--progress", action="store_true")
    p.set_defaults(fn=_cmd_scaling)

    p = sub.add_parser("check-assumptions", help="group norms and stationarity")
    add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--grad-tol", type=float, default=1e-4)
    p.set_defaults(fn=_cmd_check_assumptions)

    return ap


def cli(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
        return args.fn(args)
    except (ConfigError, InvalidInputError, UnsupportedConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (PathDegeneracyError, TrainingDivergedError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli())
