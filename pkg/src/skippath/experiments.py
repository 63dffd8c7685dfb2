"""Trainers, the width-scaling harness, experiment configuration and CSV output.

Every run is deterministic given its config: RNG streams are derived from
``(seed, m, repeat, role)`` tuples, CSV floats are written with 17
significant digits, and rows are emitted in sorted cell order, so identical
configs produce byte-identical outputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .datasets import DatasetSpec, gen_dataset
from .errors import ConfigError, InvalidInputError, TrainingDivergedError
from .losses import Dataset, LossConfig, grad, objective
from .models import (
    InnerNetParams,
    LinearSkipParams,
    Params,
    SkipNetParams,
    TwoLayerParams,
    random_inner,
    random_skip,
    random_two_layer,
)
from .paths import BarrierReport, connect

DIVERGENCE_LIMIT = 1e12

FAMILIES = ("two-layer", "skip", "linear-skip")


@dataclass(frozen=True)
class TrainerSpec:
    steps: int = 400
    finish_steps: int = 200
    lr: float = 0.05
    batch: int = 128

    def __post_init__(self):
        if self.steps < 0 or self.finish_steps < 0:
            raise ConfigError("step counts must be >= 0")
        if self.lr < 0:
            raise ConfigError("learning rate must be >= 0")
        if self.batch < 1:
            raise ConfigError("batch size must be >= 1")


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    n: int = 3
    d_y: int = 1
    d_g: int = 4
    d_o: int = 4
    inner: tuple[int, ...] = (8,)
    m_list: tuple[int, ...] = (64, 128, 256, 512, 1024)
    seeds: int = 5
    eta: float = 0.5
    kappa: float = 1e-3
    loss: str = "mse"
    huber_delta: float = 1.0
    grid: int = 200
    lterm_restarts: int = 8
    lterm_iters: int = 1500
    budget: int = 200
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    trainer: TrainerSpec = field(default_factory=TrainerSpec)
    out_dir: str = "."

    def __post_init__(self):
        if not 0.0 < self.eta < 1.0:
            raise ConfigError("eta must be in (0, 1)")
        if self.kappa < 0:
            raise ConfigError("kappa must be >= 0")
        if any(b <= a for a, b in zip(self.m_list, self.m_list[1:])) or not self.m_list:
            raise ConfigError("m_list must be non-empty and strictly increasing")
        if self.seeds < 1:
            raise ConfigError("seeds must be >= 1")
        if self.dataset.n != self.n or self.dataset.d_y != self.d_y:
            object.__setattr__(self, "dataset",
                               replace(self.dataset, n=self.n, d_y=self.d_y))

    def loss_config(self) -> LossConfig:
        return LossConfig(kind=self.loss, delta=self.huber_delta, kappa=self.kappa)


# ---------------------------------------------------------------------------
# Config files: flat "key = value" text, unknown keys rejected
# ---------------------------------------------------------------------------

_INT_KEYS = {"seed", "n", "d_y", "d_g", "d_o", "seeds", "grid", "lterm_restarts",
             "lterm_iters", "budget", "dataset.count", "dataset.teacher_width",
             "trainer.steps", "trainer.finish_steps", "trainer.batch"}
_FLOAT_KEYS = {"eta", "kappa", "huber_delta", "dataset.noise", "dataset.bound",
               "dataset.x_scale", "trainer.lr"}
_STR_KEYS = {"loss", "dataset.generator", "out_dir"}
_LIST_KEYS = {"m_list", "inner"}
KNOWN_KEYS = _INT_KEYS | _FLOAT_KEYS | _STR_KEYS | _LIST_KEYS


def parse_config(text: str) -> ExperimentConfig:
    values: dict = {}
    for ln_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {ln_no}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if key not in KNOWN_KEYS:
            raise ConfigError(f"line {ln_no}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {ln_no}: duplicate key {key!r}")
        try:
            if key in _INT_KEYS:
                values[key] = int(val)
            elif key in _FLOAT_KEYS:
                values[key] = float(val)
            elif key in _LIST_KEYS:
                values[key] = tuple(int(v.strip()) for v in val.split(",") if v.strip())
            else:
                values[key] = val
        except ValueError as exc:
            raise ConfigError(f"line {ln_no}: bad value for {key!r}: {exc}") from exc

    ds_kw = {k.split(".", 1)[1]: v for k, v in values.items() if k.startswith("dataset.")}
    tr_kw = {k.split(".", 1)[1]: v for k, v in values.items() if k.startswith("trainer.")}
    top = {k: v for k, v in values.items() if "." not in k}
    n = top.get("n", 3)
    d_y = top.get("d_y", 1)
    try:
        cfg = ExperimentConfig(
            dataset=DatasetSpec(n=n, d_y=d_y, **ds_kw),
            trainer=TrainerSpec(**tr_kw),
            **top,
        )
    except (TypeError, InvalidInputError) as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


def _init_params(family: str, cfg: ExperimentConfig, m: int,
                 rng: np.random.Generator) -> Params:
    if family == "two-layer":
        return random_two_layer(rng, n=cfg.n, m=m, d_y=cfg.d_y)
    if family == "skip":
        return random_skip(rng, n=cfg.n, m=m, d_y=cfg.d_y, d_g=cfg.d_g,
                           d_o=cfg.d_o, hidden=cfg.inner)
    if family == "linear-skip":
        d_x = cfg.n
        d_z = max(cfg.d_y, cfg.d_o)
        return LinearSkipParams(
            W=rng.normal(scale=1.0 / math.sqrt(d_x), size=(cfg.d_y, d_x)),
            V=rng.normal(scale=1.0 / math.sqrt(d_z), size=(d_x, d_z)),
            theta=random_inner(rng, d_x, cfg.inner, d_z),
        )
    raise ConfigError(f"unknown family {family!r}; expected one of {FAMILIES}")


def _apply_step(p: Params, g: Params, lr: float) -> Params:
    if isinstance(p, TwoLayerParams):
        return TwoLayerParams(p.W1 - lr * g.W1, p.W2 - lr * g.W2)
    if isinstance(p, SkipNetParams):
        return SkipNetParams(
            W1=p.W1 - lr * g.W1, W2=p.W2 - lr * g.W2, V2=p.V2 - lr * g.V2,
            V1=p.V1 - lr * g.V1,
            theta=InnerNetParams(tuple(L - lr * gL for L, gL in
                                       zip(p.theta.layers, g.theta.layers))),
        )
    if isinstance(p, LinearSkipParams):
        return LinearSkipParams(W=p.W - lr * g.W, V=p.V - lr * g.V, theta=p.theta)
    raise InvalidInputError(f"unknown parameter family {type(p).__name__}")


def _grad_sq_norm(g: Params) -> float:
    from .models import flatten_params

    v = flatten_params(g)
    return float(v @ v)


def train(family: str, d: Dataset, cfg: ExperimentConfig, m: int,
          seed: int) -> tuple[Params, list[float]]:
    """Minibatch SGD followed by a monotone line-searched finishing phase.

    Returns the final parameters and the recorded full-batch loss trace.
    Deterministic per seed; a zero learning rate leaves the initial
    parameters untouched.
    """
    spec = cfg.trainer
    loss_cfg = cfg.loss_config()
    rng = np.random.default_rng([seed, m, 1])
    p = _init_params(family, cfg, m, rng)
    trace = [objective(p, d, loss_cfg)]
    if spec.lr == 0.0:
        return p, trace

    batch = min(spec.batch, d.count)
    for step in range(spec.steps):
        idx = rng.integers(0, d.count, size=batch)
        mini = Dataset(X=d.X[idx], Y=d.Y[idx])
        with np.errstate(over="ignore", invalid="ignore"):
            try:
                g = grad(p, mini, loss_cfg)
                lr = spec.lr / (1.0 + 2.0 * step / max(spec.steps, 1))
                p = _apply_step(p, g, lr)
            except InvalidInputError as exc:
                raise TrainingDivergedError(
                    f"non-finite parameters at SGD step {step}") from exc
        if step % 50 == 0:
            f = objective(p, d, loss_cfg)
            trace.append(f)
            if not math.isfinite(f) or f > DIVERGENCE_LIMIT:
                raise TrainingDivergedError(f"loss {f} at SGD step {step}")

    f_cur = objective(p, d, loss_cfg)
    lr = spec.lr
    for _ in range(spec.finish_steps):
        g = grad(p, d, loss_cfg)
        gn2 = _grad_sq_norm(g)
        if gn2 == 0.0:
            break
        accepted = False
        while lr > 1e-18:
            cand = _apply_step(p, g, lr)
            f_new = objective(cand, d, loss_cfg)
            if f_new <= f_cur - 1e-4 * lr * gn2:
                accepted = True
                break
            lr *= 0.5
        if not accepted:
            break
        rel = (f_cur - f_new) / max(abs(f_cur), 1e-30)
        p, f_cur = cand, f_new
        trace.append(f_cur)
        lr = min(lr * 2.0, 1e2)
        if rel < 1e-12:
            break
    if not math.isfinite(f_cur) or f_cur > DIVERGENCE_LIMIT:
        raise TrainingDivergedError(f"final loss {f_cur}")
    return p, trace


# ---------------------------------------------------------------------------
# Width-scaling harness
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScalingRow:
    m: int
    seed: int
    lam: float
    e_l: float
    max_loss: float
    excess: float  # max_loss - max(lam, e_l), sign kept
    eps_pred: float  # m^((eta-1)/n)


@dataclass(frozen=True)
class ScalingResult:
    rows: tuple[ScalingRow, ...]
    eta: float
    n: int
    target_slope: float
    slope: float | None
    intercept: float | None
    slope_stderr: float | None
    active_widths: int
    bound_active: bool
    note: str

    def medians(self) -> dict[int, float]:
        by_m: dict[int, list[float]] = {}
        for r in self.rows:
            by_m.setdefault(r.m, []).append(max(0.0, r.excess))
        return {m: float(np.median(v)) for m, v in sorted(by_m.items())}


def fit_loglog(ms: np.ndarray, ys: np.ndarray) -> tuple[float, float, float]:
    """Least-squares slope/intercept of log(y) on log(m), plus slope stderr."""
    lx = np.log(ms)
    ly = np.log(ys)
    A = np.vstack([lx, np.ones_like(lx)]).T
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    slope, intercept = float(coef[0]), float(coef[1])
    resid = ly - A @ coef
    dof = max(len(ms) - 2, 1)
    s2 = float(resid @ resid) / dof
    denom = float(((lx - lx.mean()) ** 2).sum())
    stderr = math.sqrt(s2 / denom) if denom > 0 else float("inf")
    return slope, intercept, stderr


MEDIAN_EXCESS_FLOOR = 1e-9


def run_scaling(cfg: ExperimentConfig,
                progress: bool = False) -> tuple[ScalingResult, list[BarrierReport]]:
    """Train endpoint pairs over the width sweep, connect them, and fit the
    depth-excess scaling exponent."""
    if len(cfg.m_list) < 3:
        raise ConfigError("m_list needs at least 3 widths")
    if cfg.seeds < 3:
        raise ConfigError("need at least 3 seeds")
    loss_cfg = cfg.loss_config()
    d = gen_dataset(cfg.dataset, cfg.seed)
    rows: list[ScalingRow] = []
    reports: list[BarrierReport] = []
    for m in cfg.m_list:
        for rep in range(cfg.seeds):
            pA, _ = train("skip", d, cfg, m, seed=int(np.random.default_rng(
                [cfg.seed, m, rep, 0]).integers(1 << 31)))
            pB, _ = train("skip", d, cfg, m, seed=int(np.random.default_rng(
                [cfg.seed, m, rep, 1]).integers(1 << 31)))
            _, report = connect(pA, pB, d, loss_cfg, eta=cfg.eta, grid=cfg.grid,
                                seed=cfg.seed + 7919 * m + rep, budget=cfg.budget,
                                restarts=cfg.lterm_restarts,
                                lterm_iters=cfg.lterm_iters)
            assert report.f_star is not None
            row = ScalingRow(
                m=m, seed=rep, lam=report.lam, e_l=report.f_star,
                max_loss=report.max_loss, excess=report.excess,
                eps_pred=float(m ** ((cfg.eta - 1.0) / cfg.n)),
            )
            rows.append(row)
            reports.append(report)
            if progress:
                print(f"m={m} rep={rep} lambda={row.lam:.6g} e_l={row.e_l:.6g} "
                      f"excess={row.excess:.3g}")

    by_m: dict[int, list[float]] = {}
    for r in rows:
        by_m.setdefault(r.m, []).append(max(0.0, r.excess))
    med = {m: float(np.median(v)) for m, v in sorted(by_m.items())}
    active = {m: v for m, v in med.items() if v > MEDIAN_EXCESS_FLOOR}
    target = (cfg.eta - 1.0) / cfg.n
    if len(active) == 0:
        result = ScalingResult(rows=tuple(rows), eta=cfg.eta, n=cfg.n,
                               target_slope=target, slope=None, intercept=None,
                               slope_stderr=None, active_widths=0,
                               bound_active=False, note="bound never active")
    elif len(active) < 2:
        result = ScalingResult(rows=tuple(rows), eta=cfg.eta, n=cfg.n,
                               target_slope=target, slope=None, intercept=None,
                               slope_stderr=None, active_widths=len(active),
                               bound_active=True,
                               note="too few active widths for a slope fit")
    else:
        ms = np.array(sorted(active))
        ys = np.array([active[m] for m in sorted(active)])
        slope, intercept, stderr = fit_loglog(ms, ys)
        result = ScalingResult(rows=tuple(rows), eta=cfg.eta, n=cfg.n,
                               target_slope=target, slope=slope,
                               intercept=intercept, slope_stderr=stderr,
                               active_widths=len(active), bound_active=True,
                               note="ok")
    return result, reports


# ---------------------------------------------------------------------------
# CSV output
# ---------------------------------------------------------------------------


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def barrier_csv(report: BarrierReport) -> str:
    lines = ["t,loss,segment,rank_ok"]
    for s in report.samples:
        lines.append(f"{_fmt(s.t)},{_fmt(s.loss)},{s.segment},{int(s.rank_ok)}")
    return "\n".join(lines) + "\n"


def scaling_csv(result: ScalingResult) -> str:
    lines = ["m,seed,lambda,e_l,max_loss,excess,eps_pred"]
    for r in sorted(result.rows, key=lambda r: (r.m, r.seed)):
        lines.append(
            f"{r.m},{r.seed},{_fmt(r.lam)},{_fmt(r.e_l)},{_fmt(r.max_loss)},"
            f"{_fmt(r.excess)},{_fmt(r.eps_pred)}"
        )
    if result.slope is not None:
        lines.append(
            f"# slope={_fmt(result.slope)} intercept={_fmt(result.intercept)} "
            f"stderr={_fmt(result.slope_stderr)} target={_fmt(result.target_slope)} "
            f"active={result.active_widths}"
        )
    else:
        lines.append(f"# slope=none target={_fmt(result.target_slope)} note={result.note}")
    return "\n".join(lines) + "\n"
