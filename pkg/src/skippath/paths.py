"""Constructive low-loss paths in parameter space and barrier measurement.

A path between two trained skip networks is built in three stages per
endpoint and the two halves are concatenated through a shared anchor:

  1. norm reduction: exact function-preserving rebalancing of the layer
     scalings followed by monotone line-searched descent on (W2, V1);
  2. merge: near-parallel hidden units (a geometry cluster) fold their
     W2/V2 output columns into the representative column while V1 tracks
     the pseudoinverse so W2(t) V1(t) stays constant;
  3. rewire + final layer: the freed rows move to the sparse two-layer
     solution (exactly loss-flat, their output columns are zero), the
     lifted final layer [W2, W2 V1] travels a straight line to [W2*, 0]
     (convex, so bounded by its endpoints), V2 and theta ramp to zero at
     constant loss, and a loss-flat permutation routes the active units
     into canonical positions so both halves meet at the identical point
     (W1*, W2*, 0, 0, 0).

The linear warm-up model gets the same treatment in one shot: a straight
line in the lifted space [W, WV] through the ridge-free least-squares
optimum, with V recovered by pseudoinverse.

Rank degeneracy of W2(t) along pseudoinverse-recovered stretches is
detected on a scan grid and handled by retrying with slightly perturbed
interpolation endpoints; what was perturbed is recorded in the segment
metadata.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from .errors import InvalidInputError, PathDegeneracyError, UnsupportedConfigError
from .geometry import ClusterSet, SparsifyPlan, build_sparsify_plan, find_cluster
from .linalg import pinv, smallest_singular_ratio, unit_rows
from .losses import (
    Dataset,
    LossConfig,
    grad_skip,
    grad_two_layer,
    objective,
    objective_unregularized,
)
from .models import (
    InnerNetParams,
    LinearSkipParams,
    SkipNetParams,
    TwoLayerParams,
    flatten_params,
    lerp_skip,
    params_distance,
)

RANK_RATIO_FLOOR = 1e-10
PERTURB_SCALE = 1e-7
PERTURB_RETRIES = 5


# ---------------------------------------------------------------------------
# Path containers
# ---------------------------------------------------------------------------


@dataclass
class PathSegment:
    """One continuously parameterized stretch of a path.

    ``param_at`` maps local t in [0, 1] to a parameter point;
    ``param_at(0)`` equals ``start`` and ``param_at(1)`` equals ``end``
    exactly. ``rank_check`` reports whether pseudoinverse recovery was
    well-posed at a given t (always True for segments that do not use it).
    """

    kind: str  # descent | merge | rewire | final-layer-linear | reverse
    start: Any
    end: Any
    param_at: Callable[[float], Any]
    metadata: dict = field(default_factory=dict)
    rank_check: Callable[[float], bool] | None = None

    def rank_ok(self, t: float) -> bool:
        return True if self.rank_check is None else bool(self.rank_check(t))

    def reversed(self) -> "PathSegment":
        fn = self.param_at
        rc = self.rank_check
        return PathSegment(
            kind="reverse",
            start=self.end,
            end=self.start,
            param_at=lambda t: fn(1.0 - t),
            metadata={"orig_kind": self.kind, **self.metadata},
            rank_check=None if rc is None else (lambda t: rc(1.0 - t)),
        )


@dataclass
class ParamPath:
    """Concatenation of segments, each given equal t-measure in [0, 1]."""

    segments: list[PathSegment]

    def __post_init__(self):
        if not self.segments:
            raise InvalidInputError("a path needs at least one segment")

    @property
    def start(self):
        return self.segments[0].start

    @property
    def end(self):
        return self.segments[-1].end

    def locate(self, t: float) -> tuple[int, float]:
        if not 0.0 <= t <= 1.0:
            raise InvalidInputError("path parameter must lie in [0, 1]")
        k = len(self.segments)
        if t >= 1.0:
            return k - 1, 1.0
        scaled = t * k
        i = int(scaled)
        return i, scaled - i

    def at(self, t: float):
        i, lt = self.locate(t)
        return self.segments[i].param_at(lt)

    def kind_at(self, t: float) -> str:
        return self.segments[self.locate(t)[0]].kind

    def rank_ok_at(self, t: float) -> bool:
        i, lt = self.locate(t)
        return self.segments[i].rank_ok(lt)

    def joint_ts(self) -> list[float]:
        k = len(self.segments)
        return [i / k for i in range(k + 1)]

    def reversed(self) -> "ParamPath":
        return ParamPath([s.reversed() for s in reversed(self.segments)])


def verify_continuity(path: ParamPath) -> float:
    """Largest entrywise mismatch across all interior segment joints."""
    worst = 0.0
    for a, b in zip(path.segments[:-1], path.segments[1:]):
        va = flatten_params(a.end)
        vb = flatten_params(b.start)
        worst = max(worst, float(np.max(np.abs(va - vb))))
        # the parameterization must also hit the declared endpoints
        worst = max(worst, float(np.max(np.abs(flatten_params(a.param_at(1.0)) - va))))
        worst = max(worst, float(np.max(np.abs(flatten_params(b.param_at(0.0)) - vb))))
    return worst


def constant_segment(p, kind: str = "rewire") -> PathSegment:
    return PathSegment(kind=kind, start=p, end=p, param_at=lambda t: p)


def lerp_segment(a, b, kind: str, lerp_fn) -> PathSegment:
    return PathSegment(kind=kind, start=a, end=b, param_at=lambda t: lerp_fn(a, b, t))


def polyline_segment(points: Sequence, kind: str, lerp_fn) -> PathSegment:
    """Piecewise-linear path through the given waypoints as one segment."""
    pts = list(points)
    if len(pts) < 2:
        return constant_segment(pts[0], kind)
    k = len(pts) - 1

    def param_at(t: float):
        if t >= 1.0:
            return pts[-1]
        if t <= 0.0:
            return pts[0]
        scaled = t * k
        i = int(scaled)
        return lerp_fn(pts[i], pts[i + 1], scaled - i)

    return PathSegment(kind=kind, start=pts[0], end=pts[-1], param_at=param_at,
                       metadata={"waypoints": len(pts)})


# ---------------------------------------------------------------------------
# Barrier reports
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PathSample:
    t: float
    loss: float
    segment: str
    rank_ok: bool


@dataclass(frozen=True)
class BarrierReport:
    lam: float  # max of the endpoint objectives
    f_star: float | None  # reference level (e(l) or the linear optimum)
    samples: tuple[PathSample, ...]
    max_loss: float
    depth_epsilon: float
    eps_m_eta: float | None = None  # m^((eta-1)/n) for the instance
    predicted_bound: float | None = None  # c * eps_m_eta, c supplied by caller
    m: int | None = None
    n: int | None = None
    eta: float | None = None
    notes: dict = field(default_factory=dict)

    @property
    def reference_level(self) -> float:
        return self.lam if self.f_star is None else max(self.lam, self.f_star)

    @property
    def excess(self) -> float:
        """Signed gap max_loss - max(lambda, f_star); depth is its positive part."""
        return self.max_loss - self.reference_level


def measure_depth_fn(eval_fn: Callable[[Any], float], path: ParamPath, grid: int,
                     f_star: float | None = None, bound_constant: float | None = None,
                     m: int | None = None, n: int | None = None,
                     eta: float | None = None, notes: dict | None = None) -> BarrierReport:
    """Sample eval_fn along the path (uniform grid plus all segment joints)."""
    if grid < 2:
        raise InvalidInputError("grid must be >= 2")
    ts = sorted(set(np.linspace(0.0, 1.0, grid).tolist()) | set(path.joint_ts()))
    samples = []
    for t in ts:
        p = path.at(t)
        samples.append(PathSample(t=float(t), loss=float(eval_fn(p)),
                                  segment=path.kind_at(t), rank_ok=path.rank_ok_at(t)))
    max_loss = max(s.loss for s in samples)
    lam = max(samples[0].loss, samples[-1].loss)
    ref = lam if f_star is None else max(lam, f_star)
    eps = None
    if m is not None and n is not None and eta is not None:
        eps = float(m ** ((eta - 1.0) / n))
    return BarrierReport(
        lam=lam,
        f_star=f_star,
        samples=tuple(samples),
        max_loss=max_loss,
        depth_epsilon=max(0.0, max_loss - ref),
        eps_m_eta=eps,
        predicted_bound=None if (eps is None or bound_constant is None) else bound_constant * eps,
        m=m,
        n=n,
        eta=eta,
        notes=notes or {},
    )


def measure_depth(path: ParamPath, d: Dataset, cfg: LossConfig, grid: int,
                  f_star: float | None = None, **kw) -> BarrierReport:
    return measure_depth_fn(lambda p: objective(p, d, cfg), path, grid, f_star, **kw)


# ---------------------------------------------------------------------------
# Step 1: function-preserving rebalance + monotone descent on (W2, V1)
# ---------------------------------------------------------------------------


def _rebalance_factors(p: SkipNetParams) -> tuple[np.ndarray, float, np.ndarray]:
    """Row scales r, V2<->V1 balance s*, per-layer theta balance factors."""
    r = np.linalg.norm(p.W1, axis=1)
    a_v2 = float(np.abs(p.V2).sum(axis=0) @ r)
    b_w2v1 = float(np.abs(p.W2 @ p.V1).sum())
    s_star = math.sqrt(b_w2v1 / a_v2) if (a_v2 > 0 and b_w2v1 > 0) else 1.0
    norms = np.array([np.linalg.norm(L) for L in p.theta.layers])
    t_star = np.ones(len(norms))
    nz = norms > 0
    if nz.sum() >= 2:
        gmean = math.exp(np.log(norms[nz]).mean())
        t_star[nz] = gmean / norms[nz]
    return r, s_star, t_star


def _rebalanced_at(p: SkipNetParams, r: np.ndarray, s_star: float,
                   t_star: np.ndarray, tau: float) -> SkipNetParams:
    d = r**tau  # W1 row i is divided by r_i^tau; at tau=1 rows are unit
    s = s_star**tau
    return SkipNetParams(
        W1=p.W1 / d[:, None],
        W2=p.W2 * d[None, :],
        V2=s * (p.V2 * d[None, :]),
        V1=(p.V1 / d[:, None]) / s,
        theta=InnerNetParams(tuple((t**tau) * L for t, L in zip(t_star, p.theta.layers))),
    )


def rebalance_segment(p: SkipNetParams) -> PathSegment:
    """Exact function-preserving reparameterization: unit W1 rows, balanced
    theta layers, balanced V2-group vs ||W2 V1||_1. The objective is
    non-increasing along the whole stretch (the loss term is constant)."""
    r = np.linalg.norm(p.W1, axis=1)
    if np.any(r < 1e-12):
        raise InvalidInputError(
            "rebalance requires nonzero W1 rows; retire dead units first"
        )
    r, s_star, t_star = _rebalance_factors(p)
    end = _rebalanced_at(p, r, s_star, t_star, 1.0)
    seg = PathSegment(
        kind="descent",
        start=p,
        end=end,
        param_at=lambda t: end if t >= 1.0 else (p if t <= 0.0 else _rebalanced_at(p, r, s_star, t_star, t)),
        metadata={"stage": "rebalance", "s_star": s_star},
    )
    return seg


def descent_w2_v1(p: SkipNetParams, d: Dataset, cfg: LossConfig, budget: int = 200,
                  rel_tol: float = 1e-10) -> list[SkipNetParams]:
    """Backtracking-line-search descent over (W2, V1) with W1, V2, theta
    fixed. Returns the recorded iterates; the objective never increases
    from one to the next."""
    pts = [p]
    cur = p
    f_cur = objective(cur, d, cfg)
    if not math.isfinite(f_cur):
        raise InvalidInputError("objective is not finite at the starting point")
    lr = 0.1
    for _ in range(budget):
        g = grad_skip(cur, d, cfg)
        gnorm2 = float(np.sum(g.W2**2) + np.sum(g.V1**2))
        if gnorm2 == 0.0:
            break
        accepted = False
        while lr > 1e-16:
            cand = cur.replace(W2=cur.W2 - lr * g.W2, V1=cur.V1 - lr * g.V1)
            f_new = objective(cand, d, cfg)
            if f_new <= f_cur - 1e-4 * lr * gnorm2:
                accepted = True
                break
            lr *= 0.5
        if not accepted:
            break
        rel = (f_cur - f_new) / max(abs(f_cur), 1e-30)
        cur, f_cur = cand, f_new
        pts.append(cur)
        lr = min(lr * 2.0, 1e3)
        if rel < rel_tol:
            break
    return pts


def step1_norm_reduction(p: SkipNetParams, d: Dataset, cfg: LossConfig,
                         budget: int = 200) -> tuple[SkipNetParams, list[PathSegment]]:
    """Rebalance scalings to unit W1 rows, then descend on (W2, V1).

    Returns the reached point and the recorded segments; the objective is
    non-increasing along both.
    """
    if not math.isfinite(objective(p, d, cfg)):
        raise InvalidInputError("objective is not finite at the starting point")
    segments: list[PathSegment] = []
    cur = p

    # retire dead units first. A zero W1 row silences its hidden activation
    # but its W2 column still couples to the matching V1 row through
    # W2 V1 g(...), so the column is zeroed under pseudoinverse tracking of
    # V1 (holding W2 V1 fixed, hence the function); afterwards the row can
    # rise to a unit vector for free.
    r = np.linalg.norm(cur.W1, axis=1)
    dead = np.flatnonzero(r < 1e-12)
    if dead.size:
        W2z = cur.W2.copy()
        V2z = cur.V2.copy()
        W2z[:, dead] = 0.0
        V2z[:, dead] = 0.0
        seg_clear = _pinv_tracking_segment(
            "descent", cur, W2z, V2z, zb_end=None, theta_end=None,
            metadata={"stage": "retire-dead-units"})
        if _scan_rank(seg_clear) > 0:
            raise PathDegeneracyError(
                "rank deficiency while retiring dead units")
        segments.append(seg_clear)
        cur = seg_clear.end
        W1u = cur.W1.copy()
        W1u[dead] = 0.0
        W1u[dead, 0] = 1.0
        revived = cur.replace(W1=W1u)
        segments.append(lerp_segment(cur, revived, "rewire", lerp_skip))
        cur = revived

    seg = rebalance_segment(cur)
    segments.append(seg)
    cur = seg.end

    pts = descent_w2_v1(cur, d, cfg, budget=budget)
    if len(pts) > 1:
        segments.append(polyline_segment(pts, "descent", lerp_skip))
        cur = pts[-1]
    return cur, segments


# ---------------------------------------------------------------------------
# Step 2: merge a cluster of near-parallel units
# ---------------------------------------------------------------------------


_PROJ_SPLIT = 0.2  # fraction of a pinv-tracked segment spent projecting V1


def _pinv_tracking_segment(kind: str, start: SkipNetParams, w2_end: np.ndarray,
                           v2_end: np.ndarray, zb_end: np.ndarray | None,
                           theta_end: InnerNetParams | None,
                           metadata: dict) -> PathSegment:
    """Segment interpolating W2 (and optionally V2, the lifted block Z_b and
    theta) linearly while V1 = pinv(W2(t)) Z_b(t).

    The pseudoinverse recovery lives in the row space of W2(t), so the
    segment opens with a projection phase V1 -> W2+ W2 V1. The network
    only sees the product W2 V1, and W2 W2+ W2 = W2, so that phase moves
    the parameters at exactly constant objective.
    """
    W2_0 = start.W2
    V2_0 = start.V2
    Zb_0 = start.W2 @ start.V1
    Zb_1 = Zb_0 if zb_end is None else zb_end
    th_0 = start.theta
    th_1 = th_0 if theta_end is None else theta_end
    V1_proj = pinv(W2_0) @ Zb_0

    def w2_at(s: float) -> np.ndarray:
        return (1.0 - s) * W2_0 + s * w2_end

    def track_at(s: float) -> SkipNetParams:
        W2t = w2_at(s)
        Zbt = (1.0 - s) * Zb_0 + s * Zb_1
        return SkipNetParams(
            W1=start.W1,
            W2=W2t,
            V2=(1.0 - s) * V2_0 + s * v2_end,
            V1=pinv(W2t) @ Zbt,
            theta=InnerNetParams(tuple((1.0 - s) * La + s * Lb
                                       for La, Lb in zip(th_0.layers, th_1.layers))),
        )

    end = track_at(1.0)

    def param_at(t: float) -> SkipNetParams:
        if t <= 0.0:
            return start
        if t >= 1.0:
            return end
        if t < _PROJ_SPLIT:
            s = t / _PROJ_SPLIT
            return start.replace(V1=(1.0 - s) * start.V1 + s * V1_proj)
        return track_at((t - _PROJ_SPLIT) / (1.0 - _PROJ_SPLIT))

    def rank_check(t: float) -> bool:
        s = 0.0 if t < _PROJ_SPLIT else (t - _PROJ_SPLIT) / (1.0 - _PROJ_SPLIT)
        return smallest_singular_ratio(w2_at(min(s, 1.0))) >= RANK_RATIO_FLOOR

    return PathSegment(
        kind=kind,
        start=start,
        end=end,
        param_at=param_at,
        metadata=metadata,
        rank_check=rank_check,
    )


def _scan_rank(seg: PathSegment, samples: int = 101) -> int:
    return sum(0 if seg.rank_ok(t) else 1 for t in np.linspace(0.0, 1.0, samples))


def step2_merge_path(p: SkipNetParams, plan: SparsifyPlan, d: Dataset, cfg: LossConfig,
                     rng: np.random.Generator | None = None,
                     scan_samples: int = 101) -> tuple[SkipNetParams, PathSegment]:
    """Fold the cluster's output columns into the representative.

    W2 and V2 interpolate linearly to the merged matrices while
    V1(t) = pinv(W2(t)) W2(0) V1(0) keeps the product W2 V1 constant
    wherever W2(t) has full row rank.
    """
    members = list(plan.cluster.member_indices)
    if max(members + [plan.cluster.representative_index]) >= p.m:
        raise InvalidInputError("plan does not match this network's width")
    rng = rng if rng is not None else np.random.default_rng(0)
    w2_end = plan.w2_merged
    v2_end = plan.v2_merged
    for attempt in range(PERTURB_RETRIES + 1):
        seg = _pinv_tracking_segment(
            "merge", p, w2_end, v2_end, zb_end=None, theta_end=None,
            metadata={"cluster_size": plan.cluster.size, "perturb_attempts": attempt},
        )
        if _scan_rank(seg, scan_samples) == 0:
            return seg.end, seg
        # rank dropped somewhere: nudge the merged endpoint, keeping the
        # member columns exactly zero so step 3 still sees freed positions
        w2_end = plan.w2_merged.copy()
        v2_end = plan.v2_merged.copy()
        noise = rng.normal(scale=PERTURB_SCALE, size=w2_end.shape)
        noise[:, members] = 0.0
        w2_end = w2_end + noise
    raise PathDegeneracyError(
        "W2(t) stayed rank deficient along the merge path after retries"
    )


# ---------------------------------------------------------------------------
# Step 3: rewire freed rows, drive the final layer to the sparse solution
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LTermSolution:
    """Approximate minimizer of the l-column two-layer objective, embedded
    at full width: active units occupy rows/columns 0..l-1, the remaining
    rows are unit fillers with zero output columns."""

    W1_star: np.ndarray  # (m, n), unit rows
    W2_star: np.ndarray  # (d_y, m), nonzero only in the first l columns
    e_l: float
    l: int

    def __post_init__(self):
        W1 = np.asarray(self.W1_star, dtype=np.float64).copy()
        W2 = np.asarray(self.W2_star, dtype=np.float64).copy()
        W1.flags.writeable = False
        W2.flags.writeable = False
        object.__setattr__(self, "W1_star", W1)
        object.__setattr__(self, "W2_star", W2)
        rn = np.linalg.norm(self.W1_star, axis=1)
        if np.any(np.abs(rn - 1.0) > 1e-9):
            raise InvalidInputError("W1_star rows must be unit norm")
        nz = np.flatnonzero(np.abs(self.W2_star).sum(axis=0) > 0)
        if nz.size > self.l:
            raise InvalidInputError("W2_star exceeds its sparsity budget")

    @property
    def two_layer(self) -> TwoLayerParams:
        return TwoLayerParams(self.W1_star, self.W2_star)


def _active_rows(sol: LTermSolution) -> np.ndarray:
    return sol.W1_star[: sol.l]


def _replace_rows(W1: np.ndarray, rows: Sequence[int], values: np.ndarray) -> np.ndarray:
    out = W1.copy()
    out[list(rows)] = values
    return out


def _transfer_column(W2: np.ndarray, src: int, dst: int) -> np.ndarray:
    out = W2.copy()
    out[:, dst] = out[:, dst] + out[:, src]
    out[:, src] = 0.0
    return out


def step3_rewire_and_descend(p: SkipNetParams, target: LTermSolution, anchor: SkipNetParams,
                             d: Dataset, cfg: LossConfig,
                             rng: np.random.Generator | None = None,
                             scan_samples: int = 101) -> tuple[SkipNetParams, list[PathSegment]]:
    """From a merged point to the canonical anchor (W1*, W2*, 0, 0, 0).

    Requires at least ``target.l`` positions whose W2 and V2 columns are
    both exactly zero (produced by the merge step).
    """
    l = target.l
    zero_w2 = np.abs(p.W2).sum(axis=0) == 0.0
    zero_v2 = np.abs(p.V2).sum(axis=0) == 0.0
    freed = np.flatnonzero(zero_w2 & zero_v2)
    if freed.size < l:
        raise InvalidInputError(
            f"need {l} freed positions but only {freed.size} columns are zeroed"
        )
    if p.m < 2 * l + 1:
        raise InvalidInputError("width must exceed 2l for the canonical routing")
    P = [int(i) for i in freed[:l]]
    segments: list[PathSegment] = []

    # (a) rewire the freed rows to the target directions: their output
    # columns are zero in both W2 and V2, so the loss is exactly constant
    p3a = p.replace(W1=_replace_rows(p.W1, P, _active_rows(target)))
    seg_a = lerp_segment(p, p3a, "rewire", lerp_skip)
    seg_a.metadata["stage"] = "rewire-freed-rows"
    segments.append(seg_a)

    # (b1) lifted final-layer line [W2, W2 V1] -> [W2*, 0]; the target
    # columns are placed on the freed positions so only rewired rows feed them
    W2_placed = np.zeros_like(p.W2)
    for i, pos in enumerate(P):
        W2_placed[:, pos] = target.W2_star[:, i]
    rng = rng if rng is not None else np.random.default_rng(0)
    w2_end = W2_placed
    for attempt in range(PERTURB_RETRIES + 1):
        seg_b1 = _pinv_tracking_segment(
            "final-layer-linear", p3a, w2_end, p3a.V2,
            zb_end=np.zeros((p.d_y, p.d_o)), theta_end=None,
            metadata={"stage": "lifted-line", "perturb_attempts": attempt},
        )
        if _scan_rank(seg_b1, scan_samples) == 0:
            break
        w2_end = W2_placed.copy()
        noise = rng.normal(scale=PERTURB_SCALE, size=(p.d_y, l))
        w2_end[:, P] = w2_end[:, P] + noise
    else:
        raise PathDegeneracyError(
            "W2(t) stayed rank deficient along the final-layer line after retries"
        )
    segments.append(seg_b1)
    p3b1 = seg_b1.end

    # (b2) ramp V2 and theta to zero; V1 is already zero so the network
    # output no longer depends on them and only the regularizer changes
    p3b2 = SkipNetParams(
        W1=p3b1.W1, W2=p3b1.W2, V2=np.zeros_like(p3b1.V2),
        V1=np.zeros_like(p3b1.V1), theta=InnerNetParams.zeros_like(p3b1.theta),
    )
    seg_b2 = lerp_segment(p3b1, p3b2, "descent", lerp_skip)
    seg_b2.metadata["stage"] = "ramp-down"
    segments.append(seg_b2)

    # (c) loss-flat canonicalization: route active columns to positions
    # 0..l-1 and set every masked row to the anchor's row, so both halves
    # of a connection land on the identical point
    waypoints = [p3b2]
    cur = p3b2

    def push(q: SkipNetParams):
        nonlocal cur
        waypoints.append(q)
        cur = q

    masked = [i for i in range(p.m) if i not in P]
    W1_set = _replace_rows(cur.W1, masked, anchor.W1[masked])
    push(cur.replace(W1=W1_set))

    pos_of_unit = {i: P[i] for i in range(l)}
    unit_at = {P[i]: i for i in range(l)}

    def occupied(idx: int) -> bool:
        return idx in unit_at

    def move_col(src: int, dst: int):
        # flat: the W1 rows at src and dst hold the same direction
        push(cur.replace(W2=_transfer_column(cur.W2, src, dst)))
        u = unit_at.pop(src)
        unit_at[dst] = u
        pos_of_unit[u] = dst
        # the vacated row is masked now; park it on the anchor direction so
        # later transfers into this position stay flat
        if not np.array_equal(cur.W1[src], anchor.W1[src]):
            push(cur.replace(W1=_replace_rows(cur.W1, [src], anchor.W1[[src]])))

    scratch_pool = [i for i in range(p.m - 1, l - 1, -1) if i not in P]
    for i in range(l):
        if pos_of_unit[i] == i:
            continue
        if occupied(i):
            # some unit squats on canonical position i: copy its direction
            # onto a masked scratch row and move its column there (move_col
            # then parks the vacated row on the anchor direction)
            s = next(idx for idx in scratch_pool if not occupied(idx))
            push(cur.replace(W1=_replace_rows(cur.W1, [s], cur.W1[[i]])))
            move_col(i, s)
        # row i now carries the anchor direction, which for i < l is the
        # same target direction the source row holds: the transfer is flat
        move_col(pos_of_unit[i], i)

    # retired positions picked up non-anchor rows along the way; sweep them back
    final_W1 = anchor.W1
    if not np.array_equal(cur.W1, final_W1):
        push(cur.replace(W1=final_W1.copy()))
    seg_c = polyline_segment(waypoints, "rewire", lerp_skip)
    seg_c.metadata["stage"] = "canonicalize"
    segments.append(seg_c)
    cur = waypoints[-1]

    # perturbation fallback can leave the final-layer values slightly off
    # the anchor; snap the gap with one more (tiny) linear stretch
    if params_distance(cur, anchor) > 0.0:
        segments.append(lerp_segment(cur, anchor, "final-layer-linear", lerp_skip))
        cur = anchor
    return cur, segments


# ---------------------------------------------------------------------------
# The l-term two-layer solver
# ---------------------------------------------------------------------------


def _project_rows(W1: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(W1, axis=1, keepdims=True)
    n = np.where(n > 0, n, 1.0)
    return W1 / n


def _descend_two_layer(W1: np.ndarray, W2: np.ndarray, d: Dataset, cfg: LossConfig,
                       iters: int, rel_tol: float = 1e-12) -> tuple[np.ndarray, np.ndarray, float]:
    p = TwoLayerParams(_project_rows(W1), W2)
    f_cur = objective(p, d, cfg)
    lr = 0.1
    for _ in range(iters):
        g = grad_two_layer(p, d, cfg)
        gnorm2 = float(np.sum(g.W1**2) + np.sum(g.W2**2))
        if gnorm2 == 0.0:
            break
        accepted = False
        while lr > 1e-16:
            cand = TwoLayerParams(_project_rows(p.W1 - lr * g.W1), p.W2 - lr * g.W2)
            f_new = objective(cand, d, cfg)
            if f_new < f_cur:
                accepted = True
                break
            lr *= 0.5
        if not accepted:
            break
        rel = (f_cur - f_new) / max(abs(f_cur), 1e-30)
        p, f_cur = cand, f_new
        lr = min(lr * 2.0, 1e3)
        if rel < rel_tol:
            break
    return p.W1, p.W2, f_cur


def solve_lterm(d: Dataset, cfg: LossConfig, l: int, m_solver: int,
                restarts: int = 8, seed: int = 0, iters: int = 1500,
                warm_start: LTermSolution | None = None) -> LTermSolution:
    """Approximately minimize the l-column two-layer objective.

    Multi-restart projected gradient descent on a compact l-unit network
    (rows renormalized to the sphere after every step), embedded back at
    width ``m_solver``. The reported value e_l is an upper bound on the
    true infimum. A warm start (typically the solution for a smaller l,
    padded with dead units) is treated as one extra restart, which makes
    e(l) non-increasing in l when solved in ascending order.
    """
    if l < 0:
        raise InvalidInputError("l must be >= 0")
    if m_solver < max(l, 1):
        raise InvalidInputError("m_solver must be at least l (and at least 1)")
    rng = np.random.default_rng(seed)
    fill = unit_rows(rng, m_solver, d.n)
    if l == 0:
        W2 = np.zeros((d.d_y, m_solver))
        e0 = objective(TwoLayerParams(fill, W2), d, cfg)
        return LTermSolution(W1_star=fill, W2_star=W2, e_l=e0, l=0)

    best: tuple[float, np.ndarray, np.ndarray] | None = None
    starts: list[tuple[np.ndarray, np.ndarray]] = []
    if warm_start is not None:
        lw = min(warm_start.l, l)
        W1w = unit_rows(rng, l, d.n)
        W1w[:lw] = warm_start.W1_star[:lw]
        W2w = np.zeros((d.d_y, l))
        W2w[:, :lw] = warm_start.W2_star[:, :lw]
        starts.append((W1w, W2w))
    for _ in range(restarts):
        starts.append((unit_rows(rng, l, d.n),
                       rng.normal(scale=0.5 / math.sqrt(l), size=(d.d_y, l))))

    for W1c, W2c in starts:
        W1f, W2f, f = _descend_two_layer(W1c, W2c, d, cfg, iters=iters)
        if best is None or f < best[0]:
            best = (f, W1f, W2f)

    assert best is not None
    _, W1c, W2c = best
    W1_full = fill.copy()
    W1_full[:l] = W1c
    W2_full = np.zeros((d.d_y, m_solver))
    W2_full[:, :l] = W2c
    e_l = objective(TwoLayerParams(W1_full, W2_full), d, cfg)
    return LTermSolution(W1_star=W1_full, W2_star=W2_full, e_l=e_l, l=l)


# ---------------------------------------------------------------------------
# Full connections
# ---------------------------------------------------------------------------


def make_anchor(target: LTermSolution, like: SkipNetParams) -> SkipNetParams:
    return SkipNetParams(
        W1=target.W1_star,
        W2=target.W2_star,
        V2=np.zeros_like(like.V2),
        V1=np.zeros_like(like.V1),
        theta=InnerNetParams.zeros_like(like.theta),
    )


def _half_path(xi: SkipNetParams, eta: float, target: LTermSolution,
               anchor: SkipNetParams, d: Dataset, cfg: LossConfig,
               budget: int, rng: np.random.Generator) -> list[PathSegment]:
    p1, segs = step1_norm_reduction(xi, d, cfg, budget=budget)
    cluster = find_cluster(p1.W1, eta, w2=p1.W2)
    plan = build_sparsify_plan(p1, cluster, d)
    p2, seg2 = step2_merge_path(p1, plan, d, cfg, rng=rng)
    segs.append(seg2)
    _, segs3 = step3_rewire_and_descend(p2, target, anchor, d, cfg, rng=rng)
    segs.extend(segs3)
    return segs


def connect(xiA: SkipNetParams, xiB: SkipNetParams, d: Dataset, cfg: LossConfig,
            eta: float = 0.5, l: int | None = None, grid: int = 200,
            seed: int = 0, budget: int = 200, restarts: int = 8,
            lterm_iters: int = 1500,
            target: LTermSolution | None = None) -> tuple[ParamPath, BarrierReport]:
    """Connect two skip networks through the sparse two-layer anchor.

    Runs steps 1-3 from each endpoint to the shared anchor and
    concatenates the forward half with the reversed second half. The
    returned report samples the objective on ``grid`` points plus every
    segment joint.
    """
    if (xiA.m, xiA.n, xiA.d_y, xiA.d_g, xiA.d_o) != (xiB.m, xiB.n, xiB.d_y, xiB.d_g, xiB.d_o):
        raise InvalidInputError("endpoints must share the same architecture")
    if not 0.0 < eta < 1.0:
        raise InvalidInputError("eta must be in (0, 1)")
    m, n = xiA.m, xiA.n
    if params_distance(xiA, xiB) == 0.0:
        path = ParamPath([constant_segment(xiA, "descent")])
        report = measure_depth(path, d, cfg, grid, f_star=None, m=m, n=n, eta=eta,
                               notes={"trivial": True})
        return path, report

    rng = np.random.default_rng(seed)
    # the cluster sizes of both rebalanced endpoints cap the usable l; run
    # step 1 once here and reuse the probed size bound via min() below
    l_req = l if l is not None else int(math.floor(m**eta))
    l_req = max(1, l_req)

    p1A, _ = step1_norm_reduction(xiA, d, cfg, budget=0)
    p1B, _ = step1_norm_reduction(xiB, d, cfg, budget=0)
    szA = find_cluster(p1A.W1, eta).size
    szB = find_cluster(p1B.W1, eta).size
    l_eff = min(l_req, szA, szB, (m - 1) // 2)
    if l_eff < 1:
        raise InvalidInputError("no usable freed positions; widen the network")

    if target is None:
        target = solve_lterm(d, cfg, l_eff, m, restarts=restarts, seed=seed,
                             iters=lterm_iters)
    elif target.l > l_eff or target.W1_star.shape != (m, n):
        raise InvalidInputError("provided l-term target does not fit this instance")
    anchor = make_anchor(target, xiA)

    segsA = _half_path(xiA, eta, target, anchor, d, cfg, budget, rng)
    segsB = _half_path(xiB, eta, target, anchor, d, cfg, budget, rng)
    path = ParamPath(segsA + ParamPath(segsB).reversed().segments)
    report = measure_depth(path, d, cfg, grid, f_star=target.e_l, m=m, n=n, eta=eta,
                           notes={"l": l_eff, "cluster_sizes": (szA, szB)})
    return path, report


# ---------------------------------------------------------------------------
# Linear warm-up case
# ---------------------------------------------------------------------------


def linear_optimum(d: Dataset, cfg: LossConfig, theta: InnerNetParams) -> tuple[np.ndarray, float]:
    """argmin_W of the plain linear loss E L(Wx, y) and its value."""
    if cfg.kind == "mse":
        B, *_ = np.linalg.lstsq(d.X, d.Y, rcond=None)
        W = B.T
    else:
        # convex and smooth enough for plain descent
        W = np.linalg.lstsq(d.X, d.Y, rcond=None)[0].T
        f_cur = _linear_loss(W, d, cfg)
        lr = 0.1
        for _ in range(500):
            G = _linear_loss_grad(W, d, cfg)
            gn2 = float(np.sum(G**2))
            if gn2 == 0.0:
                break
            while lr > 1e-16:
                W_new = W - lr * G
                f_new = _linear_loss(W_new, d, cfg)
                if f_new <= f_cur - 1e-4 * lr * gn2:
                    break
                lr *= 0.5
            else:
                break
            if (f_cur - f_new) / max(abs(f_cur), 1e-30) < 1e-14:
                W, f_cur = W_new, f_new
                break
            W, f_cur = W_new, f_new
            lr = min(lr * 2.0, 1e3)
    zeroV = np.zeros((W.shape[1], theta.out_dim))
    p = LinearSkipParams(W=W, V=zeroV, theta=theta)
    return W, objective_unregularized(p, d, cfg)


def _linear_loss(W: np.ndarray, d: Dataset, cfg: LossConfig) -> float:
    from .losses import loss_values

    return float(loss_values(d.X @ W.T, d.Y, cfg).mean())


def _linear_loss_grad(W: np.ndarray, d: Dataset, cfg: LossConfig) -> np.ndarray:
    from .losses import loss_output_grads

    G = loss_output_grads(d.X @ W.T, d.Y, cfg) / d.count
    return G.T @ d.X


def _lerp_linear(a: LinearSkipParams, b: LinearSkipParams, t: float) -> LinearSkipParams:
    return LinearSkipParams(
        W=(1.0 - t) * a.W + t * b.W,
        V=(1.0 - t) * a.V + t * b.V,
        theta=InnerNetParams(tuple((1.0 - t) * La + t * Lb
                                   for La, Lb in zip(a.theta.layers, b.theta.layers))),
    )


def _lifted_linear_segment(start: LinearSkipParams, w_end: np.ndarray) -> PathSegment:
    """Straight line in [W, WV] space from the starting point to (w_end, 0),
    with V recovered by pseudoinverse. Opens with the flat projection
    V -> W+ W V so the recovery matches the starting point."""
    W0 = start.W
    Zb0 = start.W @ start.V
    V_proj = pinv(W0) @ Zb0

    def w_at(s: float) -> np.ndarray:
        return (1.0 - s) * W0 + s * w_end

    def track_at(s: float) -> LinearSkipParams:
        Wt = w_at(s)
        Zbt = (1.0 - s) * Zb0
        return LinearSkipParams(W=Wt, V=pinv(Wt) @ Zbt, theta=start.theta)

    end = track_at(1.0)

    def param_at(t: float) -> LinearSkipParams:
        if t <= 0.0:
            return start
        if t >= 1.0:
            return end
        if t < _PROJ_SPLIT:
            s = t / _PROJ_SPLIT
            return LinearSkipParams(W=start.W, V=(1.0 - s) * start.V + s * V_proj,
                                    theta=start.theta)
        return track_at((t - _PROJ_SPLIT) / (1.0 - _PROJ_SPLIT))

    def rank_check(t: float) -> bool:
        s = 0.0 if t < _PROJ_SPLIT else (t - _PROJ_SPLIT) / (1.0 - _PROJ_SPLIT)
        return smallest_singular_ratio(w_at(min(s, 1.0))) >= RANK_RATIO_FLOOR

    return PathSegment(
        kind="final-layer-linear", start=start, end=end, param_at=param_at,
        rank_check=rank_check,
    )


def connect_linear(xiA: LinearSkipParams, xiB: LinearSkipParams, d: Dataset,
                   cfg: LossConfig, grid: int = 200,
                   seed: int = 0) -> tuple[ParamPath, BarrierReport]:
    """Theorem-6-style connection for the linear skip model.

    Both endpoints travel a straight lifted line to the plain linear
    optimum (V = 0); with V dead the feature-map parameters are free, so
    differing theta values are bridged at exactly constant loss.
    """
    if xiA.W.shape != xiB.W.shape or xiA.V.shape != xiB.V.shape:
        raise InvalidInputError("endpoints must share the same architecture")
    d_y, d_x = xiA.W.shape
    d_z = xiA.V.shape[1]
    if d_y > min(d_x, d_z):
        raise UnsupportedConfigError("connect_linear requires d_y <= min(d_x, d_z)")
    rng = np.random.default_rng(seed)
    W_star, f_star = linear_optimum(d, cfg, xiA.theta)

    def build_lift(start: LinearSkipParams) -> PathSegment:
        w_end = W_star
        for attempt in range(PERTURB_RETRIES + 1):
            seg = _lifted_linear_segment(start, w_end)
            if _scan_rank(seg) == 0:
                if attempt:
                    seg.metadata["perturb_attempts"] = attempt
                return seg
            w_end = W_star + rng.normal(scale=PERTURB_SCALE, size=W_star.shape)
        raise PathDegeneracyError(
            "W(t) stayed rank deficient along the lifted line after retries"
        )

    segA = build_lift(xiA)
    segB = build_lift(xiB)
    segments = [segA]
    if not np.array_equal(segA.end.W, segB.end.W):
        segments.append(lerp_segment(segA.end,
                                     LinearSkipParams(W=segB.end.W, V=segA.end.V,
                                                      theta=segA.end.theta),
                                     "final-layer-linear", _lerp_linear))
    joinA = segments[-1].end
    if any(not np.array_equal(La, Lb) for La, Lb in zip(joinA.theta.layers, segB.end.theta.layers)):
        segments.append(lerp_segment(joinA,
                                     LinearSkipParams(W=joinA.W, V=joinA.V, theta=segB.end.theta),
                                     "rewire", _lerp_linear))
    segments.append(segB.reversed())
    path = ParamPath(segments)
    report = measure_depth(path, d, cfg, grid, f_star=f_star,
                           notes={"linear": True})
    return path, report
