"""Convex per-sample losses, the group regularizer, the full objective F,
hand-derived gradients, and stationarity/assumption diagnostics.

The empirical objective over a dataset D = {(x_i, y_i)} is

    F(p) = mean_i L(f(p, x_i), y_i) + kappa * R(p)

with L either squared error ||w - y||^2 or a per-component Huber loss, and
R the group regularizer

    R = sum_i ||w2_i||_1 ||w1_i||_2 + sum_i ||v2_i||_1 ||w1_i||_2
        + ||W2 V1||_1 + sum_j ||theta_j||_F

(columns of W2/V2 paired with rows of W1). The plain two-layer family uses
||W2||_1 with W1 rows assumed unit-norm; the linear skip family of the
warm-up analysis carries no regularizer.

Gradients use the subgradient conventions relu'(0) = 0 and sign(0) = 0,
so they are exact at every point where no unit sits on a kink.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .linalg import as_float_array
from .models import (
    InnerNetParams,
    LinearSkipParams,
    Params,
    SkipNetParams,
    TwoLayerParams,
    forward_batch,
    forward_inner_batch,
    relu,
)

_LOSS_KINDS = ("mse", "huber")


@dataclass(frozen=True)
class LossConfig:
    kind: str = "mse"
    delta: float = 1.0  # Huber transition point
    kappa: float = 0.0
    lipschitz_l0: float | None = None  # cached bound, reporting only

    def __post_init__(self):
        if self.kind not in _LOSS_KINDS:
            raise InvalidInputError(f"loss kind must be one of {_LOSS_KINDS}")
        if self.kappa < 0:
            raise InvalidInputError("kappa must be >= 0")
        if self.kind == "huber" and self.delta <= 0:
            raise InvalidInputError("huber delta must be > 0")


@dataclass(frozen=True)
class Dataset:
    """Bounded sample set with cached second-moment matrix.

    X has one sample per row; Y matches row-for-row. ``bound_B`` is the
    largest Euclidean norm appearing on either side, ``sigma_x`` the
    empirical second moment X^T X / N.
    """

    X: np.ndarray
    Y: np.ndarray
    bound_B: float = 0.0  # computed
    sigma_x: np.ndarray | None = None  # computed

    def __post_init__(self):
        X = as_float_array(self.X, "X")
        Y = as_float_array(self.Y, "Y")
        if X.ndim != 2:
            raise InvalidInputError("X must be 2-dimensional (samples x features)")
        if Y.ndim == 1:
            Y = Y[:, None]
        if Y.ndim != 2 or Y.shape[0] != X.shape[0]:
            raise InvalidInputError("Y must have one row per sample")
        X = X.copy()
        Y = Y.copy()
        X.flags.writeable = False
        Y.flags.writeable = False
        bound = float(max(np.linalg.norm(X, axis=1).max(), np.linalg.norm(Y, axis=1).max()))
        sigma = X.T @ X / X.shape[0]
        sigma.flags.writeable = False
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "bound_B", bound)
        object.__setattr__(self, "sigma_x", sigma)

    @property
    def count(self) -> int:
        return self.X.shape[0]

    @property
    def n(self) -> int:
        return self.X.shape[1]

    @property
    def d_y(self) -> int:
        return self.Y.shape[1]


@dataclass(frozen=True)
class AssumptionReport:
    """Group norms and stationarity diagnostics at a parameter point."""

    w2_group: float  # sum_i ||w2_i||_1 ||w1_i||_2
    v2_group: float  # sum_i ||v2_i||_1 ||w1_i||_2
    w2v1_l1: float  # ||W2 V1||_1
    theta_frob: float  # sum_j ||theta_j||_F
    c_bound: float  # max of the four group norms
    grad_norm: float
    g_lipschitz: float  # empirical Lipschitz constant of g on induced inputs
    stationary: bool
    radial_residual: float  # |d/dt F(t * p)| at t = 1
    objective_value: float


# ---------------------------------------------------------------------------
# Per-sample losses
# ---------------------------------------------------------------------------


def loss_values(outputs: np.ndarray, targets: np.ndarray, cfg: LossConfig) -> np.ndarray:
    """Per-sample loss L(f(x_i), y_i); outputs and targets are (N, d_y)."""
    R = outputs - targets
    if cfg.kind == "mse":
        return np.einsum("ij,ij->i", R, R)
    a = np.abs(R)
    inside = a <= cfg.delta
    per = np.where(inside, R * R, cfg.delta * (2.0 * a - cfg.delta))
    return per.sum(axis=1)


def loss_output_grads(outputs: np.ndarray, targets: np.ndarray, cfg: LossConfig) -> np.ndarray:
    """dL/d(output), same shape as outputs."""
    R = outputs - targets
    if cfg.kind == "mse":
        return 2.0 * R
    return np.where(np.abs(R) <= cfg.delta, 2.0 * R, 2.0 * cfg.delta * np.sign(R))


# ---------------------------------------------------------------------------
# Regularizer and objective
# ---------------------------------------------------------------------------


def group_norms(p: SkipNetParams) -> tuple[float, float, float, float]:
    r = np.linalg.norm(p.W1, axis=1)
    a = np.abs(p.W2).sum(axis=0)
    b = np.abs(p.V2).sum(axis=0)
    w2_group = float(a @ r)
    v2_group = float(b @ r)
    w2v1 = float(np.abs(p.W2 @ p.V1).sum())
    th = float(sum(np.linalg.norm(L) for L in p.theta.layers))
    return w2_group, v2_group, w2v1, th


def regularizer(p: Params) -> float:
    if isinstance(p, SkipNetParams):
        return float(sum(group_norms(p)))
    if isinstance(p, TwoLayerParams):
        return float(np.abs(p.W2).sum())
    if isinstance(p, LinearSkipParams):
        return 0.0
    raise InvalidInputError(f"unknown parameter family {type(p).__name__}")


def objective_unregularized(p: Params, d: Dataset, cfg: LossConfig) -> float:
    F = forward_batch(p, d.X)
    if F.shape[1] != d.d_y:
        raise InvalidInputError(
            f"model outputs dim {F.shape[1]} but dataset targets dim {d.d_y}"
        )
    return float(loss_values(F, d.Y, cfg).mean())


def objective(p: Params, d: Dataset, cfg: LossConfig) -> float:
    return objective_unregularized(p, d, cfg) + cfg.kappa * regularizer(p)


# ---------------------------------------------------------------------------
# Gradients. Each returns a container of the same shape/family as the input
# point, holding d(objective)/d(matrix) for every trainable matrix.
# ---------------------------------------------------------------------------


def _sign(a: np.ndarray) -> np.ndarray:
    return np.sign(a)


def grad_two_layer(p: TwoLayerParams, d: Dataset, cfg: LossConfig) -> TwoLayerParams:
    N = d.count
    Pre = d.X @ p.W1.T
    H = relu(Pre)
    F = H @ p.W2.T
    G = loss_output_grads(F, d.Y, cfg) / N
    dW2 = G.T @ H
    dPre = (G @ p.W2) * (Pre > 0)
    dW1 = dPre.T @ d.X
    if cfg.kappa != 0.0:
        dW2 = dW2 + cfg.kappa * _sign(p.W2)
    return TwoLayerParams(W1=dW1, W2=dW2)


def _inner_forward_cached(g: InnerNetParams, U: np.ndarray):
    acts = [U]  # activations entering each layer
    pres = []  # pre-activations of the hidden (ReLU) layers
    H = U
    for L in g.layers[:-1]:
        P = H @ L.T
        pres.append(P)
        H = relu(P)
        acts.append(H)
    Z = H @ g.layers[-1].T
    return Z, acts, pres


def _inner_backward(g: InnerNetParams, dZ: np.ndarray, acts, pres):
    k = len(g.layers)
    grads: list[np.ndarray] = [None] * k  # type: ignore[list-item]
    grads[k - 1] = dZ.T @ acts[k - 1]
    dA = dZ @ g.layers[k - 1]
    for i in range(k - 2, -1, -1):
        dP = dA * (pres[i] > 0)
        grads[i] = dP.T @ acts[i]
        dA = dP @ g.layers[i]
    return tuple(grads), dA


def grad_skip(p: SkipNetParams, d: Dataset, cfg: LossConfig) -> SkipNetParams:
    N = d.count
    Pre1 = d.X @ p.W1.T
    H = relu(Pre1)
    U = H @ p.V2.T
    Z, acts, pres = _inner_forward_cached(p.theta, U)
    S = H + Z @ p.V1.T
    F = S @ p.W2.T
    G = loss_output_grads(F, d.Y, cfg) / N

    dW2 = G.T @ S
    dS = G @ p.W2
    dV1 = dS.T @ Z
    dZ = dS @ p.V1
    dtheta, dU = _inner_backward(p.theta, dZ, acts, pres)
    dV2 = dU.T @ H
    dH = dS + dU @ p.V2
    dPre1 = dH * (Pre1 > 0)
    dW1 = dPre1.T @ d.X

    if cfg.kappa != 0.0:
        k = cfg.kappa
        r = np.linalg.norm(p.W1, axis=1)
        a = np.abs(p.W2).sum(axis=0)
        b = np.abs(p.V2).sum(axis=0)
        dW2 = dW2 + k * _sign(p.W2) * r[None, :]
        dV2 = dV2 + k * _sign(p.V2) * r[None, :]
        safe_r = np.where(r > 0, r, 1.0)
        dW1 = dW1 + k * ((a + b) / safe_r * (r > 0))[:, None] * p.W1
        SM = _sign(p.W2 @ p.V1)
        dW2 = dW2 + k * SM @ p.V1.T
        dV1 = dV1 + k * p.W2.T @ SM
        dth = []
        for L, gL in zip(p.theta.layers, dtheta):
            nrm = np.linalg.norm(L)
            dth.append(gL + k * (L / nrm if nrm > 0 else np.zeros_like(L)))
        dtheta = tuple(dth)

    return SkipNetParams(W1=dW1, W2=dW2, V2=dV2, V1=dV1, theta=InnerNetParams(dtheta))


def grad_linear_skip(p: LinearSkipParams, d: Dataset, cfg: LossConfig) -> LinearSkipParams:
    """Gradient in (W, V); theta is a frozen feature map and gets zeros."""
    N = d.count
    Z = forward_inner_batch(p.theta, d.X)
    S = d.X + Z @ p.V.T
    F = S @ p.W.T
    G = loss_output_grads(F, d.Y, cfg) / N
    dW = G.T @ S
    dV = (G @ p.W).T @ Z
    return LinearSkipParams(W=dW, V=dV, theta=InnerNetParams.zeros_like(p.theta))


def grad(p: Params, d: Dataset, cfg: LossConfig) -> Params:
    if isinstance(p, TwoLayerParams):
        return grad_two_layer(p, d, cfg)
    if isinstance(p, SkipNetParams):
        return grad_skip(p, d, cfg)
    if isinstance(p, LinearSkipParams):
        return grad_linear_skip(p, d, cfg)
    raise InvalidInputError(f"unknown parameter family {type(p).__name__}")


def grad_norm(g: Params) -> float:
    from .models import flatten_params

    return float(np.linalg.norm(flatten_params(g)))


# ---------------------------------------------------------------------------
# Assumption diagnostics
# ---------------------------------------------------------------------------


def scale_all(p: SkipNetParams, t: float) -> SkipNetParams:
    return SkipNetParams(
        W1=t * p.W1, W2=t * p.W2, V2=t * p.V2, V1=t * p.V1, theta=p.theta.scaled(t)
    )


def radial_residual(p: SkipNetParams, d: Dataset, cfg: LossConfig,
                    step: float = 1e-6) -> float:
    """|d/dt F(t*p)| at t=1 by central difference.

    Positive rescaling preserves both ReLU activation patterns and entry
    signs, so F(t*p) is smooth in t near t=1 and the central difference is
    accurate; at a stationary point this radial derivative vanishes.
    """
    up = objective(scale_all(p, 1.0 + step), d, cfg)
    dn = objective(scale_all(p, 1.0 - step), d, cfg)
    return float(abs((up - dn) / (2.0 * step)))


def empirical_g_lipschitz(p: SkipNetParams, d: Dataset, max_points: int = 400) -> float:
    """Largest secant slope of g over the dataset-induced inputs V2 relu(W1 x)."""
    H = relu(d.X @ p.W1.T)
    U = H @ p.V2.T
    if U.shape[0] > max_points:
        idx = np.linspace(0, U.shape[0] - 1, max_points).astype(int)
        U = U[idx]
    Z = forward_inner_batch(p.theta, U)
    du = np.linalg.norm(U[:, None, :] - U[None, :, :], axis=2)
    dz = np.linalg.norm(Z[:, None, :] - Z[None, :, :], axis=2)
    mask = du > 1e-12
    if not np.any(mask):
        return 0.0
    return float((dz[mask] / du[mask]).max())


def check_assumption1(p: SkipNetParams, d: Dataset, cfg: LossConfig,
                      grad_tol: float = 1e-4) -> AssumptionReport:
    if grad_tol <= 0:
        raise InvalidInputError("grad_tol must be > 0")
    w2g, v2g, w2v1, th = group_norms(p)
    g = grad_skip(p, d, cfg)
    gn = grad_norm(g)
    return AssumptionReport(
        w2_group=w2g,
        v2_group=v2g,
        w2v1_l1=w2v1,
        theta_frob=th,
        c_bound=max(w2g, v2g, w2v1, th),
        grad_norm=gn,
        g_lipschitz=empirical_g_lipschitz(p, d),
        stationary=bool(gn <= grad_tol),
        radial_residual=radial_residual(p, d, cfg),
        objective_value=objective(p, d, cfg),
    )
