"""Near-parallel hidden-unit clustering and the merge plans built from it.

A width-m first layer gives m directions on the unit sphere. Any angular
ball of radius eps = m^((eta-1)/n) has pairwise angles <= 2*eps inside it
(triangle inequality), and a counting argument guarantees the densest such
ball holds at least ~m^eta directions once m is large. The densest-ball
search below is O(m^2), fine at desk scale, and the returned set is always
verified exhaustively by its caller-facing invariants.

Directions are NOT identified with their negatives: relu is not even, so
clustering uses the directed angle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .linalg import angle, check_matrix, operator_norm, pairwise_angles, relu
from .losses import Dataset
from .models import SkipNetParams


@dataclass(frozen=True)
class ClusterSet:
    """A set of near-parallel W1 row indices plus a merge representative.

    ``member_indices`` are the rows to be merged away; the representative
    receives their output mass and is never itself a member. ``quota_met``
    records whether the pigeonhole count ceil(m^eta) was reached; at small
    m the asymptotic guarantee need not bind, which is reported rather
    than treated as an error.
    """

    member_indices: tuple[int, ...]
    representative_index: int
    max_pairwise_angle: float
    epsilon_m_eta: float
    eta: float
    quota: int
    quota_met: bool

    def __post_init__(self):
        if self.representative_index in self.member_indices:
            raise InvalidInputError("representative must not be a member")
        if len(self.member_indices) == 0:
            raise InvalidInputError("cluster has no members")

    @property
    def size(self) -> int:
        return len(self.member_indices)

    @property
    def all_indices(self) -> tuple[int, ...]:
        return (self.representative_index, *self.member_indices)


def cluster_radius(m: int, eta: float, n: int) -> float:
    """The angular radius m^((eta-1)/n)."""
    return float(m ** ((eta - 1.0) / n))


def find_cluster(W1, eta: float, w2=None) -> ClusterSet:
    """Densest angular ball of radius m^((eta-1)/n) among the rows of W1.

    Every pair inside the ball is within 2*eps of each other. When ``w2``
    is given, the representative is the ball member whose W2 column has
    the largest L1 norm (least relative mass perturbation when the others
    are folded into it); ties and the default fall back to lowest index.
    """
    W = check_matrix(W1, "W1")
    if not 0.0 < eta < 1.0:
        raise InvalidInputError("eta must be in (0, 1)")
    m, n = W.shape
    if m < 2:
        raise InvalidInputError("need at least 2 rows to cluster")
    norms = np.linalg.norm(W, axis=1)
    if np.any(norms == 0.0):
        raise InvalidInputError("W1 rows must be nonzero")
    eps = cluster_radius(m, eta, n)
    quota = math.ceil(m**eta)

    A = pairwise_angles(W)
    within = A <= eps
    counts = within.sum(axis=1) - 1  # drop self
    center = int(np.argmax(counts))
    ball = np.flatnonzero(within[center])

    if w2 is not None:
        W2 = check_matrix(w2, "w2")
        if W2.shape[1] != m:
            raise InvalidInputError("w2 must have one column per W1 row")
        mass = np.abs(W2).sum(axis=0)[ball]
        rep = int(ball[int(np.argmax(mass))])
    else:
        rep = int(ball[0])
    members = tuple(int(i) for i in ball if i != rep)

    sub = A[np.ix_(ball, ball)]
    return ClusterSet(
        member_indices=members,
        representative_index=rep,
        max_pairwise_angle=float(sub.max()),
        epsilon_m_eta=eps,
        eta=eta,
        quota=quota,
        quota_met=len(members) >= quota,
    )


def relu_perturbation_bound(w1, w2, d: Dataset) -> tuple[float, float]:
    """Empirical check of E (relu(w1.x) - relu(w2.x))^2 <= 4 ||Sigma_x|| angle^2.

    Returns (lhs, rhs). Both directions must be unit vectors.
    """
    u = np.asarray(w1, dtype=np.float64)
    v = np.asarray(w2, dtype=np.float64)
    for name, vec in (("w1", u), ("w2", v)):
        if abs(np.linalg.norm(vec) - 1.0) > 1e-10:
            raise InvalidInputError(f"{name} must be unit norm")
    alpha = angle(u, v)
    diff = relu(d.X @ u) - relu(d.X @ v)
    lhs = float(np.mean(diff * diff))
    rhs = 4.0 * operator_norm(d.sigma_x) * alpha * alpha
    return lhs, rhs


@dataclass(frozen=True)
class SparsifyPlan:
    """Column-transfer plan merging a cluster's output mass into its
    representative.

    ``w2_merged``/``v2_merged`` are the endpoint matrices: member columns
    zeroed, representative column augmented by the members' sum. The
    residual bounds are empirical means of || sum_k alpha_k n_k(x) ||
    where n_k(x) = relu(w1_k . x) - relu(w1_rep . x).
    """

    cluster: ClusterSet
    w2_merged: np.ndarray
    v2_merged: np.ndarray
    residual_bound: float  # W2-side
    v2_residual_bound: float

    def __post_init__(self):
        for name in ("w2_merged", "v2_merged"):
            arr = getattr(self, name).copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)


def merge_columns(M: np.ndarray, members: tuple[int, ...], rep: int) -> np.ndarray:
    """Zero the member columns and add their sum to the representative column."""
    out = M.copy()
    moved = out[:, list(members)].sum(axis=1)
    out[:, list(members)] = 0.0
    out[:, rep] += moved
    return out


def build_sparsify_plan(p: SkipNetParams, cluster: ClusterSet, d: Dataset) -> SparsifyPlan:
    if cluster.size == 0:
        raise InvalidInputError("cannot build a plan from an empty cluster")
    m = p.m
    idx = (*cluster.member_indices, cluster.representative_index)
    if max(idx) >= m or min(idx) < 0:
        raise InvalidInputError("cluster indices out of range for this network")

    members = list(cluster.member_indices)
    rep = cluster.representative_index
    H = relu(d.X @ p.W1.T)  # (N, m)
    nmat = H[:, members] - H[:, [rep]]  # n_k(x) per member
    w2_resid = nmat @ p.W2[:, members].T  # (N, d_y): sum_k alpha_k n_k
    v2_resid = nmat @ p.V2[:, members].T
    return SparsifyPlan(
        cluster=cluster,
        w2_merged=merge_columns(p.W2, cluster.member_indices, rep),
        v2_merged=merge_columns(p.V2, cluster.member_indices, rep),
        residual_bound=float(np.linalg.norm(w2_resid, axis=1).mean()),
        v2_residual_bound=float(np.linalg.norm(v2_resid, axis=1).mean()),
    )
