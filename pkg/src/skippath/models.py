"""The three network families: plain two-layer ReLU, skip-connection, linear skip.

Forward maps:

    two-layer      f(x) = W2 relu(W1 x)
    skip           f(x) = W2 [relu(W1 x) + V1 g(theta, V2 relu(W1 x))]
    linear skip    f(x) = W  (x + V g(theta, x))

where g is an inner ReLU network with a linear output layer. Parameter
containers are frozen dataclasses holding read-only float64 arrays;
every forward function is pure.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, UnsupportedConfigError
from .linalg import check_matrix, relu


def _freeze(a, name: str) -> np.ndarray:
    arr = check_matrix(a, name).copy()
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class InnerNetParams:
    """Inner network g: layer matrices applied left-to-right, ReLU between
    layers, linear output layer."""

    layers: tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.layers) < 1:
            raise InvalidInputError("inner network needs at least one layer")
        frozen = tuple(_freeze(L, f"theta[{i}]") for i, L in enumerate(self.layers))
        for i in range(1, len(frozen)):
            if frozen[i].shape[1] != frozen[i - 1].shape[0]:
                raise InvalidInputError(
                    f"inner layer {i} expects input dim {frozen[i].shape[1]}, "
                    f"previous layer outputs {frozen[i - 1].shape[0]}"
                )
        object.__setattr__(self, "layers", frozen)

    @property
    def in_dim(self) -> int:
        return self.layers[0].shape[1]

    @property
    def out_dim(self) -> int:
        return self.layers[-1].shape[0]

    def scaled(self, t: float) -> "InnerNetParams":
        return InnerNetParams(tuple(t * L for L in self.layers))

    @staticmethod
    def zeros_like(other: "InnerNetParams") -> "InnerNetParams":
        return InnerNetParams(tuple(np.zeros_like(L) for L in other.layers))


@dataclass(frozen=True)
class TwoLayerParams:
    W1: np.ndarray  # (m, n)
    W2: np.ndarray  # (d_y, m)

    def __post_init__(self):
        object.__setattr__(self, "W1", _freeze(self.W1, "W1"))
        object.__setattr__(self, "W2", _freeze(self.W2, "W2"))
        if self.W2.shape[1] != self.W1.shape[0]:
            raise InvalidInputError(
                f"W2 has {self.W2.shape[1]} columns but W1 has {self.W1.shape[0]} rows"
            )

    @property
    def m(self) -> int:
        return self.W1.shape[0]

    @property
    def n(self) -> int:
        return self.W1.shape[1]

    @property
    def d_y(self) -> int:
        return self.W2.shape[0]


@dataclass(frozen=True)
class SkipNetParams:
    W1: np.ndarray  # (m, n)
    W2: np.ndarray  # (d_y, m)
    V2: np.ndarray  # (d_g, m)
    V1: np.ndarray  # (m, d_o)
    theta: InnerNetParams  # d_g -> d_o

    def __post_init__(self):
        object.__setattr__(self, "W1", _freeze(self.W1, "W1"))
        object.__setattr__(self, "W2", _freeze(self.W2, "W2"))
        object.__setattr__(self, "V2", _freeze(self.V2, "V2"))
        object.__setattr__(self, "V1", _freeze(self.V1, "V1"))
        m = self.W1.shape[0]
        if self.W2.shape[1] != m:
            raise InvalidInputError("W2 column count must equal W1 row count")
        if self.V2.shape[1] != m:
            raise InvalidInputError("V2 column count must equal W1 row count")
        if self.V1.shape[0] != m:
            raise InvalidInputError("V1 row count must equal W1 row count")
        if self.theta.in_dim != self.V2.shape[0]:
            raise InvalidInputError("inner network input dim must equal V2 row count")
        if self.theta.out_dim != self.V1.shape[1]:
            raise InvalidInputError("inner network output dim must equal V1 column count")

    @property
    def m(self) -> int:
        return self.W1.shape[0]

    @property
    def n(self) -> int:
        return self.W1.shape[1]

    @property
    def d_y(self) -> int:
        return self.W2.shape[0]

    @property
    def d_g(self) -> int:
        return self.V2.shape[0]

    @property
    def d_o(self) -> int:
        return self.V1.shape[1]

    def replace(self, **kw) -> "SkipNetParams":
        fields = {"W1": self.W1, "W2": self.W2, "V2": self.V2, "V1": self.V1, "theta": self.theta}
        fields.update(kw)
        return SkipNetParams(**fields)

    def two_layer_part(self) -> TwoLayerParams:
        return TwoLayerParams(self.W1, self.W2)


@dataclass(frozen=True)
class LinearSkipParams:
    W: np.ndarray  # (d_y, d_x)
    V: np.ndarray  # (d_x, d_z)
    theta: InnerNetParams  # frozen feature map, d_x -> d_z

    def __post_init__(self):
        object.__setattr__(self, "W", _freeze(self.W, "W"))
        object.__setattr__(self, "V", _freeze(self.V, "V"))
        d_y, d_x = self.W.shape
        if self.V.shape[0] != d_x:
            raise InvalidInputError("V row count must equal W column count")
        d_z = self.V.shape[1]
        if d_y > min(d_x, d_z):
            raise UnsupportedConfigError(
                f"linear skip model requires d_y <= min(d_x, d_z); got d_y={d_y}, "
                f"d_x={d_x}, d_z={d_z}"
            )
        if self.theta.in_dim != d_x or self.theta.out_dim != d_z:
            raise InvalidInputError("feature map must take d_x inputs to d_z outputs")

    @property
    def d_x(self) -> int:
        return self.W.shape[1]

    @property
    def d_y(self) -> int:
        return self.W.shape[0]

    @property
    def d_z(self) -> int:
        return self.V.shape[1]


Params = TwoLayerParams | SkipNetParams | LinearSkipParams


# ---------------------------------------------------------------------------
# Forward evaluation. Single-sample variants take a vector x; batch variants
# take X with one sample per row and return one output per row.
# ---------------------------------------------------------------------------


def forward_inner(g: InnerNetParams, z: np.ndarray) -> np.ndarray:
    """g(theta, z): ReLU between layers, linear final layer."""
    h = np.asarray(z, dtype=np.float64)
    for L in g.layers[:-1]:
        h = relu(L @ h)
    return g.layers[-1] @ h


def forward_inner_batch(g: InnerNetParams, Z: np.ndarray) -> np.ndarray:
    H = np.asarray(Z, dtype=np.float64)
    for L in g.layers[:-1]:
        H = relu(H @ L.T)
    return H @ g.layers[-1].T


def forward_two_layer(p: TwoLayerParams, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (p.n,):
        raise InvalidInputError(f"expected input of dim {p.n}, got shape {x.shape}")
    return p.W2 @ relu(p.W1 @ x)


def forward_two_layer_batch(p: TwoLayerParams, X: np.ndarray) -> np.ndarray:
    return relu(X @ p.W1.T) @ p.W2.T


def forward_skip(p: SkipNetParams, x: np.ndarray) -> np.ndarray:
    return forward_skip_parts(p, x)[0]


def forward_skip_parts(p: SkipNetParams, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Skip-network output together with the hidden activation h = relu(W1 x)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (p.n,):
        raise InvalidInputError(f"expected input of dim {p.n}, got shape {x.shape}")
    h = relu(p.W1 @ x)
    y = p.W2 @ (h + p.V1 @ forward_inner(p.theta, p.V2 @ h))
    return y, h


def forward_skip_batch(p: SkipNetParams, X: np.ndarray) -> np.ndarray:
    H = relu(X @ p.W1.T)
    Z = forward_inner_batch(p.theta, H @ p.V2.T)
    return (H + Z @ p.V1.T) @ p.W2.T


def forward_linear_skip(p: LinearSkipParams, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (p.d_x,):
        raise InvalidInputError(f"expected input of dim {p.d_x}, got shape {x.shape}")
    return p.W @ (x + p.V @ forward_inner(p.theta, x))


def forward_linear_skip_batch(p: LinearSkipParams, X: np.ndarray) -> np.ndarray:
    return (X + forward_inner_batch(p.theta, X) @ p.V.T) @ p.W.T


def forward_batch(p: Params, X: np.ndarray) -> np.ndarray:
    if isinstance(p, TwoLayerParams):
        return forward_two_layer_batch(p, X)
    if isinstance(p, SkipNetParams):
        return forward_skip_batch(p, X)
    if isinstance(p, LinearSkipParams):
        return forward_linear_skip_batch(p, X)
    raise InvalidInputError(f"unknown parameter family {type(p).__name__}")


def lerp_inner(a: InnerNetParams, b: InnerNetParams, t: float) -> InnerNetParams:
    return InnerNetParams(tuple((1.0 - t) * La + t * Lb for La, Lb in zip(a.layers, b.layers)))


def lerp_skip(a: SkipNetParams, b: SkipNetParams, t: float) -> SkipNetParams:
    return SkipNetParams(
        W1=(1.0 - t) * a.W1 + t * b.W1,
        W2=(1.0 - t) * a.W2 + t * b.W2,
        V2=(1.0 - t) * a.V2 + t * b.V2,
        V1=(1.0 - t) * a.V1 + t * b.V1,
        theta=lerp_inner(a.theta, b.theta, t),
    )


def params_distance(a: Params, b: Params) -> float:
    """Euclidean distance between two parameter points of the same family."""
    va, vb = flatten_params(a), flatten_params(b)
    return float(np.linalg.norm(va - vb))


def flatten_params(p: Params) -> np.ndarray:
    if isinstance(p, TwoLayerParams):
        mats = [p.W1, p.W2]
    elif isinstance(p, SkipNetParams):
        mats = [p.W1, p.W2, p.V2, p.V1, *p.theta.layers]
    elif isinstance(p, LinearSkipParams):
        mats = [p.W, p.V, *p.theta.layers]
    else:
        raise InvalidInputError(f"unknown parameter family {type(p).__name__}")
    return np.concatenate([m.ravel() for m in mats])


def random_inner(rng: np.random.Generator, in_dim: int, hidden: tuple[int, ...],
                 out_dim: int, scale: float = 1.0) -> InnerNetParams:
    dims = [in_dim, *hidden, out_dim]
    layers = []
    for i in range(1, len(dims)):
        fan_in = dims[i - 1]
        layers.append(rng.normal(scale=scale / np.sqrt(fan_in), size=(dims[i], fan_in)))
    return InnerNetParams(tuple(layers))


def random_skip(rng: np.random.Generator, n: int, m: int, d_y: int, d_g: int,
                d_o: int, hidden: tuple[int, ...] = (8,), scale: float = 1.0) -> SkipNetParams:
    return SkipNetParams(
        W1=rng.normal(scale=scale / np.sqrt(n), size=(m, n)),
        W2=rng.normal(scale=scale / np.sqrt(m), size=(d_y, m)),
        V2=rng.normal(scale=scale / np.sqrt(m), size=(d_g, m)),
        V1=rng.normal(scale=scale / np.sqrt(d_o), size=(m, d_o)),
        theta=random_inner(rng, d_g, hidden, d_o, scale),
    )


def random_two_layer(rng: np.random.Generator, n: int, m: int, d_y: int,
                     scale: float = 1.0) -> TwoLayerParams:
    return TwoLayerParams(
        W1=rng.normal(scale=scale / np.sqrt(n), size=(m, n)),
        W2=rng.normal(scale=scale / np.sqrt(m), size=(d_y, m)),
    )
