"""Synthetic bounded-sample generators.

Three families: a two-layer ReLU teacher, a skip-network teacher, and a
trigonometric target. Inputs are drawn from the unit ball (scaled by
``x_scale``), outputs are clipped to ``bound`` so the boundedness the
analysis assumes holds by construction, and everything is deterministic
per seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .linalg import relu, unit_rows
from .losses import Dataset
from .models import forward_skip_batch, random_skip

GENERATORS = ("teacher-two-layer", "teacher-skip", "trig")


@dataclass(frozen=True)
class DatasetSpec:
    generator: str = "teacher-two-layer"
    n: int = 3
    d_y: int = 1
    count: int = 2000
    noise: float = 0.0
    bound: float = 10.0
    x_scale: float = 1.0
    teacher_width: int = 8
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.generator not in GENERATORS:
            raise ConfigError(f"unknown dataset generator {self.generator!r}")
        if self.count < 1 or self.n < 1 or self.d_y < 1:
            raise ConfigError("count, n and d_y must all be >= 1")
        if self.bound <= 0:
            raise ConfigError("bound must be > 0")


def _ball_points(rng: np.random.Generator, count: int, n: int, scale: float) -> np.ndarray:
    """Uniform draws from the radius-``scale`` ball."""
    d = rng.normal(size=(count, n))
    d /= np.maximum(np.linalg.norm(d, axis=1, keepdims=True), 1e-30)
    radii = rng.uniform(size=(count, 1)) ** (1.0 / n)
    return scale * d * radii


def _clip_rows(Y: np.ndarray, bound: float) -> np.ndarray:
    norms = np.linalg.norm(Y, axis=1, keepdims=True)
    factor = np.minimum(1.0, bound / np.maximum(norms, 1e-30))
    return Y * factor


def gen_dataset(spec: DatasetSpec, seed: int) -> Dataset:
    rng = np.random.default_rng(seed)
    X = _ball_points(rng, spec.count, spec.n, spec.x_scale)
    if spec.generator == "teacher-two-layer":
        W1t = unit_rows(rng, spec.teacher_width, spec.n)
        W2t = rng.normal(scale=1.0 / np.sqrt(spec.teacher_width),
                         size=(spec.d_y, spec.teacher_width))
        Y = relu(X @ W1t.T) @ W2t.T
    elif spec.generator == "teacher-skip":
        teacher = random_skip(rng, n=spec.n, m=spec.teacher_width, d_y=spec.d_y,
                              d_g=4, d_o=4, hidden=(8,))
        Y = forward_skip_batch(teacher, X)
    else:  # trig
        A = rng.normal(scale=2.0, size=(spec.d_y, spec.n))
        phase = rng.uniform(0.0, 2.0 * np.pi, size=spec.d_y)
        Y = np.sin(X @ A.T + phase)
    if spec.noise > 0:
        Y = Y + rng.normal(scale=spec.noise, size=Y.shape)
    Y = _clip_rows(Y, spec.bound)
    return Dataset(X=X, Y=Y)
