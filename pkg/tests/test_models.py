import numpy as np
import pytest

from skippath import (
    InnerNetParams,
    InvalidInputError,
    LinearSkipParams,
    SkipNetParams,
    TwoLayerParams,
    UnsupportedConfigError,
    forward_inner,
    forward_linear_skip,
    forward_skip,
    forward_two_layer,
)
from skippath.models import (
    forward_linear_skip_batch,
    forward_skip_batch,
    forward_skip_parts,
    forward_two_layer_batch,
    random_inner,
    random_skip,
    random_two_layer,
)
from skippath.serialize import (
    checkpoint_text,
    load_checkpoint,
    parse_checkpoint,
    save_checkpoint,
)


# --- scalar-loop oracles, independent of the library implementations ----


def oracle_two_layer(W1, W2, x):
    m, n = W1.shape
    h = np.zeros(m)
    for i in range(m):
        s = 0.0
        for j in range(n):
            s += W1[i, j] * x[j]
        h[i] = s if s > 0 else 0.0
    out = np.zeros(W2.shape[0])
    for r in range(W2.shape[0]):
        for i in range(m):
            out[r] += W2[r, i] * h[i]
    return out


def oracle_inner(layers, z):
    h = np.array(z, dtype=float)
    for k, L in enumerate(layers):
        nxt = np.zeros(L.shape[0])
        for r in range(L.shape[0]):
            for c in range(L.shape[1]):
                nxt[r] += L[r, c] * h[c]
        if k < len(layers) - 1:
            nxt = np.array([v if v > 0 else 0.0 for v in nxt])
        h = nxt
    return h


def oracle_skip(p, x):
    h = oracle_two_layer(p.W1, np.eye(p.m), x)
    u = np.zeros(p.d_g)
    for r in range(p.d_g):
        for i in range(p.m):
            u[r] += p.V2[r, i] * h[i]
    z = oracle_inner(p.theta.layers, u)
    s = h.copy()
    for i in range(p.m):
        for c in range(p.d_o):
            s[i] += p.V1[i, c] * z[c]
    out = np.zeros(p.d_y)
    for r in range(p.d_y):
        for i in range(p.m):
            out[r] += p.W2[r, i] * s[i]
    return out


class TestTwoLayerForward:
    def test_hand_computed(self):
        p = TwoLayerParams(W1=np.eye(2), W2=np.array([[1.0, 1.0]]))
        out = forward_two_layer(p, np.array([1.0, -1.0]))
        np.testing.assert_array_equal(out, [1.0])

    def test_zero_input(self, rng):
        p = random_two_layer(rng, n=4, m=6, d_y=3)
        np.testing.assert_array_equal(forward_two_layer(p, np.zeros(4)), np.zeros(3))

    def test_matches_oracle(self, rng):
        for _ in range(10):
            p = random_two_layer(rng, n=3, m=5, d_y=2)
            x = rng.normal(size=3)
            np.testing.assert_allclose(forward_two_layer(p, x),
                                       oracle_two_layer(p.W1, p.W2, x), atol=1e-12)

    def test_batch_matches_single(self, rng):
        p = random_two_layer(rng, n=3, m=5, d_y=2)
        X = rng.normal(size=(7, 3))
        batch = forward_two_layer_batch(p, X)
        for i in range(7):
            np.testing.assert_allclose(batch[i], forward_two_layer(p, X[i]), atol=1e-12)

    def test_homogeneity_swap(self, rng):
        # scaling W1 by t equals scaling W2 by t (ReLU homogeneity)
        p = random_two_layer(rng, n=3, m=5, d_y=1)
        x = rng.normal(size=3)
        t = 2.75
        a = forward_two_layer(TwoLayerParams(t * p.W1, p.W2), x)
        b = forward_two_layer(TwoLayerParams(p.W1, t * p.W2), x)
        np.testing.assert_allclose(a, b, rtol=1e-12)

    def test_dimension_mismatch(self, rng):
        p = random_two_layer(rng, n=3, m=5, d_y=1)
        with pytest.raises(InvalidInputError):
            forward_two_layer(p, np.zeros(4))


class TestInnerForward:
    def test_single_identity_layer(self):
        g = InnerNetParams((np.eye(3),))
        z = np.array([1.0, -2.0, 0.5])
        np.testing.assert_array_equal(forward_inner(g, z), z)  # linear head

    def test_zero_input(self, rng):
        g = random_inner(rng, 4, (8,), 3)
        np.testing.assert_array_equal(forward_inner(g, np.zeros(4)), np.zeros(3))

    def test_matches_oracle(self, rng):
        for _ in range(10):
            g = random_inner(rng, 4, (6, 5), 3)
            z = rng.normal(size=4)
            np.testing.assert_allclose(forward_inner(g, z),
                                       oracle_inner(g.layers, z), atol=1e-12)


class TestSkipForward:
    def test_skip_branch_off_reduction(self, rng):
        p = random_skip(rng, n=3, m=6, d_y=2, d_g=4, d_o=4)
        p0 = p.replace(V1=np.zeros_like(p.V1))
        for _ in range(10):
            x = rng.normal(size=3)
            np.testing.assert_array_equal(forward_skip(p0, x),
                                          forward_two_layer(p0.two_layer_part(), x))

    def test_zero_theta_reduction(self, rng):
        p = random_skip(rng, n=3, m=6, d_y=2, d_g=4, d_o=4)
        p0 = p.replace(theta=InnerNetParams.zeros_like(p.theta))
        x = rng.normal(size=3)
        np.testing.assert_allclose(forward_skip(p0, x),
                                   forward_two_layer(p0.two_layer_part(), x), atol=1e-14)

    def test_matches_oracle(self, rng):
        for _ in range(10):
            p = random_skip(rng, n=3, m=5, d_y=2, d_g=4, d_o=3, hidden=(6,))
            x = rng.normal(size=3)
            np.testing.assert_allclose(forward_skip(p, x), oracle_skip(p, x), atol=1e-12)

    def test_parts_exposes_hidden(self, rng):
        p = random_skip(rng, n=3, m=5, d_y=1, d_g=4, d_o=4)
        x = rng.normal(size=3)
        _, h = forward_skip_parts(p, x)
        np.testing.assert_array_equal(h, np.maximum(p.W1 @ x, 0.0))

    def test_batch_matches_single(self, rng):
        p = random_skip(rng, n=3, m=5, d_y=2, d_g=4, d_o=4)
        X = rng.normal(size=(6, 3))
        batch = forward_skip_batch(p, X)
        for i in range(6):
            np.testing.assert_allclose(batch[i], forward_skip(p, X[i]), atol=1e-12)


class TestLinearSkipForward:
    def _params(self, rng, d_x=4, d_y=2, d_z=3):
        return LinearSkipParams(
            W=rng.normal(size=(d_y, d_x)),
            V=rng.normal(size=(d_x, d_z)),
            theta=random_inner(rng, d_x, (5,), d_z),
        )

    def test_v_zero_is_plain_linear(self, rng):
        p = self._params(rng)
        p0 = LinearSkipParams(W=p.W, V=np.zeros_like(p.V), theta=p.theta)
        x = rng.normal(size=4)
        np.testing.assert_allclose(forward_linear_skip(p0, x), p.W @ x, atol=1e-14)

    def test_w_zero(self, rng):
        p = self._params(rng)
        p0 = LinearSkipParams(W=np.zeros_like(p.W), V=p.V, theta=p.theta)
        x = rng.normal(size=4)
        np.testing.assert_array_equal(forward_linear_skip(p0, x), np.zeros(2))

    def test_matches_oracle(self, rng):
        p = self._params(rng)
        x = rng.normal(size=4)
        z = oracle_inner(p.theta.layers, x)
        s = x + p.V @ z
        np.testing.assert_allclose(forward_linear_skip(p, x), p.W @ s, atol=1e-12)

    def test_batch_matches_single(self, rng):
        p = self._params(rng)
        X = rng.normal(size=(5, 4))
        batch = forward_linear_skip_batch(p, X)
        for i in range(5):
            np.testing.assert_allclose(batch[i], forward_linear_skip(p, X[i]), atol=1e-12)

    def test_output_dim_guard(self, rng):
        with pytest.raises(UnsupportedConfigError):
            LinearSkipParams(
                W=rng.normal(size=(5, 4)),  # d_y=5 > min(d_x=4, d_z=3)
                V=rng.normal(size=(4, 3)),
                theta=random_inner(rng, 4, (5,), 3),
            )


class TestValidation:
    def test_dimension_checks(self, rng):
        with pytest.raises(InvalidInputError):
            TwoLayerParams(W1=np.ones((3, 2)), W2=np.ones((1, 4)))
        with pytest.raises(InvalidInputError):
            InnerNetParams((np.ones((3, 2)), np.ones((3, 4))))

    def test_nonfinite_rejected(self):
        with pytest.raises(InvalidInputError):
            TwoLayerParams(W1=np.array([[np.inf, 0.0]]), W2=np.ones((1, 1)))

    def test_params_are_readonly(self, rng):
        p = random_two_layer(rng, n=2, m=3, d_y=1)
        with pytest.raises(ValueError):
            p.W1[0, 0] = 5.0


class TestCheckpointRoundTrip:
    def test_two_layer(self, tmp_path, rng):
        p = random_two_layer(rng, n=3, m=5, d_y=2)
        f = tmp_path / "p.ckpt"
        save_checkpoint(p, f)
        q = load_checkpoint(f)
        np.testing.assert_array_equal(p.W1, q.W1)
        np.testing.assert_array_equal(p.W2, q.W2)

    def test_skip_exact(self, tmp_path, rng):
        p = random_skip(rng, n=3, m=5, d_y=2, d_g=4, d_o=3, hidden=(7, 6))
        f = tmp_path / "p.ckpt"
        save_checkpoint(p, f)
        q = load_checkpoint(f)
        np.testing.assert_array_equal(p.W1, q.W1)
        np.testing.assert_array_equal(p.W2, q.W2)
        np.testing.assert_array_equal(p.V2, q.V2)
        np.testing.assert_array_equal(p.V1, q.V1)
        for a, b in zip(p.theta.layers, q.theta.layers):
            np.testing.assert_array_equal(a, b)

    def test_linear_skip(self, tmp_path, rng):
        p = LinearSkipParams(
            W=rng.normal(size=(2, 4)),
            V=rng.normal(size=(4, 3)),
            theta=random_inner(rng, 4, (5,), 3),
        )
        f = tmp_path / "p.ckpt"
        save_checkpoint(p, f)
        q = load_checkpoint(f)
        np.testing.assert_array_equal(p.W, q.W)
        np.testing.assert_array_equal(p.V, q.V)

    def test_extreme_values_roundtrip(self, tmp_path):
        W1 = np.array([[1e-300, -1.2345678901234567e100], [np.pi, 1.0 / 3.0]])
        p = TwoLayerParams(W1=W1, W2=np.array([[0.1, -1e-17]]))
        f = tmp_path / "p.ckpt"
        save_checkpoint(p, f)
        q = load_checkpoint(f)
        np.testing.assert_array_equal(p.W1, q.W1)
        np.testing.assert_array_equal(p.W2, q.W2)

    def test_malformed_rejected(self):
        with pytest.raises(InvalidInputError):
            parse_checkpoint("not a checkpoint\n")
        p = TwoLayerParams(W1=np.eye(2), W2=np.ones((1, 2)))
        text = checkpoint_text(p).replace("m=2", "m=3")
        with pytest.raises(InvalidInputError):
            parse_checkpoint(text)
