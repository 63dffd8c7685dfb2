import numpy as np
import pytest

from skippath import (
    Dataset,
    InvalidInputError,
    LossConfig,
    check_assumption1,
    grad,
    objective,
    objective_unregularized,
    regularizer,
)
from skippath.losses import (
    grad_norm,
    loss_values,
    radial_residual,
    scale_all,
)
from skippath.models import (
    InnerNetParams,
    LinearSkipParams,
    SkipNetParams,
    TwoLayerParams,
    flatten_params,
    random_inner,
    random_skip,
    random_two_layer,
)
from skippath.serialize import parse_dataset, dataset_text

from conftest import smooth_entries, smooth_skip_params


def oracle_regularizer(p: SkipNetParams) -> float:
    """Naive scalar-loop version of the group regularizer."""
    total = 0.0
    for i in range(p.m):
        r = sum(p.W1[i, j] ** 2 for j in range(p.n)) ** 0.5
        a = sum(abs(p.W2[k, i]) for k in range(p.d_y))
        b = sum(abs(p.V2[k, i]) for k in range(p.d_g))
        total += (a + b) * r
    M = p.W2 @ p.V1
    total += sum(abs(M[r, c]) for r in range(M.shape[0]) for c in range(M.shape[1]))
    for L in p.theta.layers:
        total += float(np.sqrt((L * L).sum()))
    return total


class TestDataset:
    def test_bound_and_sigma(self, rng):
        X = rng.normal(size=(40, 3))
        Y = rng.normal(size=(40, 2))
        d = Dataset(X=X, Y=Y)
        expected_bound = max(np.linalg.norm(X, axis=1).max(),
                             np.linalg.norm(Y, axis=1).max())
        assert d.bound_B == pytest.approx(expected_bound)
        np.testing.assert_allclose(d.sigma_x, X.T @ X / 40, atol=1e-14)
        w = np.linalg.eigvalsh(d.sigma_x)
        assert w.min() >= -1e-12  # positive semidefinite

    def test_rejects_nonfinite(self):
        with pytest.raises(InvalidInputError):
            Dataset(X=np.array([[np.nan]]), Y=np.array([[1.0]]))

    def test_file_roundtrip(self, rng):
        X = rng.normal(size=(9, 3))
        Y = rng.normal(size=(9, 2))
        d = Dataset(X=X, Y=Y)
        d2 = parse_dataset(dataset_text(d))
        np.testing.assert_array_equal(d.X, d2.X)
        np.testing.assert_array_equal(d.Y, d2.Y)
        assert d2.bound_B == d.bound_B

    def test_file_rejects_nonfinite(self):
        text = "skippath-dataset 1\nn 1\nd_y 1\ncount 1\nnan 1.0\n"
        with pytest.raises(InvalidInputError):
            parse_dataset(text)


class TestRegularizer:
    def test_zero_params(self):
        p = SkipNetParams(W1=np.zeros((3, 2)), W2=np.zeros((1, 3)),
                          V2=np.zeros((2, 3)), V1=np.zeros((3, 2)),
                          theta=InnerNetParams((np.zeros((2, 2)),)))
        assert regularizer(p) == 0.0

    def test_hand_computed_single_column(self):
        W1 = np.array([[1.0, 0.0], [0.0, 1.0]])  # unit rows
        W2 = np.array([[1.0, 0.0]])
        p = SkipNetParams(W1=W1, W2=W2, V2=np.zeros((2, 2)), V1=np.zeros((2, 2)),
                          theta=InnerNetParams((np.zeros((2, 2)),)))
        assert regularizer(p) == pytest.approx(1.0)

    def test_matches_oracle(self, rng):
        for _ in range(10):
            p = smooth_skip_params(rng)
            assert regularizer(p) == pytest.approx(oracle_regularizer(p), abs=1e-12)

    def test_w2_homogeneity(self, rng):
        # scaling W2 scales the ||w2_i|| and ||W2 V1|| terms linearly
        p = smooth_skip_params(rng)
        t = 3.5
        pt = p.replace(W2=t * p.W2)
        base_v2 = float(np.abs(p.V2).sum(axis=0) @ np.linalg.norm(p.W1, axis=1))
        base_th = sum(np.linalg.norm(L) for L in p.theta.layers)
        scaled_part = regularizer(pt) - base_v2 - base_th
        orig_part = regularizer(p) - base_v2 - base_th
        assert scaled_part == pytest.approx(t * orig_part, rel=1e-12)

    def test_two_layer_uses_entrywise_l1(self, rng):
        p = random_two_layer(rng, n=3, m=4, d_y=2)
        assert regularizer(p) == pytest.approx(np.abs(p.W2).sum())

    def test_linear_skip_unregularized(self, rng):
        p = LinearSkipParams(W=rng.normal(size=(2, 4)), V=rng.normal(size=(4, 3)),
                             theta=random_inner(rng, 4, (5,), 3))
        assert regularizer(p) == 0.0


class TestObjective:
    def test_perfect_fit_unregularized_is_zero(self, rng):
        p = random_two_layer(rng, n=3, m=4, d_y=1)
        X = rng.normal(size=(30, 3))
        Y = np.maximum(X @ p.W1.T, 0.0) @ p.W2.T
        d = Dataset(X=X, Y=Y)
        assert objective(p, d, LossConfig(kappa=0.0)) == pytest.approx(0.0, abs=1e-25)

    def test_zero_network_mse_is_mean_y_sq(self, rng):
        p = TwoLayerParams(W1=np.zeros((4, 3)), W2=np.zeros((2, 4)))
        X = rng.normal(size=(25, 3))
        Y = rng.normal(size=(25, 2))
        d = Dataset(X=X, Y=Y)
        expected = float((Y**2).sum(axis=1).mean())
        assert objective(p, d, LossConfig(kappa=0.0)) == pytest.approx(expected)

    def test_definitional_decomposition_exact(self, rng, small_dataset):
        p = smooth_skip_params(rng, d_y=1)
        cfg = LossConfig(kappa=0.37)
        lhs = objective(p, small_dataset, cfg)
        rhs = objective_unregularized(p, small_dataset, cfg) + cfg.kappa * regularizer(p)
        assert lhs == rhs  # objective computes literally this sum

    def test_huber_matches_mse_inside_delta(self, rng, small_dataset):
        p = smooth_skip_params(rng, d_y=1)
        big_delta = LossConfig(kind="huber", delta=1e6, kappa=0.0)
        mse = LossConfig(kind="mse", kappa=0.0)
        a = objective(p, small_dataset, big_delta)
        b = objective(p, small_dataset, mse)
        assert a == pytest.approx(b, rel=1e-12)

    def test_huber_linear_tail(self):
        out = np.array([[10.0]])
        tgt = np.array([[0.0]])
        cfg = LossConfig(kind="huber", delta=1.0)
        assert loss_values(out, tgt, cfg)[0] == pytest.approx(1.0 * (2 * 10.0 - 1.0))

    def test_dim_mismatch(self, rng, small_dataset):
        p = random_two_layer(rng, n=3, m=4, d_y=2)  # dataset d_y = 1
        with pytest.raises(InvalidInputError):
            objective(p, small_dataset, LossConfig())


def finite_difference(p_template, d, cfg, flatten, unflatten, v, idx, h=1e-6):
    out = np.empty(len(idx))
    for k, i in enumerate(idx):
        vp = v.copy()
        vp[i] += h
        vm = v.copy()
        vm[i] -= h
        out[k] = (objective(unflatten(vp), d, cfg) - objective(unflatten(vm), d, cfg)) / (2 * h)
    return out


class TestGradients:
    """Hand gradients against central finite differences at smooth points."""

    def _check_family(self, rng, make_params, unflatten, n_points, d, cfg, rel=1e-5):
        worst = 0.0
        for _ in range(n_points):
            p = make_params(rng)
            g = grad(p, d, cfg)
            gv = flatten_params(g)
            pv = flatten_params(p)
            idx = rng.choice(pv.size, size=min(12, pv.size), replace=False)
            fd = finite_difference(p, d, cfg, flatten_params, unflatten, pv, idx)
            denom = np.maximum(np.abs(fd), 1e-8)
            worst = max(worst, float(np.max(np.abs(fd - gv[idx]) / denom)))
        assert worst <= rel

    def test_two_layer_mse(self, rng, small_dataset):
        shapes = [(5, 3), (1, 5)]

        def unflatten(v):
            W1 = v[:15].reshape(5, 3)
            W2 = v[15:].reshape(1, 5)
            return TwoLayerParams(W1, W2)

        self._check_family(
            rng,
            lambda r: TwoLayerParams(smooth_entries(r, (5, 3)), smooth_entries(r, (1, 5))),
            unflatten, 20, small_dataset, LossConfig(kappa=0.05))

    def test_skip_mse_and_huber(self, rng, small_dataset):
        def unflatten(v):
            shapes = [(6, 3), (1, 6), (4, 6), (6, 4), (8, 4), (4, 8)]
            mats, o = [], 0
            for s in shapes:
                k = s[0] * s[1]
                mats.append(v[o:o + k].reshape(s))
                o += k
            return SkipNetParams(W1=mats[0], W2=mats[1], V2=mats[2], V1=mats[3],
                                 theta=InnerNetParams((mats[4], mats[5])))

        for cfg in (LossConfig(kind="mse", kappa=0.05),
                    LossConfig(kind="huber", delta=0.8, kappa=0.05)):
            self._check_family(
                rng, lambda r: smooth_skip_params(r, d_y=1, m=6), unflatten,
                12, small_dataset, cfg)

    def test_linear_skip(self, rng):
        X = rng.uniform(-1, 1, size=(50, 4))
        Y = rng.uniform(-1, 1, size=(50, 2))
        d = Dataset(X=X, Y=Y)
        theta = random_inner(rng, 4, (5,), 3)

        def unflatten(v):
            W = v[:8].reshape(2, 4)
            V = v[8:20].reshape(4, 3)
            return LinearSkipParams(W=W, V=V, theta=theta)

        for _ in range(20):
            p = LinearSkipParams(W=smooth_entries(rng, (2, 4)),
                                 V=smooth_entries(rng, (4, 3)), theta=theta)
            g = grad(p, d, LossConfig(kappa=0.0))
            pv = np.concatenate([p.W.ravel(), p.V.ravel()])
            gv = np.concatenate([g.W.ravel(), g.V.ravel()])
            idx = rng.choice(20, size=10, replace=False)
            fd = np.empty(10)
            for k, i in enumerate(idx):
                vp = pv.copy(); vp[i] += 1e-6
                vm = pv.copy(); vm[i] -= 1e-6
                fd[k] = (objective(unflatten(vp), d, LossConfig()) -
                         objective(unflatten(vm), d, LossConfig())) / 2e-6
            np.testing.assert_allclose(gv[idx], fd, rtol=1e-5, atol=1e-8)

    def test_global_min_slice_has_zero_w2_grad(self, rng):
        # W2 = 0, V1 = 0, kappa = 0, y = 0: the W2 slice is at its optimum
        p = smooth_skip_params(rng, d_y=1, m=5)
        p = p.replace(W2=np.zeros_like(p.W2), V1=np.zeros_like(p.V1))
        X = rng.normal(size=(30, 3))
        d = Dataset(X=X, Y=np.zeros((30, 1)))
        g = grad(p, d, LossConfig(kappa=0.0))
        np.testing.assert_array_equal(g.W2, np.zeros_like(p.W2))

    def test_reparameterization_direction_is_flat(self, rng, small_dataset):
        # scaling W1 row i by t and W2 column i by 1/t keeps f constant, so
        # the unregularized loss has zero derivative along that direction
        p = TwoLayerParams(smooth_entries(rng, (5, 3)), smooth_entries(rng, (1, 5)))
        g = grad(p, small_dataset, LossConfig(kappa=0.0))
        for i in range(5):
            radial = float(g.W1[i] @ p.W1[i] - g.W2[:, i] @ p.W2[:, i])
            assert abs(radial) <= 1e-10


class TestConvexityInFinalLayer:
    def test_midpoint_convexity_in_w2(self, rng, small_dataset):
        cfg = LossConfig(kappa=0.1)
        base = smooth_skip_params(rng, d_y=1, m=6)
        for _ in range(40):
            A = rng.normal(size=base.W2.shape)
            B = rng.normal(size=base.W2.shape)
            fa = objective(base.replace(W2=A), small_dataset, cfg)
            fb = objective(base.replace(W2=B), small_dataset, cfg)
            fm = objective(base.replace(W2=(A + B) / 2), small_dataset, cfg)
            assert fm <= (fa + fb) / 2 + 1e-10


class TestAssumptionChecks:
    def test_zero_point_group_norms(self, rng, small_dataset):
        p = SkipNetParams(W1=np.zeros((4, 3)), W2=np.zeros((1, 4)),
                          V2=np.zeros((2, 4)), V1=np.zeros((4, 2)),
                          theta=InnerNetParams((np.zeros((2, 2)),)))
        rep = check_assumption1(p, small_dataset, LossConfig(kappa=0.01))
        assert rep.w2_group == rep.v2_group == rep.w2v1_l1 == rep.theta_frob == 0.0
        assert rep.c_bound == 0.0

    def test_c_bound_is_max_group_norm(self, rng, small_dataset):
        p = smooth_skip_params(rng, d_y=1)
        rep = check_assumption1(p, small_dataset, LossConfig(kappa=0.01))
        assert rep.c_bound == max(rep.w2_group, rep.v2_group, rep.w2v1_l1,
                                  rep.theta_frob)

    def test_radial_residual_is_directional_derivative(self, rng, small_dataset):
        # |phi'(1)| = |<grad F, params>|; compare against the analytic form
        p = smooth_skip_params(rng, d_y=1)
        cfg = LossConfig(kappa=0.02)
        g = grad(p, small_dataset, cfg)
        analytic = abs(float(flatten_params(g) @ flatten_params(p)))
        # theta layers enter R linearly, not quadratically, which the
        # sign-based gradient already covers; the central difference must agree
        assert radial_residual(p, small_dataset, cfg) == pytest.approx(
            analytic, rel=1e-5, abs=1e-7)

    def test_scale_all_scales_every_matrix(self, rng):
        p = smooth_skip_params(rng)
        q = scale_all(p, 2.0)
        np.testing.assert_array_equal(q.W1, 2.0 * p.W1)
        np.testing.assert_array_equal(q.theta.layers[0], 2.0 * p.theta.layers[0])

    def test_g_lipschitz_positive(self, rng, small_dataset):
        p = smooth_skip_params(rng, d_y=1)
        rep = check_assumption1(p, small_dataset, LossConfig())
        assert rep.g_lipschitz > 0.0


def test_grad_norm_matches_flatten(rng, small_dataset):
    p = smooth_skip_params(rng, d_y=1)
    g = grad(p, small_dataset, LossConfig(kappa=0.01))
    assert grad_norm(g) == pytest.approx(float(np.linalg.norm(flatten_params(g))))
