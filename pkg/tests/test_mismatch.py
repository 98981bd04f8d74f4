"""Model-mismatch functional, its Jacobian, and the cost terms."""

import numpy as np
import pytest

from shadowda.linalg import BlockCovariance, weighted_sq_norm
from shadowda.mismatch import (cost_model, cost_obs, cost_obs_completed,
                               mismatch, mismatch_jacobian,
                               whitened_data_mismatch, whitened_model_mismatch)
from shadowda.models import ModelSpec, make_model
from shadowda.obs import (climatology_cached, complete, observe,
                          observed_steps)


def identity_model(dim):
    """A frozen state: F(x) = x, so mismatch is the pure increment."""
    return ModelSpec("frozen", dim, 1.0, 1.0, BlockCovariance(np.eye(dim)),
                     np.zeros(dim), lambda x: x,
                     lambda x: np.broadcast_to(np.eye(dim), (*x.shape[:-1], dim, dim)).copy())


class TestMismatch:
    def test_exact_orbit_vanishes(self):
        for name, n in [("dw", 50), ("l63", 50), ("l96", 50)]:
            model = make_model(name)
            u = model.orbit(model.ref_init, n)
            assert np.all(mismatch(model, u) == 0.0)

    def test_hand_value_double_well(self):
        model = make_model("dw")
        u = np.array([[0.0], [1.0]])
        # F(0) = 0, so the first mismatch entry is the raw jump
        assert mismatch(model, u)[0, 0] == pytest.approx(1.0)

    def test_identity_model_gives_increments(self):
        model = identity_model(3)
        rng = np.random.default_rng(0)
        u = rng.standard_normal((6, 3))
        assert np.array_equal(mismatch(model, u), np.diff(u, axis=0))

    def test_shape_validation(self):
        model = make_model("l63")
        with pytest.raises(ValueError):
            mismatch(model, np.zeros((5, 2)))
        with pytest.raises(ValueError):
            mismatch(model, np.zeros((1, 3)))
        with pytest.raises(ValueError):
            mismatch(model, np.zeros(3))


class TestMismatchJacobian:
    @pytest.mark.parametrize("name,n", [("dw", 8), ("l63", 6), ("l96", 4)])
    def test_matches_finite_differences(self, name, n):
        model = make_model(name)
        rng = np.random.default_rng(11)
        u = model.generate_truth(rng, n)
        jac = mismatch_jacobian(model, u)
        h = 1e-6
        for _ in range(20):
            v = rng.standard_normal(u.shape)
            v /= np.abs(v).max()
            fd = (mismatch(model, u + h * v) - mismatch(model, u - h * v)) / (2 * h)
            assert np.abs(jac.matvec(v) - fd).max() < 1e-6

    def test_identity_model_blocks(self):
        model = identity_model(2)
        u = np.random.default_rng(1).standard_normal((5, 2))
        jac = mismatch_jacobian(model, u)
        assert np.allclose(jac.lower, -np.eye(2))

    def test_double_well_equilibrium_block(self):
        model = make_model("dw")
        u = np.ones((3, 1))
        jac = mismatch_jacobian(model, u)
        # dF/dx at x=1 is 1 + 0.05(1-3) = 0.9
        assert np.allclose(jac.lower, -0.9)

    def test_adjoint_consistency(self):
        model = make_model("l96")
        rng = np.random.default_rng(2)
        u = model.generate_truth(rng, 5)
        jac = mismatch_jacobian(model, u)
        v = rng.standard_normal(u.shape)
        w = rng.standard_normal((5, model.dim))
        assert abs(np.vdot(w, jac.matvec(v)) - np.vdot(jac.rmatvec(w), v)) < 1e-12


class TestCosts:
    def test_cost_obs_zero_on_interpolant(self):
        model = make_model("l63")
        truth = model.generate_truth(np.random.default_rng(3), 30)
        obs = observe(truth, [0], observed_steps(30, 1), [[0.05]],
                      np.random.default_rng(4))
        hit = np.array(truth)
        hit[:, 0] = obs.values[:, 0]
        assert cost_obs(hit, obs) == 0.0

    def test_cost_obs_requires_covariance(self):
        model = make_model("dw")
        truth = model.generate_truth(np.random.default_rng(5), 10)
        exact = observe(truth, [0], observed_steps(10, 1), None,
                        np.random.default_rng(6))
        with pytest.raises(ValueError):
            cost_obs(truth, exact)

    def test_truth_cost_levels(self):
        # against its own twin data the truth is chi-square consistent:
        # both normalized costs sit near one half
        model = make_model("dw")
        truth = model.generate_truth(np.random.default_rng(7), 6000)
        obs = observe(truth, [0], observed_steps(6000, 1), [[0.16]],
                      np.random.default_rng(8))
        jo = cost_obs(truth, obs) / obs.count
        jm = cost_model(model, truth) / (6000 * model.dim)
        assert abs(jo - 0.5) < 0.05
        assert abs(jm - 0.5) < 0.05

    def test_cost_model_hand_value(self):
        model = identity_model(1)
        u = np.array([[0.0], [2.0], [2.0]])
        # one jump of size 2 under unit covariance: (1/2) * 4
        assert cost_model(model, u) == pytest.approx(2.0)

    def test_cost_obs_completed_matches_weighted_norm(self):
        model = make_model("l96")
        truth = model.generate_truth(np.random.default_rng(9), 80)
        obs = observe(truth, [0, 5, 10], observed_steps(80, 10),
                      0.01 * np.eye(3), np.random.default_rng(10))
        clim = climatology_cached(model, 2_000_000, chains=100)
        comp = complete(obs, clim)
        u = truth + 0.1
        direct = 0.5 * weighted_sq_norm(u - comp.values, comp.cov)
        assert cost_obs_completed(u, comp) == pytest.approx(direct, rel=1e-12)


class TestWhitened:
    def test_shapes_and_normalization(self):
        model = make_model("l63")
        truth = model.generate_truth(np.random.default_rng(12), 500)
        obs = observe(truth, [0], observed_steps(500, 1), [[0.05]],
                      np.random.default_rng(13))
        wd = whitened_data_mismatch(truth, obs)
        wm = whitened_model_mismatch(model, truth)
        assert wd.shape == obs.values.shape
        assert wm.shape == (500, model.dim)
        assert abs(wd.var() - 1.0) < 0.15
        assert abs(wm.var() - 1.0) < 0.15

    def test_whitened_data_requires_covariance(self):
        model = make_model("dw")
        truth = model.generate_truth(np.random.default_rng(14), 10)
        exact = observe(truth, [0], observed_steps(10, 1), None,
                        np.random.default_rng(15))
        with pytest.raises(ValueError):
            whitened_data_mismatch(truth, exact)

    def test_whitening_consistent_with_costs(self):
        model = make_model("l96")
        truth = model.generate_truth(np.random.default_rng(16), 60)
        obs = observe(truth, [0, 5, 10], observed_steps(60, 10),
                      0.01 * np.eye(3), np.random.default_rng(17))
        u = truth + 0.05
        wd = whitened_data_mismatch(u, obs)
        wm = whitened_model_mismatch(model, u)
        assert 0.5 * np.sum(wd * wd) == pytest.approx(cost_obs(u, obs), rel=1e-12)
        assert 0.5 * np.sum(wm * wm) == pytest.approx(cost_model(model, u), rel=1e-12)
