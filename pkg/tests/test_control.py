import math

import numpy as np
import pytest

from mfglab.control import (
    descend_discrete,
    differentiability_probe,
    discrete_cost_and_gradient,
    enumerate_stationary,
    shoot,
    static_U,
    static_U_minimize,
    symmetric_minimizer_root,
    value_function,
)
from mfglab.errors import InvalidReduction, NoStationaryPoint
from mfglab.potentials import (
    ModelSpec,
    make_delarue_terminal,
    make_logcosh_terminal,
    make_quadratic,
    make_radial_logcosh,
    make_zero,
)


def model(f, g, dim=1, b=0.0, nu0=0.0, T=1.0):
    return ModelSpec(dim=dim, b=b * np.eye(dim), sigma=1.0, T=T, f=f, g=g,
                     nu0=np.full(dim, float(nu0)))


def logcosh_model(kappa=4.0, nu0=0.0):
    # the running potential -|m|^2/2 cancels the state cost, so optimal
    # controls are constant in time
    return model(make_quadratic(-1.0, 1), make_logcosh_terminal(kappa), nu0=nu0)


AHAT = symmetric_minimizer_root(4.0)

# a lean start lattice and step count keep the multi-start probes fast while
# still reaching all three basins of the kappa = 4 model
FAST = {"steps_per_unit": 250, "start_grid": np.linspace(-5.0, 5.0, 9)[:, None]}


class TestShoot:
    def test_null_system(self):
        spec = model(make_zero(1), make_zero(1))
        sol = shoot(spec, 0.0, [0.0], [0.0])
        assert sol is not None
        assert np.all(sol.m == 0.0) and np.all(sol.eta == 0.0)
        assert sol.terminal_residual == 0.0

    def test_logcosh_constant_adjoint(self):
        sol = shoot(logcosh_model(), 0.0, [0.0], [-2.0])
        assert sol is not None
        assert sol.eta0[0] == pytest.approx(-AHAT, abs=1e-8)
        assert np.max(np.abs(sol.eta - sol.eta0)) < 1e-8
        assert sol.m[-1, 0] == pytest.approx(AHAT, abs=1e-6)  # T = 1

    def test_root_value(self):
        assert AHAT == pytest.approx(1.9150, abs=1e-4)
        assert 2 * AHAT == pytest.approx(4.0 * math.tanh(AHAT), abs=1e-10)

    def test_beta_is_minus_eta(self):
        sol = shoot(logcosh_model(), 0.0, [0.3], [1.0])
        assert np.array_equal(sol.beta, -sol.eta)

    def test_dynamics_residual(self):
        sol = shoot(logcosh_model(nu0=0.5), 0.0, [0.5], [-2.0])
        dt = sol.grid.dt
        mdot = np.diff(sol.m, axis=0) / dt
        beta_mid = 0.5 * (sol.beta[1:] + sol.beta[:-1])
        assert np.max(np.abs(mdot - beta_mid)) < 1e-6  # b = 0

    def test_delarue_closed_form(self):
        g = make_delarue_terminal(0.0, 1.0, 0.1)
        spec = model(make_zero(1), g)
        sol = shoot(spec, 0.0, [0.0], [-0.5])
        ref = math.exp(-1.0) * np.sinh(sol.grid.nodes)  # w_t int_0^t w^-2, b=0
        assert sol is not None
        assert np.max(np.abs(sol.m[:, 0] - ref)) < 1e-3
        assert sol.m[-1, 0] == pytest.approx((1 - math.exp(-2)) / 2, abs=1e-3)


class TestEnumerate:
    def test_convex_unique(self):
        spec = model(make_zero(1), make_quadratic(1.0, 1), nu0=1.0)
        sset = enumerate_stationary(spec, 0.0, [1.0])
        assert len(sset.solutions) == 1
        assert sset.multiplicity == 1
        assert sset.solutions[0].classification == "minimizer"

    def test_logcosh_three_points(self):
        sset = enumerate_stationary(logcosh_model(), 0.0, [0.0])
        assert len(sset.solutions) == 3
        assert sset.multiplicity == 2
        etas = sorted(float(s.eta0[0]) for s in sset.solutions)
        assert etas == pytest.approx([-AHAT, 0.0, AHAT], abs=1e-6)
        classes = [s.classification for s in sset.solutions]
        assert classes.count("minimizer") == 2
        assert classes.count("stationary-only") == 1
        # the stationary-only point is the zero equilibrium
        zero = [s for s in sset.solutions if s.classification == "stationary-only"][0]
        assert abs(zero.eta0[0]) < 1e-6

    def test_negation_symmetry_of_set(self):
        sset = enumerate_stationary(logcosh_model(), 0.0, [0.0])
        etas = sorted(float(s.eta0[0]) for s in sset.solutions)
        assert etas == pytest.approx([-e for e in etas[::-1]], abs=1e-8)

    def test_tilted_start_unique_minimizer(self):
        sset = enumerate_stationary(logcosh_model(nu0=0.5), 0.0, [0.5])
        mins = sset.minimizers()
        assert len(mins) == 1
        assert mins[0].m[-1, 0] > 0
        others = [s for s in sset.solutions if s.classification != "minimizer"]
        assert all(s.cost > sset.min_cost for s in others)

    def test_sorted_by_cost(self):
        sset = enumerate_stationary(logcosh_model(), 0.0, [0.0])
        costs = [s.cost for s in sset.solutions]
        assert costs == sorted(costs)

    def test_thread_count_irrelevant(self):
        s1 = enumerate_stationary(logcosh_model(), 0.0, [0.0], threads=1)
        s4 = enumerate_stationary(logcosh_model(), 0.0, [0.0], threads=4)
        e1 = sorted(float(s.eta0[0]) for s in s1.solutions)
        e4 = sorted(float(s.eta0[0]) for s in s4.solutions)
        assert e1 == pytest.approx(e4, abs=1e-12)


class TestValueFunction:
    def test_pure_lq(self):
        spec = model(make_zero(1), make_zero(1), nu0=0.7)
        # P == 1 is the stationary Riccati point, so v = |nu0|^2 / 2
        assert value_function(spec, 0.0, [0.7], cross_check=False) == pytest.approx(
            0.5 * 0.49, abs=1e-6)

    def test_logcosh_value_at_zero(self):
        v = value_function(logcosh_model(), 0.0, [0.0], cross_check=False)
        expect = AHAT**2 - 4.0 * math.log(math.cosh(AHAT))
        assert v == pytest.approx(expect, abs=1e-6)

    def test_empty_horizon(self):
        spec = logcosh_model()
        v = value_function(spec, 1.0, [0.8])
        assert v == pytest.approx(0.5 * 0.64 + spec.g.value([0.8]))

    def test_even_in_nu0(self):
        spec = logcosh_model()
        for x in (0.3, 0.9):
            vp = value_function(spec, 0.0, [x], cross_check=False, **FAST)
            vm = value_function(spec, 0.0, [-x], cross_check=False, **FAST)
            assert vp == pytest.approx(vm, abs=1e-8)

    def test_cross_check_agrees(self):
        import warnings
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            value_function(logcosh_model(nu0=0.5), 0.0, [0.5])


class TestDiscreteDescent:
    def test_gradient_matches_fd(self):
        spec = logcosh_model(nu0=0.4)
        gen = np.random.default_rng(0)
        beta = gen.normal(size=(40, 1))
        _, grad = discrete_cost_and_gradient(spec, 0.0, [0.4], beta)
        h = 1e-6
        for idx in [(0, 0), (17, 0), (39, 0)]:
            bp = beta.copy(); bp[idx] += h
            bm = beta.copy(); bm[idx] -= h
            cp, _ = discrete_cost_and_gradient(spec, 0.0, [0.4], bp)
            cm, _ = discrete_cost_and_gradient(spec, 0.0, [0.4], bm)
            assert grad[idx] == pytest.approx((cp - cm) / (2 * h), abs=1e-8)

    def test_descent_from_shooting_control_has_tiny_gradient(self):
        # the discrete functional's own optimum sits within a short polish of
        # the sampled continuous optimum
        spec = logcosh_model(nu0=0.5)
        sol = shoot(spec, 0.0, [0.5], [-2.0], steps_per_unit=200)
        beta0 = sol.beta[:-1]
        _, cost, grad = descend_discrete(spec, 0.0, [0.5], beta0)
        assert float(np.linalg.norm(grad)) < 1e-6
        assert cost == pytest.approx(sol.cost, abs=1e-3)


class TestDifferentiability:
    def test_quadratic_differentiable(self):
        spec = model(make_zero(1), make_quadratic(1.0, 1), nu0=0.4)
        for x in (-0.5, 0.0, 0.8):
            assert differentiability_probe(spec, 0.0, [x], **FAST)["verdict"] == "differentiable"

    def test_logcosh_kink_at_zero(self):
        probe = differentiability_probe(logcosh_model(), 0.0, [0.0], **FAST)
        assert probe["verdict"] == "kink"
        # two distinct one-sided slopes near ±a-hat
        assert probe["right"][0] == pytest.approx(-AHAT, abs=0.05)
        assert probe["left"][0] == pytest.approx(AHAT, abs=0.05)

    def test_logcosh_smooth_off_zero(self):
        probe = differentiability_probe(logcosh_model(nu0=0.5), 0.0, [0.5], **FAST)
        assert probe["verdict"] == "differentiable"


class TestStaticReduction:
    def test_pure_quadratic(self):
        spec = model(make_quadratic(-1.0, 1), make_zero(1))
        assert static_U(spec, 0.0, [0.0], [1.5]) == pytest.approx(1.5**2)
        mins, best, on_sphere = static_U_minimize(spec, 0.0, [0.0])
        assert best == pytest.approx(0.0, abs=1e-10)
        assert all(abs(a[0]) < 1e-5 for a in mins)

    def test_logcosh_two_minimizers(self):
        spec = logcosh_model()
        mins, best, on_sphere = static_U_minimize(spec, 0.0, [0.0])
        vals = sorted(float(a[0]) for a in mins)
        assert vals == pytest.approx([-AHAT, AHAT], abs=1e-6)
        assert best == pytest.approx(AHAT**2 - 4 * math.log(math.cosh(AHAT)), abs=1e-9)

    def test_radial_sphere_of_minimizers(self):
        spec = model(make_quadratic(-1.0, 2), make_radial_logcosh(4.0, 2), dim=2)
        mins, best, on_sphere = static_U_minimize(spec, 0.0, np.zeros(2))
        assert on_sphere
        for a in mins:
            assert np.linalg.norm(a) == pytest.approx(AHAT, abs=1e-6)
            assert static_U(spec, 0.0, np.zeros(2), a) == pytest.approx(best, abs=1e-9)

    def test_invalid_reduction(self):
        with pytest.raises(InvalidReduction):
            static_U(model(make_zero(1), make_zero(1), b=0.5), 0.0, [0.0], [0.0])
        with pytest.raises(InvalidReduction):
            # f = 0 leaves the |m|^2/2 running cost in place
            static_U(model(make_zero(1), make_logcosh_terminal(4.0)), 0.0, [0.0], [0.0])

    def test_matches_shooting_minimum(self):
        for nu0 in (0.0, 0.5):
            spec = logcosh_model(nu0=nu0)
            sset = enumerate_stationary(spec, 0.0, [nu0])
            _, best, _ = static_U_minimize(spec, 0.0, [nu0])
            assert abs(best - sset.min_cost) < 1e-6
