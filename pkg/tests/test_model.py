import math
import warnings

import numpy as np
import pytest

from fkswitch.errors import (
    BetaOutOfRange,
    ModelError,
    ModelWarning,
    NegativeOffDiagonal,
    NegativeRate,
    NonPositiveSigma,
    NonSquare,
    RegimeOutOfRange,
    RelationViolated,
    RowSumNonZero,
    StrikeNonPositive,
)
from fkswitch.model import (
    DampeningSpec,
    PayoffSpec,
    PricingQuery,
    build_model,
    payoff_eval,
    validate_generator,
    warn_if_uncertified,
)


class TestGenerator:
    def test_two_state_holding_rates(self):
        g = validate_generator([[-1.0, 1.0], [2.0, -2.0]])
        np.testing.assert_array_equal(g.holding_rates, [1.0, 2.0])
        assert g.has_switching()

    def test_single_absorbing_state(self):
        g = validate_generator([[0.0]])
        np.testing.assert_array_equal(g.holding_rates, [0.0])
        assert not g.has_switching()

    def test_row_sum_rejected(self):
        with pytest.raises(RowSumNonZero):
            validate_generator([[-1.0, 0.5], [1.0, -1.0]])

    def test_negative_off_diagonal(self):
        with pytest.raises(NegativeOffDiagonal):
            validate_generator([[1.0, -1.0], [1.0, -1.0]])

    def test_non_square(self):
        with pytest.raises(NonSquare):
            validate_generator([[0.0, 0.0]])

    def test_row_sum_tolerance(self):
        validate_generator([[-1.0, 1.0 + 5e-13], [0.0, 0.0]])
        with pytest.raises(RowSumNonZero):
            validate_generator([[-1.0, 1.0 + 5e-12], [0.0, 0.0]])

    def test_rates_read_only(self):
        g = validate_generator([[-1.0, 1.0], [2.0, -2.0]])
        with pytest.raises(ValueError):
            g.rates[0, 0] = 3.0

    def test_random_generators_satisfy_invariants(self, rng):
        for _ in range(20):
            m = int(rng.integers(1, 6))
            off = rng.uniform(0.0, 3.0, (m, m))
            np.fill_diagonal(off, 0.0)
            q = off - np.diag(off.sum(axis=1))
            g = validate_generator(q)
            assert np.all(np.abs(g.rates.sum(axis=1)) <= 1e-12)
            assert np.all(g.holding_rates >= 0.0)


class TestBuildModel:
    def test_theta_derived(self):
        m = build_model(0.5, [0.2], [0.05], 1.0, validate_generator([[0.0]]))
        assert m.theta[0] == pytest.approx(0.01, abs=1e-15)

    def test_theta_exact_cancellation(self):
        m = build_model(1.0, [math.sqrt(2.0)], [1.0], 1.0, validate_generator([[0.0]]))
        assert abs(m.theta[0]) <= 1e-15

    def test_beta_above_one(self):
        with pytest.raises(BetaOutOfRange):
            build_model(1.5, [0.2], [0.05], 1.0, validate_generator([[0.0]]))

    @pytest.mark.parametrize("beta", [0.0, -0.1])
    def test_beta_nonpositive(self, beta):
        with pytest.raises(BetaOutOfRange):
            build_model(beta, [0.2], [0.05], 1.0, validate_generator([[0.0]]))

    def test_sigma_and_rate_checks(self):
        g = validate_generator([[0.0]])
        with pytest.raises(NonPositiveSigma):
            build_model(0.5, [0.0], [0.05], 1.0, g)
        with pytest.raises(NegativeRate):
            build_model(0.5, [0.2], [-0.01], 1.0, g)

    def test_zero_rate_warns(self):
        with pytest.warns(ModelWarning):
            build_model(0.5, [0.2], [0.0], 1.0, validate_generator([[0.0]]))

    def test_verify_mode(self):
        g = validate_generator([[0.0]])
        ok = build_model(0.5, [0.2], [0.05], 1.0, g, theta=[0.01], derive_theta=False)
        assert ok.theta[0] == 0.01
        with pytest.raises(RelationViolated):
            build_model(0.5, [0.2], [0.05], 1.0, g, theta=[0.1], derive_theta=False)
        loose = build_model(0.5, [0.2], [0.05], 1.0, g, theta=[0.1], derive_theta=False, verify=False)
        assert loose.theta[0] == 0.1

    def test_relation_holds_for_random_models(self, rng):
        for _ in range(50):
            m = int(rng.integers(1, 4))
            beta = float(rng.uniform(0.05, 1.0))
            sigma = rng.uniform(0.01, 1.0, m)
            r = rng.uniform(0.0, 0.2, m)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", ModelWarning)
                model = build_model(beta, sigma, r, 1.0, validate_generator(np.zeros((m, m))))
            assert np.all(np.abs(model.relation_residual()) <= 1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ModelError):
            build_model(0.5, [0.2, 0.3], [0.05], 1.0, validate_generator([[0.0]]))

    def test_regime_check(self):
        m = build_model(0.5, [0.2], [0.05], 1.0, validate_generator([[0.0]]))
        with pytest.raises(RegimeOutOfRange):
            m.check_regime(1)


class TestPayoff:
    def test_call_values(self):
        c = PayoffSpec.call(1.0)
        assert payoff_eval(c, 0.0, 0) == 0.0
        assert payoff_eval(c, math.log(2.0), 0) == pytest.approx(1.0, rel=1e-15)

    def test_constant(self):
        c = PayoffSpec.constant(1.0)
        np.testing.assert_array_equal(payoff_eval(c, np.linspace(-5, 5, 7), 1), 1.0)

    def test_call_nonnegative_and_monotone(self, rng):
        c = PayoffSpec.call(1.3)
        x = np.sort(rng.uniform(-4.0, 4.0, 500))
        v = c.evaluate(x)
        assert np.all(v >= 0.0)
        assert np.all(np.diff(v) >= 0.0)

    def test_strike_positive(self):
        with pytest.raises(StrikeNonPositive):
            PayoffSpec.call(0.0)

    def test_custom_interpolates_and_respects_bound(self):
        p = PayoffSpec.custom([-1.0, 0.0, 1.0], [[0.0, 1.0, 0.0], [1.0, 1.0, 1.0]], bound=1.0)
        assert p.evaluate(0.5, 0) == pytest.approx(0.5)
        assert p.evaluate(0.5, 1) == pytest.approx(1.0)
        assert p.evaluate(7.0, 0) == 0.0
        with pytest.raises(ModelError):
            PayoffSpec.custom([0.0, 1.0], [0.0, 2.0], bound=1.0)

    def test_boundedness(self):
        assert not PayoffSpec.call(1.0).is_bounded
        assert PayoffSpec.constant(2.0).is_bounded


class TestDampening:
    def test_ou_call_terminal_value(self):
        m = build_model(0.5, [0.2], [0.05], 2.0, validate_generator([[0.0]]))
        d = DampeningSpec.ou_call(m)
        x = np.linspace(-3, 3, 13)
        np.testing.assert_allclose(d.evaluate(2.0, x), np.exp(x), rtol=1e-15)

    def test_positive_on_grid(self):
        m = build_model(0.7, [0.3], [0.05], 1.0, validate_generator([[0.0]]))
        tt, xx = np.meshgrid(np.linspace(0, 1, 21), np.linspace(-5, 5, 41))
        assert np.all(DampeningSpec.ou_call(m).evaluate(tt, xx) > 0.0)
        assert np.all(DampeningSpec.unit().evaluate(tt, xx) == 1.0)

    def test_unbounded_with_unit_warns(self):
        with pytest.warns(ModelWarning):
            warn_if_uncertified(PayoffSpec.call(1.0), DampeningSpec.unit())


def test_query_bounds():
    m = build_model(0.5, [0.2], [0.05], 1.0, validate_generator([[0.0]]))
    PricingQuery(1.0, 0.0, 0).check(m)
    with pytest.raises(ModelError):
        PricingQuery(1.5, 0.0, 0).check(m)
    with pytest.raises(RegimeOutOfRange):
        PricingQuery(0.0, 0.0, 2).check(m)
