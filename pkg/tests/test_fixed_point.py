import math

import numpy as np
import pytest

from conftest import identical_pair_model, single_regime_model, two_regime_model, zero_rate_model
from fkswitch.analytics import v0_call
from fkswitch.errors import GridClampWarning, MaxIterExceeded, QuadratureOverflow, RhoNotContractive
from fkswitch.fixed_point import (
    PicardReport,
    TransitionOperator,
    apply_T,
    build_h0,
    contraction_factor,
    error_bounds,
    picard_solve,
    price,
)
from fkswitch.grid import GridFunction, GridSpec, sup_norm
from fkswitch.model import DampeningSpec, PayoffSpec, PricingQuery, validate_generator


def small_grid(model, nt=11, nx=41, **kw):
    return GridSpec.default(model, nt=nt, nx=nx, **kw)


@pytest.fixture(scope="module")
def operator():
    model = two_regime_model()
    spec = small_grid(model, nt=9, nx=31)
    return TransitionOperator(model, DampeningSpec.ou_call(model), spec)


class TestContractionFactor:
    def test_examples(self):
        assert contraction_factor(validate_generator([[0.0]]), 3.0) == 0.0
        g = validate_generator([[-1.0, 1.0], [2.0, -2.0]])
        assert contraction_factor(g, 1.0) == pytest.approx(1 - math.exp(-2.0), abs=1e-15)
        assert contraction_factor(validate_generator([[-math.log(2.0), math.log(2.0)], [0.0, 0.0]]), 1.0) == (
            pytest.approx(0.5, abs=1e-15)
        )


class TestH0:
    def test_constant_unit(self):
        model = zero_rate_model(((-1.0, 1.0), (1.0, -1.0)))
        spec = small_grid(model)
        h0 = build_h0(model, PayoffSpec.constant(1.0), DampeningSpec.unit(), spec)
        expect = np.exp(-(1.0 - spec.times))[:, None]
        np.testing.assert_allclose(h0.values[:, :, 0], np.broadcast_to(expect, (spec.times.size, spec.xs.size)),
                                   rtol=1e-15)

    def test_single_regime_call(self):
        model = single_regime_model()
        spec = small_grid(model)
        h0 = build_h0(model, PayoffSpec.call(1.0), DampeningSpec.unit(), spec)
        for k in (0, 5, 10):
            np.testing.assert_array_equal(h0.values[k, :, 0], v0_call(model, 1.0, spec.times[k], spec.xs, 0))

    def test_terminal_dampened_payoff(self):
        model = two_regime_model()
        spec = small_grid(model)
        h0 = build_h0(model, PayoffSpec.call(1.0), DampeningSpec.ou_call(model), spec)
        expect = np.maximum(np.exp(spec.xs) - 1.0, 0.0) * np.exp(-spec.xs)
        np.testing.assert_allclose(h0.values[-1, :, 1], expect, rtol=1e-14)


class TestOperator:
    def test_zero_function(self):
        model = two_regime_model()
        spec = small_grid(model)
        out = apply_T(model, DampeningSpec.ou_call(model), GridFunction.constant(spec, 0.0))
        assert sup_norm(out) == 0.0

    def test_single_regime_vanishes(self):
        model = single_regime_model()
        spec = small_grid(model)
        out = apply_T(model, DampeningSpec.ou_call(model), GridFunction.constant(spec, 1.0))
        assert sup_norm(out) == 0.0

    def test_kernel_mass_of_ones(self):
        model = zero_rate_model(((-1.0, 1.0), (1.0, -1.0)))
        spec = small_grid(model)
        out = apply_T(model, DampeningSpec.unit(), GridFunction.constant(spec, 1.0))
        expect = -np.expm1(-(1.0 - spec.times))
        for i in range(2):
            err = np.abs(out.values[:, :, i] - expect[:, None])
            assert np.max(err) <= 1e-8

    def test_linearity(self, operator, rng):
        spec = operator.spec
        h1 = GridFunction(spec, rng.uniform(-1, 1, spec.shape))
        h2 = GridFunction(spec, rng.uniform(-1, 1, spec.shape))
        a, b = 0.7, -2.3
        lhs = operator.apply(h1.scale(a) + h2.scale(b))
        rhs = operator.apply(h1).scale(a) + operator.apply(h2).scale(b)
        assert sup_norm(lhs - rhs) <= 1e-10

    def test_positivity(self, operator, rng):
        spec = operator.spec
        for _ in range(10):
            out = operator.apply(GridFunction(spec, rng.uniform(0, 1, spec.shape)))
            assert np.all(out.values >= 0.0)

    def test_contraction_pairs(self, operator, rng):
        rho = contraction_factor(operator.model.generator, operator.model.horizon)
        spec = operator.spec
        for _ in range(50):
            h1 = GridFunction(spec, rng.uniform(-1, 1, spec.shape))
            h2 = GridFunction(spec, rng.uniform(-1, 1, spec.shape))
            assert sup_norm(operator.apply(h1) - operator.apply(h2)) <= rho * sup_norm(h1 - h2) + 1e-8

    def test_rejects_foreign_grid(self, operator):
        other = GridSpec(np.linspace(0, 1, 3), np.linspace(-1, 1, 5), 2)
        with pytest.raises(ValueError):
            operator.apply(GridFunction.constant(other, 1.0))

    def test_threaded_assembly_matches(self):
        model = two_regime_model()
        spec = small_grid(model, nt=6, nx=21)
        d = DampeningSpec.ou_call(model)
        a = TransitionOperator(model, d, spec, workers=1)
        b = TransitionOperator(model, d, spec, workers=4)
        for key in a.blocks:
            np.testing.assert_array_equal(a.blocks[key], b.blocks[key])


class TestErrorBounds:
    def test_hand_values(self):
        rep = PicardReport(rho=0.5, deltas=[1.0, 0.5, 0.25], seconds=[0.0] * 3)
        pri, post = error_bounds(rep, 3)
        assert pri == pytest.approx(0.25) and post == pytest.approx(0.25)
        pri1, post1 = error_bounds(rep, 1)
        assert pri1 == post1 == pytest.approx(1.0)

    def test_zero_rho(self):
        rep = PicardReport(rho=0.0, deltas=[0.0], seconds=[0.0])
        assert error_bounds(rep, 1) == (0.0, 0.0)

    def test_rho_one(self):
        with pytest.raises(RhoNotContractive):
            error_bounds(PicardReport(rho=1.0, deltas=[1.0], seconds=[0.0]), 1)

    def test_a_priori_strictly_decreasing(self):
        rep = PicardReport(rho=0.8, deltas=[0.3] * 20, seconds=[0.0] * 20)
        seq = [error_bounds(rep, n)[0] for n in range(1, 21)]
        assert all(b < a for a, b in zip(seq, seq[1:]))


class TestPicard:
    def test_constant_payoff_converges_to_one(self):
        model = zero_rate_model(((-1.0, 1.0), (3.0, -3.0)))
        spec = small_grid(model)
        h, rep = picard_solve(model, PayoffSpec.constant(1.0), DampeningSpec.unit(), spec, tol=1e-8)
        assert rep.converged
        assert np.max(np.abs(h.values - 1.0)) <= 1e-8
        assert price(h, DampeningSpec.unit(), PricingQuery(0.37, 0.11, 1)) == pytest.approx(1.0, abs=1e-8)

    def test_single_regime_one_iteration(self):
        model = single_regime_model()
        spec = small_grid(model)
        h, rep = picard_solve(model, PayoffSpec.call(1.0), DampeningSpec.ou_call(model), spec)
        assert rep.iterations == 1 and rep.a_posteriori == 0.0
        h0 = build_h0(model, PayoffSpec.call(1.0), DampeningSpec.ou_call(model), spec)
        np.testing.assert_array_equal(h.values, h0.values)

    def test_fixed_point_residual(self):
        model = two_regime_model()
        spec = small_grid(model, nt=11, nx=61)
        d = DampeningSpec.ou_call(model)
        op = TransitionOperator(model, d, spec)
        tol = 1e-7
        h, rep = picard_solve(model, PayoffSpec.call(1.0), d, spec, tol=tol, operator=op)
        h0 = build_h0(model, PayoffSpec.call(1.0), d, spec)
        assert sup_norm(h - op.apply(h) - h0) <= 2 * tol

    def test_node_query_and_terminal(self):
        model = two_regime_model()
        d = DampeningSpec.ou_call(model)
        spec = small_grid(model, nt=11, nx=61)
        h, _ = picard_solve(model, PayoffSpec.call(1.0), d, spec)
        k, a = 4, 30
        t, x = spec.times[k], spec.xs[a]
        assert price(h, d, PricingQuery(t, x, 1)) == pytest.approx(d.evaluate(t, x) * h.values[k, a, 1], rel=1e-14)
        for x in spec.xs[::7]:
            assert price(h, d, PricingQuery(1.0, x, 0)) == pytest.approx(max(math.exp(x) - 1, 0.0), abs=1e-12)

    def test_max_iter(self):
        model = two_regime_model()
        spec = small_grid(model, nt=5, nx=21)
        d = DampeningSpec.ou_call(model)
        h, rep = picard_solve(model, PayoffSpec.call(1.0), d, spec, tol=1e-14, max_iter=3)
        assert not rep.converged and rep.iterations == 3
        with pytest.raises(MaxIterExceeded) as info:
            picard_solve(model, PayoffSpec.call(1.0), d, spec, tol=1e-14, max_iter=3, strict=True)
        assert info.value.report.iterations == 3

    def test_overflow_guard(self):
        model = two_regime_model()
        spec = GridSpec.default(model, nt=5, nx=21, xmin=-10.0, xmax=800.0)
        with pytest.raises(QuadratureOverflow):
            picard_solve(model, PayoffSpec.call(1.0), DampeningSpec.ou_call(model), spec)

    def test_clamp_warning(self):
        model = two_regime_model()
        spec = small_grid(model, nt=5, nx=21)
        h, _ = picard_solve(model, PayoffSpec.constant(1.0), DampeningSpec.unit(), spec)
        with pytest.warns(GridClampWarning):
            price(h, DampeningSpec.unit(), PricingQuery(0.0, 50.0, 0))

    def test_trace_csv(self, tmp_path):
        model = two_regime_model()
        spec = small_grid(model, nt=5, nx=21)
        _, rep = picard_solve(model, PayoffSpec.call(1.0), DampeningSpec.ou_call(model), spec)
        path = tmp_path / "trace.csv"
        with open(path, "w", newline="") as fh:
            rep.write_csv(fh, timings=False)
        lines = path.read_text().splitlines()
        assert lines[0] == "n,delta_sup_norm,a_priori_bound,a_posteriori_bound,seconds"
        assert len(lines) == rep.iterations + 1
        assert lines[1].endswith(",0.000000")

    def test_identical_regimes_match_closed_form_coarse(self):
        model = identical_pair_model()
        d = DampeningSpec.ou_call(model)
        spec = GridSpec.default(model, nt=21, nx=101, focus=0.0)
        h, _ = picard_solve(model, PayoffSpec.call(1.0), d, spec)
        exact = v0_call(model, 1.0, 0.0, 0.0, 0)
        for i in range(2):
            assert price(h, d, PricingQuery(0.0, 0.0, i)) == pytest.approx(exact, rel=2e-3)

    def test_grid_refinement(self):
        model = two_regime_model()
        d = DampeningSpec.ou_call(model)
        prices = []
        for nt, nx in ((21, 101), (41, 201)):
            spec = GridSpec.default(model, nt=nt, nx=nx, focus=0.0)
            h, _ = picard_solve(model, PayoffSpec.call(1.0), d, spec, tol=1e-8)
            prices.append(price(h, d, PricingQuery(0.0, 0.0, 0)))
        assert abs(prices[0] - prices[1]) <= 1e-3 * abs(prices[1])
