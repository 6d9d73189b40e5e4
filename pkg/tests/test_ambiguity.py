import numpy as np
import pytest

from supou_tsvar.ambiguity import (
    accuracy_from_phi,
    closed_form_phi,
    duality_gap,
    inner_objective,
    inner_optimum,
    lambda0_grid,
    mass_above_median,
    scenario,
    scenario_consistency,
    scenario_sweep,
    worst_case_phi,
)
from supou_tsvar.errors import DomainError, FeasibilityError
from supou_tsvar.qcalc import q_exp, tsallis_divergence
from supou_tsvar.reversion import DiscreteMeasure, discretize, inverse_moment
from supou_tsvar.solver import TsVaRProblem, accuracy_sweep
from supou_tsvar.supou import STATIONS

SIDES = [("lower", 1.33), ("upper", 0.33)]


def bracket(phi, r, q, lam, side):
    """Inner bracket written out directly from its definition."""
    mean = lambda x: np.sum(x, axis=-1) / r.size  # noqa: E731
    h = (1.0 - mean(phi ** q)) / (1.0 - q)
    drift = lam * mean(phi ** q / r)
    return drift + h if side == "lower" else drift - h


def brute_two(r, q, lam, side):
    """Zooming grid search over the 1-simplex ``phi2 = 2 - phi1``."""
    lo, hi = 0.0, 2.0
    for _ in range(6):
        x = np.linspace(lo, hi, 200001)[1:-1]
        phi = np.stack([x, 2.0 - x], axis=-1)
        v = bracket(phi, r, q, lam, side)
        i = np.argmin(v) if side == "lower" else np.argmax(v)
        h = 4.0 * (hi - lo) / 200000
        lo, hi = max(0.0, x[i] - h), min(2.0, x[i] + h)
    return v[i], phi[i]


def brute_three(r, q, lam, side):
    """Zooming grid search over the 2-simplex ``phi3 = 3 - phi1 - phi2``."""
    centre, span = np.array([1.0, 1.0]), 1.5
    worst = np.inf if side == "lower" else -np.inf
    for _ in range(20):
        g = np.linspace(-span, span, 401)
        X, Y = np.meshgrid(centre[0] + g, centre[1] + g, indexing="ij")
        phi = np.stack([X, Y, 3.0 - X - Y], axis=-1)
        ok = np.all(phi > 0, axis=-1)
        v = np.where(ok, bracket(np.where(ok[..., None], phi, 1.0), r, q, lam, side), worst)
        i = np.unravel_index(np.argmin(v) if side == "lower" else np.argmax(v), v.shape)
        centre, span = np.array([X[i], Y[i]]), span * 0.25
    return v[i], phi[i]


class TestWorstCasePhi:
    @pytest.mark.parametrize("side,q", [("lower", 2.0), ("lower", 1.33), ("upper", 0.5), ("upper", 0.33)])
    def test_two_node_oracle(self, side, q):
        r = np.array([1.0, 2.0])
        value, best = brute_two(r, q, 1.0, side)
        phi = worst_case_phi(side, 1.0, q, DiscreteMeasure(r))
        np.testing.assert_allclose(phi, best, atol=1e-6)
        np.testing.assert_allclose(inner_objective(side, 1.0, q, r, phi), value, atol=1e-6)

    def test_two_node_exact(self):
        # q=2, r=(1,2): stationarity is linear, phi = (6/7, 8/7)
        phi = worst_case_phi("lower", 1.0, 2.0, DiscreteMeasure([1.0, 2.0]))
        np.testing.assert_allclose(phi, [6 / 7, 8 / 7], rtol=1e-12)

    @pytest.mark.parametrize("side,q", [("lower", 2.0), ("lower", 1.33), ("upper", 0.5), ("upper", 0.33)])
    def test_three_node_oracle(self, side, q):
        r = np.array([0.5, 1.0, 3.0])
        value, _ = brute_three(r, q, 0.7, side)
        phi = worst_case_phi(side, 0.7, q, DiscreteMeasure(r))
        np.testing.assert_allclose(inner_objective(side, 0.7, q, r, phi), value, atol=1e-6)

    @pytest.mark.parametrize("side,q", SIDES)
    def test_matches_closed_form(self, kaz_d4096, side, q):
        for lam in (0.01, 0.1, 1.0):
            np.testing.assert_allclose(worst_case_phi(side, lam, q, kaz_d4096),
                                       closed_form_phi(side, lam, q, kaz_d4096), rtol=1e-6)

    @pytest.mark.parametrize("side,q", SIDES)
    def test_zero_aversion_limit(self, kaz_d4096, side, q):
        dev = [np.max(np.abs(worst_case_phi(side, lam, q, kaz_d4096) - 1.0)) for lam in (1e-6, 1e-9, 1e-12)]
        # first-order in lam0: a thousandfold smaller lam0, a thousandfold smaller distortion
        np.testing.assert_allclose(dev[1] / dev[0], 1e-3, rtol=1e-2)
        assert dev[2] <= 1e-8

    @pytest.mark.parametrize("side,q", SIDES)
    def test_normalized_positive_and_monotone(self, kaz_d4096, side, q):
        phi = worst_case_phi(side, 0.1, q, kaz_d4096)
        assert np.all(phi > 0)
        np.testing.assert_allclose(np.mean(phi), 1.0, atol=1e-12)
        steps = np.diff(phi)
        assert np.all(steps >= 0) if side == "lower" else np.all(steps <= 0)

    def test_monotone_concentration(self, kaz_d4096):
        lams = [0.001, 0.01, 0.1, 1.0]
        low = [mass_above_median(worst_case_phi("lower", x, 1.33, kaz_d4096), kaz_d4096) for x in lams]
        up = [mass_above_median(worst_case_phi("upper", x, 0.33, kaz_d4096), kaz_d4096) for x in lams]
        assert np.all(np.diff(low) >= 0)
        assert np.all(np.diff(up) <= 0)

    def test_errors(self, kaz_d4096):
        with pytest.raises(FeasibilityError):
            worst_case_phi("upper", 1.0, 0.5, kaz_d4096)
        with pytest.raises(FeasibilityError):
            worst_case_phi("lower", 1.0, 0.9, kaz_d4096)
        with pytest.raises(DomainError):
            worst_case_phi("lower", 0.0, 1.33, kaz_d4096)


class TestInnerProblem:
    def test_lower_strictly_convex(self, kaz_d4096):
        rng = np.random.default_rng(7)
        r = kaz_d4096.nodes
        for _ in range(20):
            p1 = rng.gamma(2.0, size=r.size)
            p2 = rng.gamma(2.0, size=r.size)
            p1, p2 = p1 / p1.mean(), p2 / p2.mean()
            t = rng.uniform(0.05, 0.95)
            mid = inner_objective("lower", 0.5, 1.33, r, t * p1 + (1 - t) * p2)
            chord = t * inner_objective("lower", 0.5, 1.33, r, p1) + (1 - t) * inner_objective("lower", 0.5, 1.33, r, p2)
            assert mid < chord - 1e-12

    def test_identity_density_bound(self, kaz_d4096):
        for lam in (0.1, 1.0, 10.0):
            plug = inner_objective("lower", lam, 1.33, kaz_d4096, np.ones(4096))
            np.testing.assert_allclose(plug, lam * kaz_d4096.inverse_moment(), rtol=1e-14)
            assert plug >= inner_optimum("lower", lam, 1.33, kaz_d4096)

    @pytest.mark.parametrize("name", sorted(STATIONS))
    @pytest.mark.parametrize("side,q", SIDES)
    def test_duality_gap(self, name, side, q):
        d = discretize(STATIONS[name].reversion, 4096)
        for lam in (0.1, 1.0, 10.0):
            assert duality_gap(side, lam, q, d) <= 1e-8

    @pytest.mark.parametrize("side,q", [("lower", 1.5), ("upper", 0.5)])
    def test_single_atom(self, side, q):
        d = DiscreteMeasure([1.0])
        for lam in (0.3, 2.0):
            np.testing.assert_allclose(inner_optimum(side, lam, q, d), lam, rtol=1e-14)
            phi = worst_case_phi(side, lam, q, d)
            np.testing.assert_allclose(inner_objective(side, lam, q, d, phi), lam, rtol=1e-14)


class TestAccuracyFromPhi:
    def test_examples(self):
        assert accuracy_from_phi(np.ones(5), 1.33) == 1.0
        np.testing.assert_allclose(accuracy_from_phi(np.array([1.5, 0.5]), 2.0), 0.8, rtol=1e-14)

    def test_at_most_one(self):
        rng = np.random.default_rng(3)
        for q in (0.2, 1.0, 1.33, 3.0):
            phi = rng.lognormal(size=50)
            phi /= phi.mean()
            assert accuracy_from_phi(phi, q) <= 1.0


class TestScenario:
    @pytest.mark.parametrize("side,q", SIDES)
    @pytest.mark.parametrize("lam0", [0.003, 0.03, 0.3])
    def test_invariants(self, kaz, kaz_d4096, side, q, lam0):
        s = scenario(side, lam0, q, kaz_d4096, kaz)
        assert abs(np.mean(s.phi_star) - 1.0) <= 1e-10 and np.all(s.phi_star > 0)
        np.testing.assert_allclose(s.a_star, q_exp(-tsallis_divergence(s.phi_star, q), q), atol=1e-10)
        R = inverse_moment(kaz)
        assert s.tsvar <= R if side == "lower" else s.tsvar >= R
        np.testing.assert_allclose(s.normalized, s.tsvar / R, rtol=1e-15)
        np.testing.assert_allclose(scenario_consistency(s, kaz_d4096), s.tsvar, rtol=1e-3)
        np.testing.assert_allclose(s.lambda_star, 1.0 / lam0, rtol=1e-9)

    @pytest.mark.parametrize("side,q", SIDES)
    @pytest.mark.parametrize("lam0", [0.003, 0.03, 0.3])
    def test_roundtrip_against_accuracy_sweep(self, kaz_d4096, side, q, lam0):
        s = scenario(side, lam0, q, kaz_d4096)
        point = accuracy_sweep(TsVaRProblem(kaz_d4096, side, q, s.a_star, scheme="plain"), [s.a_star])[0]
        np.testing.assert_allclose(point.solution.value, s.tsvar, rtol=1e-6)

    def test_cold_start_agrees(self, kaz_d4096):
        warm = scenario("lower", 0.1, 1.33, kaz_d4096)
        cold = scenario("lower", 0.1, 1.33, kaz_d4096, warm_start=False)
        np.testing.assert_allclose(cold.tsvar, warm.tsvar, rtol=1e-9)

    @pytest.mark.parametrize("side,q", SIDES)
    def test_zero_aversion_limit(self, kaz, kaz_d15, side, q):
        s = scenario(side, 1e-6, q, kaz_d15, kaz)
        np.testing.assert_allclose(s.a_star, 1.0, atol=1e-6)
        np.testing.assert_allclose(s.tsvar, inverse_moment(kaz), rtol=0.02)

    def test_upper_monotone_in_a(self, kaz, kaz_d4096):
        rows = scenario_sweep("upper", 0.33, kaz_d4096, lambda0_grid(1e-3, 1.0, 5), kaz)
        pairs = sorted((r.scenario.a_star, r.scenario.normalized) for r in rows)
        assert all(r.feasible for r in rows)
        assert np.all(np.diff([n for _, n in pairs]) < 0)


class TestSweep:
    def test_grid(self):
        g = lambda0_grid()
        assert g.size == 241 and g[0] == pytest.approx(1e-3) and g[-1] == pytest.approx(1e3)
        with pytest.raises(DomainError):
            lambda0_grid(1.0, 0.5)

    def test_truncates_at_first_infeasible(self, kaz_d4096):
        # exp(-lam0/r) underflows at the fastest nodes once lam0 is large
        rows = scenario_sweep("lower", 1.0, kaz_d4096, [0.01, 0.1, 50.0, 100.0, 0.05])
        assert [r.feasible for r in rows] == [True, True, False]
        assert rows[-1].reason

    def test_threads_deterministic(self, kaz_d4096):
        grid = lambda0_grid(1e-2, 1.0, 4)
        a = scenario_sweep("lower", 1.33, kaz_d4096, grid, workers=1)
        b = scenario_sweep("lower", 1.33, kaz_d4096, grid, workers=4)
        assert [r.scenario.tsvar for r in a] == [r.scenario.tsvar for r in b]


@pytest.mark.slow
def test_grid_point_nearest_a099_matches_published_lower(kaz, kaz_d15):
    grid = lambda0_grid()
    grid = grid[(grid >= 1e-3) & (grid <= 1e-2)]
    rows = scenario_sweep("lower", 1.33, kaz_d15, grid, kaz)
    best = min((r.scenario for r in rows), key=lambda s: abs(s.a_star - 0.99))
    np.testing.assert_allclose(best.tsvar, 19.8581, rtol=5e-3)
