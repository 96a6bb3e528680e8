import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from omrf.exceptions import ValidationError
from omrf.metrics import (
    MetricsReport,
    build_report,
    ess,
    half_sample_mode,
    kde,
    overlap_index,
    posterior_correlations,
    savage_dickey,
    sd_ratio,
)
from omrf.samplers import Chain


def ar1(rho, n, rng):
    e = rng.normal(size=n)
    x = np.empty(n)
    x[0] = e[0] / np.sqrt(1 - rho**2)
    for t in range(1, n):
        x[t] = rho * x[t - 1] + e[t]
    return x


class TestOverlap:
    def test_self_overlap(self, rng):
        x = rng.normal(size=2000)
        assert 0.99 <= overlap_index(x, x) <= 1.0

    def test_disjoint(self, rng):
        assert overlap_index(rng.normal(size=2000), rng.normal(100, 1, 2000)) < 0.01

    def test_unit_shift_matches_normal_overlap(self, rng):
        eta = overlap_index(rng.normal(size=50_000), rng.normal(1, 1, 50_000))
        assert eta == pytest.approx(2 * stats.norm.cdf(-0.5), abs=0.02)

    def test_symmetric(self, rng):
        a, b = rng.normal(size=500), rng.gamma(2.0, size=700)
        assert abs(overlap_index(a, b) - overlap_index(b, a)) < 1e-6

    @settings(max_examples=25, deadline=None)
    @given(shift=st.floats(-50, 50), scale=st.floats(0.01, 100), seed=st.integers(0, 2**31 - 1))
    def test_affine_invariant(self, shift, scale, seed):
        rng = np.random.default_rng(seed)
        a, b = rng.normal(size=400), rng.normal(0.7, 1.3, 400)
        assert abs(overlap_index(a, b) - overlap_index(scale * a + shift, scale * b + shift)) < 0.01

    def test_degenerate(self):
        with pytest.raises(ValidationError, match="zero variance"):
            overlap_index(np.ones(50), np.arange(50.0))

    def test_too_short(self, rng):
        with pytest.raises(ValidationError, match="30"):
            overlap_index(rng.normal(size=10), rng.normal(size=100))


class TestKDE:
    def test_integrates_to_one(self, rng):
        est = kde(rng.standard_t(4, size=3000))
        assert 0.99 <= np.trapezoid(est.density, est.grid) <= 1.01
        assert est.grid.size == 512

    def test_mode(self, rng):
        assert kde(rng.normal(2.0, 0.3, 20_000)).mode == pytest.approx(2.0, abs=0.05)


class TestSavageDickey:
    def test_prior_draws(self, rng):
        assert savage_dickey(rng.normal(0, 2.5, 40_000), 2.5) == pytest.approx(1.0, abs=0.1)

    def test_concentrated_draws(self, rng):
        assert savage_dickey(rng.normal(0, 0.5, 40_000), 1.0) == pytest.approx(2.0, abs=0.15)

    def test_far_from_null(self, rng):
        assert savage_dickey(rng.normal(5, 0.5, 5000), 1.0) < 1e-3

    def test_floor_flagged(self, rng):
        bf, floored = savage_dickey(rng.normal(50, 0.1, 1000), 1.0, return_flag=True)
        assert floored
        assert bf == pytest.approx(1e-12 / stats.norm.pdf(0.0))
        assert not savage_dickey(rng.normal(size=1000), 1.0, return_flag=True)[1]

    def test_bad_prior(self, rng):
        with pytest.raises(ValidationError):
            savage_dickey(rng.normal(size=100), 0.0)


class TestSdRatio:
    def test_identity_and_scaling(self, rng):
        x = rng.normal(size=(500, 3))
        np.testing.assert_allclose(sd_ratio(x, x), 1.0)
        np.testing.assert_allclose(sd_ratio(2 * (x - x.mean(0)), x), 2.0)

    def test_constant_reference(self, rng):
        with pytest.raises(ValidationError):
            sd_ratio(rng.normal(size=100), np.zeros(100))


class TestESS:
    def test_iid(self, rng):
        assert 9000 <= ess(rng.normal(size=10_000)) <= 10_000

    def test_ar1(self, rng):
        assert ess(ar1(0.5, 20_000, rng)) == pytest.approx(20_000 / 3, rel=0.15)

    def test_alternating_clamped(self):
        x = np.tile([1.0, -1.0], 500)
        assert ess(x) == 1000

    def test_constant_column(self):
        with pytest.raises(ValidationError, match="zero variance"):
            ess(np.full(200, 3.0))

    def test_short_chain(self, rng):
        with pytest.raises(ValidationError, match="100"):
            ess(rng.normal(size=50))

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1), rho=st.floats(-0.9, 0.95))
    def test_bounds(self, seed, rho):
        value = ess(ar1(rho, 300, np.random.default_rng(seed)))
        assert 0 < value <= 300


class TestCorrelations:
    def test_self_and_independent(self, rng):
        x = rng.normal(size=(10_000, 3))
        r = posterior_correlations(np.column_stack([x, x[:, 0]]))
        assert r[0, 3] == pytest.approx(1.0)
        assert np.all(np.abs(r[np.triu_indices(3, 1)]) < 3 / np.sqrt(10_000))

    def test_constant_column_flagged(self, rng):
        x = np.column_stack([rng.normal(size=200), np.zeros(200)])
        r = posterior_correlations(x)
        assert np.isnan(r[0, 1]) and np.isnan(r[1, 1])
        assert r[0, 0] == pytest.approx(1.0)

    def test_accepts_chain(self, rng):
        draws = rng.normal(size=(300, 2))
        chain = Chain(draws, np.ones(300, bool), np.ones(300), 0.0, "pseudo", burn_in=100)
        np.testing.assert_allclose(posterior_correlations(chain), np.corrcoef(draws[100:].T))


class TestHalfSampleMode:
    def test_skewed(self, rng):
        assert half_sample_mode(rng.gamma(3.0, 1.0, 50_000)) == pytest.approx(2.0, abs=0.15)

    def test_small(self):
        assert half_sample_mode([1.0, 1.1, 5.0]) == pytest.approx(1.05)
        assert half_sample_mode([4.0]) == 4.0


class TestReport:
    @pytest.fixture
    def chains(self, rng):
        exact = Chain(rng.normal(size=(1200, 2)), np.ones(1200, bool), np.ones(1200), 1.0, "exact", burn_in=200)
        approx = Chain(rng.normal(0, 0.7, (1200, 2)), np.ones(1200, bool), np.ones(1200), 0.5, "pseudo",
                       burn_in=200)
        return exact, approx

    def test_single_method(self, chains):
        exact, approx = chains
        rep = build_report(approx, ["a", "b"], reference=exact, prior_sds=[5.0, 2.5])
        assert rep.method == "pseudo"
        assert np.all((rep.eta >= 0) & (rep.eta <= 1))
        np.testing.assert_allclose(rep.sd_ratio, 0.7, atol=0.06)
        assert np.all((rep.ess > 0) & (rep.ess <= 1000))
        assert "flags" not in rep.extra

    def test_json_roundtrip(self, chains):
        rep = build_report(chains[1], ["a", "b"], reference=chains[0], prior_sds=2.5)
        back = json.loads(rep.to_json())
        for key in ("eta", "sd_ratio", "ess", "log_bf01"):
            np.testing.assert_array_equal(back[key], getattr(rep, key))
        assert back["names"] == ["a", "b"]

    def test_long_csv(self, chains):
        rep = build_report(chains[1], ["a", "b"], reference=chains[0])
        lines = rep.to_long_csv().strip().split("\n")
        assert lines[0] == "method,parameter,metric,value"
        assert len(lines) == 1 + 2 * 3

    def test_stuck_coordinate_flagged(self, chains, rng):
        draws = chains[1].draws.copy()
        draws[:, 1] = 0.25
        stuck = Chain(draws, np.ones(1200, bool), np.ones(1200), 0.5, "dmh", burn_in=200)
        rep = build_report(stuck, ["a", "b"], reference=chains[0])
        assert np.isnan(rep.ess[1]) and np.isnan(rep.eta[1])
        assert rep.extra["flags"]["ess"] == ["b"]

    def test_bf_mask(self, chains):
        rep = build_report(chains[1], ["a", "b"], prior_sds=2.5, bf_mask=[False, True])
        assert np.isnan(rep.log_bf01[0]) and np.isfinite(rep.log_bf01[1])

    def test_layout_mismatch(self, chains):
        with pytest.raises(ValidationError):
            build_report(chains[1], ["a"])
        with pytest.raises(ValidationError):
            build_report(chains[1], ["a", "b"], reference=np.zeros((100, 3)))

    def test_empty_report(self):
        assert MetricsReport(["x"], "core").to_dict()["method"] == "core"
