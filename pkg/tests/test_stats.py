import math

import numpy as np
import pytest
from scipy import stats as spstats

from brwlab import engine, laws, stats
from brwlab.engine import PrunePolicy
from brwlab.errors import InsufficientEvents, InsufficientHits
from brwlab.stats import (
    ballot_scaling,
    bootstrap,
    concentration_fit,
    conditional_transverse_hit,
    escape_prob,
    fit_line,
    fpt_sweep,
    max_tail_fit,
    max_tightness,
    transverse_hit_oracle,
    two_descendant_prob,
)


def _pol(cst, capacity):
    return PrunePolicy(mode="both", capacity=capacity, tilt=cst.c2)


# ----------------------------------------------------------------- plumbing


def test_fit_line_exact():
    f = fit_line([1, 2, 3, 4], [3, 5, 7, 9])
    assert f.slope == pytest.approx(2.0)
    assert f.intercept == pytest.approx(1.0)
    assert f.r_squared == pytest.approx(1.0)
    assert f.x_range == (1.0, 4.0)


def test_bootstrap_ci_contains_point_estimate(rng):
    samples = rng.standard_normal(400) + 3.0
    lo, hi = bootstrap(samples, np.median, seed=1)
    assert lo <= float(np.median(samples)) <= hi


def test_bootstrap_ci_shrinks_with_more_data(rng):
    small = rng.standard_normal(200)
    big = rng.standard_normal(3200)
    lo_s, hi_s = bootstrap(small, np.median, seed=2)
    lo_b, hi_b = bootstrap(big, np.median, seed=2)
    assert (hi_b - lo_b) < 0.85 * (hi_s - lo_s)


# ---------------------------------------------------------------- fpt sweep


def test_fpt_sweep_medians_and_fits(g2):
    inc, off, cst = g2
    rep = fpt_sweep(inc, off, cst, [10.0, 16.0, 24.0], 60, 11, _pol(cst, 30000))
    assert set(rep.fits["median_tau"]) == {10.0, 16.0, 24.0}
    # medians track t_x within a few generations at this scale
    for x in (10.0, 16.0, 24.0):
        assert abs(rep.fits["median_tau"][x] - rep.fits["t_x"][x]) < 5.0
    assert rep.fits["linear"].slope == pytest.approx(1.0 / cst.c1, rel=0.15)
    lo, hi = rep.fits["log_slope_ci"]
    assert lo <= rep.fits["log_correction"].slope <= hi


def test_fpt_sweep_single_point_no_regression(g1):
    inc, off, cst = g1
    rep = fpt_sweep(inc, off, cst, [8.0], 55, 3, _pol(cst, 10000))
    assert "linear" not in rep.fits
    assert 8.0 in rep.fits["median_tau"]


def test_fpt_sweep_insufficient_hits(g1):
    inc, off, cst = g1
    with pytest.raises(InsufficientHits):
        fpt_sweep(inc, off, cst, [8.0], 10, 3, _pol(cst, 10000), min_hits=50)


def test_fpt_degenerate_1d_slope_target(g1):
    # d=1 interval target: the log coefficient is 3/(2 c1 c2)
    _, _, cst = g1
    assert (cst.dimension + 2) / (2 * cst.c1 * cst.c2) == pytest.approx(
        3 / (2 * cst.c1 * cst.c2)
    )


# ------------------------------------------------------------ concentration


def test_concentration_trivial_y0():
    taus = np.concatenate([np.full(600, 10.0), 10.0 + np.arange(1, 401) % 7])
    fit = concentration_fit(taus)
    assert fit.slope < 0


def test_concentration_requires_samples():
    with pytest.raises(InsufficientHits):
        concentration_fit(np.arange(10))


def test_concentration_on_geometric_tail(rng):
    taus = 30.0 + rng.geometric(0.6, size=5000) * np.sign(rng.standard_normal(5000))
    fit = concentration_fit(taus)
    assert fit.slope < 0
    assert fit.r_squared >= 0.8


# -------------------------------------------------------------- max reports


def test_max_tightness_single_n(g1):
    inc, off, cst = g1
    rep = max_tightness(inc, off, cst, [2], 200, 7, PrunePolicy.off())
    assert rep.fits["band"] == 0.0
    assert -3.0 < rep.fits["median_offset"][2] < 3.0


def test_max_tightness_band_small_grid(g1):
    inc, off, cst = g1
    rep = max_tightness(inc, off, cst, [20, 30, 40], 40, 19, _pol(cst, 20000))
    assert rep.fits["band"] < 2.0


def test_max_tail_fit_negative_slope(g1):
    inc, off, cst = g1
    fit = max_tail_fit(inc, off, cst, 30, 500, 5, _pol(cst, 5000))
    assert fit.slope < 0
    assert fit.r_squared > 0.8


# ---------------------------------------------- conditional transverse hit


def test_clt_requires_d2(g1):
    inc, off, cst = g1
    with pytest.raises(ValueError):
        conditional_transverse_hit(inc, cst, [50.0], 1000, 0)


def test_clt_gaussian_oracle(g2):
    inc, _, cst = g2
    rep = conditional_transverse_hit(inc, cst, [math.e**4, math.e**5], 150000, 9)
    for x, d in rep.diagnostics["per_x"].items():
        p = rep.samples["p_hat"][x]
        oracle = transverse_hit_oracle(inc, d["n"])
        se = math.sqrt(max(p * (1 - p), 1e-12) / d["accepted"])
        assert abs(p - oracle) <= 4 * se


def test_transverse_oracle_closed_form(g2):
    inc, _, _ = g2
    # d=2: transverse is one N(0, n); P(|Z| <= 1/2)
    n = 50
    want = 2 * spstats.norm.cdf(0.5 / math.sqrt(n)) - 1
    assert transverse_hit_oracle(inc, n) == pytest.approx(want, abs=1e-12)


# ----------------------------------------------------------- two-descendant


def test_twodesc_single_child_law_impossible(g1):
    _, _, cst = g1
    off1 = laws.make_offspring(((1, 0.5), (2, 0.5)))
    inc = laws.gaussian(1)
    rep = two_descendant_prob(inc, off1, cst, 10, [-1, -2], 4000, 5)
    # with one child the event needs the two-child branch: p < single-subtree p
    for g in (-1, -2):
        assert 0.0 <= rep.samples["p_hat"][g] <= rep.samples["r_hat"][g]


def test_twodesc_monotone_in_g(g1):
    inc, off, cst = g1
    rep = two_descendant_prob(inc, off, cst, 12, [-1, -2, -3, -4], 15000, 3)
    p = rep.samples["p_hat"]
    assert p[-4] <= p[-1]
    assert rep.fits["slope"].slope > 0


def test_twodesc_insufficient_events(g1):
    inc, off, cst = g1
    with pytest.raises(InsufficientEvents):
        two_descendant_prob(inc, off, cst, 12, [-18, -20], 2000, 3)


# ------------------------------------------------------------------- escape


def test_escape_n0_zero(g1):
    inc, off, _ = g1
    rep = escape_prob(inc, off, [0], 10, 1)
    assert rep.samples["freq"][0] == 0.0


def test_escape_ball_n1_impossible(off_p2):
    # radius-1 ball increments: both children land inside the closed unit
    # ball, so "all outside" has probability 0
    inc = laws.uniform_ball(2, radius=1.0)
    rep = escape_prob(inc, off_p2, [1], 300, 2)
    assert rep.samples["freq"][1] == 0.0


def test_escape_gaussian_n1_positive(off_p2):
    rep = escape_prob(laws.gaussian(1), off_p2, [1], 3000, 3)
    assert rep.samples["freq"][1] > 0.0


def test_escape_decreasing(off_p2):
    rep = escape_prob(laws.gaussian(1), off_p2, [1, 2, 3], 4000, 4)
    f = rep.samples["freq"]
    assert f[1] > f[2] > f[3]


# ------------------------------------------------------------------- ballot


def test_ballot_one_step_closed_form():
    inc = laws.gaussian(1)
    rep = ballot_scaling(inc, [1, 2], 5.0, 0.0, 400000, 6)
    # n=1, y=5: barrier inactive, p = P(xi in [0,1])
    want = spstats.norm.cdf(1.0) - spstats.norm.cdf(0.0)
    got = rep.samples["freq"][1]
    se = math.sqrt(want * (1 - want) / 400000)
    assert abs(got - want) <= 5 * se


def test_ballot_inactive_barrier_local_clt():
    inc = laws.gaussian(1)
    n = 64
    rep = ballot_scaling(inc, [n, 2 * n], 1000.0, 0.0, 300000, 7)
    # constraint vacuous: p ~ P(S_n in [0,1]) ~ Phi(1/sqrt(n)) - 1/2
    want = spstats.norm.cdf(1.0 / math.sqrt(n)) - 0.5
    got = rep.samples["freq"][n]
    se = math.sqrt(want * (1 - want) / 300000)
    assert abs(got - want) <= 5 * se


def test_ballot_slope_1d(g1):
    inc = laws.gaussian(1)
    rep = ballot_scaling(inc, [32, 64, 128], 2.0, 0.0, 400000, 8)
    assert -2.0 < rep.fits["log_log"].slope < -1.0


def test_ballot_insufficient_events():
    inc = laws.gaussian(1)
    with pytest.raises(InsufficientEvents):
        ballot_scaling(inc, [64, 128], 1.0, 30.0, 2000, 9)


def test_ballot_validates_inputs():
    inc = laws.gaussian(1)
    with pytest.raises(ValueError):
        ballot_scaling(inc, [8], 0.5, 0.0, 100, 0)
    with pytest.raises(ValueError):
        ballot_scaling(inc, [8], 1.0, -2.0, 100, 0)


# -------------------------------------------------------------- determinism


def test_estimators_reproducible(g1):
    inc, off, cst = g1
    a = max_tail_fit(inc, off, cst, 20, 150, 13, _pol(cst, 3000))
    b = max_tail_fit(inc, off, cst, 20, 150, 13, _pol(cst, 3000))
    assert a == b


def test_worker_env_cap(monkeypatch):
    monkeypatch.setenv("BRW_THREADS", "3")
    assert stats.n_workers() == 3
    monkeypatch.setenv("BRW_THREADS", "junk")
    assert stats.n_workers() == 1
