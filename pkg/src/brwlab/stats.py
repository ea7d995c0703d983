"""Replicated experiments and fits for the quantitative asymptotics.

Each estimator is plain Monte Carlo over independent, seeded replications;
the one exception is the conditional transverse-hit probability, where an
exponential tilt along the pivot is exact for the conditional event (the
tilt weight depends only on the pivot sum, so the conditional transverse
law is unchanged).  Fits are least squares on the declared transform with
percentile-bootstrap confidence intervals.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as spstats

from . import engine
from .engine import PrunePolicy, substream
from .errors import InsufficientEvents, InsufficientHits, NoAcceptedSamples
from .laws import IncrementLaw, OffspringLaw
from .ratefn import Asymptote, LdConstants


# ----------------------------------------------------------------- plumbing


def n_workers() -> int:
    """Worker-pool size, capped by the BRW_THREADS environment variable."""
    raw = os.environ.get("BRW_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def map_replications(fn, args_list):
    """Order-preserving map over replications, serial or process pool."""
    w = n_workers()
    if w <= 1 or len(args_list) <= 1:
        return [fn(a) for a in args_list]
    with ProcessPoolExecutor(max_workers=w) as pool:
        return list(pool.map(fn, args_list, chunksize=max(1, len(args_list) // (4 * w))))


def bootstrap(samples, stat=np.median, n_resamples: int = 1000, seed: int = 0):
    """Percentile bootstrap confidence interval for ``stat`` of the samples."""
    samples = np.asarray(samples)
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0xB007,)))
    idx = rng.integers(0, len(samples), size=(n_resamples, len(samples)))
    reps = np.array([stat(samples[row]) for row in idx])
    return float(np.percentile(reps, 2.5)), float(np.percentile(reps, 97.5))


@dataclass(frozen=True)
class TailFit:
    """Least-squares line on a declared transform of the data."""

    slope: float
    intercept: float
    r_squared: float
    x_range: tuple
    n_points: int

    def to_dict(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
            "x_range": list(self.x_range),
            "n_points": self.n_points,
        }


def fit_line(x, y) -> TailFit:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    res = spstats.linregress(x, y)
    return TailFit(
        slope=float(res.slope),
        intercept=float(res.intercept),
        r_squared=float(res.rvalue**2),
        x_range=(float(x.min()), float(x.max())),
        n_points=len(x),
    )


@dataclass
class ExperimentReport:
    """Raw samples, fits, and diagnostics of one replicated experiment."""

    config: dict
    samples: dict = field(default_factory=dict)
    fits: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    seed: int = 0

    def summary(self) -> dict:
        return {
            "config": self.config,
            "fits": {
                k: (v.to_dict() if isinstance(v, TailFit) else v) for k, v in self.fits.items()
            },
            "diagnostics": self.diagnostics,
            "seed": self.seed,
        }


# ------------------------------------------------------------- FPT sweeps


def _fpt_one(args):
    inc, off, policy, pivot, x, radius, horizon, max_restarts, seed, xi, rep = args
    center = np.zeros(inc.dimension)
    center[0] = x
    out = engine.run_conditioned_on_survival(
        inc,
        off,
        policy,
        center,
        radius,
        horizon,
        np.random.SeedSequence(seed, spawn_key=(xi, rep)),
        max_restarts=max_restarts,
        pivot=pivot,
    )
    pruned = int(out.prune_log.sum())
    return out.status, out.tau, out.restarts, pruned


def fpt_samples(
    inc: IncrementLaw,
    off: OffspringLaw,
    constants: LdConstants,
    x: float,
    replications: int,
    seed: int,
    policy: PrunePolicy,
    radius: float = 1.0,
    max_restarts: int = 200,
    xi: int = 0,
    horizon: int | None = None,
    keep_arena_last: bool = False,
):
    """Accepted tau samples at a single target distance x."""
    asym = Asymptote(constants)
    if horizon is None:
        horizon = int(math.ceil(asym.t_of_x(x))) + 60
    pivot = constants.pivot_array
    args = [
        (inc, off, policy, pivot, x, radius, horizon, max_restarts, seed, xi, rep)
        for rep in range(replications)
    ]
    results = map_replications(_fpt_one, args)
    taus = [t for status, t, _, _ in results if status == engine.TARGET_HIT]
    restarts = sum(r for _, _, r, _ in results)
    misses = sum(1 for status, _, _, _ in results if status != engine.TARGET_HIT)
    return np.asarray(taus, dtype=float), {"restarts": restarts, "misses": misses}


def fpt_sweep(
    inc: IncrementLaw,
    off: OffspringLaw,
    constants: LdConstants,
    x_grid,
    replications: int,
    seed: int,
    policy: PrunePolicy,
    radius: float = 1.0,
    max_restarts: int = 200,
    min_hits: int = 50,
) -> ExperimentReport:
    """Median first-passage times across an x-grid with both fitted laws.

    Fits the linear speed (median tau against x, slope target 1/c1) and the
    logarithmic correction (median tau - x/c1 against log x, slope target
    (d+2)/(2 c1 c2)); the tightness series is the per-x IQR of tau - t_x.
    """
    x_grid = [float(x) for x in x_grid]
    asym = Asymptote(constants)
    report = ExperimentReport(
        config={
            "x_grid": x_grid,
            "replications": replications,
            "radius": radius,
            "capacity": policy.capacity,
            "mode": policy.mode,
        },
        seed=seed,
    )
    medians, iqrs, diag = [], [], {}
    for xi, x in enumerate(x_grid):
        taus, d = fpt_samples(
            inc, off, constants, x, replications, seed, policy,
            radius=radius, max_restarts=max_restarts, xi=xi,
        )
        if len(taus) < min_hits:
            raise InsufficientHits(f"only {len(taus)} accepted runs at x={x}")
        report.samples[x] = taus
        medians.append(float(np.median(taus)))
        iqrs.append(float(np.percentile(taus, 75) - np.percentile(taus, 25)))
        diag[x] = d
    report.diagnostics["per_x"] = diag
    report.fits["median_tau"] = dict(zip(x_grid, medians))
    report.fits["iqr"] = dict(zip(x_grid, iqrs))
    report.fits["t_x"] = {x: asym.t_of_x(x) for x in x_grid}
    if len(x_grid) >= 2:
        xs = np.asarray(x_grid)
        med = np.asarray(medians)
        report.fits["linear"] = fit_line(xs, med)
        report.fits["log_correction"] = fit_line(np.log(xs), med - xs / constants.c1)
        report.fits["log_slope_ci"] = _log_slope_ci(report.samples, x_grid, constants, seed)
        report.fits["targets"] = {
            "linear_slope": 1.0 / constants.c1,
            "log_slope": (constants.dimension + 2.0)
            / (2.0 * constants.c1 * constants.c2),
        }
    return report


def _log_slope_ci(samples: dict, x_grid, constants, seed, n_resamples: int = 1000):
    """Bootstrap CI of the log-correction slope, resampling taus per x."""
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0xC1,)))
    logx = np.log(np.asarray(x_grid))
    slopes = np.empty(n_resamples)
    arrays = [np.asarray(samples[x]) for x in x_grid]
    for b in range(n_resamples):
        med = np.array(
            [np.median(a[rng.integers(0, len(a), len(a))]) for a in arrays]
        )
        y = med - np.asarray(x_grid) / constants.c1
        slopes[b] = np.polyfit(logx, y, 1)[0]
    return (float(np.percentile(slopes, 2.5)), float(np.percentile(slopes, 97.5)))


def concentration_fit(tau_samples, min_samples: int = 1000) -> TailFit:
    """Exceedance tail of tau around its median: log P(|tau - med| > y) vs y."""
    taus = np.asarray(tau_samples, dtype=float)
    if len(taus) < min_samples:
        raise InsufficientHits(
            f"concentration fit needs >= {min_samples} samples, got {len(taus)}"
        )
    dev = np.abs(taus - np.median(taus))
    ys, ps = [], []
    y = 1.0
    while True:
        count = int((dev > y).sum())
        if count < 5:
            break
        ys.append(y)
        ps.append(count / len(taus))
        y += 1.0
    if len(ys) < 2:
        raise InsufficientHits("tail too short for a concentration fit")
    return fit_line(ys, np.log(ps))


# ------------------------------------------------------- maximum statistics


def _max_series_one(args):
    inc, off, policy, pivot, horizon, seed, rep = args
    rng = substream(seed, rep)
    arena = engine.GenealogyArena(inc.dimension)
    series = np.full(horizon + 1, -np.inf)
    series[0] = 0.0
    for gen in range(1, horizon + 1):
        engine.step(arena, inc, off, policy, pivot, rng)
        if len(arena.alive) == 0:
            break
        series[gen] = float((arena.alive_positions @ pivot).max())
    return series


def max_series(
    inc: IncrementLaw,
    off: OffspringLaw,
    constants: LdConstants,
    horizon: int,
    replications: int,
    seed: int,
    policy: PrunePolicy,
) -> np.ndarray:
    """(replications, horizon+1) matrix of running maxima M_0..M_horizon."""
    pivot = constants.pivot_array
    args = [(inc, off, policy, pivot, horizon, seed, rep) for rep in range(replications)]
    return np.vstack(map_replications(_max_series_one, args))


def max_tightness(
    inc: IncrementLaw,
    off: OffspringLaw,
    constants: LdConstants,
    n_grid,
    replications: int,
    seed: int,
    policy: PrunePolicy,
) -> ExperimentReport:
    """median(M_n) - m_n on a generation grid plus its total variation band."""
    n_grid = sorted(int(n) for n in n_grid)
    asym = Asymptote(constants)
    mat = max_series(inc, off, constants, max(n_grid), replications, seed, policy)
    offsets = {}
    for n in n_grid:
        col = mat[:, n]
        col = col[np.isfinite(col)]
        offsets[n] = float(np.median(col)) - asym.m_of_n(n)
    vals = np.array([offsets[n] for n in n_grid])
    report = ExperimentReport(
        config={"n_grid": n_grid, "replications": replications, "capacity": policy.capacity},
        seed=seed,
    )
    report.samples["max_matrix"] = mat
    report.fits["median_offset"] = offsets
    report.fits["band"] = float(vals.max() - vals.min()) if len(n_grid) > 1 else 0.0
    return report


def max_tail_fit(
    inc: IncrementLaw,
    off: OffspringLaw,
    constants: LdConstants,
    n: int,
    replications: int,
    seed: int,
    policy: PrunePolicy,
    z_grid=(1.0, 2.0, 3.0, 4.0, 5.0),
) -> TailFit:
    """Exponent of P(M_n > m_n + z) in z; slope target is -c2."""
    asym = Asymptote(constants)
    mat = max_series(inc, off, constants, n, replications, seed, policy)
    mn = mat[:, n]
    mn = mn[np.isfinite(mn)]
    excess = mn - asym.m_of_n(n)
    zs, ps = [], []
    for z in z_grid:
        count = int((excess > z).sum())
        if count >= 5:
            zs.append(z)
            ps.append(count / len(excess))
    if len(zs) < 2:
        raise InsufficientEvents("too few maxima above the tail grid")
    return fit_line(zs, np.log(ps))


# ------------------------------------------- conditional transverse hitting


def _tilted_endpoint_sums(inc: IncrementLaw, tilt: np.ndarray, n: int, reps: int, rng):
    """Endpoint sums of n tilted increments: (pivot_sum, transverse (d-1))."""
    d = inc.dimension
    if inc.kind in ("gaussian", "gaussian_diag"):
        # the tilted sum is Gaussian: mean n*Sigma*tilt, covariance n*Sigma
        var = inc.coordinate_variances
        mean = n * var * tilt
        std = np.sqrt(n * var)
        pts = mean + std * rng.standard_normal((reps, d))
    else:
        pts = np.zeros((reps, d))
        batch = max(1, int(2e7 // max(reps, 1)))
        done = 0
        while done < n:
            m = min(batch, n - done)
            for _ in range(m):
                pts += inc.sample_tilted(rng, tilt, reps)
            done += m
    return pts


def conditional_transverse_hit(
    inc: IncrementLaw,
    constants: LdConstants,
    x_grid,
    replications: int,
    seed: int,
) -> ExperimentReport:
    """P(transverse part in the radius-1/2 ball | pivot sum near x).

    Sampling is tilted by c2_vec along the pivot; because the tilt weight
    is a function of the pivot sum alone, the conditional transverse law is
    exactly that of the untilted walk, so the acceptance-fraction estimate
    is unbiased.  The fitted slope of log p against log x targets -(d-1)/2.
    """
    if inc.dimension < 2:
        raise ValueError("transverse hitting requires d >= 2")
    asym = Asymptote(constants)
    tilt = constants.c2_vec_array
    frame = constants.frame_array
    report = ExperimentReport(
        config={"x_grid": [float(x) for x in x_grid], "replications": replications},
        seed=seed,
    )
    probs, details = {}, {}
    for xi, x in enumerate(x_grid):
        lx = math.log(x)
        n = int(math.floor(max(asym.t_of_x(x) - lx * lx, 2.0)))
        rng = substream(seed, 0xC17, xi)
        pts = _tilted_endpoint_sums(inc, tilt, n, replications, rng)
        pivot_sum = pts @ constants.pivot_array
        accepted = np.abs(pivot_sum - x) <= 0.5
        n_acc = int(accepted.sum())
        if n_acc == 0:
            raise NoAcceptedSamples(f"no pivot-sum acceptances at x={x}")
        trans = pts[accepted] @ frame.T
        hit = (trans * trans).sum(axis=1) <= 0.25
        p_hat = float(hit.mean())
        probs[float(x)] = p_hat
        details[float(x)] = {"n": n, "accepted": n_acc, "hits": int(hit.sum())}
    report.samples["p_hat"] = probs
    report.diagnostics["per_x"] = details
    xs = np.asarray(list(probs), dtype=float)
    ps = np.asarray([probs[x] for x in probs])
    if (ps <= 0).any():
        raise NoAcceptedSamples("zero transverse hits at some x; enlarge replications")
    report.fits["log_log"] = fit_line(np.log(xs), np.log(ps))
    report.fits["target_slope"] = -(constants.dimension - 1.0) / 2.0
    return report


def transverse_hit_oracle(inc: IncrementLaw, n: int) -> float:
    """Closed-form P(transverse in radius-1/2 ball) for isotropic Gaussians."""
    if inc.kind != "gaussian":
        raise ValueError("oracle available for isotropic Gaussian only")
    sigma2 = float(inc.coordinate_variances[0]) * n
    k = inc.dimension - 1
    # squared radius of a k-dim standard normal scaled by sigma2: chi^2_k
    return float(spstats.chi2.cdf(0.25 / sigma2, df=k))


# ------------------------------------------------- two-descendant probability


def _subtree_max_one(args):
    inc, off, policy, pivot, n, seed, rep = args
    rng = substream(seed, 0x2D, rep)
    root_disp = inc.sample(rng, 1)[0]
    arena = engine.GenealogyArena(inc.dimension)
    best = float(root_disp @ pivot)
    for _ in range(n - 1):
        engine.step(arena, inc, off, policy, pivot, rng)
        if len(arena.alive) == 0:
            return -np.inf  # subtree died before depth n-1: no generation-n particle
        best = float(root_disp @ pivot + (arena.alive_positions @ pivot).max())
    return best


def two_descendant_prob(
    inc: IncrementLaw,
    off: OffspringLaw,
    constants: LdConstants,
    n: int,
    g_grid,
    replications: int,
    seed: int,
    window_w0: float | None = None,
    min_events: int = 10,
) -> ExperimentReport:
    """P(two root-disjoint lineages both reach m_n + |g|) via subtree maxima.

    Conditioned on the root's offspring count j, the j first-generation
    subtrees are i.i.d., so the probability equals
    sum_j p_j (1 - (1-r)^j - j r (1-r)^(j-1)) with r the single-subtree
    reach probability — estimated once by plain Monte Carlo and reused
    across the g-grid.  The slope of log p - 2 log(|g|+1) in g targets 2c2.
    """
    g_grid = sorted(int(g) for g in g_grid)
    if any(g >= 0 for g in g_grid):
        raise ValueError("g_grid must contain negative integers")
    asym = Asymptote(constants)
    policy = PrunePolicy(
        mode=engine.MODE_WINDOW,
        tilt=constants.c2,
        window_w0=window_w0 if window_w0 is not None else 18.0 / constants.c2,
    )
    pivot = constants.pivot_array
    args = [(inc, off, policy, pivot, n, seed, rep) for rep in range(replications)]
    maxima = np.asarray(map_replications(_subtree_max_one, args))
    m_n = asym.m_of_n(n)
    probs_j = off.probs
    counts_j = off.counts.astype(float)

    def h_of_r(r: float) -> float:
        miss = (1.0 - r) ** counts_j
        single = counts_j * r * (1.0 - r) ** np.maximum(counts_j - 1, 0)
        return float((probs_j * (1.0 - miss - single)).sum())

    report = ExperimentReport(
        config={"n": n, "g_grid": g_grid, "replications": replications}, seed=seed
    )
    p_hat, r_hat, events = {}, {}, {}
    for g in g_grid:
        level = m_n - g  # g < 0, so the level sits |g| above m_n
        k = int((maxima >= level).sum())
        r = k / replications
        r_hat[g], events[g] = r, k
        p_hat[g] = h_of_r(r)
    report.samples["p_hat"] = p_hat
    report.samples["r_hat"] = r_hat
    report.diagnostics["events"] = events
    usable = [g for g in g_grid if events[g] >= min_events and p_hat[g] > 0]
    if len(usable) < 2:
        raise InsufficientEvents("too few subtree reaches across the g-grid")
    ys = [math.log(p_hat[g]) - 2.0 * math.log(abs(g) + 1.0) for g in usable]
    report.fits["slope"] = fit_line(usable, ys)
    report.fits["target_slope"] = 2.0 * constants.c2
    report.diagnostics["usable_g"] = usable
    return report


# ------------------------------------------------------------ escape events


def _escape_one(args):
    inc, off, n, hard_limit, seed, rep = args
    rng = substream(seed, 0xE5C, rep)
    out = engine.run_growth(inc, off, PrunePolicy.off(hard_limit), n, rng)
    if out.status == engine.EXTINCT:
        return None
    pos = out.arena.alive_positions
    return bool((np.linalg.norm(pos, axis=1) > 1.0).all())


def escape_prob(
    inc: IncrementLaw,
    off: OffspringLaw,
    n_grid,
    replications: int,
    seed: int,
    hard_limit: int = 2_000_000,
) -> ExperimentReport:
    """Frequency of {every generation-n particle lies outside the unit ball}.

    Extinct replications are excluded (the claim is for surviving trees).
    """
    n_grid = sorted(int(n) for n in n_grid)
    report = ExperimentReport(
        config={"n_grid": n_grid, "replications": replications}, seed=seed
    )
    freqs, counts = {}, {}
    for ni, n in enumerate(n_grid):
        if n == 0:
            freqs[n], counts[n] = 0.0, (0, replications)
            continue
        args = [(inc, off, n, hard_limit, seed + 7919 * ni, rep) for rep in range(replications)]
        flags = [f for f in map_replications(_escape_one, args) if f is not None]
        k = sum(flags)
        freqs[n] = k / len(flags) if flags else 0.0
        counts[n] = (k, len(flags))
    report.samples["freq"] = freqs
    report.diagnostics["counts"] = counts
    return report


# ----------------------------------------------------------- ballot scaling


def ballot_scaling(
    inc: IncrementLaw,
    n_grid,
    y: float,
    a: float,
    replications: int,
    seed: int,
    transverse_box_half: float = 1.0,
    batch_rows: int = 200_000,
    min_events: int = 5,
) -> ExperimentReport:
    """P(S_k >= -y for all k <= n, S_n in [a, a+1]) by direct Monte Carlo.

    For d >= 2 the first coordinate carries the barrier and endpoint
    constraints and the transverse coordinates must land in the box
    [-b, b]^(d-1) at time n; the log-log slope targets -(d+2)/2 (and -3/2
    when d = 1).
    """
    if y < 1.0 or y + a <= 0.0:
        raise ValueError("need y >= 1 and y + a > 0")
    n_grid = sorted(int(n) for n in n_grid)
    d = inc.dimension
    report = ExperimentReport(
        config={
            "n_grid": n_grid,
            "y": y,
            "a": a,
            "replications": replications,
            "dimension": d,
        },
        seed=seed,
    )
    freqs, events = {}, {}
    for ni, n in enumerate(n_grid):
        rng = substream(seed, 0xBA110, ni)
        hits = 0
        done = 0
        while done < replications:
            rows = min(batch_rows, replications - done)
            steps = inc.sample(rng, rows * n).reshape(rows, n, d)
            s1 = np.cumsum(steps[:, :, 0], axis=1)
            ok = (s1.min(axis=1) >= -y) & (s1[:, -1] >= a) & (s1[:, -1] <= a + 1.0)
            if d > 1 and ok.any():
                end_t = steps[ok][:, :, 1:].sum(axis=1)
                ok_t = (np.abs(end_t) <= transverse_box_half).all(axis=1)
                hits += int(ok_t.sum())
            else:
                hits += int(ok.sum())
            done += rows
        freqs[n] = hits / replications
        events[n] = hits
    report.samples["freq"] = freqs
    report.diagnostics["events"] = events
    usable = [n for n in n_grid if events[n] >= min_events]
    if len(usable) < 2:
        raise InsufficientEvents(
            "too few barrier-and-endpoint events; enlarge replications"
        )
    report.fits["log_log"] = fit_line(
        np.log(usable), np.log([freqs[n] for n in usable])
    )
    report.fits["target_slope"] = -1.5 if d == 1 else -(d + 2.0) / 2.0
    return report
