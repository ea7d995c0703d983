"""Increment and offspring laws of the branching random walk.

Increment laws are mean-zero d-dimensional jump distributions with exact
samplers and closed-form log moment generating functions.  Offspring laws
are finite-support reproduction distributions.  Both are immutable and
safe to share across replication workers; randomness always comes from a
caller-supplied ``numpy.random.Generator``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, ive

from .errors import DomainError

GAUSSIAN = "gaussian"
BALL = "ball"
CUBE = "cube"
GAUSSIAN_DIAG = "gaussian_diag"
MIXTURE = "mixture"

_KINDS = (GAUSSIAN, BALL, CUBE, GAUSSIAN_DIAG, MIXTURE)


def _log_ball_mgf_radial(s: float, d: int) -> float:
    """log E[exp(t.X)] for X uniform on the unit ball in R^d, s = |t|."""
    if s < 1e-6:
        # series of Gamma(v+1) (2/s)^v I_v(s), v = d/2
        v = d / 2.0
        return math.log1p(s * s / (4.0 * (v + 1.0)) + s**4 / (32.0 * (v + 1.0) * (v + 2.0)))
    v = d / 2.0
    if s > 1e6:
        # uniform asymptotics; scipy.special.ive loses accuracy out here
        log_iv = s - 0.5 * math.log(2.0 * math.pi * s) + math.log1p(-(4.0 * v * v - 1.0) / (8.0 * s))
        return gammaln(v + 1.0) + v * (math.log(2.0) - math.log(s)) + log_iv
    # I_v(s) = ive(v, s) * e^s, stable for large s
    return gammaln(v + 1.0) + v * (math.log(2.0) - math.log(s)) + math.log(ive(v, s)) + s


def _ball_mgf_radial_dlog(s: float, d: int) -> float:
    """d/ds log E[exp(t.X)] = I_{v+1}(s)/I_v(s), v = d/2."""
    v = d / 2.0
    if s < 1e-6:
        return s / (2.0 * (v + 1.0))
    if s > 1e6:
        return 1.0 - (2.0 * v + 1.0) / (2.0 * s)
    return ive(v + 1.0, s) / ive(v, s)


def _beta_marginal_sample(rng, d: int, size: int) -> np.ndarray:
    """One coordinate of a uniform point in the unit ball of R^d."""
    # density proportional to (1 - u^2)^((d-1)/2) on [-1, 1]
    b = (d + 1.0) / 2.0
    return 2.0 * rng.beta(b, b, size=size) - 1.0


@dataclass(frozen=True)
class IncrementLaw:
    """A centered d-dimensional jump distribution.

    ``params`` is family-specific:
      gaussian       -- (sigma,)
      ball           -- (radius,)
      cube           -- (half_width,)
      gaussian_diag  -- (sigma_1, ..., sigma_d)
      mixture        -- (weights, centered_means, sigmas) nested tuples

    The MGF is finite on all of R^d for every built-in family, so
    ``mgf_domain_radius`` is +inf throughout.
    """

    kind: str
    dimension: int
    params: tuple = ()
    mgf_domain_radius: float = math.inf

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown increment family {self.kind!r}")
        if self.dimension < 1:
            raise ValueError("dimension must be a positive integer")

    # ---------------------------------------------------------------- flags

    @property
    def spherically_symmetric(self) -> bool:
        if self.kind in (GAUSSIAN, BALL):
            return True
        if self.kind == CUBE:
            return self.dimension == 1
        if self.kind == GAUSSIAN_DIAG:
            scales = self.params
            return all(abs(s - scales[0]) < 1e-15 for s in scales)
        return False

    @property
    def non_lattice(self) -> bool:
        # All built-in families are absolutely continuous.
        return True

    @property
    def coordinate_variances(self) -> np.ndarray:
        d = self.dimension
        if self.kind == GAUSSIAN:
            return np.full(d, self.params[0] ** 2)
        if self.kind == BALL:
            return np.full(d, self.params[0] ** 2 / (d + 2.0))
        if self.kind == CUBE:
            return np.full(d, self.params[0] ** 2 / 3.0)
        if self.kind == GAUSSIAN_DIAG:
            return np.array([s**2 for s in self.params])
        w, mu, sg = self.params
        w = np.asarray(w)
        mu = np.asarray(mu)
        sg = np.asarray(sg)
        # means are centered, so per-coordinate variance is a plain mixture sum
        return (w[:, None] * (mu**2 + (sg**2)[:, None])).sum(axis=0)

    # -------------------------------------------------------------- sampler

    def sample(self, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
        n = 1 if size is None else int(size)
        d = self.dimension
        if self.kind == GAUSSIAN:
            out = self.params[0] * rng.standard_normal((n, d))
        elif self.kind == BALL:
            r = self.params[0]
            g = rng.standard_normal((n, d))
            g /= np.linalg.norm(g, axis=1, keepdims=True)
            out = r * rng.random(n) ** (1.0 / d) * g.T
            out = out.T
        elif self.kind == CUBE:
            a = self.params[0]
            out = rng.uniform(-a, a, size=(n, d))
        elif self.kind == GAUSSIAN_DIAG:
            out = rng.standard_normal((n, d)) * np.asarray(self.params)
        else:
            w, mu, sg = self.params
            w = np.asarray(w)
            mu = np.asarray(mu)
            sg = np.asarray(sg)
            comp = rng.choice(len(w), size=n, p=w)
            out = mu[comp] + sg[comp, None] * rng.standard_normal((n, d))
        return out[0] if size is None else out

    def sample_pivot(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """First-coordinate marginal; cheaper than full vectors."""
        n = int(size)
        if self.kind == GAUSSIAN:
            return self.params[0] * rng.standard_normal(n)
        if self.kind == BALL:
            return self.params[0] * _beta_marginal_sample(rng, self.dimension, n)
        if self.kind == CUBE:
            a = self.params[0]
            return rng.uniform(-a, a, size=n)
        if self.kind == GAUSSIAN_DIAG:
            return self.params[0] * rng.standard_normal(n)
        w, mu, sg = self.params
        w = np.asarray(w)
        mu = np.asarray(mu)
        sg = np.asarray(sg)
        comp = rng.choice(len(w), size=n, p=w)
        return mu[comp, 0] + sg[comp] * rng.standard_normal(n)

    def sample_tilted(self, rng: np.random.Generator, tilt: np.ndarray, size: int) -> np.ndarray:
        """Exact sampler of the exponentially tilted law e^{t.x} dP / phi(t)."""
        t = np.asarray(tilt, dtype=float)
        n = int(size)
        d = self.dimension
        if self.kind == GAUSSIAN:
            s2 = self.params[0] ** 2
            return s2 * t + self.params[0] * rng.standard_normal((n, d))
        if self.kind == GAUSSIAN_DIAG:
            sg = np.asarray(self.params)
            return sg**2 * t + sg * rng.standard_normal((n, d))
        if self.kind == CUBE:
            a = self.params[0]
            out = np.empty((n, d))
            u = rng.random((n, d))
            for j in range(d):
                lam = t[j]
                if abs(lam * a) < 1e-8:
                    out[:, j] = a * (2.0 * u[:, j] - 1.0)
                else:
                    lo = math.exp(-lam * a)
                    hi = math.exp(lam * a)
                    out[:, j] = np.log(lo + u[:, j] * (hi - lo)) / lam
            return out
        if self.kind == BALL:
            r = self.params[0]
            bound = r * float(np.linalg.norm(t))
            out = np.empty((n, d))
            filled = 0
            while filled < n:
                m = max(2 * (n - filled), 64)
                cand = self.sample(rng, m)
                acc = rng.random(m) < np.exp(cand @ t - bound)
                got = cand[acc]
                take = min(len(got), n - filled)
                out[filled : filled + take] = got[:take]
                filled += take
            return out
        w, mu, sg = self.params
        w = np.asarray(w)
        mu = np.asarray(mu)
        sg = np.asarray(sg)
        logw = np.log(w) + mu @ t + 0.5 * sg**2 * float(t @ t)
        logw -= logw.max()
        wt = np.exp(logw)
        wt /= wt.sum()
        comp = rng.choice(len(w), size=n, p=wt)
        return mu[comp] + sg[comp, None] ** 2 * t + sg[comp, None] * rng.standard_normal((n, d))

    # ------------------------------------------------------------------ MGF

    def log_mgf(self, lam: np.ndarray) -> float:
        """log E[exp(lam . xi)]; exact closed form for every family."""
        lam = np.asarray(lam, dtype=float)
        if lam.shape != (self.dimension,):
            raise DomainError(f"lambda must have shape ({self.dimension},)")
        if self.kind == GAUSSIAN:
            return 0.5 * self.params[0] ** 2 * float(lam @ lam)
        if self.kind == GAUSSIAN_DIAG:
            sg = np.asarray(self.params)
            return 0.5 * float((sg * lam) @ (sg * lam))
        if self.kind == CUBE:
            a = self.params[0]
            tot = 0.0
            for lj in lam:
                s = abs(lj * a)
                if s < 1e-6:
                    tot += math.log1p(s * s / 6.0 + s**4 / 120.0)
                else:
                    # log(sinh(s)/s), stable for large s
                    tot += s + math.log1p(-math.exp(-2.0 * s)) - math.log(2.0 * s)
            return tot
        if self.kind == BALL:
            s = self.params[0] * float(np.linalg.norm(lam))
            return _log_ball_mgf_radial(s, self.dimension)
        w, mu, sg = self.params
        w = np.asarray(w)
        mu = np.asarray(mu)
        sg = np.asarray(sg)
        expo = np.log(w) + mu @ lam + 0.5 * sg**2 * float(lam @ lam)
        m = expo.max()
        return m + math.log(np.exp(expo - m).sum())

    def log_mgf_grad(self, lam: np.ndarray) -> np.ndarray:
        """Gradient of ``log_mgf``; analytic for every family."""
        lam = np.asarray(lam, dtype=float)
        if lam.shape != (self.dimension,):
            raise DomainError(f"lambda must have shape ({self.dimension},)")
        if self.kind == GAUSSIAN:
            return self.params[0] ** 2 * lam
        if self.kind == GAUSSIAN_DIAG:
            sg = np.asarray(self.params)
            return sg**2 * lam
        if self.kind == CUBE:
            a = self.params[0]
            out = np.empty_like(lam)
            for j, lj in enumerate(lam):
                s = lj * a
                if abs(s) < 1e-6:
                    out[j] = a * (s / 3.0 - s**3 / 45.0)
                else:
                    out[j] = a * (1.0 / math.tanh(s) - 1.0 / s)
            return out
        if self.kind == BALL:
            r = self.params[0]
            nrm = float(np.linalg.norm(lam))
            if nrm == 0.0:
                return np.zeros_like(lam)
            s = r * nrm
            return _ball_mgf_radial_dlog(s, self.dimension) * r * lam / nrm
        w, mu, sg = self.params
        w = np.asarray(w)
        mu = np.asarray(mu)
        sg = np.asarray(sg)
        expo = np.log(w) + mu @ lam + 0.5 * sg**2 * float(lam @ lam)
        expo -= expo.max()
        wt = np.exp(expo)
        wt /= wt.sum()
        return wt @ (mu + sg[:, None] ** 2 * lam)


# ------------------------------------------------------------- constructors


def gaussian(dimension: int, sigma: float = 1.0) -> IncrementLaw:
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    return IncrementLaw(GAUSSIAN, dimension, (float(sigma),))


def uniform_ball(dimension: int, radius: float = 1.0) -> IncrementLaw:
    if radius <= 0:
        raise ValueError("radius must be positive")
    return IncrementLaw(BALL, dimension, (float(radius),))


def uniform_cube(dimension: int, half_width: float = 1.0) -> IncrementLaw:
    if half_width <= 0:
        raise ValueError("half_width must be positive")
    return IncrementLaw(CUBE, dimension, (float(half_width),))


def gaussian_diag(scales) -> IncrementLaw:
    scales = tuple(float(s) for s in scales)
    if any(s <= 0 for s in scales):
        raise ValueError("all scales must be positive")
    return IncrementLaw(GAUSSIAN_DIAG, len(scales), scales)


def shifted_mixture(weights, means, sigmas) -> IncrementLaw:
    """Gaussian mixture with given component means, re-centered to mean zero."""
    w = np.asarray(weights, dtype=float)
    mu = np.atleast_2d(np.asarray(means, dtype=float))
    sg = np.asarray(sigmas, dtype=float)
    if w.ndim != 1 or len(w) != len(mu) or len(w) != len(sg):
        raise ValueError("weights, means, sigmas must have equal length")
    if abs(w.sum() - 1.0) > 1e-9 or (w < 0).any():
        raise ValueError("weights must be a probability vector")
    if (sg <= 0).any():
        raise ValueError("sigmas must be positive")
    mu = mu - w @ mu  # centering makes the mean exactly zero
    d = mu.shape[1]
    params = (tuple(w), tuple(map(tuple, mu)), tuple(sg))
    return IncrementLaw(MIXTURE, d, params)


def make_increment(kind: str, dimension: int, params: dict) -> IncrementLaw:
    """Construct from config-style keyword parameters."""
    if kind == GAUSSIAN:
        return gaussian(dimension, params.get("sigma", 1.0))
    if kind == BALL:
        return uniform_ball(dimension, params.get("radius", 1.0))
    if kind == CUBE:
        return uniform_cube(dimension, params.get("half_width", 1.0))
    if kind == GAUSSIAN_DIAG:
        return gaussian_diag(params["scales"])
    if kind == MIXTURE:
        return shifted_mixture(params["weights"], params["means"], params["sigmas"])
    raise ValueError(f"unknown increment family {kind!r}")


# ------------------------------------------------------------ offspring law


@dataclass(frozen=True)
class OffspringLaw:
    """Finite-support reproduction law {p_i}."""

    pmf: tuple  # ((i, p_i), ...) sorted by i

    def __post_init__(self):
        items = tuple(sorted((int(i), float(p)) for i, p in self.pmf))
        if not items:
            raise ValueError("pmf must be non-empty")
        if any(i < 0 for i, _ in items):
            raise ValueError("offspring counts must be non-negative")
        if len({i for i, _ in items}) != len(items):
            raise ValueError("duplicate offspring counts in pmf")
        if any(p < 0 for _, p in items):
            raise ValueError("probabilities must be non-negative")
        if abs(sum(p for _, p in items) - 1.0) > 1e-9:
            raise ValueError("probabilities must sum to 1")
        object.__setattr__(self, "pmf", items)

    @property
    def counts(self) -> np.ndarray:
        return np.array([i for i, _ in self.pmf], dtype=np.int64)

    @property
    def probs(self) -> np.ndarray:
        return np.array([p for _, p in self.pmf])

    @property
    def rho(self) -> float:
        return float(sum(i * p for i, p in self.pmf))

    @property
    def second_moment(self) -> float:
        return float(sum(i**2 * p for i, p in self.pmf))

    @property
    def third_moment(self) -> float:
        return float(sum(i**3 * p for i, p in self.pmf))

    @property
    def max_count(self) -> int:
        return self.pmf[-1][0]

    def pgf(self, s: float) -> float:
        return float(sum(p * s**i for i, p in self.pmf))

    def extinction_prob(self, tol: float = 1e-14, max_iter: int = 100000) -> float:
        """Smallest fixed point of the generating function in [0, 1]."""
        q = 0.0
        for _ in range(max_iter):
            q_new = self.pgf(q)
            if abs(q_new - q) < tol:
                return q_new
            q = q_new
        return q

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Inverse-CDF sampling: consumes exactly one uniform per draw."""
        cdf = np.cumsum(self.probs)
        cdf[-1] = 1.0
        u = rng.random(int(size))
        return self.counts[np.searchsorted(cdf, u, side="right")]


def make_offspring(pmf) -> OffspringLaw:
    return OffspringLaw(tuple((int(i), float(p)) for i, p in pmf))


# ------------------------------------------------------- assumption checks


@dataclass(frozen=True)
class AssumptionCheck:
    status: str  # "pass" | "fail" | "declared"
    value: float | None = None
    note: str = ""


@dataclass(frozen=True)
class AssumptionReport:
    checks: dict = field(default_factory=dict)

    @property
    def all_ok(self) -> bool:
        return all(c.status in ("pass", "declared") for c in self.checks.values())


def check_assumptions(inc: IncrementLaw, off: OffspringLaw) -> AssumptionReport:
    """Verify the model assumptions; declarative where sampling cannot decide.

    (A1), (A2) are checked numerically; (A3), (A5) are declared per family;
    (A4)/(A6) are checked by solving for the speed constants and confirming
    log(rho) lies strictly inside the mapped range of the rate function.
    """
    from . import ratefn  # deferred: ratefn depends on laws

    checks = {}

    m3 = off.third_moment
    checks["A1"] = AssumptionCheck(
        "pass" if math.isfinite(m3) else "fail", m3, "finite third offspring moment"
    )

    mean = inc.log_mgf_grad(np.zeros(inc.dimension))
    ok = bool(np.all(np.abs(mean) < 1e-9))
    checks["A2"] = AssumptionCheck(
        "pass" if ok else "fail", float(np.max(np.abs(mean))), "centered jump law"
    )

    checks["A3"] = AssumptionCheck(
        "declared" if inc.spherically_symmetric else "fail",
        None,
        "spherical symmetry is a per-family property",
    )

    supercritical = off.rho > 1.0
    if not supercritical:
        checks["A4"] = AssumptionCheck("fail", off.rho, "offspring mean must exceed 1")
        checks["A6"] = AssumptionCheck("fail", off.rho, "offspring mean must exceed 1")
    else:
        try:
            ratefn.solve_speed_1d(ratefn.Projection(inc), math.log(off.rho))
            checks["A4"] = AssumptionCheck("pass", math.log(off.rho), "log rho in ran(I)")
        except Exception as exc:  # RangeError or solver failure
            checks["A4"] = AssumptionCheck("fail", math.log(off.rho), str(exc))
        try:
            ratefn.solve_speed_nd(inc, math.log(off.rho))
            checks["A6"] = AssumptionCheck("pass", math.log(off.rho), "log rho in ran(I_hat(.,0))")
        except Exception as exc:
            checks["A6"] = AssumptionCheck("fail", math.log(off.rho), str(exc))

    checks["A5"] = AssumptionCheck(
        "declared" if inc.non_lattice else "fail",
        None,
        "non-lattice cannot be certified from samples",
    )

    return AssumptionReport(checks)
