"""Rate functions by numerical convex conjugation and the derived constants.

The speed c1 solves I(c1) = log(rho) for the one-dimensional rate function
of the jump projected onto the pivot direction, and c2 = I'(c1) is the
optimal tilt.  In the general (non-spherically-symmetric) case the analogous
constants come from the full d-dimensional conjugate: c1_hat solves
I_hat(c1_hat * e1) = log(rho) and c2_vec is the maximizing tilt vector,
whose direction defines the pivot.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceFailure, RangeError
from .laws import IncrementLaw, OffspringLaw

_LAMBDA_TOL = 1e-12
_SPEED_TOL = 1e-13
_ND_TOL = 1e-10


class Projection:
    """A d-dimensional increment law projected onto a unit direction."""

    def __init__(self, law: IncrementLaw, direction=None):
        self.law = law
        if direction is None:
            direction = np.zeros(law.dimension)
            direction[0] = 1.0
        u = np.asarray(direction, dtype=float)
        nrm = float(np.linalg.norm(u))
        if nrm == 0.0:
            raise ValueError("direction must be non-zero")
        self.direction = u / nrm

    def logk(self, t: float) -> float:
        return self.law.log_mgf(t * self.direction)

    def dlogk(self, t: float) -> float:
        return float(self.direction @ self.law.log_mgf_grad(t * self.direction))

    def d2logk(self, t: float, h: float = 1e-6) -> float:
        return (self.dlogk(t + h) - self.dlogk(t - h)) / (2.0 * h)


def legendre_1d(proj: Projection, x: float) -> tuple[float, float]:
    """One-dimensional convex conjugate sup_{lambda>0} (lambda x - log k).

    Returns (I(x), lambda_star).  Solved by safeguarded Newton with
    bisection fallback on the monotone map lambda -> (log k)'(lambda) - x.
    """
    if x <= 0.0:
        # the supremum over positive tilts of a centered law sits at 0+
        return 0.0, 0.0

    def f(lam):
        return proj.dlogk(lam) - x

    lo, flo = 0.0, -x
    hi = 1.0
    fhi = f(hi)
    grow = 0
    while fhi < 0.0:
        lo, flo = hi, fhi
        hi *= 2.0
        fhi = f(hi)
        grow += 1
        if grow > 200:
            raise RangeError(f"x={x} is outside the attainable slopes of the projection")

    lam = 0.5 * (lo + hi)
    for _ in range(200):
        flam = f(lam)
        if flam > 0.0:
            hi = lam
        else:
            lo = lam
        if hi - lo < _LAMBDA_TOL * (1.0 + abs(lam)) or flam == 0.0:
            break
        deriv = proj.d2logk(lam)
        step_ok = deriv > 0.0
        if step_ok:
            nxt = lam - flam / deriv
            step_ok = lo < nxt < hi
        lam = nxt if step_ok else 0.5 * (lo + hi)
    else:
        raise ConvergenceFailure("legendre_1d did not converge", best=lam)

    return lam * x - proj.logk(lam), lam


def legendre_nd(law: IncrementLaw, x: np.ndarray) -> tuple[float, np.ndarray]:
    """Full d-dimensional conjugate; returns (I_hat(x), lambda_star).

    Solves grad log phi(lambda) = x by damped Newton with a
    finite-difference Hessian.
    """
    x = np.asarray(x, dtype=float)
    d = law.dimension
    lam = x / law.coordinate_variances  # exact for Gaussian, sane elsewhere

    def resid(l):
        return law.log_mgf_grad(l) - x

    g = resid(lam)
    best = (float(np.max(np.abs(g))), lam.copy())
    h = 1e-6
    for _ in range(100):
        if np.max(np.abs(g)) <= _ND_TOL * (1.0 + float(np.linalg.norm(x))):
            val = float(lam @ x) - law.log_mgf(lam)
            return val, lam
        H = np.empty((d, d))
        for j in range(d):
            e = np.zeros(d)
            e[j] = h * (1.0 + abs(lam[j]))
            H[:, j] = (law.log_mgf_grad(lam + e) - law.log_mgf_grad(lam - e)) / (2.0 * e[j])
        try:
            step = np.linalg.solve(H, -g)
        except np.linalg.LinAlgError:
            raise ConvergenceFailure("singular Hessian in legendre_nd", best=best[1])
        scale = 1.0
        g_norm = float(np.linalg.norm(g))
        for _ in range(60):
            trial = lam + scale * step
            gt = resid(trial)
            if float(np.linalg.norm(gt)) < g_norm:
                lam, g = trial, gt
                break
            scale *= 0.5
        else:
            raise ConvergenceFailure("damping failed in legendre_nd", best=best[1])
        if float(np.linalg.norm(lam)) > 1e8:
            raise RangeError("x is outside the attainable range of grad log phi")
        cur = float(np.max(np.abs(g)))
        if cur < best[0]:
            best = (cur, lam.copy())
    raise ConvergenceFailure("legendre_nd exceeded max iterations", best=best[1])


def _bracket_speed(rate_at, log_rho: float) -> tuple[float, float]:
    """Find [good, hi] with rate(good) < log_rho <= rate(hi).

    ``rate_at`` may raise RangeError/ConvergenceFailure beyond the
    attainable slopes; the bracket then shrinks toward the boundary, where
    the rate function of a continuous law diverges.
    """
    good = 1e-6
    hi = 1.0
    bad = None
    for _ in range(400):
        try:
            val = rate_at(hi)
        except (RangeError, ConvergenceFailure):
            bad = hi
            if bad - good < 1e-13 * max(1.0, bad):
                raise RangeError("log rho exceeds the rate function over attainable slopes")
            hi = 0.5 * (good + hi)
            continue
        if val >= log_rho:
            return good, hi
        good = hi
        if bad is None:
            hi = 2.0 * hi
        else:
            if bad - good < 1e-13 * max(1.0, bad):
                raise RangeError("log rho exceeds the rate function over attainable slopes")
            hi = 0.5 * (good + bad)
    raise RangeError("could not bracket the speed")


def solve_speed_1d(proj: Projection, log_rho: float) -> tuple[float, float]:
    """Solve I(c1) = log_rho on the projected law; returns (c1, c2 = I'(c1))."""
    if log_rho <= 0.0:
        raise RangeError("log rho must be positive (supercritical branching)")
    lo, hi = _bracket_speed(lambda x: legendre_1d(proj, x)[0], log_rho)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if legendre_1d(proj, mid)[0] > log_rho:
            hi = mid
        else:
            lo = mid
        if hi - lo < _SPEED_TOL * (1.0 + abs(mid)):
            break
    c1 = 0.5 * (lo + hi)
    _, c2 = legendre_1d(proj, c1)
    return c1, c2


def solve_speed_nd(law: IncrementLaw, log_rho: float) -> tuple[float, np.ndarray]:
    """Solve I_hat(c * e1) = log_rho; returns (c1_hat, c2_vec)."""
    if log_rho <= 0.0:
        raise RangeError("log rho must be positive (supercritical branching)")
    d = law.dimension
    e1 = np.zeros(d)
    e1[0] = 1.0

    def rate_at(c):
        return legendre_nd(law, c * e1)[0]

    lo, hi = _bracket_speed(rate_at, log_rho)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if rate_at(mid) > log_rho:
            hi = mid
        else:
            lo = mid
        if hi - lo < _SPEED_TOL * (1.0 + abs(mid)):
            break
    c1_hat = 0.5 * (lo + hi)
    _, c2_vec = legendre_nd(law, c1_hat * e1)
    return c1_hat, c2_vec


@dataclass(frozen=True)
class LdConstants:
    """Large-deviation constants of a (law, offspring) pair.

    c1, c2 are the speed and tilt of the jump projected onto the pivot
    direction; c1_hat and c2_vec are their full-dimensional counterparts.
    ``frame`` is an orthonormal basis of the hyperplane orthogonal to
    c2_vec, used for transverse coordinates.
    """

    dimension: int
    rho: float
    c1: float
    c2: float
    c1_hat: float
    c2_vec: tuple
    pivot: tuple
    frame: tuple
    provenance: dict = field(default_factory=dict, compare=False)

    @property
    def pivot_array(self) -> np.ndarray:
        return np.asarray(self.pivot)

    @property
    def c2_vec_array(self) -> np.ndarray:
        return np.asarray(self.c2_vec)

    @property
    def frame_array(self) -> np.ndarray:
        return np.asarray(self.frame).reshape(self.dimension - 1, self.dimension)

    def to_dict(self) -> dict:
        return {
            "d": self.dimension,
            "rho": self.rho,
            "c1": self.c1,
            "c2": self.c2,
            "c1_hat": self.c1_hat,
            "c2_vec": list(self.c2_vec),
            "pivot": list(self.pivot),
            "tolerances": dict(self.provenance),
        }


def solve_constants(inc: IncrementLaw, off: OffspringLaw) -> LdConstants:
    """Compute all constants once; downstream code never re-solves."""
    rho = off.rho
    if rho <= 1.0:
        raise RangeError("offspring law must be supercritical (rho > 1)")
    log_rho = math.log(rho)
    d = inc.dimension

    c1_hat, c2_vec = solve_speed_nd(inc, log_rho)
    pivot = c2_vec / float(np.linalg.norm(c2_vec))
    c1, c2 = solve_speed_1d(Projection(inc, pivot), log_rho)

    if d > 1:
        # complete the pivot to an orthonormal basis; rows 1.. span pivot-perp
        basis = np.eye(d)
        basis[:, 0] = pivot
        q, _ = np.linalg.qr(basis)
        # qr may flip signs; force the first column to be the pivot itself
        if q[:, 0] @ pivot < 0:
            q = -q
        frame = tuple(map(tuple, q[:, 1:].T))
    else:
        frame = ()

    return LdConstants(
        dimension=d,
        rho=rho,
        c1=c1,
        c2=c2,
        c1_hat=c1_hat,
        c2_vec=tuple(float(v) for v in c2_vec),
        pivot=tuple(float(v) for v in pivot),
        frame=frame,
        provenance={
            "lambda_tol": _LAMBDA_TOL,
            "speed_tol": _SPEED_TOL,
            "nd_tol": _ND_TOL,
        },
    )


@dataclass(frozen=True)
class Asymptote:
    """Evaluators for the centered-maximum and first-passage asymptotes."""

    constants: LdConstants
    use_pivot_form: bool = False  # general-case t_x with c1_hat and e1.c2_vec

    def m_of_n(self, n: int) -> float:
        if n < 1:
            raise ValueError("m_n requires n >= 1")
        c = self.constants
        return c.c1 * n - (3.0 / (2.0 * c.c2)) * math.log(n)

    def t_of_x(self, x: float) -> float:
        if x < 2:
            raise ValueError("t_x requires x >= 2")
        c = self.constants
        d = c.dimension
        if self.use_pivot_form:
            e1_dot_c2 = c.c2_vec[0]
            return x / c.c1_hat + (d + 2.0) / (2.0 * c.c1_hat * e1_dot_c2) * math.log(x)
        return x / c.c1 + (d + 2.0) / (2.0 * c.c2 * c.c1) * math.log(x)

    def mwtx_residual(self, x: float) -> float:
        """Residual of the deterministic identity linking m and t_x.

        Returns m_{floor(t_x - (log x)^2)} minus
        x + (d-1)/(2 c2) log x - c1 (log x)^2; small up to a rounding
        artifact bounded by c1.
        """
        if x < 10:
            raise ValueError("identity check requires x >= 10")
        c = self.constants
        lx = math.log(x)
        t_tilde = self.t_of_x(x) - lx * lx
        target = x + (c.dimension - 1.0) / (2.0 * c.c2) * lx - c.c1 * lx * lx
        return self.m_of_n(int(math.floor(t_tilde))) - target


def m_of_n(a: Asymptote, n: int) -> float:
    return a.m_of_n(n)


def t_of_x(a: Asymptote, x: float) -> float:
    return a.t_of_x(x)


def mwtx_identity_check(a: Asymptote, x: float) -> float:
    return a.mwtx_residual(x)
