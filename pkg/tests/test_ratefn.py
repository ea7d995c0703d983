import math

import numpy as np
import pytest

from brwlab import laws, ratefn
from brwlab.errors import RangeError
from brwlab.ratefn import (
    Asymptote,
    Projection,
    legendre_1d,
    legendre_nd,
    solve_constants,
)


# -------------------------------------------------- independent grid oracles


def _uniform_logk(lam):
    """log E e^{lam xi} for xi ~ uniform[-1,1], written independently."""
    if abs(lam) < 1e-8:
        return lam * lam / 6.0
    return math.log(math.sinh(lam) / lam)


def _grid_rate_uniform(x, lam_hi=60.0, step=1e-5):
    """Dense grid-search Legendre conjugate of the uniform[-1,1] law."""
    lams = np.arange(step, lam_hi, step)
    with np.errstate(over="ignore"):
        vals = lams * x - np.log(np.sinh(lams) / lams)
    return float(np.max(vals))


# ------------------------------------------------------------- legendre_1d


def test_legendre_gaussian_closed_form(g1):
    inc, _, _ = g1
    val, lam = legendre_1d(Projection(inc), 0.8)
    assert val == pytest.approx(0.32, abs=1e-10)
    assert lam == pytest.approx(0.8, abs=1e-9)


def test_legendre_at_mean(g1):
    inc, _, _ = g1
    assert legendre_1d(Projection(inc), 0.0) == (0.0, 0.0)


def test_legendre_uniform_grid_oracle():
    proj = Projection(laws.uniform_cube(1))
    val, _ = legendre_1d(proj, 0.5)
    assert val == pytest.approx(_grid_rate_uniform(0.5), abs=1e-8)


def test_legendre_range_error():
    with pytest.raises(RangeError):
        legendre_1d(Projection(laws.uniform_cube(1)), 1.5)  # outside support


def test_duality_and_convexity():
    proj = Projection(laws.uniform_cube(1))
    xs = np.linspace(0.05, 0.9, 35)
    vals = []
    for x in xs:
        val, lam = legendre_1d(proj, float(x))
        assert val + proj.logk(lam) == pytest.approx(lam * x, abs=1e-10)
        vals.append(val)
    second = np.diff(vals, 2)
    assert (second >= -1e-8).all()


def test_envelope_identity():
    proj = Projection(laws.gaussian(1))
    xs = np.linspace(0.2, 1.4, 13)
    h = 1e-5
    for x in xs:
        _, lam = legendre_1d(proj, float(x))
        di = (legendre_1d(proj, float(x + h))[0] - legendre_1d(proj, float(x - h))[0]) / (2 * h)
        assert abs(di - lam) <= 1e-7 * max(1.0, abs(lam)) + 1e-7


# ------------------------------------------------------------- legendre_nd


def test_legendre_nd_gaussian():
    val, lam = legendre_nd(laws.gaussian(2), np.array([0.5, 0.3]))
    assert val == pytest.approx(0.17, abs=1e-10)
    assert np.allclose(lam, [0.5, 0.3], atol=1e-8)


def test_legendre_nd_at_mean():
    val, lam = legendre_nd(laws.uniform_ball(3), np.zeros(3))
    assert val == pytest.approx(0.0, abs=1e-10)
    assert np.allclose(lam, 0.0, atol=1e-8)


def test_legendre_nd_anisotropic_separable():
    inc = laws.gaussian_diag([1.0, 2.0])
    val, _ = legendre_nd(inc, np.array([0.4, 0.4]))
    assert val == pytest.approx(0.4**2 / 2 + 0.4**2 / 8, abs=1e-9)


# ---------------------------------------------------------- solve_constants


def test_constants_gaussian_closed_form(g1, c_star):
    _, _, cst = g1
    assert cst.c1 == pytest.approx(c_star, abs=1e-9)
    assert cst.c2 == pytest.approx(c_star, abs=1e-9)


def test_constants_gaussian_any_dimension(g3, c_star):
    _, _, cst = g3
    assert cst.c1_hat == pytest.approx(c_star, abs=1e-9)
    assert np.allclose(cst.c2_vec_array, [c_star, 0, 0], atol=1e-9)


def test_constants_uniform_grid_oracle(off_p2):
    cst = solve_constants(laws.uniform_cube(1), off_p2)
    # invert the grid-tabulated rate function independently: one shared
    # lambda grid, vectorized conjugation over a narrow x window
    lams = np.arange(1e-4, 30.0, 1e-4)
    logk = np.log(np.sinh(lams) / lams)
    xs = np.arange(0.55, 0.70, 1e-4)
    rates = np.array([float(np.max(x * lams - logk)) for x in xs])
    c1_oracle = float(np.interp(math.log(2.0), rates, xs))
    assert cst.c1 == pytest.approx(c1_oracle, abs=1e-6)
    # c2 = I'(c1) via finite differences on the oracle rate function
    h = 1e-4
    c2_oracle = (
        float(np.max((cst.c1 + h) * lams - logk)) - float(np.max((cst.c1 - h) * lams - logk))
    ) / (2 * h)
    assert cst.c2 == pytest.approx(c2_oracle, abs=1e-5)


def test_constants_defining_equations(g2):
    inc, off, cst = g2
    proj = Projection(inc, cst.pivot_array)
    val, lam = legendre_1d(proj, cst.c1)
    assert val == pytest.approx(math.log(off.rho), abs=1e-9)
    assert lam == pytest.approx(cst.c2, abs=1e-8)
    val_nd, lam_nd = legendre_nd(inc, cst.c1_hat * np.eye(2)[0])
    assert val_nd == pytest.approx(math.log(off.rho), abs=1e-9)
    assert np.allclose(lam_nd, cst.c2_vec_array, atol=1e-8)


@pytest.mark.parametrize(
    "inc",
    [laws.gaussian(2), laws.gaussian(3), laws.uniform_ball(2), laws.uniform_ball(3)],
    ids=lambda l: f"{l.kind}-d{l.dimension}",
)
def test_symmetric_reduction(inc, off_p2):
    cst = solve_constants(inc, off_p2)
    e1 = np.zeros(inc.dimension)
    e1[0] = 1.0
    assert abs(cst.c1_hat - cst.c1) <= 1e-7
    assert float(np.linalg.norm(cst.c2_vec_array - cst.c2 * e1)) <= 1e-7


def test_asymmetric_law_pivot_and_frame(off_p2):
    inc = laws.shifted_mixture(
        [0.4, 0.6], [[0.8, 0.3], [-0.4, -0.2]], [1.0, 0.7]
    )
    cst = solve_constants(inc, off_p2)
    pivot = cst.pivot_array
    assert np.linalg.norm(pivot) == pytest.approx(1.0, abs=1e-12)
    frame = cst.frame_array
    assert frame.shape == (1, 2)
    assert abs(frame[0] @ pivot) < 1e-10
    assert np.linalg.norm(frame[0]) == pytest.approx(1.0, abs=1e-10)


def test_constants_subcritical_rejected():
    off = laws.make_offspring(((0, 0.5), (2, 0.5)))
    with pytest.raises(RangeError):
        solve_constants(laws.gaussian(1), off)


def test_solver_determinism(g1):
    inc, off, cst = g1
    again = solve_constants(inc, off)
    assert abs(again.c1 - cst.c1) <= 1e-9


# --------------------------------------------------------------- asymptotes


def test_m_of_n_value(g1):
    asym = Asymptote(g1[2])
    assert asym.m_of_n(100) == pytest.approx(111.8740951020577, abs=1e-9)


def test_m_of_n_monotone(g1):
    asym = Asymptote(g1[2])
    ns = np.unique(np.logspace(math.log10(2), 6, 300).astype(int))
    vals = [asym.m_of_n(int(n)) for n in ns]
    assert all(b > a for a, b in zip(vals, vals[1:]))


def test_t_of_x_value(g2):
    asym = Asymptote(g2[2])
    assert asym.t_of_x(50.0) == pytest.approx(48.10994620417377, abs=1e-9)


def test_t_of_x_log_e(g1):
    cst = g1[2]
    asym = Asymptote(cst)
    x = math.e
    assert asym.t_of_x(x) == pytest.approx(x / cst.c1 + 3.0 / (2 * cst.c2 * cst.c1), abs=1e-12)


def test_t_of_x_pivot_form_matches_for_spherical(g3):
    cst = g3[2]
    sym = Asymptote(cst, use_pivot_form=False)
    gen = Asymptote(cst, use_pivot_form=True)
    for x in (5.0, 50.0, 500.0):
        assert gen.t_of_x(x) == pytest.approx(sym.t_of_x(x), abs=1e-6)


def test_mwtx_residual_bounded(g2):
    cst = g2[2]
    asym = Asymptote(cst)
    assert abs(asym.mwtx_residual(1e6)) <= cst.c1 + 0.01


def test_mwtx_residual_trend(g2):
    cst = g2[2]
    asym = Asymptote(cst)
    assert abs(asym.mwtx_residual(1e9)) <= abs(asym.mwtx_residual(1e3)) + cst.c1


def test_mwtx_residual_d1(g1):
    cst = g1[2]
    asym = Asymptote(cst)
    assert abs(asym.mwtx_residual(1e6)) <= cst.c1 + 0.01
