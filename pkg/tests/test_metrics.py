import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cuspflow.metrics import (
    CappedCusp,
    Cigar,
    Cusp,
    DomainError,
    Flat,
    Poincare,
    QuadratureError,
    RadialGrid,
    Sampled,
    Sphere,
    discrete_curvature,
    eval_u,
    eval_v,
    gauss_curvature,
    l1_distance,
    radial_laplacian,
    resolved_curvature,
    resolved_nodes,
)

E = math.e


# --- eval_v -----------------------------------------------------------------


def test_cusp_at_inverse_e_is_e_squared():
    assert eval_v(Cusp(1), 1 / E) == pytest.approx(1.0, abs=1e-15)
    assert eval_u(Cusp(1), 1 / E) == pytest.approx(E**2, rel=1e-14)


def test_poincare_origin():
    assert eval_v(Poincare(), 0.0) == pytest.approx(math.log(2.0), abs=1e-15)


@pytest.mark.parametrize("beta,K", [(1.0, 1.0), (7.5, 0.2), (1e40, 3.0)])
def test_sphere_origin_is_log_beta(beta, K):
    assert eval_v(Sphere(beta, K), 0.0) == pytest.approx(math.log(beta), rel=1e-15)


def test_domain_errors():
    with pytest.raises(DomainError):
        eval_v(Cusp(1), 1.0)
    with pytest.raises(DomainError):
        eval_v(Cusp(1), 0.0)
    with pytest.raises(DomainError):
        eval_v(Cigar(1, 1), -0.1)
    with pytest.raises(DomainError):
        eval_v(Poincare(), 1.0)
    with pytest.raises(DomainError):
        CappedCusp(1 / E)
    with pytest.raises(ValueError):
        Cusp(0.5)


def test_vectorised_and_scalar_agree():
    r = np.array([0.01, 0.1, 0.3])
    vec = eval_v(Cusp(1.2), r)
    assert isinstance(eval_v(Cusp(1.2), 0.1), float)
    assert vec[1] == eval_v(Cusp(1.2), 0.1)


@given(st.floats(min_value=-300.0, max_value=-1e-3))
def test_log_space_safety_cusp_near_origin(s):
    # v = -s - log(-s) reaches hundreds without ever forming u
    r = math.exp(s)
    if r == 0.0:
        return
    v = eval_v(Cusp(1), r)
    assert math.isfinite(v)


@given(st.floats(min_value=1.0, max_value=700.0), st.floats(min_value=1e-3, max_value=1e3))
def test_log_space_safety_large_v(v_target, K):
    # u = exp(2 v) overflows beyond v ~ 355; v itself must stay exact
    beta = math.exp(v_target)
    assert math.isfinite(eval_v(Sphere(beta, K), 0.5))
    assert eval_v(Sphere(beta, K), 0.0) == pytest.approx(v_target, rel=1e-14)
    c = Cigar(math.exp(v_target), math.exp(-v_target))
    assert eval_v(c, 0.0) == pytest.approx(v_target, rel=1e-14)
    assert math.isfinite(eval_v(c, 1e-300))


@given(st.floats(min_value=1.5, max_value=350.0))
def test_log_space_safety_deep_caps(L):
    # the cap height is v(0) = L - log(L) / 2, far past where u is representable
    cc = CappedCusp(math.exp(-L))
    assert eval_v(cc, 0.0) == pytest.approx(L - 0.5 * math.log(L), rel=1e-12)


# --- curvature --------------------------------------------------------------


def test_cusp_and_poincare_curvature():
    r = np.geomspace(1e-6, 0.99, 50)
    assert np.allclose(gauss_curvature(Cusp(1), r), -1.0)
    assert np.allclose(gauss_curvature(Cusp(2), r), -0.25)
    assert np.allclose(gauss_curvature(Poincare(), r), -1.0)


def test_sphere_curvature_constant():
    r = np.linspace(0, 5, 40)
    assert np.allclose(gauss_curvature(Sphere(3.0, 0.7), r), 0.7)


def test_cigar_curvature_at_origin():
    # value from a Richardson-extrapolated finite difference of -exp(-2v) lap v
    assert gauss_curvature(Cigar(1, 1), 0.0) == pytest.approx(2.0, rel=1e-15)


def _fd_curvature(profile, r, h):
    f = lambda x: eval_v(profile, x)  # noqa: E731
    d2 = (f(r + h) - 2 * f(r) + f(r - h)) / h**2
    d1 = (f(r + h) - f(r - h)) / (2 * h)
    return -math.exp(-2 * f(r)) * (d2 + d1 / r)


PROFILES = [
    Cusp(1.0),
    Cusp(1.3),
    Poincare(),
    Cigar(0.5, math.exp(-4)),
    Cigar(2.0, 0.3),
    Sphere(2.0, 0.8),
    CappedCusp(math.exp(-3)),
]


@settings(max_examples=100, deadline=None)
@given(st.sampled_from(PROFILES), st.floats(min_value=0.02, max_value=0.9))
def test_curvature_matches_richardson_fd(profile, r):
    if isinstance(profile, CappedCusp) and abs(r - profile.r0) < 0.02:
        return  # curvature jumps at the gluing radius
    h = 1e-3 * r
    k1 = _fd_curvature(profile, r, h)
    k2 = _fd_curvature(profile, r, h / 2)
    rich = (4 * k2 - k1) / 3
    exact = gauss_curvature(profile, r)
    assert rich == pytest.approx(exact, rel=1e-6, abs=1e-9)


def test_capped_cusp_curvature_jump():
    r0 = math.exp(-5)
    cc = CappedCusp(r0)
    L = 5.0
    assert gauss_curvature(cc, r0) == pytest.approx(2 * (L - 1), rel=1e-12)
    assert gauss_curvature(cc, r0 * (1 + 1e-9)) == pytest.approx(-1.0)


@given(st.floats(min_value=1.0 + 1e-6, max_value=60.0))
def test_capped_cusp_bounded_below_by_e2(L):
    r0 = math.exp(-L)
    r = np.concatenate([np.linspace(0, 0.999, 200), [r0, 1 / E]])
    v = eval_v(CappedCusp(r0), r)
    assert np.all(v >= 1.0 - 1e-12)


@given(st.floats(min_value=1e-4, max_value=10.0), st.floats(min_value=1e-8, max_value=1.0))
def test_cigar_strictly_decreasing(eps, delta):
    r = np.linspace(0.0, 2.0, 300)
    assert np.all(np.diff(eval_v(Cigar(eps, delta), r)) < 0)


# --- discrete operators -----------------------------------------------------


def test_laplacian_exact_on_span():
    g = RadialGrid.sinh(200, 0.9, 0.05)
    r = g.nodes
    assert np.allclose(radial_laplacian(r, np.ones_like(r))[:-1], 0.0, atol=1e-9)
    assert np.allclose(radial_laplacian(r, r**2)[:-1], 4.0, rtol=1e-9)
    lg = np.log(np.where(r > 0, r, 1.0))
    assert np.allclose(radial_laplacian(r, lg)[2:-1], 0.0, atol=1e-6)


@pytest.mark.parametrize(
    "profile,scale", [(Cigar(1, 1), 0.05), (Sphere(1, 1), 0.05), (Poincare(), 0.05)]
)
def test_discrete_curvature_converges(profile, scale):
    errs = []
    for n in (256, 512, 1024):
        g = RadialGrid.sinh(n, 0.9, scale)
        k = discrete_curvature(g.nodes, eval_v(profile, g.nodes))
        errs.append(np.max(np.abs(k[:-1] - gauss_curvature(profile, g.nodes[:-1]))))
    order = math.log2(errs[0] / errs[1]), math.log2(errs[1] / errs[2])
    assert min(order) > 1.7


def test_resolved_curvature_keeps_ordinary_grids():
    g = RadialGrid.sinh(512, 0.9, 0.05)
    v = eval_v(Cigar(1, 1), g.nodes)
    assert resolved_nodes(g.nodes, v).size == g.n
    assert np.array_equal(resolved_curvature(g.nodes, v), discrete_curvature(g.nodes, v))


def test_resolved_curvature_suppresses_rounding():
    # a smooth cap resolved on a grid far finer than its own scale
    g = RadialGrid.sinh(2048, 0.9, 1e-14)
    prof = Cigar(math.exp(-8.0) * 1e-4, 1e-4)
    v = eval_v(prof, g.nodes)
    raw = discrete_curvature(g.nodes, v)
    good = resolved_curvature(g.nodes, v)
    exact = gauss_curvature(prof, g.nodes)
    m = g.nodes < 0.5
    assert np.max(np.abs(raw[m] - exact[m])) > 1.0  # raw stencil is swamped
    assert np.max(np.abs(good[m] - exact[m]) / exact[m]) < 1e-3


# --- Sampled ----------------------------------------------------------------


def test_sampled_rejects_bad_values():
    g = RadialGrid.uniform(32, 0.9)
    with pytest.raises(ValueError):
        Sampled(g, np.full(31, 1.0))
    v = np.ones(32)
    v[3] = np.nan
    with pytest.raises(ValueError):
        Sampled(g, v)


def test_grid_invariants():
    with pytest.raises(ValueError):
        RadialGrid(np.linspace(0, 0.9, 10))
    with pytest.raises(ValueError):
        RadialGrid(np.linspace(0.01, 0.9, 40))
    with pytest.raises(ValueError):
        RadialGrid(np.linspace(0, 1.0, 40))
    r = np.linspace(0, 0.9, 40)
    r[5] = r[4]
    with pytest.raises(ValueError):
        RadialGrid(r)


@pytest.mark.parametrize("profile", [Cigar(1, 1), Sphere(1.5, 0.5), Poincare(), Flat(3.0)])
def test_sampled_interpolation(profile):
    g = RadialGrid.sinh(2048, 0.9, 0.05)
    s = Sampled.from_profile(profile, g)
    rng = np.random.default_rng(1)
    idx = rng.integers(0, g.n - 1, 300)
    theta = rng.uniform(0, 1, 300)
    h = g.nodes[idx + 1] - g.nodes[idx]
    r = g.nodes[idx] + theta * h
    err = np.abs(s.v(r) - eval_v(profile, r))
    # linear interpolation error bound h^2 max|v''| / 8, with v'' from the analytic profile
    vpp = np.abs(profile.lap(r) - np.where(r > 0, profile.dv(r) / np.where(r > 0, r, 1), 0.0))
    bound = h**2 * (vpp + 1e-12) / 8 * 1.5 + 1e-15
    assert np.all(err <= np.maximum(bound, 1e-14))
    fine = h**2 * vpp / 8 * 1.5 <= 1e-8
    assert fine.sum() > 50
    assert np.all(err[fine] <= 1e-8)


def test_sampled_node_values_exact():
    g = RadialGrid.sinh(300, 0.9, 0.05)
    s = Sampled.from_profile(Sphere(2, 1), g)
    assert np.array_equal(s.v(g.nodes), s.v_values)
    with pytest.raises(DomainError):
        s.v(0.95)


# --- L1 distance ------------------------------------------------------------


def test_l1_cusp_against_constant():
    assert l1_distance(Cusp(1), Flat(E**2), 0.0, 1 / E) == pytest.approx(math.pi, rel=1e-8)


@given(st.floats(min_value=0.0, max_value=0.5), st.floats(min_value=0.01, max_value=0.4))
@settings(max_examples=25, deadline=None)
def test_l1_identical_is_zero(lo, width):
    assert l1_distance(Cigar(1, 0.3), Cigar(1, 0.3), lo, lo + width) == 0.0


# closed form 2 pi (1/L - log L / (2 L (L - 1))) evaluated at 30 digits
L1_CAPPED = {2: 2.0527996084379922, 4: 1.2078653117442963, 8: 0.66874176570261248}


def test_l1_capped_cusp_decreasing_to_zero():
    vals = []
    for L, expected in L1_CAPPED.items():
        got = l1_distance(CappedCusp(math.exp(-L)), Cusp(1), 0.0, 1 - 1e-6)
        assert got == pytest.approx(expected, rel=1e-7)
        vals.append(got)
    assert vals[0] > vals[1] > vals[2] > 0


def test_l1_reports_nonconvergence():
    # thousands of interpolation kinks defeat adaptive quadrature at 1e-8
    g = RadialGrid.sinh(4096, 0.9, 0.01)
    with pytest.raises(QuadratureError) as info:
        l1_distance(Sampled.from_profile(Sphere(1, 1), g), Sphere(1, 1), 0.0, 0.9)
    assert info.value.abserr > 0
    assert info.value.value > 0


def test_l1_near_the_rim():
    # 2 pi / (-log r) - pi r^2 for the cusp against u = 1
    for hi in (0.9, 1 - 1e-6, 1 - 1e-12):
        expected = 2 * math.pi / -math.log(hi) - math.pi * hi**2
        assert l1_distance(Cusp(1), Flat(1.0), 0.0, hi) == pytest.approx(expected, rel=1e-8)


def test_l1_bad_interval():
    with pytest.raises(DomainError):
        l1_distance(Cusp(1), Flat(1.0), 0.5, 0.2)
