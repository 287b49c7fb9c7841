import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ptone.geometry import Annulus, Ball, WarpedModel
from ptone.solver import (RadialFunction, RadialGrid, SpectralParams, ToneKind, brute_force_grid,
                          brute_force_tone, build_grid, eigen_residual, p_energy, rayleigh_quotient,
                          richardson_limit, solve_first_tone, solve_grid, tone_of_open_manifold)

P2 = SpectralParams(2.0)
P3 = SpectralParams(3.0)


def interval_tone(p):
    """Classical first eigenvalue of the one-dimensional p-Laplacian on (0,1)."""
    return (p - 1) * (2 * math.pi / (p * math.sin(math.pi / p))) ** p


def test_spectral_params():
    assert SpectralParams(3.0).q == 1.5
    with pytest.raises(ValueError, match="p must exceed 1"):
        SpectralParams(1.0)
    with pytest.raises(ValueError):
        SpectralParams(float("inf"))


# -- grids ------------------------------------------------------------------------

def test_build_grid_euclidean_ball():
    g = build_grid(WarpedModel.euclidean(3), Ball(1.0), 4)
    np.testing.assert_allclose(g.interfaces, [0, 0.25, 0.5, 0.75, 1.0])
    np.testing.assert_allclose(g.centers, [0.125, 0.375, 0.625, 0.875])
    assert not g.dirichlet_lower and g.dirichlet_upper


def test_build_grid_annulus():
    g = build_grid(WarpedModel.hyperbolic(2), Annulus(1.0, 3.0), 8)
    assert g.spacing == 0.25 and g.interfaces[0] == 1.0
    assert g.dirichlet_lower and g.dirichlet_upper


def test_build_grid_hyperbolic_weights():
    g = build_grid(WarpedModel.hyperbolic(2), Ball(2.0), 2)
    np.testing.assert_allclose(g.interface_weights, [0, 2 * math.pi * math.sinh(1), 2 * math.pi * math.sinh(2)],
                               rtol=1e-14)


def test_grid_invariants_and_errors():
    g = build_grid(WarpedModel.hyperbolic(3), Ball(5.0), 64)
    np.testing.assert_allclose(np.diff(g.interfaces), g.spacing, rtol=1e-12)
    np.testing.assert_allclose(g.centers, 0.5 * (g.interfaces[:-1] + g.interfaces[1:]))
    assert np.all(g.center_weights >= 0) and np.all(g.interface_weights[1:-1] > 0)
    with pytest.raises(ValueError):
        build_grid(WarpedModel.euclidean(2), Ball(1.0), 1)


# -- functionals --------------------------------------------------------------------

def test_energy_of_zero():
    g = RadialGrid.flat(0, 1, 8)
    assert p_energy(RadialFunction(g, np.zeros(8)), P2) == 0.0


def test_energy_ghost_differences():
    g = RadialGrid.flat(0, 1, 2)
    assert p_energy(RadialFunction(g, [1.0, 1.0]), P2) == pytest.approx(4.0, rel=1e-15)


def test_energy_of_sine_converges():
    errs = []
    for N in (512, 1024, 2048):
        g = RadialGrid.flat(0, 1, N)
        e = p_energy(RadialFunction(g, np.sin(math.pi * g.centers)), P2)
        errs.append(abs(e - math.pi ** 2 / 2))
    # the ghost value sits one spacing from the half-cell boundary, so the error is first order
    assert errs[-1] < 3e-3 * math.pi ** 2 / 2
    assert errs[1] / errs[2] == pytest.approx(2.0, rel=0.05)


def test_quotient_of_tent():
    g = RadialGrid.flat(0, 1, 4096)
    tent = 1 - np.abs(2 * g.centers - 1)
    assert rayleigh_quotient(RadialFunction(g, tent), P2) == pytest.approx(12.0, rel=2e-3)


def test_quotient_of_sine():
    g = RadialGrid.flat(0, 1, 2048)
    q = rayleigh_quotient(RadialFunction(g, np.sin(math.pi * g.centers)), P2)
    assert q == pytest.approx(math.pi ** 2, rel=1e-3)


def test_quotient_zero_mass():
    g = RadialGrid.flat(0, 1, 4)
    with pytest.raises(ZeroDivisionError):
        rayleigh_quotient(RadialFunction(g, np.zeros(4)), P2)


@given(st.floats(1.1, 5.0), st.floats(-1e3, 1e3).filter(lambda t: abs(t) > 1e-3),
       st.lists(st.floats(0.01, 10.0), min_size=6, max_size=6))
def test_quotient_homogeneity(p, t, vals):
    g = build_grid(WarpedModel.hyperbolic(3), Ball(2.0), 6)
    par = SpectralParams(p)
    u = np.array(vals)
    a = rayleigh_quotient(RadialFunction(g, u), par)
    b = rayleigh_quotient(RadialFunction(g, t * u), par)
    assert b == pytest.approx(a, rel=1e-12)


# -- the solver -----------------------------------------------------------------------

def test_interval_p2():
    est, u = solve_grid(RadialGrid.flat(0, 1, 2048), P2, tol=1e-10)
    assert est.kind is ToneKind.CONVERGED
    assert est.value == pytest.approx(math.pi ** 2, rel=1e-3)


def test_interval_p3():
    est, _ = solve_grid(RadialGrid.flat(0, 1, 2048), P3)
    assert interval_tone(3.0) == pytest.approx(28.29, abs=5e-3)
    assert est.value == pytest.approx(interval_tone(3.0), rel=5e-3)


def test_euclidean_ball():
    est, u = solve_first_tone(WarpedModel.euclidean(3), Ball(1.0), P2, N=4096)
    assert est.value == pytest.approx(math.pi ** 2, rel=2e-3)
    assert np.all(u.values > 0)


@pytest.mark.parametrize("model,domain,p", [
    (WarpedModel.euclidean(3), Ball(1.0), 2.0),
    (WarpedModel.hyperbolic(2), Ball(5.0), 1.5),
    (WarpedModel.hyperbolic(4), Annulus(1.0, 6.0), 3.0),
])
def test_positivity_and_residual(model, domain, p):
    par = SpectralParams(p)
    est, u = solve_first_tone(model, domain, par, N=1024)
    assert est.kind is ToneKind.CONVERGED
    assert np.all(u.values > 0)
    assert eigen_residual(u, est.value, par) <= 1e-6 * est.value


def test_brute_force_matches_dense_eigenvalue():
    g = RadialGrid.flat(0, 1, 3)
    A = (np.diag([2.0] * 3) - np.diag([1.0] * 2, 1) - np.diag([1.0] * 2, -1)) / g.spacing ** 2
    lam = np.linalg.eigvalsh(A)[0]
    assert brute_force_grid(g, P2) == pytest.approx(lam, rel=1e-6)


def test_brute_force_needs_small_grid():
    with pytest.raises(ValueError):
        brute_force_tone(WarpedModel.euclidean(2), Ball(1.0), P2, 1)
    with pytest.raises(ValueError):
        brute_force_tone(WarpedModel.euclidean(2), Ball(1.0), P2, 7)


@settings(max_examples=12, deadline=None)
@given(st.sampled_from([(WarpedModel.euclidean(3), Ball(1.0)),
                        (WarpedModel.hyperbolic(2), Ball(3.0)),
                        (WarpedModel.hyperbolic(3, 2.0), Annulus(0.5, 2.0))]),
       st.floats(1.3, 3.5), st.integers(2, 5))
def test_brute_force_agrees_with_solver(case, p, N):
    model, domain = case
    par = SpectralParams(p)
    est, _ = solve_first_tone(model, domain, par, N=N)
    brute = brute_force_tone(model, domain, par, N, samples=5000)
    assert brute >= est.value * (1 - 1e-3)
    assert abs(brute - est.value) <= 1e-3 * est.value


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0.0, 1.0), min_size=64, max_size=64).filter(lambda v: sum(v) > 0))
def test_solver_beats_random_test_functions(vals):
    g = build_grid(WarpedModel.hyperbolic(3), Ball(3.0), 64)
    est, _ = _hyp3_solution()
    assert rayleigh_quotient(RadialFunction(g, vals), P2) >= est.value * (1 - 1e-10)


_cache = {}


def _hyp3_solution():
    if "h3" not in _cache:
        _cache["h3"] = solve_first_tone(WarpedModel.hyperbolic(3), Ball(3.0), P2, N=64)
    return _cache["h3"]


@pytest.mark.parametrize("model", [WarpedModel.euclidean(3), WarpedModel.hyperbolic(2)])
def test_mesh_convergence(model):
    lams = [solve_first_tone(model, Ball(2.0), P2, N=N)[0].value for N in (256, 512, 1024, 2048, 4096)]
    diffs = np.abs(np.diff(lams))
    assert np.all(np.diff(diffs) < 0)


def test_nonconvergence_is_flagged():
    est, _ = solve_first_tone(WarpedModel.hyperbolic(2), Ball(5.0), SpectralParams(1.5), N=512, max_iter=1)
    assert est.kind is ToneKind.VARIATIONAL_UPPER


def test_eigenfunction_csv(tmp_path):
    _, u = solve_first_tone(WarpedModel.euclidean(2), Ball(1.0), P2, N=16)
    path = tmp_path / "u.csv"
    u.to_csv(path)
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    assert path.read_text().splitlines()[0] == "r,u"
    np.testing.assert_array_equal(data[:, 1], u.values)


# -- open manifolds ------------------------------------------------------------------------

def test_hyperbolic_plane_exhaustion():
    res = tone_of_open_manifold(WarpedModel.hyperbolic(2), P2, [2, 5, 10, 15])
    assert res.monotone
    assert all(v > 0.25 for v in res.values)
    assert res.extrapolated == pytest.approx(0.25, rel=2e-2)


def test_euclidean_plane_exhaustion():
    j0 = 2.404825557695773
    res = tone_of_open_manifold(WarpedModel.euclidean(2), P2, [1, 2, 4], N_per_R=4096)
    for R, v in zip(res.radii, res.values):
        assert v == pytest.approx(j0 ** 2 / R ** 2, rel=1e-3)


def test_single_radius():
    res = tone_of_open_manifold(WarpedModel.euclidean(3), P2, [1.0])
    assert res.last == res.extrapolated
    with pytest.raises(ValueError):
        tone_of_open_manifold(WarpedModel.euclidean(3), P2, [2.0, 1.0])


def test_nested_balls_monotone():
    vals = [solve_first_tone(WarpedModel.hyperbolic(3), Ball(R), SpectralParams(2.5), N=512)[0].value
            for R in (1, 2, 3, 4)]
    assert all(b < a for a, b in zip(vals, vals[1:]))


def test_richardson_exact_on_model_sequence():
    w = np.array([4.0, 9.0, 14.0, 19.0])
    y = 0.25 + 3.0 / w ** 2 - 5.0 / w ** 3
    assert richardson_limit(w, y) == pytest.approx(0.25, abs=1e-13)
