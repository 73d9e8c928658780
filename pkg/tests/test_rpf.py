import numpy as np
import pytest
from _instances import random_instance, scalar_instance

from skewprod.base_env import sample_base_path
from skewprod.errors import BranchAmbiguity
from skewprod.fiber import CylinderFunction
from skewprod.jet import Jet2
from skewprod.rpf import (
    SystemOrbit,
    admissible_band,
    exp_convergence_probe,
    pressure_curve,
    pressure_derivatives,
    solve_raw_orbit,
    solve_rpf,
)
from skewprod.seeding import generator


def make_window(chain, seed=1, back=300, fwd=400):
    return sample_base_path(chain, -back, fwd, seed)


def test_maximal_entropy_triplet():
    chain, model, pot = scalar_instance([1.0, -1.0])  # phi = -ln 2 throughout
    win = make_window(chain)
    trip = solve_rpf(win, 0.0, 64, 64, pot, model)
    assert trip.lambda_ == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(trip.h.values, 1.0, atol=1e-12)
    assert np.allclose(trip.nu, 1.0, atol=1e-12)  # single cylinder
    assert trip.eigen_residual < 1e-10 and trip.dual_residual < 1e-10


def test_maximal_entropy_r3_uniform():
    rng = generator(2)
    chain, model, pot = random_instance(rng, d=2, r=3, n_states=2)
    pot.phi[:] = -np.log(2.0)
    win = make_window(chain, seed=3)
    trip = solve_rpf(win, 0.0, 64, 64, pot, model)
    assert trip.lambda_ == pytest.approx(1.0, abs=1e-10)
    assert np.allclose(trip.h.values, 1.0, atol=1e-9)
    assert np.allclose(trip.nu, 0.25, atol=1e-9)
    assert np.allclose(trip.raw_nu, 0.25, atol=1e-9)


def test_column_normalized_prop2():
    # column-normalized weights: the raw dual functional is the uniform
    # reference and the raw eigenvalue is exactly 1
    rng = generator(4)
    chain, model, pot = random_instance(rng, d=3, r=2, n_states=3, column_normalized=True)
    win = make_window(chain, seed=5)
    trip = solve_rpf(win, 0.0, 64, 64, pot, model)
    assert abs(trip.raw_lambda - 1.0) < 1e-9
    assert np.max(np.abs(trip.raw_nu - 1.0 / 3)) < 1e-9


def test_scalar_lambda_closed_form():
    chain, model, pot = scalar_instance([1.0, -1.0], phi_log_weights=[-0.9, -0.4])
    win = make_window(chain)
    for t in [0.0, 0.2, 0.6]:
        trip = solve_rpf(win, 1j * t, 64, 64, pot, model)
        expected = np.exp(-0.9 + 1j * t) + np.exp(-0.4 - 1j * t)
        assert trip.raw_lambda == pytest.approx(expected, abs=1e-12)


def test_residuals_small_on_random_instances():
    for i in range(5):
        rng = generator(20 + i)
        d = int(rng.integers(2, 4))
        r = int(rng.integers(2, 4))
        S = int(rng.integers(2, 4))
        chain, model, pot = random_instance(rng, d=d, r=r, n_states=S)
        win = make_window(chain, seed=30 + i)
        trip = solve_rpf(win, 0.0, 64, 64, pot, model)
        assert trip.eigen_residual < 1e-8
        assert trip.dual_residual < 1e-8
        assert trip.normalization_residual < 1e-9
        assert trip.lambda_ == pytest.approx(1.0, abs=1e-8)
        assert np.all(trip.h.values > 0)
        assert np.all(trip.nu >= 0) and np.sum(trip.nu) == pytest.approx(1.0)


def test_gauge_consistency_under_window_enlargement():
    rng = generator(42)
    chain, model, pot = random_instance(rng, d=2, r=2, n_states=2)
    win = make_window(chain, seed=7, back=600, fwd=700)
    t1 = solve_rpf(win, 0.4j, 64, 64, pot, model)
    t2 = solve_rpf(win, 0.4j, 256, 256, pot, model)
    assert t1.lambda_ == pytest.approx(t2.lambda_, abs=1e-10)
    assert np.max(np.abs(t1.h.values - t2.h.values)) < 1e-9
    assert np.max(np.abs(t1.nu - t2.nu)) < 1e-9


def test_duality_residual_on_basis():
    rng = generator(43)
    chain, model, pot = random_instance(rng, d=2, r=3, n_states=2)
    win = make_window(chain, seed=8)
    orbit = SystemOrbit(win, 0, 4, pot, model, tol=1e-10)
    raw = orbit.raw0
    for j in range(0, 3):
        M = orbit.factory0.matrix(j)
        for w in range(model.space_dim):
            e = np.zeros(model.space_dim)
            e[w] = 1.0
            lhs = raw.V[j + 1] @ (M @ e)
            rhs = raw.lam[j] * (raw.V[j] @ e)
            assert abs(lhs - rhs) < 1e-8


def test_exp_convergence_probe_eigen_direction():
    rng = generator(44)
    chain, model, pot = random_instance(rng, d=2, r=2, n_states=2)
    win = make_window(chain, seed=9)
    orbit = SystemOrbit(win, 0, 1, pot, model)
    h = CylinderFunction(1, orbit.h0(0) / orbit.nu0(0).sum(), 2)
    # q proportional to the eigenfunction collapses immediately
    fit = exp_convergence_probe(win, 0.0, CylinderFunction(1, np.ones(2), 2), [2, 4, 6], pot, model)
    assert fit.degenerate or fit.c < 1.0


def test_exp_convergence_scalar_rank_one():
    chain, model, pot = scalar_instance([1.0, -1.0])
    win = make_window(chain)
    q = CylinderFunction.constant(2.5, 2)
    fit = exp_convergence_probe(win, 0.0, q, list(range(1, 10)), pot, model)
    assert fit.degenerate  # one-step convergence on the 1-dim space


def test_exp_convergence_generic_rate():
    rng = generator(45)
    chain, model, pot = random_instance(rng, d=2, r=3, n_states=2)
    win = make_window(chain, seed=10)
    q = CylinderFunction(2, rng.standard_normal(4), 2)
    fit = exp_convergence_probe(win, 0.0, q, list(range(2, 31)), pot, model)
    assert fit.degenerate or (fit.c < 0.9 and fit.r_squared > 0.99)


def test_pressure_curve_scalar_closed_form():
    chain, model, pot = scalar_instance([1.0, -1.0])
    win = make_window(chain)
    k = 6
    ts = np.linspace(0.0, 1.2, 13)
    curve = pressure_curve(win, k, ts, pot, model)
    expected = k * np.log(np.cos(ts))
    assert np.max(np.abs(curve.values - expected)) < 1e-9
    assert curve.box_violations == []


def test_pressure_box_flag_near_degeneracy():
    chain, model, pot = scalar_instance([1.0, -1.0])
    win = make_window(chain)
    k = 4
    ts = np.linspace(0.0, 1.56, 40)  # |log cos t| exceeds ln2 + pi near pi/2
    curve = pressure_curve(win, k, ts, pot, model)
    assert len(curve.box_violations) > 0
    limit = k * (np.log(2.0) + np.pi)
    for i in curve.box_violations:
        assert abs(curve.values[i]) > limit


def test_pressure_branch_ambiguity_on_coarse_grid():
    chain, model, pot = scalar_instance([2.0, -2.0], lattice_h=2.0)
    win = make_window(chain)
    # lambda(it) = cos(2t): a grid jumping past the zero at t = pi/4 flips sign
    with pytest.raises(BranchAmbiguity):
        pressure_curve(win, 3, [0.0, 1.5], pot, model)


def test_pressure_derivatives_zero_u():
    chain, model, pot = scalar_instance([0.0, 0.0])
    win = make_window(chain)
    d1, d2 = pressure_derivatives(win, 12, pot, model)
    assert abs(d1) < 1e-12 and abs(d2) < 1e-12


def test_pressure_derivatives_scalar_pm1():
    chain, model, pot = scalar_instance([1.0, -1.0])
    win = make_window(chain)
    for k in [1, 5, 20]:
        d1, d2 = pressure_derivatives(win, k, pot, model)
        assert abs(d1) < 1e-10
        assert d2 == pytest.approx(k, abs=1e-9)


def test_pressure_derivative_matches_quadrature():
    rng = generator(46)
    chain, model, pot = random_instance(rng, d=2, r=2, n_states=2)
    win = make_window(chain, seed=11, back=400, fwd=500)
    k = 12
    orbit = SystemOrbit(win, 0, k + 80, pot, model, tol=1e-11)
    d1, d2 = pressure_derivatives(win, k, pot, model, orbit0=orbit)
    assert d1 == pytest.approx(orbit.birkhoff_mean(k), abs=1e-8)
    # second derivative tracks the variance up to a uniformly bounded constant
    assert abs(d2 - orbit.birkhoff_variance(k)) < 5.0


def test_jet_first_derivative_matches_finite_differences():
    rng = generator(47)
    chain, model, pot = random_instance(rng, d=2, r=2, n_states=2)
    win = make_window(chain, seed=12)
    k = 5
    orbit = SystemOrbit(win, 0, k + 80, pot, model)
    d1, d2 = pressure_derivatives(win, k, pot, model, orbit0=orbit)
    errs = []
    for delta in [0.02, 0.01]:
        curve = pressure_curve(win, k, [0.0, delta], pot, model, orbit0=orbit)
        # Pi(it) ~ i t Pi'(0) - t^2/2 Pi''(0): imaginary part carries d1
        fd = np.imag(curve.values[1]) / delta
        errs.append(abs(fd - d1))
    assert errs[1] < errs[0] * 0.3 + 1e-9  # O(delta^2) convergence


def test_jet_ring_laws():
    rng = np.random.default_rng(0)
    for _ in range(50):
        a = Jet2(rng.standard_normal(), rng.standard_normal(), rng.standard_normal())
        b = Jet2(rng.standard_normal(), rng.standard_normal(), rng.standard_normal())
        ab = a * b
        assert ab.d1 == pytest.approx(a.v * b.d1 + a.d1 * b.v)
        assert ab.d2 == pytest.approx(a.d2 * b.v + 2 * a.d1 * b.d1 + a.v * b.d2)
        back = ab / b
        assert back.v == pytest.approx(a.v)
        assert back.d1 == pytest.approx(a.d1)
        assert back.d2 == pytest.approx(a.d2, rel=1e-9, abs=1e-9)
        le = (a * a).log() if a.v > 0 else None
        if le is not None:
            direct = a.log() * 2.0
            assert le.v == pytest.approx(direct.v)
            assert le.d1 == pytest.approx(direct.d1)
            assert le.d2 == pytest.approx(direct.d2, rel=1e-9, abs=1e-9)


def test_no_convergence_far_from_axis():
    # strongly twisted parameter far outside the admissible band must surface
    chain, model, pot = scalar_instance([1.0, -1.0])
    win = make_window(chain)
    band = admissible_band(win, pot, model, t_max=3.0)
    assert 0.0 <= band <= 3.0


def test_raw_orbit_insufficient_window():
    chain, model, pot = scalar_instance([1.0, -1.0])
    win = sample_base_path(chain, -4, 4, 1)
    from skewprod.errors import InsufficientWindow

    with pytest.raises(InsufficientWindow):
        solve_raw_orbit(win, 0.0, 0, 1, pot, model, back=64, fwd=64)
