import math

import numpy as np
import pytest
from _instances import random_instance, scalar_instance

from skewprod.base_env import build_markov_base, sample_base_path
from skewprod.errors import LatticeTooLarge, NotLattice
from skewprod.fiber import FiberModel, PotentialTable
from skewprod.gibbs import (
    char_function_spectral,
    constant_step_mean,
    exact_Sn_distribution,
    forward_value_sweep,
    gibbs_measure,
    sample_Sn,
    trajectory_cylinder_probs_forward,
    trajectory_cylinder_probs_reversed,
    variance_curve,
)
from skewprod.rpf import SystemOrbit, solve_rpf
from skewprod.seeding import generator


def lattice_instance_two_state():
    """Two-state base modulating scalar lattice steps with exact zero means."""
    model = FiberModel(2, 1)
    chain = build_markov_base([[0.7, 0.3], [0.4, 0.6]])
    phi = np.array([
        [np.log(0.5), np.log(0.5)],      # symbol 0: fair -1/+1
        [np.log(2 / 3), np.log(1 / 3)],  # symbol 1: -1 w.p. 2/3, +2 w.p. 1/3
    ])
    u = np.array([[-1.0, 1.0], [-1.0, 2.0]])
    return chain, model, PotentialTable(phi, u, model, lattice_h=1.0)


def test_gibbs_measure_uniform_and_scalar():
    chain, model, pot = scalar_instance([1.0, -1.0])
    win = sample_base_path(chain, -200, 200, 1)
    trip = solve_rpf(win, 0.0, 64, 64, pot, model)
    gm = gibbs_measure(trip)
    assert gm.weights.shape == (1,)
    assert gm.weights[0] == pytest.approx(1.0)


def test_gibbs_measure_maximal_entropy_r2():
    rng = generator(1)
    chain, model, pot = random_instance(rng, d=2, r=2, n_states=2)
    pot.phi[:] = -np.log(2.0)
    win = sample_base_path(chain, -200, 200, 2)
    trip = solve_rpf(win, 0.0, 64, 64, pot, model)
    gm = gibbs_measure(trip)
    assert np.allclose(gm.weights, 0.5, atol=1e-10)


def test_exact_law_zero_u_point_mass():
    chain, model, pot = scalar_instance([0.0, 0.0], lattice_h=None)
    pot = PotentialTable(pot.phi, np.zeros_like(pot.u), model, lattice_h=1.0)
    win = sample_base_path(chain, -100, 150, 3)
    dist = exact_Sn_distribution(win, 12, pot, model)
    assert dist.probs.sum() == pytest.approx(1.0, abs=1e-12)
    assert dist.prob_at(0.0) == pytest.approx(1.0)


def test_exact_law_binomial_oracle():
    chain, model, pot = scalar_instance([1.0, -1.0], lattice_h=1.0)
    win = sample_base_path(chain, -100, 160, 4)
    n = 14
    dist = exact_Sn_distribution(win, n, pot, model)
    for k in range(n + 1):
        expected = math.comb(n, k) / 2**n
        assert dist.prob_at(n - 2 * k) == pytest.approx(expected, abs=1e-13)
    assert dist.probs.sum() == pytest.approx(1.0, abs=1e-12)


def brute_force_law(win, n, pot, model, orbit):
    """Enumerate all fiber words of depth n + r - 1 with their exact masses."""
    d, r = model.d, model.r
    m = n + r - 1
    probs = trajectory_cylinder_probs_forward(orbit, m)
    out = {}
    for w in range(d**m):
        s_val = 0.0
        for j in range(n):
            word = (w // d ** (m - j - r)) % d**r
            s_val += pot.u_for(win.symbol(j), win.symbol(j + 1) if pot.u_next_symbol else None)[word]
        out[round(s_val, 9)] = out.get(round(s_val, 9), 0.0) + probs[w]
    return out


def test_exact_law_matches_brute_force_enumeration():
    rng = generator(7)
    chain, model, pot = random_instance(rng, d=2, r=2, n_states=2)
    # force lattice u values in {-1, 0, 1, 2}
    pot = PotentialTable(pot.phi, rng.integers(-1, 3, size=pot.u.shape).astype(float),
                        model, lattice_h=1.0)
    win = sample_base_path(chain, -150, 200, 8)
    n = 4
    orbit = SystemOrbit(win, 0, n + 1, pot, model, tol=1e-11)
    dist = exact_Sn_distribution(win, n, pot, model, orbit=orbit)
    oracle = brute_force_law(win, n, pot, model, orbit)
    for v, p in oracle.items():
        assert dist.prob_at(v) == pytest.approx(p, abs=1e-10)
    assert sum(oracle.values()) == pytest.approx(1.0, abs=1e-10)


def test_reversed_chain_equality_distributions():
    # trajectory law computed forward (functional descent) vs reversed chain
    for seed, (d, r) in [(11, (2, 1)), (12, (2, 2))]:
        rng = generator(seed)
        chain, model, pot = random_instance(rng, d=d, r=r, n_states=2)
        win = sample_base_path(chain, -150, 200, seed)
        m = 4 + (r - 1)
        orbit = SystemOrbit(win, 0, m, pot, model, tol=1e-11)
        fwd = trajectory_cylinder_probs_forward(orbit, m)
        rev = trajectory_cylinder_probs_reversed(orbit, m)
        assert np.max(np.abs(fwd - rev)) < 1e-9
        assert fwd.sum() == pytest.approx(1.0, abs=1e-9)


def test_char_function_spectral_identities():
    chain, model, pot = scalar_instance([1.0, -1.0], lattice_h=1.0)
    win = sample_base_path(chain, -120, 200, 5)
    n = 9
    orbit = SystemOrbit(win, 0, n, pot, model)
    assert char_function_spectral(win, n, 0.0, pot, model, orbit) == pytest.approx(1.0)
    for t in [0.3, 1.1]:
        spectral = char_function_spectral(win, n, t, pot, model, orbit)
        assert spectral == pytest.approx(np.cos(t) ** n, abs=1e-12)


def test_char_function_matches_exact_law_fourier():
    chain, model, pot = lattice_instance_two_state()
    win = sample_base_path(chain, -150, 250, 6)
    n = 12
    orbit = SystemOrbit(win, 0, n, pot, model, tol=1e-11)
    dist = exact_Sn_distribution(win, n, pot, model, orbit=orbit)
    for t in [0.2, 0.9, 2.0]:
        spectral = char_function_spectral(win, n, t, pot, model, orbit)
        fourier = dist.char_function(t)
        assert abs(spectral - fourier) < 1e-9


def test_sampler_against_exact_law():
    chain, model, pot = lattice_instance_two_state()
    win = sample_base_path(chain, -150, 250, 7)
    n = 10
    orbit = SystemOrbit(win, 0, n, pot, model)
    dist = exact_Sn_distribution(win, n, pot, model, orbit=orbit)
    samples = sample_Sn(win, n, generator(99), pot, model, orbit=orbit, replicates=20000)
    emp_mean = samples.mean()
    sd = math.sqrt(dist.variance() / len(samples))
    assert abs(emp_mean - dist.mean()) < 4 * sd
    # empirical characteristic function within Monte Carlo bands
    t = 0.7
    emp_cf = np.exp(1j * t * samples).mean()
    exact_cf = dist.char_function(t)
    band = 4.0 / math.sqrt(len(samples))
    assert abs(emp_cf - exact_cf) < band


def test_sampler_constant_u():
    chain, model, pot = scalar_instance([2.5, 2.5])
    win = sample_base_path(chain, -80, 140, 8)
    samples = sample_Sn(win, 6, generator(1), pot, model, replicates=50)
    assert np.allclose(samples, 15.0)


def test_forward_sweep_matches_backward_dp():
    chain, model, pot = lattice_instance_two_state()
    win = sample_base_path(chain, -150, 250, 9)
    n_max = 8
    orbit = SystemOrbit(win, 0, n_max, pot, model, tol=1e-11)
    sweeps = {n: (vals.copy(), k0) for n, vals, k0 in
              forward_value_sweep(win, n_max, pot, model, orbit=orbit)}
    for n in [1, 3, 8]:
        dist = exact_Sn_distribution(win, n, pot, model, orbit=orbit)
        vals, k0 = sweeps[n]
        for i, p in enumerate(vals):
            if p > 1e-15:
                assert dist.prob_at((k0 + i) * 1.0) == pytest.approx(p, abs=1e-10)


def test_variance_curve_scalar_and_coboundary():
    chain, model, pot = scalar_instance([1.0, -1.0], lattice_h=1.0)
    win = sample_base_path(chain, -150, 250, 10)
    rep = variance_curve(win, [2, 6, 12, 20], pot, model)
    assert not rep.degenerate
    assert rep.sigma_sq == pytest.approx(1.0, abs=1e-8)
    assert np.allclose(rep.V_n, rep.n_list, atol=1e-8)
    assert rep.V_n_lattice is not None
    assert np.allclose(rep.V_n_lattice, rep.n_list, atol=1e-8)


def test_variance_degenerate_base_coboundary():
    # u(omega_0, omega_1) = q(omega_0) - q(omega_1), fiber independent
    model = FiberModel(2, 1)
    chain = build_markov_base([[0.6, 0.4], [0.3, 0.7]])
    q = np.array([0.0, 1.0])
    u_pair = np.zeros((2, 2, 2))
    for s in range(2):
        for s2 in range(2):
            u_pair[s, s2, :] = q[s] - q[s2]
    pot = PotentialTable(np.full((2, 2), -np.log(2.0)), u_pair, model,
                         lattice_h=1.0, u_next_symbol=True)
    win = sample_base_path(chain, -150, 250, 11)
    rep = variance_curve(win, [2, 8, 20], pot, model)
    assert rep.degenerate
    assert abs(rep.sigma_sq) < 1e-10
    assert all(abs(v) < 1e-12 for v in rep.V_n)


def test_constant_step_mean_validator():
    chain, model, pot = lattice_instance_two_state()
    win = sample_base_path(chain, -150, 250, 12)
    orbit = SystemOrbit(win, 0, 20, pot, model)
    ok, gamma, dev = constant_step_mean(orbit, 20)
    assert ok and abs(gamma) < 1e-9

    rng = generator(13)
    chain2, model2, pot2 = random_instance(rng, d=2, r=2, n_states=2)
    win2 = sample_base_path(chain2, -150, 250, 13)
    orbit2 = SystemOrbit(win2, 0, 20, pot2, model2)
    ok2, _, dev2 = constant_step_mean(orbit2, 20)
    assert not ok2 and dev2 > 1e-6


def test_lattice_budget_guard():
    chain, model, pot = scalar_instance([1000.0, -1000.0], lattice_h=1.0)
    win = sample_base_path(chain, -100, 20000, 14)
    with pytest.raises(LatticeTooLarge):
        exact_Sn_distribution(win, 10000, pot, model,
                              orbit=SystemOrbit(win, 0, 10000, pot, model))


def test_not_lattice_guard():
    chain, model, pot = scalar_instance([1.0, -1.0])  # no lattice_h declared
    win = sample_base_path(chain, -80, 120, 15)
    with pytest.raises(NotLattice):
        exact_Sn_distribution(win, 5, pot, model)


def test_exact_law_csv(tmp_path):
    chain, model, pot = scalar_instance([1.0, -1.0], lattice_h=1.0)
    win = sample_base_path(chain, -80, 120, 16)
    dist = exact_Sn_distribution(win, 4, pot, model)
    p = tmp_path / "law.csv"
    dist.write_csv(p)
    lines = p.read_text().strip().splitlines()
    assert lines[0] == "lattice_value,probability"
    assert len(lines) == len(dist.probs) + 1
