import numpy as np
import pytest
from _instances import scalar_instance

from skewprod.base_env import build_markov_base, periodic_point
from skewprod.errors import (
    ClassifierFailed,
    DegenerateVariance,
    GridTouchesExcludedPoint,
    NonPositiveMean,
    TruncationInsufficient,
)
from skewprod.fiber import FiberModel, PotentialTable
from skewprod.limits import (
    SymbolicSystem,
    annealed_variance,
    berry_esseen_scan,
    clt_test,
    decay_survey,
    lattice_classify,
    llt_scan,
    periodic_operator_family,
    renewal_curve,
    stratified_windows,
    weighted_ks,
)
from skewprod.seeding import generator


def system_pm1():
    chain, model, pot = scalar_instance([1.0, -1.0], lattice_h=1.0)
    return SymbolicSystem(chain, model, pot)


def system_01():
    chain, model, pot = scalar_instance([0.0, 1.0], lattice_h=1.0)
    return SymbolicSystem(chain, model, pot)


def system_two_state_lattice():
    model = FiberModel(2, 1)
    chain = build_markov_base([[0.7, 0.3], [0.4, 0.6]])
    phi = np.array([
        [np.log(0.5), np.log(0.5)],
        [np.log(2 / 3), np.log(1 / 3)],
    ])
    u = np.array([[-1.0, 1.0], [-1.0, 2.0]])
    pot = PotentialTable(phi, u, model, lattice_h=1.0)
    return SymbolicSystem(chain, model, pot, periodic_cycle=(0, 1))


def system_coboundary():
    model = FiberModel(2, 1)
    chain = build_markov_base([[0.6, 0.4], [0.3, 0.7]])
    q = np.array([0.0, 1.0])
    u_pair = np.zeros((2, 2, 2))
    for s in range(2):
        for s2 in range(2):
            u_pair[s, s2, :] = q[s] - q[s2]
    pot = PotentialTable(np.full((2, 2), -np.log(2.0)), u_pair, model,
                         lattice_h=1.0, u_next_symbol=True)
    return SymbolicSystem(chain, model, pot)


def system_renewal():
    chain, model, pot = scalar_instance([1.0, 2.0], lattice_h=1.0)
    return SymbolicSystem(chain, model, pot)


def test_stratified_weights_sum_to_one():
    chain = build_markov_base([[0.7, 0.3], [0.4, 0.6]])
    ens = stratified_windows(chain, 2, 12, -10, 30, 5, 1)
    assert sum(w.weight for w in ens) == pytest.approx(1.0, abs=1e-12)
    for ww in ens:
        assert ww.window.lo == -10 and ww.window.hi == 30


def test_weighted_ks_matches_plain_ks():
    rng = generator(3)
    xs = rng.standard_normal(2000)
    ks = weighted_ks(xs, np.full(2000, 1 / 2000), 1.0)
    import scipy.stats as st

    ref = st.kstest(xs, "norm").statistic
    assert ks == pytest.approx(ref, abs=1e-12)


def test_classifier_span2_counterexample_fails_at_pi():
    sys_pm = system_pm1()
    pp = periodic_point(sys_pm.chain, (0,))
    grid = np.array([np.pi / 2, np.pi, 4.0])
    pf = periodic_operator_family(pp, grid, sys_pm.pot, sys_pm.model)
    rep = lattice_classify(pf, 1.0)
    assert not rep.passed
    assert rep.offending_t == pytest.approx(np.pi)
    assert rep.min_gap == pytest.approx(0.0, abs=1e-12)


def test_classifier_01_passes():
    sys01 = system_01()
    rep = sys01.classify()
    assert rep.passed
    assert rep.min_gap > 0.0


def test_classifier_zero_u_degenerate():
    chain, model, pot = scalar_instance([0.0, 0.0], lattice_h=1.0)
    sysz = SymbolicSystem(chain, model, pot)
    rep = sysz.classify()
    assert rep.degenerate and not rep.passed


def test_classifier_grid_guard():
    sys01 = system_01()
    pp = periodic_point(sys01.chain, (0,))
    pf = periodic_operator_family(pp, np.array([0.0, 1.0]), sys01.pot, sys01.model)
    with pytest.raises(GridTouchesExcludedPoint):
        lattice_classify(pf, 1.0)


def test_two_state_lattice_classifier_needs_period2_cycle():
    sys2 = system_two_state_lattice()
    rep = sys2.classify()
    assert rep.passed  # cycle (0, 1) mixes the span-2 and aperiodic symbols


def test_annealed_variance_two_state():
    sys2 = system_two_state_lattice()
    sigma_sq, Vbar, tail, ci = annealed_variance(sys2, [32, 64, 128], 24, seed=8)
    assert sigma_sq == pytest.approx(10 / 7, abs=0.1)
    assert tail  # audit populated
    assert ci[0] <= sigma_sq <= ci[1]


def test_clt_scalar_small_scale():
    sys_pm = system_pm1()
    rep = clt_test(sys_pm, [100, 400], omega_samples=16, fiber_replicates=1250,
                   seed=4, ks_threshold=0.06)
    assert not rep.degenerate
    assert rep.sigma_sq == pytest.approx(1.0, abs=1e-6)
    assert rep.ks[-1] < 0.06
    assert rep.ks[-1] <= rep.ks[0] + 0.01
    assert rep.passed


def test_clt_degenerate_branch():
    sysc = system_coboundary()
    with pytest.raises(DegenerateVariance):
        clt_test(sysc, [100], omega_samples=8, fiber_replicates=16, seed=5)
    rep = clt_test(sysc, [100], omega_samples=8, fiber_replicates=16, seed=5,
                   expect_degenerate=True)
    assert rep.degenerate and rep.passed
    assert rep.degenerate_max_abs < 0.05


def test_berry_esseen_bounded_scalar():
    sys_pm = system_pm1()
    rep = berry_esseen_scan(sys_pm, [16, 64, 256], omega_samples=8, seed=6)
    assert rep.bounded
    assert all(s > 0 for s in rep.sup_dev)
    assert rep.sup_dev[-1] < rep.sup_dev[0]


def test_llt_binomial_preset():
    sys01 = system_01()
    rep = llt_scan(sys01, [200, 500], omega_samples=12, seed=7, threshold=0.05)
    assert rep.sup_dev[-1] < 0.05
    assert rep.sup_dev[-1] <= rep.sup_dev[0] + 1e-9
    assert rep.passed


def test_llt_refuses_span2():
    sys_pm = system_pm1()
    with pytest.raises(ClassifierFailed):
        llt_scan(sys_pm, [100], omega_samples=4, seed=8)


def test_llt_two_state_decreasing():
    sys2 = system_two_state_lattice()
    rep = llt_scan(sys2, [150, 300, 600], omega_samples=24, seed=9, threshold=0.08)
    assert rep.sup_dev[-1] < 0.08
    assert rep.sup_dev[-1] <= rep.sup_dev[0] + 1e-9


def test_renewal_gamma_three_halves():
    sysr = system_renewal()
    a_list = list(range(-12, 0, 4)) + list(range(20, 41, 2))
    rep = renewal_curve(sysr, a_list, truncation=60, omega_samples=12, seed=10,
                        limit_window=(28, 40), rel_tol=0.05)
    assert rep.gamma == pytest.approx(1.5, abs=1e-10)
    assert rep.target == pytest.approx(2 / 3, abs=1e-10)
    assert rep.negative_side_max == 0.0  # positive steps cannot reach a < 0
    assert rep.rel_err_window < 0.05
    assert rep.passed


def test_renewal_deterministic_unit_steps_counting_measure():
    chain, model, pot = scalar_instance([1.0, 1.0], lattice_h=1.0)
    sysu = SymbolicSystem(chain, model, pot)
    # u == 1: spectral radius of the twisted cycle operator is |e^{it}| = 1
    with pytest.raises(ClassifierFailed):
        renewal_curve(sysu, [5, 10], truncation=40, omega_samples=4, seed=11)


def test_renewal_truncation_guard():
    sysr = system_renewal()
    with pytest.raises(TruncationInsufficient):
        renewal_curve(sysr, [100], truncation=30, omega_samples=4, seed=12)


def test_renewal_nonconstant_f_rejected():
    sysr = system_renewal()
    with pytest.raises(NonPositiveMean):
        renewal_curve(sysr, [20], truncation=40, omega_samples=4, seed=13,
                      f_weights=[-1.0])


def test_decay_survey_two_state():
    sys2 = system_two_state_lattice()
    rep = decay_survey(sys2, t_small=[0.1, 0.2], t_large=[1.2, 2.0],
                       n_grid=[16, 32, 64], omega_samples=16, seed=14)
    assert rep.d2_fit > 0
    assert rep.u_fit > 0
    fr = [rep.small_violation_frac[n] for n in sorted(rep.small_violation_frac)]
    assert fr[-1] <= fr[0] + 1e-9


def test_decay_survey_zero_u_degenerate_rate():
    chain, model, pot = scalar_instance([0.0, 0.0], lattice_h=1.0)
    sysz = SymbolicSystem(chain, model, pot)
    rep = decay_survey(sysz, t_small=[0.1, 0.3], t_large=[1.0], n_grid=[8, 16],
                       omega_samples=6, seed=15)
    assert abs(rep.d2_fit) < 1e-10  # no decay at all
