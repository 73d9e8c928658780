"""Gibbs measures, exact lattice laws of Birkhoff sums, chains, characteristic functions.

The z = 0 normalized matrices are row-action stochastic, so the dual action
along the orbit is a Markov chain on fiber cylinders run against the dynamics
(the trajectory read backwards).  The exact law of the n-step sum is a
dynamic-programming convolution over (cylinder, lattice value) states driven
by the per-branch kernels; sampling, spectral characteristic functions and
the forward (renewal) sweep all consume the same kernels, which is what makes
the three characteristic-function routes exactly comparable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .base_env import OmegaWindow
from .errors import LatticeTooLarge, NonPositive, NotLattice
from .fiber import FiberModel, PotentialTable
from .rpf import RpfTriplet, SystemOrbit
from .seeding import generator

STATE_BUDGET = 10**7


@dataclass
class GibbsMeasure:
    """Probability weights over depth-(r-1) cylinders, mu = h nu normalized."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if np.any(w < -1e-12):
            raise NonPositive("Gibbs weights must be nonnegative")
        total = w.sum()
        if total <= 0:
            raise NonPositive("Gibbs weights must have positive mass")
        self.weights = np.maximum(w, 0.0) / total

    def __call__(self, values: np.ndarray) -> float:
        return float(self.weights @ np.asarray(values))


def gibbs_measure(triplet0: RpfTriplet) -> GibbsMeasure:
    if abs(np.imag(triplet0.z)) > 0:
        raise NonPositive("Gibbs measure needs the z = 0 triplet")
    h = np.real(triplet0.raw_h)
    nu = np.real(triplet0.raw_nu)
    if np.any(h <= 0):
        raise NonPositive("eigenfunction must be strictly positive")
    return GibbsMeasure(h * nu)


@dataclass
class LatticeDistribution:
    """Exact law of an n-step sum supported on offset + h * (k0 + i)."""

    h: float
    k0: int
    probs: np.ndarray
    n: int

    def values(self) -> np.ndarray:
        return (self.k0 + np.arange(len(self.probs))) * self.h

    def mean(self) -> float:
        return float(self.values() @ self.probs)

    def variance(self) -> float:
        v = self.values()
        m = v @ self.probs
        return float((v - m) ** 2 @ self.probs)

    def char_function(self, t: float) -> complex:
        return complex(np.exp(1j * t * self.values()) @ self.probs)

    def cdf(self, xs: np.ndarray) -> np.ndarray:
        cum = np.cumsum(self.probs)
        idx = np.searchsorted(self.values(), np.asarray(xs), side="right")
        out = np.zeros(len(np.atleast_1d(xs)))
        pos = idx > 0
        out[pos] = cum[idx[pos] - 1]
        return out

    def prob_at(self, value: float) -> float:
        k = int(round(value / self.h)) - self.k0
        if 0 <= k < len(self.probs):
            return float(self.probs[k])
        return 0.0

    def trim(self, eps: float = 0.0) -> "LatticeDistribution":
        nz = np.nonzero(self.probs > eps)[0]
        if len(nz) == 0:
            return self
        return LatticeDistribution(self.h, self.k0 + int(nz[0]),
                                   self.probs[nz[0]:nz[-1] + 1].copy(), self.n)

    def write_csv(self, path):
        vals = self.values()
        with open(path, "w") as fh:
            fh.write("lattice_value,probability\n")
            for v, p in zip(vals, self.probs):
                fh.write(f"{v:.17g},{p:.17g}\n")


def write_samples_csv(values, path):
    """Plain-text CSV of sampler output, one float per row."""
    with open(path, "w") as fh:
        fh.write("value\n")
        for v in np.asarray(values, dtype=float):
            fh.write(f"{v:.17g}\n")


def _step_tables(orbit: SystemOrbit, n: int, center: float):
    """Per-step branch probabilities, targets and integer value shifts."""
    pot = orbit.pot
    if pot.lattice_h is None:
        raise NotLattice("exact lattice law needs declared lattice_h")
    h = pot.lattice_h
    c_mult = center / h
    if abs(c_mult - round(c_mult)) > 1e-12:
        raise NotLattice("center must be an integer multiple of lattice_h")
    c_int = int(round(c_mult))
    steps = []
    for j in range(n):
        probs, targets, uvals = orbit.branch_kernel(j)
        ku = np.round(uvals / h).astype(np.int64)
        if np.max(np.abs(uvals / h - ku)) > 1e-12:
            raise NotLattice("u values drifted off the lattice")
        steps.append((probs, targets, ku - c_int))
    return steps, h


def exact_Sn_distribution(window: OmegaWindow, n: int, pot: PotentialTable,
                          model: FiberModel, center: float = 0.0,
                          orbit: SystemOrbit | None = None,
                          state_budget: int = STATE_BUDGET) -> LatticeDistribution:
    """Exact law of the n-step sum minus n*center under the Gibbs start.

    Backward dynamic programming over (cylinder, lattice value): the chain
    starts from the Gibbs weights at the n-th shift and extends to the past
    with the z = 0 branch kernels, accumulating u one step at a time.  Mass
    stays exactly 1.
    """
    if orbit is None:
        orbit = SystemOrbit(window, 0, n, pot, model)
    steps, h = _step_tables(orbit, n, center)
    D = model.space_dim
    order = list(range(n - 1, -1, -1))
    glob_lo, glob_hi = _partial_bounds(steps, order)
    width = glob_hi - glob_lo + 1
    if D * width > state_budget:
        raise LatticeTooLarge(
            f"lattice DP needs {D * width} states, budget {state_budget}")
    cur = np.zeros((D, width))
    origin = -glob_lo  # index of lattice value 0
    cur[:, origin] = orbit.mu[n]
    lo = hi = origin
    nxt = np.zeros_like(cur)
    for j in order:
        probs, targets, ku = steps[j]
        step_lo, step_hi = int(ku.min()), int(ku.max())
        nxt[:, lo + step_lo: hi + step_hi + 1] = 0.0
        for w in range(D):
            row = cur[w, lo:hi + 1]
            for a in range(probs.shape[1]):
                p = probs[w, a]
                if p == 0.0:
                    continue
                shift = int(ku[w, a])
                nxt[targets[w, a], lo + shift: hi + shift + 1] += p * row
        cur, nxt = nxt, cur
        lo += step_lo
        hi += step_hi
    values = cur.sum(axis=0)
    return LatticeDistribution(h, glob_lo, values, n).trim()


def _partial_bounds(steps, order):
    """Worst-case lattice index range over every prefix of the processing order."""
    lo = hi = 0
    glob_lo = glob_hi = 0
    for j in order:
        ku = steps[j][2]
        lo += int(ku.min())
        hi += int(ku.max())
        glob_lo = min(glob_lo, lo)
        glob_hi = max(glob_hi, hi)
    return glob_lo, glob_hi


def exact_joint_distribution(window: OmegaWindow, n: int, pot: PotentialTable,
                             model: FiberModel, orbit: SystemOrbit | None = None):
    """Joint (origin cylinder, lattice value) table of the n-step DP (tests)."""
    if orbit is None:
        orbit = SystemOrbit(window, 0, n, pot, model)
    steps, h = _step_tables(orbit, n, 0.0)
    D = model.space_dim
    order = list(range(n - 1, -1, -1))
    glob_lo, glob_hi = _partial_bounds(steps, order)
    cur = np.zeros((D, glob_hi - glob_lo + 1))
    cur[:, -glob_lo] = orbit.mu[n]
    lo = hi = -glob_lo
    for j in order:
        probs, targets, ku = steps[j]
        nxt = np.zeros_like(cur)
        for w in range(D):
            row = cur[w, lo:hi + 1]
            for a in range(probs.shape[1]):
                shift = int(ku[w, a])
                nxt[targets[w, a], lo + shift: hi + shift + 1] += probs[w, a] * row
        cur = nxt
        lo += int(ku.min())
        hi += int(ku.max())
    return cur, glob_lo, h


def char_function_spectral(window: OmegaWindow, n: int, t: float, pot: PotentialTable,
                           model: FiberModel, orbit: SystemOrbit | None = None) -> complex:
    """Quenched characteristic value: Gibbs weights at shift n against the twisted cocycle."""
    if orbit is None:
        orbit = SystemOrbit(window, 0, n, pot, model)
    vec = np.ones(model.space_dim, dtype=complex)
    for j in range(n):
        vec = orbit.normalized_matrix(j, 1j * t) @ vec
    return complex(orbit.mu[n] @ vec)


def sample_Sn(window: OmegaWindow, n: int, seed, pot: PotentialTable, model: FiberModel,
              orbit: SystemOrbit | None = None, replicates: int = 1) -> np.ndarray:
    """Unbiased samples of the n-step sum under the Gibbs start.

    Runs the cylinder chain (trajectory read backwards) with the z = 0 branch
    kernels, accumulating u values; vectorized over replicates.
    """
    rng = seed if isinstance(seed, np.random.Generator) else generator(seed)
    if orbit is None:
        orbit = SystemOrbit(window, 0, n, pot, model)
    D = model.space_dim
    states = rng.choice(D, size=replicates, p=orbit.mu[n])
    totals = np.zeros(replicates)
    for j in range(n - 1, -1, -1):
        probs, targets, uvals = orbit.branch_kernel(j)
        cum = np.cumsum(probs, axis=1)
        cum[:, -1] = 1.0
        us = rng.random(replicates)
        branch = (us[:, None] > cum[states]).sum(axis=1)
        totals += uvals[states, branch]
        states = targets[states, branch]
    return totals


def trajectory_cylinder_probs_forward(orbit: SystemOrbit, m: int) -> np.ndarray:
    """Law of the depth-m cylinder at the window origin, via deep functional descent."""
    d = orbit.model.d
    n_words = d**m
    out = np.empty(n_words)
    for w in range(n_words):
        ind = np.zeros(n_words)
        ind[w] = 1.0
        out[w] = orbit.mu_deep(0, ind, m)
    return out


def trajectory_cylinder_probs_reversed(orbit: SystemOrbit, m: int) -> np.ndarray:
    """Same law from the reversed-chain construction (distributional equality check)."""
    d, r = orbit.model.d, orbit.model.r
    D = orbit.model.space_dim
    n_steps = m - (r - 1)
    if n_steps < 0:
        raise NotLattice("depth must be at least r-1")
    n_words = d**m
    out = np.empty(n_words)
    for w in range(n_words):
        # cylinder states along the trajectory: w_j = symbols j..j+r-2
        idx = lambda j: (w // d ** (m - j - (r - 1))) % D if r > 1 else 0
        p = orbit.mu[n_steps][idx(n_steps)]
        for j in range(n_steps - 1, -1, -1):
            probs, targets, _ = orbit.branch_kernel(j)
            a = (w // d ** (m - j - 1)) % d  # fiber symbol at coordinate j
            p *= probs[idx(j + 1), a]
        out[w] = p
    return out


# ---------------------------------------------------------------------------
# forward sweep (renewal accumulation)


def forward_kernels(orbit: SystemOrbit, j: int):
    """Bayes-reversed (dynamics-forward) transition kernel at step j.

    fk[w, b]: probability the trajectory extends by fiber symbol b given the
    current cylinder w; next state is (w shifted, b), the u increment reads
    the depth-r word w.b.  Rows renormalized against rounding drift.
    """
    probs, targets, uvals = orbit.branch_kernel(j)
    d, D = orbit.model.d, orbit.model.space_dim
    if orbit.model.r == 1:
        # stateless chain: forward and backward kernels coincide
        return probs.copy(), targets.copy(), uvals.copy()
    mu_j = orbit.mu[j]
    mu_j1 = orbit.mu[j + 1]
    fk = np.empty((D, d))
    nxt = np.empty((D, d), dtype=np.int64)
    ku = np.empty((D, d))
    for w in range(D):
        a = w // (d ** (orbit.model.r - 2))
        for b in range(d):
            w_next = (w * d + b) % D
            fk[w, b] = probs[w_next, a] * mu_j1[w_next] / mu_j[w] if mu_j[w] > 0 else 0.0
            nxt[w, b] = w_next
            ku[w, b] = uvals[w_next, a]
    row = fk.sum(axis=1, keepdims=True)
    row[row == 0] = 1.0
    fk /= row
    return fk, nxt, ku


def forward_value_sweep(window: OmegaWindow, n_max: int, pot: PotentialTable,
                        model: FiberModel, orbit: SystemOrbit | None = None,
                        f_weights: np.ndarray | None = None,
                        state_budget: int = STATE_BUDGET):
    """Generator of (n, value_probs, k0) for n = 1..n_max in one forward sweep.

    The state distribution starts at the origin Gibbs weights (optionally
    f-weighted, the renewal integrand attaching f at time zero) and extends
    forward with the Bayes kernels; the yielded arrays are the (sub)probability
    masses of the n-step sum on lattice indices k0 + i.
    """
    if orbit is None:
        orbit = SystemOrbit(window, 0, n_max, pot, model)
    if pot.lattice_h is None:
        raise NotLattice("forward sweep needs lattice tables")
    h = pot.lattice_h
    D = model.space_dim
    kernels = []
    for j in range(n_max):
        fk, nxt, ku = forward_kernels(orbit, j)
        ki = np.round(ku / h).astype(np.int64)
        if np.max(np.abs(ku / h - ki)) > 1e-12:
            raise NotLattice("u values drifted off the lattice")
        kernels.append((fk, nxt, ki))
    order = list(range(n_max))
    glob_lo, glob_hi = _partial_bounds(kernels, order)
    width = glob_hi - glob_lo + 1
    if D * width > state_budget:
        raise LatticeTooLarge(f"forward sweep needs {D * width} states")
    cur = np.zeros((D, width))
    origin = -glob_lo
    start = orbit.mu[0] if f_weights is None else orbit.mu[0] * np.asarray(f_weights)
    cur[:, origin] = start
    lo = hi = origin
    for n in range(1, n_max + 1):
        fk, nxt, ki = kernels[n - 1]
        new = np.zeros_like(cur)
        for w in range(D):
            row = cur[w, lo:hi + 1]
            for b in range(fk.shape[1]):
                p = fk[w, b]
                if p == 0.0:
                    continue
                shift = int(ki[w, b])
                new[nxt[w, b], lo + shift: hi + shift + 1] += p * row
        cur = new
        lo += int(ki.min())
        hi += int(ki.max())
        yield n, cur.sum(axis=0), glob_lo


# ---------------------------------------------------------------------------
# variance


@dataclass
class VarianceReport:
    n_list: list
    V_n: list                 # per-n exact variances (quadrature pipeline)
    V_n_lattice: list | None  # exact-law variances when lattice tables allow
    sigma_sq: float
    slope_intercept: float
    degenerate: bool
    tail_fractions: dict | None = None


def variance_curve(window: OmegaWindow, n_list, pot: PotentialTable, model: FiberModel,
                   orbit: SystemOrbit | None = None,
                   degenerate_tol: float = 1e-10) -> VarianceReport:
    """Exact V_n along one environment and the fitted asymptotic slope.

    V_n comes from the covariance quadrature; for lattice tables the exact
    law's variance is computed as an independent cross-check.  sigma^2 is the
    slope of V_n against n; a slope below tolerance flags the degenerate
    branch instead of raising.
    """
    n_list = sorted(int(n) for n in n_list)
    if orbit is None:
        orbit = SystemOrbit(window, 0, max(n_list), pot, model)
    V = [orbit.birkhoff_variance(n) for n in n_list]
    V_lat = None
    if pot.lattice_h is not None:
        V_lat = [exact_Sn_distribution(window, n, pot, model, orbit=orbit).variance()
                 for n in n_list]
    ns = np.asarray(n_list, dtype=float)
    vs = np.asarray(V)
    A = np.stack([np.ones_like(ns), ns], axis=1)
    coef, *_ = np.linalg.lstsq(A, vs, rcond=None)
    sigma_sq = float(coef[1])
    if len(n_list) == 1:
        sigma_sq = float(vs[0] / ns[0])
    return VarianceReport(n_list, V, V_lat, sigma_sq, float(coef[0]),
                          degenerate=sigma_sq < degenerate_tol)


def constant_step_mean(orbit: SystemOrbit, n_check: int, tol: float = 1e-9):
    """(is_constant, gamma, max_deviation) of the per-step conditional means.

    The lattice limit theorems need the per-step Gibbs mean pinned to a
    constant; this checks the conditional one-step means along the window.
    """
    means = []
    devs = []
    for j in range(n_check):
        stepped = np.real(orbit.deep_apply_normalized(j, orbit.u_at(j), orbit.model.r))
        m = float(orbit.mu[j + 1] @ stepped)
        means.append(m)
        devs.append(float(np.max(np.abs(stepped - m))))
    gamma = float(np.mean(means))
    max_dev = max(max(devs), max(abs(m - gamma) for m in means))
    return max_dev <= tol, gamma, max_dev
