"""Two-sided Markov-shift base environment.

The driving system is the shift on S^Z with a strictly positive transition
matrix Q and its stationary law p; theta acts on windows as an index shift.
Strict positivity is what makes every finite cylinder carry positive mass and
the polynomial mixing bounds the limit theorems need hold automatically, so
build_markov_base rejects matrices with zero entries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    InsufficientWindow,
    InvalidSymbol,
    NoConvergence,
    NonStochasticRow,
    ZeroStateSpace,
    ZeroTransition,
)
from .seeding import generator


@dataclass(frozen=True)
class BaseSymbolChain:
    """Finite-state mixing Markov base: states {0..m-1}, transitions Q, stationary p."""

    transition: np.ndarray
    stationary: np.ndarray
    deterministic: bool = False

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    def reverse_kernel(self) -> np.ndarray:
        """Time-reversed transition matrix: Qrev[a, b] = p[b] Q[b, a] / p[a]."""
        p = self.stationary
        return (self.transition.T * p[None, :] / p[:, None]).T


def build_markov_base(Q, tol: float = 1e-9, allow_deterministic: bool = False) -> BaseSymbolChain:
    """Validate Q and compute its stationary vector by power iteration.

    Raises ZeroStateSpace for a 1-state base unless allow_deterministic is set
    (deterministic environments are only for oracle tests against classical,
    non-random theory).
    """
    Q = np.asarray(Q, dtype=float)
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
        raise NonStochasticRow(f"transition matrix must be square, got shape {Q.shape}")
    m = Q.shape[0]
    if m < 1:
        raise ZeroStateSpace("empty state space")
    if m == 1:
        if not allow_deterministic:
            raise ZeroStateSpace(
                "one-state base is deterministic; pass allow_deterministic=True for oracle runs")
        if abs(Q[0, 0] - 1.0) > tol:
            raise NonStochasticRow("1x1 transition matrix must be [[1.0]]")
        return BaseSymbolChain(np.array([[1.0]]), np.array([1.0]), deterministic=True)
    if np.any(Q < 0):
        raise NonStochasticRow("transition matrix has negative entries")
    row_err = np.abs(Q.sum(axis=1) - 1.0)
    if np.any(row_err > tol):
        bad = int(np.argmax(row_err))
        raise NonStochasticRow(f"row {bad} sums to {Q[bad].sum():.12g}, off by more than {tol}")
    if np.any(Q == 0.0):
        i, j = np.argwhere(Q == 0.0)[0]
        raise ZeroTransition(f"Q[{i},{j}] = 0; strictly positive transitions required")
    # renormalize rows exactly so downstream cylinder probabilities are consistent
    Q = Q / Q.sum(axis=1, keepdims=True)
    p = np.full(m, 1.0 / m)
    for _ in range(10**6):
        p_next = p @ Q
        p_next /= p_next.sum()
        if np.max(np.abs(p_next - p)) < 1e-12:
            p = p_next
            break
        p = p_next
    else:
        raise NoConvergence("stationary vector power iteration did not converge")
    if np.any(p <= 0):
        raise NoConvergence("stationary vector has non-positive entries")
    return BaseSymbolChain(Q, p)


class OmegaWindow:
    """Finite view of a base point omega on integer indices lo..hi (lo <= 0 <= hi).

    Index 0 is the present.  theta^j acts as an index shift: shifted(j) views
    the same buffer with symbol(i) = original symbol(i + j).
    """

    def __init__(self, lo: int, hi: int, symbols, n_states: int):
        symbols = np.asarray(symbols, dtype=np.int64)
        if lo > 0 or hi < 0:
            raise InsufficientWindow(f"window [{lo},{hi}] must contain the origin")
        if symbols.shape != (hi - lo + 1,):
            raise InsufficientWindow(
                f"window [{lo},{hi}] needs {hi-lo+1} symbols, got {symbols.shape}")
        if np.any(symbols < 0) or np.any(symbols >= n_states):
            raise InvalidSymbol("window contains symbols outside the base state space")
        self.lo = lo
        self.hi = hi
        self._symbols = symbols
        self.n_states = n_states

    def require(self, lo: int, hi: int):
        if lo < self.lo or hi > self.hi:
            raise InsufficientWindow(
                f"operation needs indices [{lo},{hi}] but window covers [{self.lo},{self.hi}]")

    def symbol(self, i: int) -> int:
        self.require(i, i)
        return int(self._symbols[i - self.lo])

    def symbols(self, lo: int, hi: int) -> np.ndarray:
        self.require(lo, hi)
        return self._symbols[lo - self.lo: hi - self.lo + 1]

    def shifted(self, j: int) -> "OmegaWindow":
        """Window view of theta^j omega (indices shrink by j on the right)."""
        return OmegaWindow(self.lo - j, self.hi - j, self._symbols, self.n_states)

    def __repr__(self):
        return f"OmegaWindow([{self.lo},{self.hi}])"


def _cum_rows(P: np.ndarray) -> np.ndarray:
    """Row-wise cumulative sums with the last column pinned to 1 (inverse-cdf sampling)."""
    cum = np.cumsum(P, axis=1)
    cum[:, -1] = 1.0
    return cum


def sample_base_path(chain: BaseSymbolChain, lo: int, hi: int, seed) -> OmegaWindow:
    """Draw omega ~ P restricted to indices lo..hi (stationary Markov window)."""
    rng = seed if isinstance(seed, np.random.Generator) else generator(seed)
    if lo > 0 or hi < 0:
        raise InsufficientWindow("need lo <= 0 <= hi")
    n = hi - lo + 1
    m = chain.n_states
    syms = np.empty(n, dtype=np.int64)
    syms[0] = rng.choice(m, p=chain.stationary)
    cum = _cum_rows(chain.transition)
    us = rng.random(n - 1)
    for i in range(1, n):
        syms[i] = np.searchsorted(cum[syms[i - 1]], us[i - 1], side="right")
    return OmegaWindow(lo, hi, syms, m)


def sample_conditioned_paths(chain: BaseSymbolChain, prefix: np.ndarray, lo: int, hi: int,
                             count: int, rng: np.random.Generator) -> np.ndarray:
    """Sample `count` windows over lo..hi with symbols at 0..len(prefix)-1 fixed.

    Indices after the prefix extend forward with Q; indices before 0 extend
    backward with the reversed kernel, so the marginal law is the stationary
    chain conditioned on the prefix cylinder.  Returns an int array of shape
    (count, hi - lo + 1).
    """
    k = len(prefix)
    if lo > 0 or hi < k - 1:
        raise InsufficientWindow("conditioned windows must contain the prefix indices")
    n = hi - lo + 1
    out = np.empty((count, n), dtype=np.int64)
    out[:, -lo: -lo + k] = np.asarray(prefix, dtype=np.int64)[None, :]
    cum_f = _cum_rows(chain.transition)
    cum_b = _cum_rows(chain.reverse_kernel())
    for i in range(-lo + k, n):  # forward of the prefix
        us = rng.random(count)
        out[:, i] = (us[:, None] > cum_f[out[:, i - 1]]).sum(axis=1)
    for i in range(-lo - 1, -1, -1):  # backward of index 0
        us = rng.random(count)
        out[:, i] = (us[:, None] > cum_b[out[:, i + 1]]).sum(axis=1)
    return out


@dataclass(frozen=True)
class PeriodicBasePoint:
    """Periodic base environment: bi-infinite repetition of `cycle`."""

    cycle: tuple
    n_states: int

    @property
    def period(self) -> int:
        return len(self.cycle)

    def window(self, lo: int, hi: int) -> OmegaWindow:
        n0 = self.period
        syms = [self.cycle[i % n0] for i in range(lo, hi + 1)]
        return OmegaWindow(lo, hi, np.array(syms), self.n_states)

    def symbol(self, i: int) -> int:
        return int(self.cycle[i % self.period])


def periodic_point(chain: BaseSymbolChain, cycle) -> PeriodicBasePoint:
    cycle = tuple(int(c) for c in cycle)
    if len(cycle) < 1:
        raise InvalidSymbol("cycle must be non-empty")
    for c in cycle:
        if not 0 <= c < chain.n_states:
            raise InvalidSymbol(f"cycle symbol {c} not a base state")
    # wrap-around transitions all positive: guaranteed by Q > 0, checked for clarity
    for a, b in zip(cycle, cycle[1:] + cycle[:1]):
        if chain.transition[a, b] <= 0:
            raise ZeroTransition(f"cycle transition {a}->{b} has zero probability")
    return PeriodicBasePoint(cycle, chain.n_states)


def cylinder_probability(chain: BaseSymbolChain, pattern: dict) -> float:
    """Exact stationary probability of {omega: omega_i = pattern[i] for all i}.

    Gaps between constrained indices use Chapman-Kolmogorov powers of Q.
    The empty pattern has probability 1.
    """
    if not pattern:
        return 1.0
    items = sorted((int(i), int(s)) for i, s in pattern.items())
    for _, s in items:
        if not 0 <= s < chain.n_states:
            raise InvalidSymbol(f"pattern symbol {s} not a base state")
    prob = chain.stationary[items[0][1]]
    for (i0, s0), (i1, s1) in zip(items, items[1:]):
        gap = i1 - i0
        Qg = np.linalg.matrix_power(chain.transition, gap)
        prob *= Qg[s0, s1]
    return float(prob)


@dataclass
class MixingAudit:
    pattern: dict
    exact_probability: float
    threshold_fraction: float
    n_list: list
    tail_estimates: list
    monotone_trend: bool


def audit_mixing(chain: BaseSymbolChain, pattern: dict, n_list, samples: int, seed,
                 fraction: float = 0.5) -> MixingAudit:
    """Estimate P{omega: sum_{j<n} 1_B(theta^j omega) <= c n} for the cylinder B.

    c = fraction * P(B) (half the exact cylinder probability by default).  The
    estimates should trend down in n; the exact probability is computed from
    Q and p and is always positive.
    """
    exact_p = cylinder_probability(chain, pattern)
    c = fraction * exact_p
    rng = seed if isinstance(seed, np.random.Generator) else generator(seed)
    if pattern:
        idxs = sorted(int(i) for i in pattern)
        span_lo, span_hi = idxs[0], idxs[-1]
    else:
        span_lo = span_hi = 0
    estimates = []
    for n in n_list:
        length = (n - 1 + max(span_hi, 0)) - min(span_lo, 0) + 1
        paths = _sample_paths_matrix(chain, length, samples, rng)
        offset = -min(span_lo, 0)
        if pattern:
            hit = np.ones((samples, n), dtype=bool)
            for i, s in pattern.items():
                cols = offset + np.arange(n) + int(i)
                hit &= paths[:, cols] == int(s)
            counts = hit.sum(axis=1)
        else:
            counts = np.full(samples, n)
        estimates.append(float(np.mean(counts <= c * n)))
    trend = all(b <= a + 1e-12 for a, b in zip(estimates, estimates[1:]))
    return MixingAudit(pattern, exact_p, fraction, list(n_list), estimates, trend)


def _sample_paths_matrix(chain: BaseSymbolChain, length: int, count: int,
                         rng: np.random.Generator) -> np.ndarray:
    """`count` independent stationary paths of `length` symbols, vectorized per step."""
    m = chain.n_states
    out = np.empty((count, length), dtype=np.int64)
    out[:, 0] = rng.choice(m, size=count, p=chain.stationary)
    cum = _cum_rows(chain.transition)
    for i in range(1, length):
        us = rng.random(count)
        out[:, i] = (us[:, None] > cum[out[:, i - 1]]).sum(axis=1)
    return out
