"""One-sided full-shift fiber, cylinder functions and locally constant potentials.

The fiber space is X = A^N with A = {0, ..., d-1} and the left shift acting
on every fiber.  Distances are rho(x, x') = base^(-m) where m is the first
index at which x and x' disagree (base = 2 by default).  Functions that
depend on finitely many coordinates ("cylinder functions" of depth k) are
stored as flat arrays indexed by words in lexicographic order, which makes
every transfer operator an exact d^(r-1) x d^(r-1) matrix.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import (
    DepthMismatch,
    DepthShrink,
    InvalidSymbol,
    MissingSymbol,
    NotLattice,
    UnsupportedXi,
)

XI = 0.5


def word_count(d: int, k: int) -> int:
    return d**k


@lru_cache(maxsize=64)
def word_table(d: int, k: int) -> np.ndarray:
    """All depth-k words over {0..d-1} as an int array of shape (d^k, k).

    Row i spells the word with lexicographic index i (first symbol most
    significant).
    """
    if k == 0:
        return np.zeros((1, 0), dtype=np.int64)
    idx = np.arange(d**k, dtype=np.int64)
    cols = []
    for j in range(k):
        cols.append((idx // d ** (k - 1 - j)) % d)
    return np.stack(cols, axis=1)


def word_index(word, d: int) -> int:
    i = 0
    for s in word:
        if not 0 <= int(s) < d:
            raise InvalidSymbol(f"fiber symbol {s} outside alphabet of size {d}")
        i = i * d + int(s)
    return i


def prepend_index(a: int, w_idx: int, d: int, k: int) -> int:
    """Index of the depth-(k+1) word a.w given the depth-k index of w."""
    return a * d**k + w_idx


def drop_last_index(w_idx: int, d: int) -> int:
    """Index of w[:-1] given the index of w (last symbol least significant)."""
    return w_idx // d


@lru_cache(maxsize=64)
def first_disagreement(d: int, k: int) -> np.ndarray:
    """Matrix FD with FD[i, j] = first index where words i and j differ (k if equal)."""
    n = d**k
    if n > 4096:
        raise MemoryError("first_disagreement table limited to d^k <= 4096")
    words = word_table(d, k)
    fd = np.full((n, n), k, dtype=np.int16)
    agree = np.ones((n, n), dtype=bool)
    for m in range(k):
        eq = words[:, None, m] == words[None, :, m]
        newly = agree & ~eq
        fd[newly] = m
        agree &= eq
    return fd


@dataclass(frozen=True)
class FiberModel:
    """Full-shift fiber with its metric and pairing constants.

    alphabet_size: d >= 2 fiber symbols.
    depth: r >= 1, the number of fiber coordinates the potentials read.
    metric_base: rho(x, x') = metric_base^(-first disagreement).
    alpha: Hoelder exponent in (0, 1].
    """

    alphabet_size: int
    depth: int
    metric_base: float = 2.0
    alpha: float = 1.0

    def __post_init__(self):
        if self.alphabet_size < 2:
            raise InvalidSymbol("fiber alphabet needs d >= 2")
        if self.depth < 1:
            raise DepthMismatch("potential depth r must be >= 1")
        if not 0.0 < self.alpha <= 1.0:
            raise UnsupportedXi("alpha must lie in (0, 1]")

    @property
    def d(self) -> int:
        return self.alphabet_size

    @property
    def r(self) -> int:
        return self.depth

    @property
    def space_dim(self) -> int:
        """Dimension of the invariant function space (depth r-1 cylinders)."""
        return self.d ** (self.r - 1)



@dataclass(frozen=True)
class AxiomReport:
    xi: float
    gamma: float
    branch_bound: int
    covering_steps: int


def verify_expanding_axioms(model: FiberModel) -> AxiomReport:
    """Symbolic check of topological exactness and the preimage pairing.

    For the full shift, the image of any xi-ball (a depth-2 cylinder) covers X
    after 2 steps, every point has exactly d shift-preimages, and prepending a
    common symbol contracts distances by exactly 1/metric_base.  The reported
    tuple is constant over the whole base.
    """
    d = model.d
    base = model.metric_base
    # xi-ball = depth-2 cylinder: after two shifts it is all of X; after one it is not
    # (a depth-2 cylinder shifts to a depth-1 cylinder).  n = 2 is sharp.
    # Pairing: for rho(x, x') < xi the d preimage pairs (a.x, a.x') satisfy
    # rho = metric_base^-(m+1) = rho(x, x')/metric_base.
    return AxiomReport(xi=1.0 / base, gamma=base, branch_bound=d, covering_steps=2)


class CylinderFunction:
    """Complex-valued function of the first `depth` fiber coordinates."""

    def __init__(self, depth: int, values, d: int):
        values = np.asarray(values)
        if values.shape != (d**depth,):
            raise DepthMismatch(
                f"depth-{depth} cylinder function over {d} symbols needs {d**depth} values, "
                f"got shape {values.shape}"
            )
        self.depth = depth
        self.d = d
        self.values = values.astype(complex) if np.iscomplexobj(values) else values.astype(float)

    @classmethod
    def constant(cls, value, d: int) -> "CylinderFunction":
        return cls(0, np.array([value]), d)

    def extend(self, k_new: int) -> "CylinderFunction":
        if k_new < self.depth:
            raise DepthShrink(f"cannot shrink depth {self.depth} -> {k_new}")
        if k_new == self.depth:
            return self
        reps = self.d ** (k_new - self.depth)
        return CylinderFunction(k_new, np.repeat(self.values, reps), self.d)

    def __add__(self, other):
        k = max(self.depth, other.depth)
        return CylinderFunction(k, self.extend(k).values + other.extend(k).values, self.d)

    def __sub__(self, other):
        k = max(self.depth, other.depth)
        return CylinderFunction(k, self.extend(k).values - other.extend(k).values, self.d)

    def __mul__(self, scalar):
        return CylinderFunction(self.depth, self.values * scalar, self.d)

    __rmul__ = __mul__

    def __repr__(self):
        return f"CylinderFunction(depth={self.depth}, d={self.d})"


def extend_depth(g: CylinderFunction, k_new: int) -> CylinderFunction:
    return g.extend(k_new)


def holder_seminorm_values(values: np.ndarray, d: int, depth: int, alpha: float) -> float:
    """v_{alpha,xi} of a depth-k cylinder function at xi = 1/2, metric base 2.

    Witness pairs are words sharing a prefix of length m >= 2 and differing at
    index m; their distance can be realized exactly as 2^-m, so the seminorm is
    max |g(w) - g(w')| * 2^(alpha m) over such pairs.
    """
    if depth <= 2:
        return 0.0
    fd = first_disagreement(d, depth)
    weights = np.where((fd >= 2) & (fd < depth), 2.0 ** (alpha * fd.astype(float)), 0.0)
    n = len(values)
    best = 0.0
    chunk = max(1, 2**22 // max(n, 1))
    for lo in range(0, n, chunk):
        hi = min(n, lo + chunk)
        diff = np.abs(values[lo:hi, None] - values[None, :])
        best = max(best, float(np.max(diff * weights[lo:hi])))
    return best


def holder_norm(g: CylinderFunction, alpha: float = 1.0, xi: float = XI):
    """(sup norm, seminorm, total) of g in the ||.||_{alpha,xi} norm."""
    if not 0.0 < alpha <= 1.0:
        raise UnsupportedXi("alpha must lie in (0, 1]")
    if xi != XI:
        raise UnsupportedXi(f"only xi = {XI} supported, got {xi}")
    sup = float(np.max(np.abs(g.values))) if len(g.values) else 0.0
    semi = holder_seminorm_values(g.values, g.d, g.depth, alpha)
    return sup, semi, sup + semi


def holder_norm_vector(values: np.ndarray, d: int, depth: int, alpha: float = 1.0) -> float:
    """Total ||.||_{alpha,xi} norm of a value vector (helper for residuals)."""
    sup = float(np.max(np.abs(values))) if len(values) else 0.0
    return sup + holder_seminorm_values(np.asarray(values), d, depth, alpha)


class PotentialTable:
    """Locally constant potentials phi, u indexed by (base symbol, depth-r word).

    phi is always indexed by the current base symbol.  u may additionally
    depend on the next base symbol (pair mode, shape (S, S, d^r)); that is the
    smallest table enlargement that realizes base coboundaries exactly.
    lattice_h, when set, asserts every u value is an integer multiple of h.
    """

    def __init__(self, phi, u, model: FiberModel, lattice_h: float | None = None,
                 u_next_symbol: bool = False):
        nwords = model.d**model.r
        self.model = model
        self.phi = np.asarray(phi, dtype=float)
        self.u = np.asarray(u, dtype=float)
        self.u_next_symbol = bool(u_next_symbol)
        if self.phi.ndim != 2 or self.phi.shape[1] != nwords:
            raise DepthMismatch(
                f"phi must have shape (n_symbols, {nwords}), got {self.phi.shape}")
        expected_u = (self.phi.shape[0], self.phi.shape[0], nwords) if u_next_symbol \
            else (self.phi.shape[0], nwords)
        if self.u.shape != expected_u:
            raise DepthMismatch(f"u must have shape {expected_u}, got {self.u.shape}")
        self.n_symbols = self.phi.shape[0]
        self.lattice_h = None
        if lattice_h is not None:
            h = float(lattice_h)
            if h <= 0:
                raise NotLattice("lattice_h must be positive")
            mult = self.u / h
            if np.max(np.abs(mult - np.round(mult))) > 1e-12:
                raise NotLattice("u values are not integer multiples of lattice_h")
            self.lattice_h = h

    def check_symbol(self, s: int):
        if not 0 <= s < self.n_symbols:
            raise MissingSymbol(f"potential tables cover symbols 0..{self.n_symbols-1}, got {s}")

    def phi_for(self, s: int) -> np.ndarray:
        self.check_symbol(s)
        return self.phi[s]

    def u_for(self, s: int, s_next: int | None = None) -> np.ndarray:
        self.check_symbol(s)
        if self.u_next_symbol:
            if s_next is None:
                raise MissingSymbol("pair-mode u tables need the next base symbol")
            self.check_symbol(s_next)
            return self.u[s, s_next]
        return self.u[s]

    def u_lattice_ints(self, s: int, s_next: int | None = None) -> np.ndarray:
        if self.lattice_h is None:
            raise NotLattice("potential table has no declared lattice_h")
        return np.round(self.u_for(s, s_next) / self.lattice_h).astype(np.int64)

    def holder_constants(self, alpha: float = 1.0):
        """(max_s v(phi_s), max_s v(u_s)) over depth-r cylinder functions."""
        d, r = self.model.d, self.model.r
        vphi = max(holder_seminorm_values(self.phi[s], d, r, alpha)
                   for s in range(self.n_symbols))
        if self.u_next_symbol:
            vu = max(holder_seminorm_values(self.u[s, t], d, r, alpha)
                     for s in range(self.n_symbols) for t in range(self.n_symbols))
        else:
            vu = max(holder_seminorm_values(self.u[s], d, r, alpha)
                     for s in range(self.n_symbols))
        return vphi, vu

    def sup_u(self) -> float:
        return float(np.max(np.abs(self.u)))
