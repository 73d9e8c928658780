"""Shared random-instance builders for the test suite."""

import numpy as np

from skewprod.base_env import build_markov_base, sample_base_path
from skewprod.fiber import FiberModel, PotentialTable


def random_chain(rng, n_states):
    Q = rng.uniform(0.2, 1.0, size=(n_states, n_states))
    Q /= Q.sum(axis=1, keepdims=True)
    return build_markov_base(Q)


def random_tables(rng, model, n_states, phi_scale=0.6, u_scale=1.0, column_normalized=False):
    d, r = model.d, model.r
    nwords = d**r
    if column_normalized:
        # for every depth-(r-1) prefix the weights over the last symbol sum to 1,
        # which pins the dual functional to the uniform reference and lambda to 1
        W = rng.uniform(0.2, 1.0, size=(n_states, nwords))
        W = W.reshape(n_states, d ** (r - 1), d)
        W /= W.sum(axis=2, keepdims=True)
        phi = np.log(W.reshape(n_states, nwords))
    else:
        phi = phi_scale * rng.standard_normal((n_states, nwords))
    u = u_scale * rng.standard_normal((n_states, nwords))
    return PotentialTable(phi, u, model)


def random_instance(rng, d=2, r=2, n_states=2, column_normalized=False, u_scale=1.0):
    chain = random_chain(rng, n_states)
    model = FiberModel(d, r)
    pot = random_tables(rng, model, n_states, column_normalized=column_normalized,
                        u_scale=u_scale)
    return chain, model, pot


def scalar_instance(u_values, phi_log_weights=None, n_states=2, lattice_h=None):
    """r = 1 instance with identical tables on every base symbol."""
    d = len(u_values)
    model = FiberModel(d, 1)
    phi_row = np.full(d, -np.log(d)) if phi_log_weights is None else np.asarray(phi_log_weights)
    phi = np.tile(phi_row, (n_states, 1))
    u = np.tile(np.asarray(u_values, dtype=float), (n_states, 1))
    chain = build_markov_base(np.full((n_states, n_states), 1.0 / n_states))
    return chain, model, PotentialTable(phi, u, model, lattice_h=lattice_h)


def window_for(chain, rng_seed, back, fwd):
    return sample_base_path(chain, -back, fwd, rng_seed)
