import numpy as np
import pytest

from selcontrast.net import init_params


def rel_error(got: np.ndarray, want: np.ndarray) -> float:
    got = np.asarray(got, dtype=np.float64).ravel()
    want = np.asarray(want, dtype=np.float64).ravel()
    scale = max(np.linalg.norm(want), np.linalg.norm(got), 1e-12)
    return float(np.linalg.norm(got - want) / scale)


def fd_param_gradient(loss_fn, params, step=1e-5):
    """Central finite differences of loss_fn(params) w.r.t. every parameter
    array, returned in params.arrays() order."""
    grads = []
    for arr in params.arrays():
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gf = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            f_plus = loss_fn(params)
            flat[i] = orig - step
            f_minus = loss_fn(params)
            flat[i] = orig
            gf[i] = (f_plus - f_minus) / (2.0 * step)
        grads.append(g)
    return grads


def fd_vector_gradient(fn, x, step=1e-6):
    """Central finite differences of a scalar function of a vector."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += step
        xm[i] -= step
        g[i] = (fn(xp) - fn(xm)) / (2.0 * step)
    return g


def random_unit_vectors(rng, count, dim):
    v = rng.standard_normal((count, dim))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def tiny_params(rng, d=3, hidden=(5, 4), k=3):
    return init_params(d, hidden, k, rng)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
