"""Reference implementations used as test oracles."""

import mpmath as mp
import numpy as np

from mfcabo.domain import MultiSourceDataset


def dense_correlation(Xu, P_t, P_s, omega, A, A_h, Xv=None, Pt_v=None, Ps_v=None):
    """Kernel written straight from its definition, one pair at a time."""
    if Xv is None:
        Xv, Pt_v, Ps_v = Xu, P_t, P_s
    R = np.empty((len(Xu), len(Xv)))
    w = 10.0 ** np.asarray(omega)
    for i in range(len(Xu)):
        for j in range(len(Xv)):
            d = np.sum(w * (Xu[i] - Xv[j]) ** 2)
            if A is not None:
                d += np.sum((P_t[i] @ A - Pt_v[j] @ A) ** 2)
            if A_h is not None:
                d += np.sum((P_s[i] @ A_h - Ps_v[j] @ A_h) ** 2)
            R[i, j] = np.exp(-d)
    return R


def dense_nll(y, K):
    """Profiled likelihood via explicit inverse and determinant."""
    n = len(y)
    Ki = np.linalg.inv(K)
    one = np.ones(n)
    beta = (one @ Ki @ y) / (one @ Ki @ one)
    e = y - beta
    s2 = e @ Ki @ e / n
    return n * np.log(s2) + np.log(np.linalg.det(K)), beta, s2


def dense_predict(y, K, r, digits=50):
    """Conditional mean and variance from explicit inverses (constant basis).

    Evaluated in ``digits``-digit arithmetic: a double-precision explicit
    inverse loses about ``cond(K) * eps`` and is not a sharp enough reference.
    """
    with mp.workdps(digits):
        n = len(y)
        Ki = mp.matrix(K.tolist()) ** -1
        one = mp.matrix([1] * n)
        ym = mp.matrix(list(map(float, y)))
        a = (one.T * Ki * one)[0]
        beta = (one.T * Ki * ym)[0] / a
        e = ym - beta * one
        s2 = (e.T * Ki * e)[0] / n
        mu, var = [], []
        for row in r:
            ri = mp.matrix(list(map(float, row)))
            g = 1 - (ri.T * Ki * one)[0]
            mu.append(float(beta + (ri.T * Ki * e)[0]))
            var.append(float(s2 * (1 - (ri.T * Ki * ri)[0] + g ** 2 / a)))
    return np.array(mu), np.array(var)


def random_instance(rng, n, dx=2, levels=(3,), ds=2):
    X = rng.random((n, dx))
    T = np.column_stack([rng.integers(0, l, n) for l in levels]) if levels else np.zeros((n, 0), int)
    S = rng.integers(0, ds, n)
    S[:ds] = np.arange(ds)
    y = np.sin(4 * X.sum(axis=1)) + 0.3 * S + (T.sum(axis=1) if levels else 0)
    return MultiSourceDataset(X, T, S, y, (1.0,) * ds, levels)
