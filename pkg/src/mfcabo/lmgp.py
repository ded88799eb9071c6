"""Latent-map Gaussian process regression over mixed inputs.

The correlation between two mixed inputs is::

    r(u, u') = exp(-sum_k 10**omega_k (x_k - x'_k)**2
                   - ||z(t) - z(t')||**2 - ||h(s) - h(s')||**2)

where ``z(t) = zeta(t) @ A`` embeds the categorical combination and
``h(s) = zeta(s) @ A_h`` embeds the data source.  ``beta`` and ``sigma2`` are
profiled out of the likelihood, leaving ``(omega, A, A_h)`` to be estimated
by multi-start bounded quasi-Newton minimization of
``L = n log(sigma2_hat) + log|R|``.
"""

from __future__ import annotations

import hashlib
import json
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize
from scipy.linalg import lapack

from .domain import MultiSourceDataset, encode_categorical_rows, scale_to_unit

log = logging.getLogger(__name__)

LN10 = np.log(10.0)
JITTER_LADDER = (1e-10, 1e-8, 1e-6, 1e-4)


class FitError(RuntimeError):
    """Raised when no start of the likelihood optimization produced a usable model."""


class NotPositiveDefinite(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class Hyperparameters:
    omega: np.ndarray
    A: np.ndarray | None = None
    A_h: np.ndarray | None = None
    beta_hat: np.ndarray = field(default_factory=lambda: np.zeros(1))
    sigma2_hat: float = 1.0
    log10_nugget: float | None = None


@dataclass
class FitConfig:
    """Settings for :func:`fit`.

    ``omega_init`` is the box random starts are drawn from; it sits inside
    ``omega_bounds`` because starts with ``omega`` near the lower bound have a
    vanishing gradient and never move.
    """

    dz: int = 2
    dh: int = 2
    n_starts: int = 8
    omega_bounds: tuple = (-10.0, 4.0)
    omega_init: tuple = (-3.0, 2.0)
    latent_init: float = 3.0
    latent_init_small: float = 0.1
    jitters: tuple = JITTER_LADDER
    estimate_nugget: bool = False
    nugget_bounds: tuple = (-10.0, 0.0)
    maxiter: int = 200
    seed: int = 0


# ----------------------------------------------------------------------------
# kernel pieces


def latent_positions(T, S, levels, num_sources, A=None, A_h=None):
    """Latent points ``z(t)`` and ``h(s)`` for every row, as ``(n, dz)`` / ``(n, dh)``."""
    n = len(S)
    Z = np.zeros((n, 0)) if A is None else encode_categorical_rows(T, levels) @ A
    if A_h is None:
        H = np.zeros((n, 0))
    else:
        S = np.asarray(S, dtype=int)
        H = np.asarray(A_h)[S]  # one-hot prior times A_h selects a row
    return Z, H


def _sqdist(a, b):
    return np.sum((a[:, None, :] - b[None, :, :]) ** 2, axis=-1)


def correlation_matrix(Xa, Za, Ha, omega, Xb=None, Zb=None, Hb=None):
    """Correlation between two sets of rows (unit-scaled ``X``, latent ``Z``, ``H``)."""
    if Xb is None:
        Xb, Zb, Hb = Xa, Za, Ha
    w = 10.0 ** np.asarray(omega)
    d = _sqdist(Xa * np.sqrt(w), Xb * np.sqrt(w))
    if Za.shape[1]:
        d += _sqdist(Za, Zb)
    if Ha.shape[1]:
        d += _sqdist(Ha, Hb)
    return np.exp(-d)


def correlation(u, v, hyper: Hyperparameters, levels=(), num_sources=1) -> float:
    """Correlation of two :class:`~mfcabo.domain.MixedPoint` with unit-scaled ``x``."""
    T = np.array([u.t, v.t], dtype=int).reshape(2, -1)
    S = np.array([u.s, v.s])
    Z, H = latent_positions(T, S, levels, num_sources, hyper.A, hyper.A_h)
    X = np.array([u.x, v.x], dtype=float)
    return float(correlation_matrix(X[:1], Z[:1], H[:1], hyper.omega, X[1:], Z[1:], H[1:])[0, 0])


def cholesky(K):
    """Lower Cholesky factor of ``K``; raises :class:`NotPositiveDefinite`."""
    c, info = lapack.dpotrf(K, lower=1, clean=1, overwrite_a=0)
    if info != 0:
        raise NotPositiveDefinite(f"matrix is not positive definite (info={info})")
    return c


def build_correlation_matrix(R, delta=0.0, ladder=None):
    """Add jitter to ``R`` and factorize it.

    With ``ladder`` given, the jitters in it (all >= ``delta``) are tried in
    order until the factorization succeeds.  Returns ``(K, chol, delta)``.
    """
    n = R.shape[0]
    candidates = [delta] if ladder is None else [d for d in ladder if d >= delta] or [delta]
    for d in candidates:
        K = R + d * np.eye(n)
        try:
            return K, cholesky(K), d
        except NotPositiveDefinite:
            continue
    raise NotPositiveDefinite(f"not positive definite even with jitter {candidates[-1]:g}")


def cho_solve(chol, b):
    return linalg.cho_solve((chol, True), b, check_finite=False)


def profiled_beta_sigma(y, chol, M):
    """Closed-form ``beta_hat`` and ``sigma2_hat`` given a factor of the correlation matrix."""
    y = np.asarray(y, dtype=float)
    M = np.asarray(M, dtype=float).reshape(len(y), -1)
    KiM = cho_solve(chol, M)
    MtKiM = M.T @ KiM
    if np.linalg.matrix_rank(MtKiM) < M.shape[1]:
        raise np.linalg.LinAlgError("basis matrix is rank deficient")
    beta = np.linalg.solve(MtKiM, KiM.T @ y)
    e = y - M @ beta
    sigma2 = float(e @ cho_solve(chol, e)) / len(y)
    return beta, max(sigma2, 0.0)


def negative_log_likelihood(y, chol, M):
    """``n log(sigma2_hat) + log|K|`` with the log-determinant read off the factor."""
    _, sigma2 = profiled_beta_sigma(y, chol, M)
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    with np.errstate(divide="ignore"):
        return len(y) * np.log(sigma2) + logdet


# ----------------------------------------------------------------------------
# likelihood objective


class LikelihoodObjective:
    """Profiled negative log-likelihood over the packed free parameters.

    The parameter vector is ``[omega, vec(A), vec(A_h), log10_nugget]`` with
    the latter three present only when there are categorical inputs, several
    sources, or an estimated nugget.
    """

    def __init__(self, Xu, T, S, y, levels=(), num_sources=1, dz=2, dh=2,
                 delta=1e-10, jitters=JITTER_LADDER, estimate_nugget=False):
        self.Xu = np.asarray(Xu, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.n, self.dx = self.Xu.shape
        self.levels = tuple(levels)
        self.num_sources = num_sources
        self.dz = dz if self.levels else 0
        self.dh = dh if num_sources > 1 else 0
        self.P_t = encode_categorical_rows(T, self.levels) if self.levels else np.zeros((self.n, 0))
        self.P_s = np.eye(num_sources)[np.asarray(S, dtype=int)] if self.dh else np.zeros((self.n, 0))
        self.delta = delta
        self.jitters = jitters
        self.estimate_nugget = estimate_nugget
        self.M = np.ones((self.n, 1))
        self.D = ((self.Xu[:, None, :] - self.Xu[None, :, :]) ** 2).reshape(-1, self.dx)
        # latent distances live on the few distinct combos/sources; Q maps rows to them
        if self.dz:
            self.T_unique, inverse = np.unique(self.P_t, axis=0, return_inverse=True)
            self.Q_t = np.eye(self.T_unique.shape[0])[inverse.ravel()]
        self.sizes = (self.dx, self.P_t.shape[1] * self.dz, num_sources * self.dh,
                      1 if estimate_nugget else 0)
        self.last_delta = delta

    @property
    def n_params(self) -> int:
        return sum(self.sizes)

    def unpack(self, theta):
        theta = np.asarray(theta, dtype=float)
        i0, i1, i2 = np.cumsum(self.sizes[:3])
        omega = theta[:i0]
        A = theta[i0:i1].reshape(-1, self.dz) if self.dz else None
        A_h = theta[i1:i2].reshape(-1, self.dh) if self.dh else None
        g = float(theta[i2]) if self.estimate_nugget else None
        return omega, A, A_h, g

    def pack(self, omega, A=None, A_h=None, g=None):
        parts = [np.asarray(omega, dtype=float).ravel()]
        if self.dz:
            parts.append(np.asarray(A, dtype=float).ravel())
        if self.dh:
            parts.append(np.asarray(A_h, dtype=float).ravel())
        if self.estimate_nugget:
            parts.append(np.atleast_1d(float(g)))
        return np.concatenate(parts)

    def correlation(self, theta):
        omega, A, A_h, _ = self.unpack(theta)
        d = (self.D @ (10.0 ** omega)).reshape(self.n, self.n)
        if self.dz:
            Zu = self.T_unique @ A
            d += self.Q_t @ _sqdist(Zu, Zu) @ self.Q_t.T
        if self.dh:
            d += self.P_s @ _sqdist(A_h, A_h) @ self.P_s.T
        return np.exp(-d)

    def factorize(self, theta):
        """Return ``(R, K, chol, delta)`` for ``theta`` using the jitter ladder."""
        R = self.correlation(theta)
        _, _, _, g = self.unpack(theta)
        base = self.delta + (10.0 ** g if g is not None else 0.0)
        ladder = [base] + [j for j in self.jitters if j > base]
        K, chol, d = build_correlation_matrix(R, ladder[0], ladder)
        self.last_delta = d
        return R, K, chol, d

    def value(self, theta) -> float:
        try:
            _, _, chol, _ = self.factorize(theta)
        except NotPositiveDefinite:
            return np.inf
        return float(negative_log_likelihood(self.y, chol, self.M))

    def value_and_grad(self, theta):
        try:
            R, K, chol, _ = self.factorize(theta)
        except NotPositiveDefinite:
            return 1e10, np.zeros(self.n_params)
        beta, sigma2 = profiled_beta_sigma(self.y, chol, self.M)
        if sigma2 <= 0:
            return 1e10, np.zeros(self.n_params)
        logdet = 2.0 * np.sum(np.log(np.diag(chol)))
        L = self.n * np.log(sigma2) + logdet
        inv, info = lapack.dpotri(chol, lower=1)
        if info != 0:
            return 1e10, np.zeros(self.n_params)
        Kinv = np.tril(inv) + np.tril(inv, -1).T
        alpha = cho_solve(chol, self.y - self.M @ beta)
        W = Kinv - np.outer(alpha, alpha) / sigma2
        G = W * R
        omega, A, A_h, g = self.unpack(theta)
        grads = [-LN10 * (10.0 ** omega) * (G.ravel() @ self.D)]
        rowsum = G.sum(axis=1)
        if self.dz:
            P = self.P_t
            C = P.T @ (rowsum[:, None] * P) - P.T @ G @ P
            grads.append((-4.0 * C @ A).ravel())
        if self.dh:
            P = self.P_s
            C = P.T @ (rowsum[:, None] * P) - P.T @ G @ P
            grads.append((-4.0 * C @ A_h).ravel())
        if g is not None:
            grads.append(np.atleast_1d(LN10 * 10.0 ** g * np.trace(W)))
        return float(L), np.concatenate(grads)


# ----------------------------------------------------------------------------
# fitted model


class LMGP:
    """A fitted latent-map GP; prediction is read-only.

    Responses are standardized internally; :meth:`predict` returns values in
    the units of ``dataset.y``.
    """

    def __init__(self, dataset: MultiSourceDataset, hyper: Hyperparameters, lower, upper,
                 delta: float, nll: float = np.nan, y_mean: float | None = None,
                 y_std: float | None = None, dz: int = 2, dh: int = 2, diagnostics=None,
                 ladder=None):
        self.dataset = dataset
        self.lower = np.asarray(lower, dtype=float)
        self.upper = np.asarray(upper, dtype=float)
        self.levels = dataset.levels
        self.num_sources = dataset.num_sources
        self.dz, self.dh = dz, dh
        self.diagnostics = dict(diagnostics or {})
        y = dataset.y
        if y_mean is None:
            y_mean = float(np.mean(y))
        if y_std is None:
            sd = float(np.std(y))
            y_std = sd if sd > 0 else 1.0
        self.y_mean, self.y_std = y_mean, y_std
        self.ys = (y - y_mean) / y_std
        self.Xu = scale_to_unit(dataset.X, self.lower, self.upper)
        self._xw = None
        self._xw_sq = None
        self.Z, self.H = latent_positions(dataset.T, dataset.S, self.levels, self.num_sources,
                                          hyper.A, hyper.A_h)
        R = correlation_matrix(self.Xu, self.Z, self.H, hyper.omega)
        nugget = 10.0 ** hyper.log10_nugget if hyper.log10_nugget is not None else 0.0
        self.K, self.chol, self.delta = build_correlation_matrix(
            R, delta + nugget, ladder)
        self.delta -= nugget
        self.M = np.ones((dataset.n, 1))
        beta, sigma2 = profiled_beta_sigma(self.ys, self.chol, self.M)
        self.hyper = Hyperparameters(np.asarray(hyper.omega, dtype=float), hyper.A, hyper.A_h,
                                     beta, sigma2, hyper.log10_nugget)
        self.alpha = cho_solve(self.chol, self.ys - self.M @ beta)
        self.Kinv_M = cho_solve(self.chol, self.M)
        self.MtKinvM = float(self.M[:, 0] @ self.Kinv_M[:, 0])
        self.nll = float(nll) if np.isfinite(nll) else float(
            negative_log_likelihood(self.ys, self.chol, self.M))
        self.degenerate = bool(np.std(y) == 0 or sigma2 <= 0)

    # latent embeddings for arbitrary queries
    def _latent(self, T, s):
        m = T.shape[0]
        S = np.full(m, int(s))
        return latent_positions(T, S, self.levels, self.num_sources, self.hyper.A, self.hyper.A_h)

    def _prepare(self, X, T=None, s=0):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.Xu.shape[1] and X.shape[0] == self.Xu.shape[1]:
            X = X.T
        T = np.zeros((X.shape[0], 0), dtype=int) if T is None or len(self.levels) == 0 else \
            np.broadcast_to(np.asarray(T, dtype=int).reshape(-1, len(self.levels)),
                            (X.shape[0], len(self.levels)))
        return scale_to_unit(X, self.lower, self.upper), T

    def cross_correlation(self, Xu, T, s):
        """Correlation of queries with the training rows.

        The jitter is treated as part of the kernel at coincident inputs, so a
        query equal to a training row gets ``1 + delta`` and the mean
        interpolates that row exactly.
        """
        return self._cross(Xu, T, s)[0]

    def _cross(self, Xu, T, s):
        Z, H = self._latent(T, s)
        if Xu.shape[1] > 2:
            # prediction only: the expanded distance goes through BLAS, which
            # matters inside the acquisition search; clip rounding below zero
            if self._xw is None:
                self._xw = self.Xu * np.sqrt(10.0 ** self.hyper.omega)
                self._xw_sq = np.sum(self._xw ** 2, axis=1)
            a = Xu * np.sqrt(10.0 ** self.hyper.omega)
            d = np.maximum(np.sum(a * a, axis=1)[:, None] + self._xw_sq[None, :] - 2.0 * (a @ self._xw.T), 0.0)
            if Z.shape[1]:
                d += _sqdist(Z, self.Z)
            if H.shape[1]:
                d += _sqdist(H, self.H)
            r = np.exp(-d)
        else:
            r = correlation_matrix(Xu, Z, H, self.hyper.omega, self.Xu, self.Z, self.H)
        same = self._coincident(Xu, T, s)
        if same is not None:
            r = r + self.delta * same
        return r, same

    def _coincident(self, Xu, T, s):
        """Boolean ``(m, n)`` mask of exact training-row matches, or ``None`` if there are none."""
        m, n = Xu.shape[0], self.Xu.shape[0]
        if Xu.shape[1]:
            # screen on the first coordinate, then compare the surviving rows in full
            first = Xu[:, :1] == self.Xu[:, 0][None, :]
            rows = np.flatnonzero(first.any(axis=1))
            if rows.size == 0:
                return None
            same = np.zeros((m, n), dtype=bool)
            same[rows] = np.all(Xu[rows, None, :] == self.Xu[None], axis=-1)
        else:
            same = np.ones((m, n), dtype=bool)
        same &= (self.dataset.S == int(s))[None, :]
        if T.shape[1]:
            same &= np.all(np.asarray(T)[:, None, :] == self.dataset.T[None], axis=-1)
        return same if same.any() else None

    def _snap_observed(self, same, mu, var):
        """Return the observed value with zero variance at exact training inputs.

        Analytically the posterior already does this; in floating point the
        mean is off by rounding noise, which is enough to make a known point
        look like a sure improvement when the variance is exactly zero.
        """
        if same is None:
            return mu, var
        hit = same.any(axis=1)
        mu = mu.copy()
        var = var.copy()
        mu[hit] = (same[hit] @ self.dataset.y) / same[hit].sum(axis=1)
        var[hit] = 0.0
        return mu, var

    def predict(self, X, T=None, s=0, return_std=False):
        """Posterior mean and variance at inputs ``X`` for categorical combo ``T`` and source ``s``."""
        Xu, T = self._prepare(X, T, s)
        return self._predict_unit(Xu, T, s, return_std)

    def _predict_unit(self, Xu, T, s, return_std=False):
        r, same = self._cross(Xu, T, s)  # (m, n)
        beta = self.hyper.beta_hat[0]
        mu = beta + r @ self.alpha
        Q = cho_solve(self.chol, r.T)  # (n, m)
        g = 1.0 - r @ self.Kinv_M[:, 0]
        var = self.hyper.sigma2_hat * (1.0 - np.einsum("ij,ji->i", r, Q) + g ** 2 / self.MtKinvM)
        var = np.maximum(var, 0.0)
        mu = self.y_mean + self.y_std * mu
        var = self.y_std ** 2 * var
        mu, var = self._snap_observed(same, mu, var)
        if return_std:
            return mu, np.sqrt(var)
        return mu, var

    def predict_unit_with_grad(self, Xu, T, s):
        """Mean, std and their gradients w.r.t. unit-scaled ``x`` (original response units)."""
        Xu = np.atleast_2d(Xu)
        r, same = self._cross(Xu, T, s)  # (m, n)
        w2 = 2.0 * 10.0 ** self.hyper.omega

        def along(c):
            # sum_n r_mn c_mn (x_m - X_n), times -2 w: the x-gradient of r @ c
            rc = r * c
            return -w2 * (Xu * rc.sum(axis=1)[:, None] - rc @ self.Xu)

        beta = self.hyper.beta_hat[0]
        mu = beta + r @ self.alpha
        dmu = along(self.alpha[None, :])
        Q = cho_solve(self.chol, r.T).T  # (m, n)
        kim = self.Kinv_M[:, 0]
        g = 1.0 - r @ kim
        s2 = self.hyper.sigma2_hat
        var = s2 * (1.0 - np.sum(r * Q, axis=1) + g ** 2 / self.MtKinvM)
        dq = 2.0 * along(Q)
        dg = -along(kim[None, :])
        dvar = s2 * (-dq + 2.0 * g[:, None] * dg / self.MtKinvM)
        var = np.maximum(var, 0.0)
        sd = np.sqrt(var)
        with np.errstate(divide="ignore", invalid="ignore"):
            dsd = np.where(sd[:, None] > 0, dvar / (2.0 * sd[:, None]), 0.0)
        mu, sd = self._snap_observed(same, self.y_mean + self.y_std * mu, self.y_std * sd)
        return mu, self.y_std * dmu, sd, self.y_std * dsd

    def condition_on(self, dataset: MultiSourceDataset) -> "LMGP":
        """Same hyperparameters and jitter, new data (used for fantasy updates)."""
        h = self.hyper
        return LMGP(dataset, Hyperparameters(h.omega, h.A, h.A_h, log10_nugget=h.log10_nugget),
                    self.lower, self.upper, self.delta, y_mean=self.y_mean, y_std=self.y_std,
                    dz=self.dz, dh=self.dh, ladder=JITTER_LADDER)

    def source_latent(self) -> np.ndarray | None:
        return None if self.hyper.A_h is None else np.asarray(self.hyper.A_h)

    # ------------------------------------------------------------------ export
    def to_dict(self) -> dict:
        h = self.hyper
        return {
            "format": "mfcabo-lmgp/1",
            "lower": self.lower.tolist(),
            "upper": self.upper.tolist(),
            "levels": list(self.levels),
            "num_sources": self.num_sources,
            "dz": self.dz,
            "dh": self.dh,
            "omega": np.asarray(h.omega).tolist(),
            "A": None if h.A is None else np.asarray(h.A).tolist(),
            "A_h": None if h.A_h is None else np.asarray(h.A_h).tolist(),
            "log10_nugget": h.log10_nugget,
            "beta_hat": np.asarray(h.beta_hat).tolist(),
            "sigma2_hat": h.sigma2_hat,
            "delta": self.delta,
            "nll": self.nll,
            "y_mean": self.y_mean,
            "y_std": self.y_std,
            "data": {
                "X": self.dataset.X.tolist(),
                "T": self.dataset.T.tolist(),
                "S": self.dataset.S.tolist(),
                "y": self.dataset.y.tolist(),
                "costs": list(self.dataset.costs),
            },
            "data_sha256": dataset_checksum(self.dataset),
        }

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @classmethod
    def from_dict(cls, doc: dict) -> "LMGP":
        d = doc["data"]
        ds = MultiSourceDataset(np.array(d["X"], dtype=float).reshape(len(d["y"]), -1),
                                np.array(d["T"], dtype=int).reshape(len(d["y"]), -1),
                                np.array(d["S"], dtype=int), np.array(d["y"], dtype=float),
                                tuple(d["costs"]), tuple(doc["levels"]))
        if dataset_checksum(ds) != doc["data_sha256"]:
            raise ValueError("data checksum mismatch")
        hyper = Hyperparameters(np.array(doc["omega"]),
                                None if doc["A"] is None else np.array(doc["A"]),
                                None if doc["A_h"] is None else np.array(doc["A_h"]),
                                log10_nugget=doc["log10_nugget"])
        return cls(ds, hyper, doc["lower"], doc["upper"], doc["delta"], nll=doc["nll"],
                   y_mean=doc["y_mean"], y_std=doc["y_std"], dz=doc["dz"], dh=doc["dh"])

    @classmethod
    def load(cls, path) -> "LMGP":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def dataset_checksum(ds: MultiSourceDataset) -> str:
    h = hashlib.sha256()
    for arr in (ds.X, ds.T.astype(np.int64), ds.S.astype(np.int64), ds.y):
        h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()


# ----------------------------------------------------------------------------
# fitting


def _initial_points(obj: LikelihoodObjective, cfg: FitConfig, rng, warm_start):
    starts = []
    if warm_start is not None:
        try:
            theta = obj.pack(warm_start.omega, warm_start.A, warm_start.A_h,
                             warm_start.log10_nugget if cfg.estimate_nugget else None)
            if theta.size == obj.n_params:
                starts.append(theta)
        except (ValueError, TypeError):
            pass
    na = obj.sizes[1] + obj.sizes[2]
    n_random = cfg.n_starts
    if not starts:
        # cold fit: one canonical start at omega=0 with near-zero latents
        first = [np.zeros(obj.dx), rng.uniform(-cfg.latent_init_small, cfg.latent_init_small, na)]
        if cfg.estimate_nugget:
            first.append([-6.0])
        starts.append(np.concatenate(first))
        n_random -= 1
    for _ in range(max(n_random, 0)):
        parts = [rng.uniform(*cfg.omega_init, obj.dx), rng.uniform(-cfg.latent_init, cfg.latent_init, na)]
        if cfg.estimate_nugget:
            parts.append(rng.uniform(*cfg.nugget_bounds, 1))
        starts.append(np.concatenate(parts))
    return starts


def fit(dataset: MultiSourceDataset, config: FitConfig | None = None, lower=None, upper=None,
        warm_start: Hyperparameters | None = None) -> LMGP:
    """Estimate the LMGP hyperparameters by profiled maximum likelihood.

    Parameters
    ----------
    dataset : MultiSourceDataset
        Training data; ``X`` in original units.
    config : FitConfig, optional
    lower, upper : array_like, optional
        Box used to scale numeric inputs to the unit cube; defaults to the
        data range.
    warm_start : Hyperparameters, optional
        Previous solution (e.g. inside a BO loop).  It replaces the canonical
        ``omega=0`` start, and ``n_starts`` fresh random starts are added to it.

    Returns
    -------
    LMGP
        The model with the lowest negative log-likelihood among all starts.
        Constant responses yield a model flagged ``degenerate`` without any
        optimization.
    """
    cfg = config or FitConfig()
    if dataset.n < 2:
        raise FitError("at least two samples are needed to fit")
    if lower is None:
        lower, upper = dataset.X.min(axis=0), dataset.X.max(axis=0)
        upper = np.where(upper > lower, upper, lower + 1.0)
    rng = np.random.default_rng(cfg.seed)
    y = dataset.y
    ystd = float(np.std(y))
    ds, levels = dataset.num_sources, dataset.levels
    dz = cfg.dz if levels else 0
    dh = cfg.dh if ds > 1 else 0
    if ystd == 0.0:
        obj = LikelihoodObjective(scale_to_unit(dataset.X, lower, upper), dataset.T, dataset.S,
                                  np.zeros(dataset.n), levels, ds, dz, dh, jitters=cfg.jitters)
        theta = _initial_points(obj, cfg, rng, warm_start)[0]
        omega, A, A_h, g = obj.unpack(theta)
        model = LMGP(dataset, Hyperparameters(omega, A, A_h, log10_nugget=g), lower, upper,
                     cfg.jitters[0], dz=dz, dh=dh, ladder=cfg.jitters,
                     diagnostics={"degenerate": "constant responses"})
        log.warning("constant responses: returning a degenerate model without optimization")
        return model

    ys = (y - y.mean()) / ystd
    obj = LikelihoodObjective(scale_to_unit(dataset.X, lower, upper), dataset.T, dataset.S, ys,
                              levels, ds, dz, dh, delta=cfg.jitters[0], jitters=cfg.jitters,
                              estimate_nugget=cfg.estimate_nugget)
    bounds = ([tuple(cfg.omega_bounds)] * obj.dx + [(None, None)] * (obj.sizes[1] + obj.sizes[2])
              + ([tuple(cfg.nugget_bounds)] if cfg.estimate_nugget else []))
    best, attempts = None, []
    for x0 in _initial_points(obj, cfg, rng, warm_start):
        x0 = np.clip(x0, [b[0] if b[0] is not None else -np.inf for b in bounds],
                     [b[1] if b[1] is not None else np.inf for b in bounds])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            res = optimize.minimize(obj.value_and_grad, x0, jac=True, method="L-BFGS-B",
                                    bounds=bounds, options={"maxiter": cfg.maxiter})
        attempts.append({"nll": float(res.fun), "success": bool(res.success), "nit": int(res.nit)})
        if np.isfinite(res.fun) and res.fun < 1e9 and (best is None or res.fun < best.fun):
            best = res
    if best is None:
        raise FitError(f"all {len(attempts)} likelihood starts failed: {attempts}")
    omega, A, A_h, g = obj.unpack(best.x)
    obj.factorize(best.x)
    delta = obj.last_delta - (10.0 ** g if g is not None else 0.0)
    model = LMGP(dataset, Hyperparameters(omega, A, A_h, log10_nugget=g), lower, upper,
                 max(delta, cfg.jitters[0]), nll=best.fun, dz=dz, dh=dh, ladder=cfg.jitters,
                 diagnostics={"starts": attempts, "delta": obj.last_delta})
    return model


# ----------------------------------------------------------------------------
# fidelity manifold


@dataclass(frozen=True)
class FidelityManifold:
    positions: np.ndarray  # (ds, dh)
    distances: np.ndarray  # (ds, ds)

    @property
    def correlations(self) -> np.ndarray:
        return np.exp(-self.distances ** 2)

    def to_rows(self):
        return [[j, *map(float, p)] for j, p in enumerate(self.positions)]


def extract_manifold(model: LMGP) -> FidelityManifold:
    if model.num_sources < 2 or model.hyper.A_h is None:
        raise ValueError("a fidelity manifold needs at least two sources")
    H = np.eye(model.num_sources) @ np.asarray(model.hyper.A_h)
    D = np.sqrt(np.maximum(_sqdist(H, H), 0.0))
    np.fill_diagonal(D, 0.0)
    return FidelityManifold(H, D)
