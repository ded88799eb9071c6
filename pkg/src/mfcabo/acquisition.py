"""Acquisition functions and the auxiliary (point, source) search.

All functions follow the maximization convention: ``y_star`` is the best
response seen so far on the internal (maximize) scale.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import optimize
from scipy.special import ndtr

from .benchmarks import sobol_unit
from .domain import MultiSourceDataset, scale_to_unit, unscale_from_unit

SIGMA_FLOOR = 1e-12
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def norm_pdf(z):
    return _INV_SQRT_2PI * np.exp(-0.5 * np.square(z))


def norm_cdf(z):
    return ndtr(z)


def _z(mu, sigma, y_star):
    return (mu - y_star) / np.maximum(sigma, SIGMA_FLOOR)


def alpha_pi(mu, sigma, y_star):
    """Probability of improvement ``Phi((mu - y*) / sigma)``; ``sigma=0`` gives ``1[mu > y*]``."""
    mu, sigma, y_star = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (mu, sigma, y_star)))
    out = norm_cdf(_z(mu, sigma, y_star))
    return np.where(sigma > 0, out, (mu > y_star).astype(float))


def alpha_ei(mu, sigma, y_star):
    """Expected improvement; ``sigma=0`` gives ``max(mu - y*, 0)``."""
    mu, sigma, y_star = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (mu, sigma, y_star)))
    imp = mu - y_star
    z = _z(mu, sigma, y_star)
    out = imp * norm_cdf(z) + sigma * norm_pdf(z)
    return np.where(sigma > 0, np.maximum(out, 0.0), np.maximum(imp, 0.0))


def alpha_lf(mu, sigma, y_star):
    """Exploration-only utility ``sigma * phi((y* - mu) / sigma)``; zero when ``sigma=0``."""
    mu, sigma, y_star = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (mu, sigma, y_star)))
    out = sigma * norm_pdf(_z(y_star, sigma, mu))
    return np.where(sigma > 0, out, 0.0)


@dataclass(frozen=True)
class PosteriorSummary:
    mu: float
    sigma: float
    y_star: float

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")

    @property
    def pi(self) -> float:
        return float(alpha_pi(self.mu, self.sigma, self.y_star))

    @property
    def ei(self) -> float:
        return float(alpha_ei(self.mu, self.sigma, self.y_star))

    @property
    def lf(self) -> float:
        return float(alpha_lf(self.mu, self.sigma, self.y_star))


@dataclass(frozen=True)
class AcquisitionDecision:
    x: np.ndarray
    t: tuple
    source: int
    raw_utility: float
    cost_normalized_utility: float
    per_source: tuple = ()


@dataclass
class AuxConfig:
    n_candidates: int = 512
    n_starts: int = 32
    n_best_seen: int = 5
    maxiter: int = 100
    max_level_combos: int = 16
    kg_fantasies: int = 8
    kg_grid: int = 256
    kg_candidates: int = 64


# ----------------------------------------------------------------------------
# helpers on a fitted model


def _utility_and_grad(kind, mu, dmu, sd, dsd, y_star):
    """Vectorized utility value and gradient w.r.t. unit-scaled x."""
    s = np.maximum(sd, SIGMA_FLOOR)
    pos = sd > 0
    if kind == "pi":
        z = (mu - y_star) / s
        val = np.where(pos, norm_cdf(z), (mu > y_star).astype(float))
        dz = (dmu * s[:, None] - (mu - y_star)[:, None] * dsd) / (s ** 2)[:, None]
        grad = norm_pdf(z)[:, None] * dz
    elif kind == "ei":
        z = (mu - y_star) / s
        val = np.where(pos, (mu - y_star) * norm_cdf(z) + sd * norm_pdf(z), np.maximum(mu - y_star, 0))
        grad = norm_cdf(z)[:, None] * dmu + norm_pdf(z)[:, None] * dsd
    elif kind == "lf":
        z0 = (y_star - mu) / s
        phi = norm_pdf(z0)
        val = np.where(pos, sd * phi, 0.0)
        grad = phi[:, None] * ((1 + z0 ** 2)[:, None] * dsd + z0[:, None] * dmu)
    else:
        raise ValueError(f"unknown utility {kind!r}")
    grad = np.where(pos[:, None], grad, 0.0)
    return val, grad


def utility(model, kind, X, t, s, y_star):
    """Utility ``kind`` ('pi', 'ei', 'lf') of source ``s`` at original-unit inputs ``X``."""
    mu, sd = model.predict(X, t, s, return_std=True)
    fn = {"pi": alpha_pi, "ei": alpha_ei, "lf": alpha_lf}[kind]
    return fn(mu, sd, y_star)


def incumbents(dataset: MultiSourceDataset, hf_index: int) -> np.ndarray:
    """Best response per source; an empty source borrows the HF incumbent."""
    hf_rows = dataset.source_rows(hf_index)
    hf_best = float(np.max(dataset.y[hf_rows])) if hf_rows.size else float(np.max(dataset.y))
    out = np.full(dataset.num_sources, hf_best)
    for j in range(dataset.num_sources):
        rows = dataset.source_rows(j)
        if rows.size:
            out[j] = float(np.max(dataset.y[rows]))
    return out


def alpha_mfca(model, x, t, j, costs, y_stars, hf_index) -> float:
    """Cost-normalized multi-fidelity utility of querying source ``j`` at ``(x, t)``."""
    kind = "pi" if j == hf_index else "lf"
    return float(utility(model, kind, np.atleast_2d(x), t, j, y_stars[j])[0]) / costs[j]


def alpha_kg(model, x, t=None, s=0, grid=None, n_fantasies=8, rng=None, grid_t=None) -> float:
    """Monte-Carlo knowledge gradient of observing source ``s`` at ``x``.

    Each fantasy draws ``y ~ N(mu(x), sigma^2(x))``, conditions the model on it
    with unchanged kernel hyperparameters and records the maximum posterior
    mean over ``grid``.  Draws whose update fails to factorize are skipped.
    """
    if n_fantasies < 1:
        raise ValueError("n_fantasies must be >= 1")
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    if grid.shape[0] == 0:
        raise ValueError("empty candidate grid")
    rng = np.random.default_rng(rng)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    t = () if t is None else tuple(t)
    mu_now, _ = model.predict(grid, grid_t if grid_t is not None else t, s)
    best_now = float(np.max(mu_now))
    mu_x, sd_x = model.predict(x[None, :], t, s, return_std=True)
    draws = mu_x[0] + sd_x[0] * rng.standard_normal(n_fantasies)
    maxima = []
    ds = model.dataset
    for y_m in draws:
        try:
            fantasy = model.condition_on(ds.append(x, t, s, y_m))
        except np.linalg.LinAlgError:
            continue
        mu_new, _ = fantasy.predict(grid, grid_t if grid_t is not None else t, s)
        maxima.append(float(np.max(mu_new)))
    if not maxima:
        raise RuntimeError("every fantasy update failed")
    return float(np.mean(maxima) - best_now)


# ----------------------------------------------------------------------------
# auxiliary optimization


def _level_sets(levels, max_combos, n, rng):
    """Categorical combinations to search: all if few, else one random combo per candidate."""
    if not levels:
        return [()], None
    combos = list(itertools.product(*(range(l) for l in levels)))
    if len(combos) <= max_combos:
        return combos, None
    T = np.column_stack([rng.integers(0, l, n) for l in levels])
    return None, T


def _maximize_utility(model, kind, s, y_star, lower, upper, levels, cfg: AuxConfig, rng, seeds):
    """Maximize one source's raw utility; returns ``(value, x_original, t)``."""
    dx = len(lower)
    U = sobol_unit(dx, cfg.n_candidates, seed=rng) if dx else np.zeros((cfg.n_candidates, 0))
    if seeds is not None and len(seeds) and dx:
        jitter = rng.normal(scale=1e-3, size=seeds.shape)
        U = np.vstack([U, np.clip(seeds + jitter, 0, 1), seeds])
    combos, Trand = _level_sets(levels, cfg.max_level_combos, U.shape[0], rng)
    score = {"pi": alpha_pi, "ei": alpha_ei, "lf": alpha_lf}[kind]
    cand = []  # (value, u, t)
    if combos is not None:
        for t in combos:
            Tmat = np.array([t] * U.shape[0], dtype=int).reshape(U.shape[0], -1)
            mu, sd = model._predict_unit(U, Tmat, s, True)
            cand.extend((float(v), u, tuple(t)) for v, u in zip(score(mu, sd, y_star), U))
    else:
        mu, sd = model._predict_unit(U, Trand, s, True)
        cand.extend((float(v), u, tuple(int(a) for a in tr))
                    for v, u, tr in zip(score(mu, sd, y_star), U, Trand))
    order = sorted(range(len(cand)), key=lambda i: -cand[i][0])[:cfg.n_starts]
    best = cand[order[0]]
    if dx and cfg.maxiter > 0:
        by_t: dict = {}
        for i in order:
            by_t.setdefault(cand[i][2], []).append(cand[i][1])
        for t, starts in by_t.items():
            starts = np.array(starts)
            k = starts.shape[0]
            Tk = np.array([t] * k, dtype=int).reshape(k, -1)

            def neg(flat):
                Xu = flat.reshape(k, dx)
                mu, dmu, sd, dsd = model.predict_unit_with_grad(Xu, Tk, s)
                val, grad = _utility_and_grad(kind, mu, dmu, sd, dsd, y_star)
                return -float(np.sum(val)), -grad.ravel()

            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", RuntimeWarning)
                    res = optimize.minimize(neg, starts.ravel(), jac=True, method="L-BFGS-B",
                                            bounds=[(0.0, 1.0)] * (k * dx),
                                            options={"maxiter": cfg.maxiter})
            except (ValueError, np.linalg.LinAlgError, FloatingPointError):
                continue  # keep the best scored candidate
            Xu = np.clip(res.x.reshape(k, dx), 0.0, 1.0)
            mu, sd = model._predict_unit(Xu, Tk, s, True)
            val = score(mu, sd, y_star)
            i = int(np.argmax(val))
            if val[i] > best[0]:
                best = (float(val[i]), Xu[i], t)
    x = np.clip(unscale_from_unit(best[1], lower, upper), lower, upper) if dx else np.zeros(0)
    return best[0], x, best[2]


def _best_seen(dataset, s, k, lower, upper):
    rows = dataset.source_rows(s)
    if rows.size == 0 or dataset.dx == 0:
        return None
    top = rows[np.argsort(-dataset.y[rows])[:k]]
    return scale_to_unit(dataset.X[top], lower, upper)


def propose(model, costs, y_stars, lower, upper, levels=(), hf_index=0, af="mfca",
            config: AuxConfig | None = None, rng=None, sources=None) -> AcquisitionDecision:
    """Choose the next ``(x, t, source)`` by maximizing the acquisition function.

    With ``af='mfca'`` every allowed source is searched separately (PI for the
    HF source, the exploration utility for the others) and the maxima are
    compared after dividing by the per-sample costs.  Ties go to the higher
    raw utility, then the lower source index.  ``af`` in {'pi', 'ei', 'kg'}
    searches the HF source only.
    """
    cfg = config or AuxConfig()
    rng = np.random.default_rng(rng)
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    ds = model.dataset
    if af == "kg":
        return _propose_kg(model, costs, lower, upper, levels, hf_index, cfg, rng)
    if af == "mfca":
        allowed = range(len(costs)) if sources is None else sources
        plan = [(j, "pi" if j == hf_index else "lf") for j in allowed]
    elif af in ("pi", "ei"):
        plan = [(hf_index, af)]
    else:
        raise ValueError(f"unknown acquisition {af!r}")
    results = []
    for j, kind in plan:
        seeds = _best_seen(ds, hf_index, cfg.n_best_seen, lower, upper)
        own = _best_seen(ds, j, cfg.n_best_seen, lower, upper) if j != hf_index else None
        if own is not None:
            seeds = own if seeds is None else np.vstack([seeds, own])
        raw, x, t = _maximize_utility(model, kind, j, y_stars[j], lower, upper, levels, cfg, rng, seeds)
        results.append((raw / costs[j], raw, -j, x, t))
    score, raw, negj, x, t = max(results, key=lambda r: (r[0], r[1], r[2]))
    per_source = tuple((-r[2], r[1], r[0]) for r in sorted(results, key=lambda r: -r[2]))
    return AcquisitionDecision(np.asarray(x), tuple(t), -negj, float(raw), float(score), per_source)


def _propose_kg(model, costs, lower, upper, levels, hf_index, cfg, rng):
    dx = len(lower)
    grid_u = sobol_unit(dx + len(levels), cfg.kg_grid, seed=rng)
    cand_u = sobol_unit(dx + len(levels), cfg.kg_candidates, seed=rng)

    def split(Uall):
        X = unscale_from_unit(Uall[:, :dx], lower, upper)
        T = np.zeros((Uall.shape[0], len(levels)), dtype=int)
        for i, l in enumerate(levels):
            T[:, i] = np.minimum((Uall[:, dx + i] * l).astype(int), l - 1)
        return X, T

    grid_X, grid_T = split(grid_u)
    cand_X, cand_T = split(cand_u)
    seen = _best_seen(model.dataset, hf_index, cfg.n_best_seen, lower, upper)
    if seen is not None:
        rows = model.dataset.source_rows(hf_index)
        top = rows[np.argsort(-model.dataset.y[rows])[:cfg.n_best_seen]]
        grid_X = np.vstack([grid_X, model.dataset.X[top]])
        grid_T = np.vstack([grid_T, model.dataset.T[top]])
    best = None
    for x, t in zip(cand_X, cand_T):
        v = alpha_kg(model, x, tuple(t), hf_index, grid_X, cfg.kg_fantasies, rng, grid_t=grid_T)
        if best is None or v > best[0]:
            best = (v, x, tuple(int(a) for a in t))
    v, x, t = best
    return AcquisitionDecision(np.clip(x, lower, upper), t, hf_index, float(v),
                               float(v) / costs[hf_index])
