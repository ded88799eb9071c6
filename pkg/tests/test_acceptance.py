"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``criterion N: PASS|FAIL ...`` line (also repeated
in the terminal summary).  The optimization criteria run 20 seeded
repetitions each and take tens of minutes on one core.
"""

import dataclasses
import functools
import os
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np
import pytest
from scipy import stats

from conftest import ACCEPTANCE_LINES
from mfcabo import acquisition as acq
from mfcabo import benchmarks as bm
from mfcabo import engine
from mfcabo.cli import emulation_mse
from mfcabo.domain import encode_categorical, scale_to_unit
from mfcabo.lmgp import FitConfig, fit
from oracles import dense_correlation, dense_predict, random_instance

REPS = 20
JOBS = os.cpu_count() or 1

pytestmark = pytest.mark.slow


def report(n, ok, detail, seconds, limit=None):
    over = limit is not None and seconds >= limit
    status = "PASS" if ok and not over else "FAIL"
    budget = f" (limit {limit:g}s)" if limit is not None else ""
    line = f"criterion {n:>2}: {status}  {detail}  [{seconds:.1f}s{budget}]"
    ACCEPTANCE_LINES[n] = line
    print("\n" + line)
    return status == "PASS"


def _one_run(args):
    name, seed, af, exclude = args
    p = bm.get_problem(name)
    t0 = time.perf_counter()
    h = engine.run(p, bm.initial_dataset(p, seed), engine.BOConfig(seed=seed, af=af, exclude=exclude))
    return h, time.perf_counter() - t0


@functools.lru_cache(maxsize=None)
def runs(name, af="mfca", exclude=True):
    """Histories of ``REPS`` repetitions (seeds 0..REPS-1) and the wall time."""
    jobs = [(name, s, af, exclude) for s in range(REPS)]
    t0 = time.perf_counter()
    if JOBS > 1:
        with ProcessPoolExecutor(JOBS) as pool:
            out = list(pool.map(_one_run, jobs))
    else:
        out = [_one_run(j) for j in jobs]
    return [h for h, _ in out], time.perf_counter() - t0


# ---------------------------------------------------------------- 1

def test_criterion_01_acquisition_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    n_triples, n_draws = 1000, 1_000_000
    outside = np.zeros(3, int)
    worst = np.zeros(3)
    identity_err = 0.0
    for _ in range(n_triples):
        mu, y_star = rng.normal(0, 2, 2)
        sigma = rng.uniform(0.05, 3.0)
        z = rng.standard_normal(n_draws)
        y = mu + sigma * z
        hit = y > y_star
        samples = (hit.astype(float), np.where(hit, y - y_star, 0.0), np.where(hit, sigma * z, 0.0))
        exact = (acq.alpha_pi(mu, sigma, y_star), acq.alpha_ei(mu, sigma, y_star),
                 acq.alpha_lf(mu, sigma, y_star))
        for k, (s, e) in enumerate(zip(samples, exact)):
            se = s.std() / np.sqrt(n_draws)
            # a standard error of zero (every draw identical) is resolved to one draw
            dev = abs(s.mean() - e) / max(se, 1.0 / n_draws)
            worst[k] = max(worst[k], dev)
            outside[k] += dev > 3.0
        zt = (mu - y_star) / sigma
        rhs = (mu - y_star) * acq.norm_cdf(zt) + exact[2]
        identity_err = max(identity_err, abs(exact[1] - rhs) / max(abs(exact[1]), 1e-300))
    # 3000 comparisons at 3 SE: about 0.27% exceed by chance even for exact formulas
    allowed = int(stats.binom.ppf(0.999, n_triples, 2 * stats.norm.sf(3.0)))
    ok = bool(np.all(outside <= allowed) and identity_err <= 1e-12)
    detail = (f"beyond 3 SE (PI/EI/LF) {outside.tolist()} of {n_triples} each, chance bound {allowed}; "
              f"max |dev|/SE {np.round(worst, 2).tolist()}; EI identity rel err {identity_err:.1e}")
    assert report(1, ok, detail, time.perf_counter() - t0, 60), detail


# ---------------------------------------------------------------- 2

def test_criterion_02_emulator_oracle():
    t0 = time.perf_counter()
    worst_mu = worst_var = worst_interp = 0.0
    for seed in range(20):
        rng = np.random.default_rng(1000 + seed)
        n = int(rng.integers(4, 31))
        ds = random_instance(rng, n)
        model = fit(ds, FitConfig(seed=seed), np.zeros(2), np.ones(2))
        h = model.hyper
        P_t = np.array([encode_categorical(t, ds.levels) for t in ds.T])
        P_s = np.eye(2)[ds.S]
        K = dense_correlation(ds.X, P_t, P_s, h.omega, h.A, h.A_h) + model.delta * np.eye(n)
        Xq = rng.random((10, 2))
        tq, sq = int(rng.integers(0, 3)), int(rng.integers(0, 2))
        r = dense_correlation(Xq, np.tile(encode_categorical([tq], ds.levels), (10, 1)),
                              np.tile(np.eye(2)[sq], (10, 1)), h.omega, h.A, h.A_h, ds.X, P_t, P_s)
        ys = (ds.y - model.y_mean) / model.y_std
        mu_ref, var_ref = dense_predict(ys, K, r)
        mu_ref = model.y_mean + model.y_std * mu_ref
        var_ref = np.maximum(var_ref, 0.0) * model.y_std ** 2
        mu, var = model.predict(Xq, [tq], sq)
        worst_mu = max(worst_mu, np.max(np.abs(mu - mu_ref) / np.abs(mu_ref)))
        worst_var = max(worst_var, np.max(np.abs(var - var_ref) / np.abs(var_ref)))
        # interpolation through the posterior formula at every training row
        Xu = scale_to_unit(ds.X, model.lower, model.upper)
        for s in range(2):
            rows = ds.S == s
            rc = model.cross_correlation(Xu[rows], ds.T[rows], s)
            raw = model.y_mean + model.y_std * (h.beta_hat[0] + rc @ model.alpha)
            worst_interp = max(worst_interp, np.max(np.abs(raw - ds.y[rows])) / np.std(ds.y))
    ok = worst_mu <= 1e-8 and worst_var <= 1e-8 and worst_interp < 1e-6
    detail = (f"max rel err mean {worst_mu:.1e}, variance {worst_var:.1e} (tol 1e-8); "
              f"interpolation {worst_interp:.1e} std(y) (tol 1e-6)")
    assert report(2, ok, detail, time.perf_counter() - t0, 60), detail


# ---------------------------------------------------------------- 3

def test_criterion_03_mf_emulation():
    t0 = time.perf_counter()
    p = bm.get_problem("borehole3")
    wins = []
    for seed in range(10):
        rows = {(m, s): v for m, s, v in emulation_mse(p, seed)}
        wins.append(rows[("lmgp", "HF")] < rows[("gp_hf_only", "HF")])
    ok = sum(wins) >= 8
    detail = f"LMGP HF test MSE beats HF-only GP in {sum(wins)}/10 seeds (need 8)"
    assert report(3, ok, detail, time.perf_counter() - t0, 300), detail


# ---------------------------------------------------------------- 4

def test_criterion_04_manifold_exclusion():
    t0 = time.perf_counter()
    p = bm.get_problem("borehole")
    s = p.space
    good = []
    for seed in range(10):
        kept, manifold, rep = engine.step0_exclude(bm.initial_dataset(p, seed), engine.BOConfig(seed=seed),
                                                   s.lower, s.upper, s.hf_index, s.sign)
        c = rep.correlations
        ranked = min(c[3], c[4]) > max(c[1], c[2])
        good.append(ranked and rep.excluded == [1, 2])
    ok = sum(good) >= 8
    detail = f"LF3/LF4 ranked above LF1/LF2 and exactly {{LF1, LF2}} excluded in {sum(good)}/10 seeds (need 8)"
    assert report(4, ok, detail, time.perf_counter() - t0, 300), detail


# ---------------------------------------------------------------- 5

def test_criterion_05_double_well():
    mf, t_mf = runs("double_well")
    ei, t_ei = runs("double_well", "ei")
    target = bm.brute_force_optimum("double_well").value
    close = sum(abs(h.final_incumbent - target) <= 1e-2 for h in mf)
    med_mf = float(np.median([h.cost_at_best() for h in mf]))
    med_ei = float(np.median([h.cost_at_best() for h in ei]))
    ok = close >= 18 and med_mf < med_ei
    detail = (f"{close}/20 within 1e-2 of {target:.5f}; median cost at best MFCA {med_mf:g} "
              f"vs EI {med_ei:g}")
    assert report(5, ok, detail, t_mf + t_ei, 600), detail


# ---------------------------------------------------------------- 6

def test_criterion_06_rosenbrock():
    hist, secs = runs("rosenbrock")
    vals = [h.final_incumbent for h in hist]
    close = sum(abs(v + 456.3) <= 0.5 for v in vals)
    dropped = sum(bool(h.header["exclusion"] and h.header["exclusion"]["excluded"]) for h in hist)
    ok = close >= 18
    detail = (f"{close}/20 within 0.5 of -456.3 (need 18); median {np.median(vals):.3f}, "
              f"worst {max(vals):.3f}; LF excluded at step 0 in {dropped}/20")
    assert report(6, ok, detail, secs, 900), detail


# ---------------------------------------------------------------- 7

@functools.lru_cache(maxsize=None)
def borehole_oracle():
    return bm.brute_force_optimum("borehole").value


def test_criterion_07_borehole3():
    hist, secs = runs("borehole3")
    oracle = borehole_oracle()
    vals = np.array([h.final_incumbent for h in hist])
    close = int(np.sum(np.abs(vals - oracle) <= 0.05 * abs(oracle)))
    ok = close >= 15
    detail = (f"{close}/20 within 5% of brute-force {oracle:.4f} (need 15); median {np.median(vals):.4f}; "
              f"published 3.98 (soft, other ranges): median off by {np.median(vals) - 3.98:+.2f}")
    assert report(7, ok, detail, secs, 1200), detail


# ---------------------------------------------------------------- 8

def test_criterion_08_no_exclusion():
    hist, secs = runs("borehole", "mfca", False)
    ref = float(np.median([h.final_incumbent for h in runs("borehole3")[0]]))
    worse = [h.termination == engine.STOP_STAGNATION and h.final_incumbent > ref for h in hist]
    stag = sum(h.termination == engine.STOP_STAGNATION for h in hist)
    ok = sum(worse) > REPS // 2
    detail = (f"{sum(worse)}/20 stop on stagnation with an incumbent worse than the 3-source median "
              f"{ref:.4f} (need > 10); stagnation stops {stag}/20, "
              f"median incumbent {np.median([h.final_incumbent for h in hist]):.4f}")
    assert report(8, ok, detail, secs, 1200), detail


# ---------------------------------------------------------------- 9

def test_criterion_09_termination_exactness():
    t0 = time.perf_counter()
    space = bm.ProblemSpace(((-1.0, 1.0),), num_sources=1, direction="minimize")
    const = bm.BenchmarkProblem("constant", space, (lambda X: np.full(len(X), 3.0),), ("HF",), (1.0,),
                                (5,), (None,))
    h = engine.run(const, bm.initial_dataset(const, 0), engine.BOConfig(af="pi"))
    exact_stop = h.termination == engine.STOP_STAGNATION and len(h.records) == 50 \
        and not any(r.improved for r in h.records)
    p = bm.get_problem("double_well")
    init = bm.initial_dataset(p, 0)
    mf = engine.run(p, init, engine.BOConfig(budget_max=20000))
    total = init.total_cost
    ledger_ok = True
    for r in mf.records:
        total += p.costs[r.source]
        ledger_ok &= r.cumulative_cost == total
    ledger_ok &= mf.final_cost == init.total_cost + sum(p.costs[r.source] for r in mf.records)
    ok = bool(exact_stop and ledger_ok)
    detail = (f"constant problem: {h.termination} after {len(h.records)} iterations; "
              f"cost ledger exact over {len(mf.records)} queries: {bool(ledger_ok)}")
    assert report(9, ok, detail, time.perf_counter() - t0), detail


# ---------------------------------------------------------------- 10

def test_criterion_10_source_utilization():
    mf, secs = runs("double_well")
    counts = [h.source_counts() for h in mf]
    hf = sum(c[0] for c in counts)
    lf = sum(c[1] for c in counts)
    hf_each = all(c[0] >= 1 for c in counts)
    per_rep = sum(c[1] > c[0] for c in counts)
    ok = lf > hf and hf_each
    detail = (f"LF {lf} vs HF {hf} post-initialization queries over 20 reps (LF > HF in {per_rep}/20 reps); "
              f"HF queried in every rep: {hf_each}")
    assert report(10, ok, detail, secs), detail
