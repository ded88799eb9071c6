"""Analytic multi-fidelity test problems, Sobol designs, RRMSE and brute-force optima."""

from __future__ import annotations

import functools
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import optimize
from scipy.stats import qmc

from .domain import MINIMIZE, MultiSourceDataset, ProblemSpace, assemble, unscale_from_unit


@dataclass(frozen=True)
class BenchmarkProblem:
    """A multi-source problem with closed-form evaluators.

    ``sources[j]`` maps an ``(m, dx)`` array to ``m`` responses.  Index 0 is
    always the high-fidelity source.
    """

    name: str
    space: ProblemSpace
    sources: tuple
    source_names: tuple
    costs: tuple
    initial_sizes: tuple
    reference_rrmse: tuple
    variables: tuple = ()

    @property
    def hf_index(self) -> int:
        return self.space.hf_index

    def evaluate(self, x, j: int):
        """Evaluate source ``j``; ``x`` is one point or an ``(m, dx)`` batch."""
        if not 0 <= j < len(self.sources):
            raise ValueError(f"{self.name}: no source {j}")
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        X = np.atleast_2d(x)
        if X.shape[1] != self.space.dx:
            raise ValueError(f"{self.name}: expected {self.space.dx} inputs, got {X.shape[1]}")
        if np.any(X < self.space.lower) or np.any(X > self.space.upper):
            raise ValueError(f"{self.name}: input outside the bounds")
        out = np.asarray(self.sources[j](X), dtype=float)
        return float(out[0]) if single else out

    def subset(self, keep) -> "BenchmarkProblem":
        """Restrict to the sources in ``keep`` (the HF source must be included)."""
        keep = list(keep)
        if self.hf_index not in keep:
            raise ValueError("the high-fidelity source cannot be dropped")
        pick = lambda seq: tuple(seq[j] for j in keep)
        return BenchmarkProblem(
            self.name, self.space.with_sources(len(keep), keep.index(self.hf_index)),
            pick(self.sources), pick(self.source_names), pick(self.costs),
            pick(self.initial_sizes), pick(self.reference_rrmse), self.variables)

    def with_overrides(self, costs=None, initial_sizes=None) -> "BenchmarkProblem":
        costs = tuple(float(c) for c in costs) if costs is not None else self.costs
        sizes = tuple(int(n) for n in initial_sizes) if initial_sizes is not None else self.initial_sizes
        if len(costs) != len(self.sources) or len(sizes) != len(self.sources):
            raise ValueError("one override per source is required")
        if any(c <= 0 for c in costs) or any(n < 0 for n in sizes):
            raise ValueError("costs must be positive and sizes non-negative")
        return BenchmarkProblem(self.name, self.space, self.sources, self.source_names, costs,
                                sizes, self.reference_rrmse, self.variables)


@dataclass(frozen=True)
class GroundTruth:
    value: float
    location: np.ndarray
    provenance: str


# ----------------------------------------------------------------------------
# formulas


def _double_well(c):
    def f(X):
        x = X[:, 0]
        return 0.6 * x ** 4 - 0.3 * x ** 3 - 3 * x ** 2 + c * x
    return f


def _rosenbrock_hf(X):
    x1, x2 = X[:, 0], X[:, 1]
    return (1 - x1) ** 2 + 100 * (x2 - x1 ** 2) ** 2 - 456.3


def _rosenbrock_lf(X):
    return (1 - X[:, 0]) ** 2 + 100


def _borehole(hu_scale=1.0, hl_scale=1.0, r_scale=1.0, l_coef=2.0, tl_coef=1.0):
    def f(X):
        rw, r, tu, hu, tl, hl, L, kw = X.T
        log_ratio = np.log(r / rw)
        lead = np.log(r_scale * r / rw)
        denom = lead * (1 + l_coef * L * tu / (log_ratio * rw ** 2 * kw) + tl_coef * tu / tl)
        return 2 * np.pi * tu * (hu_scale * hu - hl_scale * hl) / denom
    return f


def _wing(sw_exp=0.758, wp_term="sw"):
    def f(X):
        sw, wfw, A, lam_deg, q, lam, tc, nz, wdg, wp = X.T
        lam_rad = np.deg2rad(lam_deg)
        core = (0.36 * sw ** sw_exp * wfw ** 0.0035 * (A / np.cos(lam_rad) ** 2) ** 0.6
                * q ** 0.006 * lam ** 0.04 * (100 * tc / np.cos(lam_rad)) ** -0.3
                * (nz * wdg) ** 0.49)
        if wp_term == "sw":
            return core + sw * wp
        if wp_term == "wp":
            return core + wp
        return core
    return f


BOREHOLE_BOUNDS = ((0.05, 0.15), (100, 50000), (63070, 115600), (990, 1110),
                   (63.1, 116), (700, 820), (1120, 1680), (9855, 12045))
WING_BOUNDS = ((150, 200), (220, 300), (6, 10), (-10, 10), (16, 45), (0.5, 1),
               (0.08, 0.18), (2.5, 6), (1700, 2500), (0.025, 0.08))


def double_well() -> BenchmarkProblem:
    return BenchmarkProblem(
        "double_well", ProblemSpace(((-3.0, 3.0),), num_sources=2, hf_index=0, direction=MINIMIZE),
        (_double_well(2.0), _double_well(-1.2)), ("HF", "LF"), (1000.0, 1.0), (5, 0),
        (None, 1.14), ("x",))


def rosenbrock() -> BenchmarkProblem:
    return BenchmarkProblem(
        "rosenbrock", ProblemSpace(((-2.0, 2.0), (-2.0, 2.0)), num_sources=2, hf_index=0,
                                   direction=MINIMIZE),
        (_rosenbrock_hf, _rosenbrock_lf), ("HF", "LF"), (1000.0, 1.0), (5, 10), (None, 1.42),
        ("x1", "x2"))


def borehole() -> BenchmarkProblem:
    return BenchmarkProblem(
        "borehole", ProblemSpace(BOREHOLE_BOUNDS, num_sources=5, hf_index=0, direction=MINIMIZE),
        (_borehole(),
         _borehole(hl_scale=0.8, l_coef=1.0),
         _borehole(l_coef=8.0, tl_coef=0.75),
         _borehole(hu_scale=1.09, r_scale=4.0, l_coef=3.0),
         _borehole(hu_scale=1.05, r_scale=2.0, l_coef=3.0)),
        ("HF", "LF1", "LF2", "LF3", "LF4"), (1000.0, 100.0, 10.0, 100.0, 10.0),
        (5, 5, 50, 5, 50), (None, 4.40, 1.54, 1.30, 1.3),
        ("rw", "r", "Tu", "Hu", "Tl", "Hl", "L", "Kw"))


def borehole3() -> BenchmarkProblem:
    """Borehole restricted to the HF, LF3 and LF4 sources."""
    p = borehole().subset([0, 3, 4])
    return BenchmarkProblem("borehole3", p.space, p.sources, p.source_names, p.costs,
                            p.initial_sizes, p.reference_rrmse, p.variables)


def wing() -> BenchmarkProblem:
    return BenchmarkProblem(
        "wing", ProblemSpace(WING_BOUNDS, num_sources=4, hf_index=0, direction=MINIMIZE),
        (_wing(), _wing(wp_term="wp"), _wing(0.8, "wp"), _wing(0.9, "none")),
        ("HF", "LF1", "LF2", "LF3"), (1000.0, 100.0, 10.0, 1.0), (5, 5, 10, 50),
        (None, 0.19, 1.14, 5.75),
        ("sw", "wfw", "A", "Lambda", "q", "lambda", "tc", "Nz", "Wdg", "wp"))


REGISTRY: dict[str, Callable[[], BenchmarkProblem]] = {
    "double_well": double_well,
    "rosenbrock": rosenbrock,
    "borehole": borehole,
    "borehole3": borehole3,
    "wing": wing,
}


def get_problem(name: str) -> BenchmarkProblem:
    try:
        return REGISTRY[name.replace("-", "_").lower()]()
    except KeyError:
        raise KeyError(f"unknown benchmark {name!r}; choose from {sorted(REGISTRY)}") from None


# ----------------------------------------------------------------------------
# designs


def sobol_unit(d: int, n: int, seed=None, scramble: bool = True) -> np.ndarray:
    """First ``n`` points of a ``d``-dimensional Sobol sequence in ``[0, 1)^d``.

    The unscrambled sequence skips its leading origin, so in 1-D it starts
    ``0.5, 0.75, 0.25, ...``.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    if d > qmc.Sobol.MAXDIM:
        raise ValueError(f"Sobol generator supports at most {qmc.Sobol.MAXDIM} dimensions")
    if n == 0:
        return np.zeros((0, d))
    eng = qmc.Sobol(d, scramble=scramble, seed=seed)
    if not scramble:
        eng.fast_forward(1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        return eng.random(n)


def sobol_design(space: ProblemSpace, n: int, seed=None, scramble: bool = True):
    """``n`` scrambled-Sobol points mapped to the numeric bounds and categorical levels.

    Returns ``(X, T)``.
    """
    U = sobol_unit(space.dx + space.dt, n, seed, scramble)
    X = unscale_from_unit(U[:, :space.dx], space.lower, space.upper)
    X = np.clip(X, space.lower, space.upper)
    T = np.zeros((n, space.dt), dtype=int)
    for i, l in enumerate(space.categorical_levels):
        T[:, i] = np.minimum((U[:, space.dx + i] * l).astype(int), l - 1)
    return X, T


def initial_dataset(problem: BenchmarkProblem, seed: int, sizes=None) -> MultiSourceDataset:
    """Per-source Sobol designs evaluated on their sources (independent stream per source)."""
    sizes = problem.initial_sizes if sizes is None else sizes
    seqs = np.random.SeedSequence(seed).spawn(len(problem.sources))
    tables = []
    for j, (n, ss) in enumerate(zip(sizes, seqs)):
        X, T = sobol_design(problem.space, n, seed=np.random.default_rng(ss))
        y = problem.evaluate(X, j) if n else np.zeros(0)
        tables.append((np.hstack([X, T]), y))
    return assemble(tables, problem.costs, dx=problem.space.dx, levels=problem.space.categorical_levels)


# ----------------------------------------------------------------------------
# error metrics and oracles


def rrmse_values(y_lf, y_hf) -> float:
    y_lf = np.asarray(y_lf, dtype=float)
    y_hf = np.asarray(y_hf, dtype=float)
    var = np.var(y_hf)
    if var == 0:
        raise ValueError("HF responses have zero variance")
    return float(np.sqrt(np.sum((y_lf - y_hf) ** 2) / (len(y_hf) * var)))


def rrmse(problem: BenchmarkProblem, j: int, n_mc: int = 10000, seed: int = 0) -> float:
    """Relative RMSE of source ``j`` against the HF source at uniform random inputs."""
    if j == problem.hf_index:
        raise ValueError("RRMSE is defined for low-fidelity sources only")
    rng = np.random.default_rng(seed)
    X = problem.space.lower + rng.random((n_mc, problem.space.dx)) * (problem.space.upper - problem.space.lower)
    return rrmse_values(problem.evaluate(X, j), problem.evaluate(X, problem.hf_index))


@functools.lru_cache(maxsize=None)
def _brute_force(name: str, source: int, n_scan: int, n_refine: int, seed: int):
    problem = get_problem(name)
    space = problem.space
    sign = space.sign  # internal maximization of sign * f
    lo, hi = space.lower, space.upper
    U = sobol_unit(space.dx, n_scan, seed=seed)
    X = lo + U * (hi - lo)
    vals = -sign * problem.evaluate(X, source)  # minimize this
    order = np.argsort(vals)[:n_refine]
    f = lambda x: float(-sign * problem.evaluate(np.clip(x, lo, hi), source))
    best_x, best_v = X[order[0]], vals[order[0]]
    for i in order:
        res = optimize.minimize(f, X[i], method="L-BFGS-B", bounds=list(zip(lo, hi)),
                                options={"ftol": 1e-15, "gtol": 1e-10, "maxiter": 500})
        if res.fun < best_v:
            best_x, best_v = np.clip(res.x, lo, hi), res.fun
    return float(-sign * best_v), tuple(best_x)


def brute_force_optimum(problem: BenchmarkProblem | str, source: int | None = None,
                        n_scan: int = 2 ** 20, n_refine: int = 100, seed: int = 0) -> GroundTruth:
    """Dense quasi-random scan followed by local refinement of the best points.

    The result is in the problem's own direction (a minimum for minimize problems).
    """
    name = problem if isinstance(problem, str) else problem.name
    if name == "borehole3":
        name = "borehole"
    p = get_problem(name)
    if p.space.dx > 10:
        raise ValueError("brute force is limited to dx <= 10")
    j = p.hf_index if source is None else source
    value, loc = _brute_force(name, j, n_scan, n_refine, seed)
    return GroundTruth(value, np.array(loc), f"sobol scan n={n_scan} + L-BFGS-B from best {n_refine}")
