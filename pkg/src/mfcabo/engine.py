"""Sequential single- and multi-fidelity Bayesian optimization loops.

Internally everything is maximized: responses of ``minimize`` problems are
negated when they enter the loop and flipped back in every record.
"""

from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from . import acquisition as acq
from .domain import MultiSourceDataset
from .lmgp import FitConfig, FitError, LMGP, extract_manifold, fit

log = logging.getLogger(__name__)

CONTINUE = "continue"
STOP_BUDGET = "budget"
STOP_STAGNATION = "stagnation"
STOP_MAX_ITER = "max_iterations"
STOP_ABORT = "abort"


@dataclass
class BOConfig:
    budget_max: float = 40000.0
    stagnation_limit: int = 50
    af: str = "mfca"
    seed: int = 0
    exclusion_correlation_min: float = 0.05
    exclude: bool = True
    refit_every: int = 1
    refit_starts: int = 1
    max_iterations: int | None = None
    fit: FitConfig = field(default_factory=FitConfig)
    aux: acq.AuxConfig = field(default_factory=acq.AuxConfig)

    def __post_init__(self):
        if self.budget_max <= 0:
            raise ValueError("budget_max must be positive")
        if self.stagnation_limit < 1:
            raise ValueError("stagnation_limit must be >= 1")
        if self.af not in ("mfca", "ei", "pi", "kg"):
            raise ValueError(f"unknown acquisition {self.af!r}")
        if not 0 < self.exclusion_correlation_min < 1:
            raise ValueError("exclusion_correlation_min must lie in (0, 1)")
        if self.refit_every < 1:
            raise ValueError("refit_every must be >= 1")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "BOConfig":
        d = dict(d)
        fit_cfg = FitConfig(**{k: tuple(v) if isinstance(v, list) else v
                               for k, v in d.pop("fit", {}).items()})
        aux_cfg = acq.AuxConfig(**d.pop("aux", {}))
        return cls(fit=fit_cfg, aux=aux_cfg, **d)


@dataclass
class IterationRecord:
    k: int
    x: list
    t: list
    source: int
    source_name: str
    y: float
    cost: float
    cumulative_cost: float
    incumbent: float
    improved: bool
    excluded: list
    diagnostics: dict = field(default_factory=dict)


@dataclass
class RunHistory:
    header: dict
    records: list = field(default_factory=list)
    termination: str = CONTINUE
    initial_cost: float = 0.0
    initial_incumbent: float = np.nan

    @property
    def final_incumbent(self) -> float:
        return self.records[-1].incumbent if self.records else self.initial_incumbent

    @property
    def final_cost(self) -> float:
        return self.records[-1].cumulative_cost if self.records else self.initial_cost

    def source_counts(self, num_sources: int | None = None) -> list[int]:
        ns = num_sources or len(self.header.get("source_names", [])) or 1
        counts = [0] * ns
        for r in self.records:
            counts[r.source] += 1
        return counts

    def cost_at_best(self) -> float:
        """Accumulated cost up to and including the iteration that first reached the final incumbent."""
        best_cost = self.initial_cost
        for r in self.records:
            if r.improved:
                best_cost = r.cumulative_cost
        return best_cost

    def iterations_at_best(self) -> int:
        it = 0
        for r in self.records:
            if r.improved:
                it = r.k
        return it

    def to_jsonl(self, path):
        with open(path, "w") as fh:
            fh.write(json.dumps({"type": "header", **_jsonable(self.header),
                                 "initial_cost": self.initial_cost,
                                 "initial_incumbent": self.initial_incumbent}) + "\n")
            for r in self.records:
                fh.write(json.dumps({"type": "iteration", **_jsonable(dataclasses.asdict(r))}) + "\n")
            fh.write(json.dumps({"type": "end", "termination": self.termination,
                                 "final_incumbent": self.final_incumbent,
                                 "final_cost": self.final_cost,
                                 "iterations": len(self.records)}) + "\n")

    @classmethod
    def from_jsonl(cls, path) -> "RunHistory":
        with open(path) as fh:
            lines = [json.loads(line) for line in fh if line.strip()]
        header = {k: v for k, v in lines[0].items() if k not in ("type", "initial_cost", "initial_incumbent")}
        hist = cls(header, initial_cost=lines[0]["initial_cost"],
                   initial_incumbent=lines[0]["initial_incumbent"])
        for d in lines[1:]:
            if d["type"] == "iteration":
                d.pop("type")
                hist.records.append(IterationRecord(**d))
            elif d["type"] == "end":
                hist.termination = d["termination"]
        return hist


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, float) and not np.isfinite(obj):
        return None if np.isnan(obj) else (1e308 if obj > 0 else -1e308)
    return obj


# ----------------------------------------------------------------------------


def check_termination(history: RunHistory, config: BOConfig, min_cost: float,
                      stagnant: int | None = None) -> str:
    """Decide whether the loop may issue another query."""
    if history.final_cost + min_cost > config.budget_max:
        return STOP_BUDGET
    if stagnant is None:
        stagnant = 0
        for r in reversed(history.records):
            if r.improved:
                break
            stagnant += 1
    if stagnant >= config.stagnation_limit:
        return STOP_STAGNATION
    if config.max_iterations is not None and len(history.records) >= config.max_iterations:
        return STOP_MAX_ITER
    return CONTINUE


@dataclass
class ExclusionReport:
    kept: list
    excluded: list
    distances: list
    correlations: list
    positions: list
    threshold: float
    note: str = ""

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def step0_exclude(initial: MultiSourceDataset, config: BOConfig, lower, upper, hf_index: int,
                  sign: float = 1.0):
    """Fit on the initial data and drop LF sources far from the HF source in the fidelity manifold.

    A source ``j`` is dropped when ``exp(-||h(j) - h(hf)||^2)`` falls below
    ``config.exclusion_correlation_min``.  Sources without initial samples
    cannot be judged and are kept.

    Returns ``(kept, manifold, report)``; ``manifold`` is ``None`` if the fit failed.
    """
    ds = initial.num_sources
    if ds < 2:
        raise ValueError("source exclusion needs at least two sources")
    internal = MultiSourceDataset(initial.X, initial.T, initial.S, sign * initial.y,
                                  initial.costs, initial.levels)
    cfg = dataclasses.replace(config.fit, seed=_stream(config.seed, "step0"))
    try:
        model = fit(internal, cfg, lower, upper)
        manifold = extract_manifold(model)
    except (FitError, ValueError, np.linalg.LinAlgError) as exc:
        log.warning("step-0 fit failed (%s); keeping all sources", exc)
        return list(range(ds)), None, ExclusionReport(list(range(ds)), [], [], [], [],
                                                      config.exclusion_correlation_min,
                                                      f"fit failed: {exc}")
    dist = manifold.distances[hf_index]
    corr = manifold.correlations[hf_index]
    kept, excluded = [], []
    for j in range(ds):
        if j == hf_index or initial.counts[j] == 0 or corr[j] >= config.exclusion_correlation_min:
            kept.append(j)
        else:
            excluded.append(j)
    report = ExclusionReport(kept, excluded, dist.tolist(), corr.tolist(),
                             manifold.positions.tolist(), config.exclusion_correlation_min)
    return kept, manifold, report


def _stream(seed: int, *keys) -> int:
    """Deterministic child seed derived from ``seed`` and a key path."""
    # str hash() is salted per process, so encode the bytes instead
    words = [int.from_bytes(k.encode(), "little") % (2 ** 31) if isinstance(k, str) else int(k)
             for k in keys]
    return int(np.random.SeedSequence([int(seed), *words]).generate_state(1)[0])


def _evaluate(problem, x, t, j):
    if problem.space.dt:
        return float(problem.evaluate(x, j, t))
    return float(problem.evaluate(x, j))


def _run_loop(problem, initial: MultiSourceDataset, config: BOConfig, af: str, kept: list,
              header: dict) -> RunHistory:
    space = problem.space
    sign = space.sign
    lower, upper = space.lower, space.upper
    hf = kept.index(space.hf_index)
    costs = tuple(problem.costs[j] for j in kept)
    names = [problem.source_names[j] for j in kept]
    excluded = [problem.source_names[j] for j in range(len(problem.costs)) if j not in kept]
    data = initial.select_sources(kept)
    data = MultiSourceDataset(data.X, data.T, data.S, sign * data.y, data.costs, data.levels)
    hf_rows = data.source_rows(hf)
    if hf_rows.size == 0:
        raise ValueError("initial data must contain at least one HF sample")
    best_internal = float(np.max(data.y[hf_rows]))
    header = {**header, "kept_sources": [problem.source_names[j] for j in kept],
              "source_names": names, "costs": list(costs), "af": af}
    history = RunHistory(header, initial_cost=initial.total_cost,
                         initial_incumbent=sign * best_internal)
    model: LMGP | None = None
    failures = 0
    stagnant = 0
    refit_cfg = dataclasses.replace(config.fit, n_starts=config.refit_starts)
    k = 0
    while True:
        affordable = [j for j, c in enumerate(costs) if history.final_cost + c <= config.budget_max]
        min_cost = min(costs) if af == "mfca" else costs[hf]
        status = check_termination(history, config, min_cost, stagnant)
        if status == CONTINUE and af != "mfca" and hf not in affordable:
            status = STOP_BUDGET
        if status != CONTINUE:
            history.termination = status
            break
        k += 1
        diag = {}
        try:
            if model is None:
                cfg = dataclasses.replace(config.fit, seed=_stream(config.seed, "fit", k))
                model = fit(data, cfg, lower, upper)
            elif (k - 1) % config.refit_every == 0:
                cfg = dataclasses.replace(refit_cfg, seed=_stream(config.seed, "fit", k))
                model = fit(data, cfg, lower, upper, warm_start=model.hyper)
            else:
                model = model.condition_on(data)
            failures = 0
        except (FitError, np.linalg.LinAlgError) as exc:
            failures += 1
            diag["fit_error"] = str(exc)
            log.warning("iteration %d: fit failed (%s)", k, exc)
            if failures >= 2 or model is None:
                history.termination = STOP_ABORT
                break
            try:
                model = model.condition_on(data)
            except np.linalg.LinAlgError:
                history.termination = STOP_ABORT
                break
        y_stars = acq.incumbents(data, hf)
        rng = np.random.default_rng(_stream(config.seed, "propose", k))
        try:
            decision = acq.propose(model, costs, y_stars, lower, upper, space.categorical_levels,
                                   hf, af, config.aux, rng,
                                   sources=affordable if af == "mfca" else None)
        except (ValueError, np.linalg.LinAlgError, RuntimeError) as exc:
            log.warning("iteration %d: auxiliary search failed (%s); using a random point", k, exc)
            u = rng.random(space.dx)
            decision = acq.AcquisitionDecision(lower + u * (upper - lower),
                                               tuple(int(rng.integers(l)) for l in space.categorical_levels),
                                               hf, 0.0, 0.0)
        j = decision.source
        y_user = _evaluate(problem, decision.x, decision.t, kept[j])
        y_int = sign * y_user
        improved = bool(j == hf and y_int > best_internal)
        if improved:
            best_internal = y_int
            stagnant = 0
        else:
            stagnant += 1
        data = data.append(decision.x, decision.t, j, y_int)
        diag.update({"nll": model.nll, "delta": model.delta, "raw_utility": decision.raw_utility,
                     "normalized_utility": decision.cost_normalized_utility,
                     "incumbents": (sign * y_stars).tolist(),
                     "per_source": [list(p) for p in decision.per_source]})
        history.records.append(IterationRecord(
            k, np.asarray(decision.x).tolist(), list(decision.t), j, names[j], y_user, costs[j],
            history.final_cost + costs[j], sign * best_internal, improved, excluded, diag))
    history.header["final_dataset_size"] = data.n
    return history


def run_single_fidelity(problem, initial: MultiSourceDataset, config: BOConfig) -> RunHistory:
    """Classic BO on the HF source only (``af`` in {'ei', 'pi', 'kg'})."""
    af = config.af if config.af != "mfca" else "pi"
    hf = problem.space.hf_index
    header = {"problem": getattr(problem, "name", "custom"), "mode": "single_fidelity",
              "config": _jsonable(config.to_dict()), "exclusion": None}
    return _run_loop(problem, initial, config, af, [hf], header)


def run_mfca(problem, initial: MultiSourceDataset, config: BOConfig) -> RunHistory:
    """Multi-fidelity cost-aware BO with optional step-0 source exclusion."""
    space = problem.space
    ds = len(problem.costs)
    kept = list(range(ds))
    report = None
    if ds >= 2 and config.exclude:
        kept, _, rep = step0_exclude(initial, config, space.lower, space.upper, space.hf_index,
                                     space.sign)
        report = rep.to_dict()
        report["names"] = list(problem.source_names)
    header = {"problem": getattr(problem, "name", "custom"), "mode": "mfca",
              "config": _jsonable(config.to_dict()), "exclusion": report}
    if len(kept) == 1:
        header["mode"] = "mfca->single_fidelity"
        return _run_loop(problem, initial, config, "pi", kept, header)
    return _run_loop(problem, initial, config, "mfca", kept, header)


def run(problem, initial: MultiSourceDataset, config: BOConfig) -> RunHistory:
    if config.af == "mfca":
        return run_mfca(problem, initial, config)
    return run_single_fidelity(problem, initial, config)
