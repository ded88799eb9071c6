"""Command-line front end: ``mfcabo {optimize,manifold,rrmse,emulate,list}``.

Configuration comes from a JSON file (``--config``) and flags; flags win.
Outputs are plain CSV tables and newline-delimited JSON histories written to
``--out`` (default: ``$MFCABO_OUT`` or ``./mfcabo-out``).

Config keys::

    {
      "problem": "borehole3",              # or "dataset": {...} for manifold/emulate
      "seed": 0, "reps": 20, "jobs": 1,
      "costs": [1000, 100, 10],            # optional overrides
      "initial_sizes": [5, 5, 50],
      "bo": {"budget_max": 40000, "stagnation_limit": 50, "af": "mfca",
             "exclude": true, "fit": {"n_starts": 8}, "aux": {"n_candidates": 512}},
      "n_mc": 10000, "n_test": 1000
    }

A dataset entry reads a CSV with a header row::

    "dataset": {"path": "data.csv", "numeric": ["x1"], "categorical": ["mat"],
                "response": "y", "source": "source", "costs": [10, 1], "hf_index": 0}
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import benchmarks as bm
from .domain import read_table
from .engine import STOP_ABORT, BOConfig, RunHistory, run, step0_exclude
from .lmgp import FitConfig, FitError, fit

log = logging.getLogger("mfcabo")

OUT_ENV = "MFCABO_OUT"
DEFAULT_OUT = "mfcabo-out"


@dataclasses.dataclass
class ExperimentConfig:
    problem: str | None = None
    dataset: dict | None = None
    seed: int = 0
    reps: int = 1
    jobs: int = 1
    out: str = ""
    costs: list | None = None
    initial_sizes: list | None = None
    bo: dict = dataclasses.field(default_factory=dict)
    n_mc: int = 10000
    n_test: int = 1000

    def __post_init__(self):
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")
        if self.costs is not None and any(float(c) <= 0 for c in self.costs):
            raise ValueError("cost overrides must be positive")
        if self.initial_sizes is not None and any(int(n) < 0 for n in self.initial_sizes):
            raise ValueError("initial size overrides must be non-negative")
        if self.dataset is not None and not Path(self.dataset["path"]).exists():
            raise ValueError(f"dataset file not found: {self.dataset['path']}")

    def benchmark(self) -> bm.BenchmarkProblem:
        if self.problem is None:
            raise ValueError("this command needs a benchmark 'problem'")
        p = bm.get_problem(self.problem)
        return p.with_overrides(costs=self.costs, initial_sizes=self.initial_sizes)

    def bo_config(self, seed: int) -> BOConfig:
        return BOConfig.from_dict({**self.bo, "seed": seed})

    def rep_seeds(self) -> list[int]:
        # counter-based: repetition i always gets seed + i regardless of scheduling
        return [self.seed + i for i in range(self.reps)]


def load_config(args) -> ExperimentConfig:
    doc = {}
    if args.config:
        with open(args.config) as fh:
            doc = json.load(fh)
    if getattr(args, "problem", None):
        doc["problem"] = args.problem
        doc.pop("dataset", None)
    bo = dict(doc.get("bo", {}))
    for flag, key in (("af", "af"), ("budget", "budget_max"), ("stagnation", "stagnation_limit")):
        v = getattr(args, flag, None)
        if v is not None:
            bo[key] = v
    if getattr(args, "no_exclude", False):
        bo["exclude"] = False
    doc["bo"] = bo
    for key in ("seed", "reps", "jobs"):
        v = getattr(args, key, None)
        if v is not None:
            doc[key] = v
    doc["out"] = args.out or doc.get("out") or os.environ.get(OUT_ENV) or DEFAULT_OUT
    return ExperimentConfig(**doc)


def _write_csv(path: Path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


# ---------------------------------------------------------------- optimize

def _optimize_one(args):
    cfg, seed, out = args
    problem = cfg.benchmark()
    initial = bm.initial_dataset(problem, seed)
    hist = run(problem, initial, cfg.bo_config(seed))
    hist.to_jsonl(Path(out) / "history" / f"rep_{seed:05d}.jsonl")
    return seed, hist


def summary_rows(problem, results):
    rows = []
    for seed, h in results:
        counts = h.source_counts(len(h.header["source_names"]))
        rows.append([seed, h.final_incumbent, h.cost_at_best(), h.iterations_at_best(),
                     len(h.records), h.final_cost, h.termination, *counts])
    return rows


def aggregate(values) -> tuple[float, float, float]:
    q1, med, q3 = np.percentile(np.asarray(values, dtype=float), [25, 50, 75])
    return float(med), float(q1), float(q3)


def cmd_optimize(cfg: ExperimentConfig) -> int:
    """Run repeated BO experiments and write histories and summary tables."""
    out = Path(cfg.out)
    (out / "history").mkdir(parents=True, exist_ok=True)
    problem = cfg.benchmark()
    jobs = [(cfg, s, str(out)) for s in cfg.rep_seeds()]
    if cfg.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(_optimize_one, jobs))
    else:
        results = [_optimize_one(j) for j in jobs]
    results.sort(key=lambda r: r[0])

    names = list(problem.source_names)
    rows = summary_rows(problem, results)
    header = ["seed", "final_incumbent", "cost_at_best", "iterations_at_best", "iterations",
              "final_cost", "termination"]
    # sampling counts use the original source list; excluded sources show zero
    full_rows = []
    for (seed, h), row in zip(results, rows):
        kept = h.header["kept_sources"]
        counts = dict(zip(kept, row[7:]))
        full_rows.append(row[:7] + [counts.get(n, 0) for n in names])
    agg = []
    for label, idx in (("median", 0), ("q1", 1), ("q3", 2)):
        vals = [aggregate([r[c] for r in full_rows])[idx] for c in (1, 2, 3, 4, 5)]
        agg.append([label, *vals, ""] + [aggregate([r[7 + k] for r in full_rows])[idx]
                                         for k in range(len(names))])
    _write_csv(out / "summary.csv", header + [f"n_{n}" for n in names],
               [[_fmt(v) for v in r] for r in full_rows + agg])

    exc_rows = []
    for seed, h in results:
        rep = h.header.get("exclusion")
        if not rep or not rep.get("distances"):
            continue
        for j, n in enumerate(rep["names"]):
            exc_rows.append([seed, n, *rep["positions"][j], rep["distances"][j],
                             rep["correlations"][j], "excluded" if j in rep["excluded"] else "kept"])
    if exc_rows:
        dh = len(exc_rows[0]) - 5
        _write_csv(out / "exclusion.csv",
                   ["seed", "source", *[f"h{k + 1}" for k in range(dh)], "distance_to_hf",
                    "correlation_to_hf", "verdict"], [[_fmt(v) for v in r] for r in exc_rows])

    freq = []
    for seed, h in results:
        for r in h.records:
            freq.append([seed, r.k, r.source_name, r.cost, r.cumulative_cost, r.incumbent])
    _write_csv(out / "sampling.csv", ["seed", "iteration", "source", "cost", "cumulative_cost",
                                      "incumbent"], [[_fmt(v) for v in r] for r in freq])
    med = agg[0]
    print(f"{problem.name}: {len(results)} reps, median incumbent {med[1]:.6g}, "
          f"median cost at best {med[2]:.6g} -> {out}")
    aborted = [s for s, h in results if h.termination == STOP_ABORT]
    if aborted:
        print(f"aborted repetitions: {aborted}", file=sys.stderr)
        return 1
    return 0


# ---------------------------------------------------------------- manifold

def _manifold_data(cfg: ExperimentConfig, seed: int):
    """(dataset, source names, hf index, lower, upper, sign) for one repetition."""
    if cfg.dataset is not None:
        d = cfg.dataset
        data, maps = read_table(d["path"], d.get("numeric", []), d.get("categorical", []),
                                d["response"], d["source"], d.get("costs"))
        if data.dx == 0:
            raise ValueError("dataset needs at least one numeric column")
        lower, upper = data.X.min(axis=0), data.X.max(axis=0)
        upper = np.where(upper > lower, upper, lower + 1.0)
        sign = -1.0 if d.get("direction", "minimize") == "minimize" else 1.0
        names = [f"source{s}" for s in maps["sources"]]
        return data, names, int(d.get("hf_index", 0)), lower, upper, sign
    p = cfg.benchmark()
    s = p.space
    return bm.initial_dataset(p, seed), list(p.source_names), s.hf_index, s.lower, s.upper, s.sign


def manifold_rows(cfg: ExperimentConfig, seed: int):
    data, names, hf, lower, upper, sign = _manifold_data(cfg, seed)
    if data.num_sources < 2:
        raise ValueError("manifold export needs at least two sources")
    bo = cfg.bo_config(seed)
    kept, manifold, report = step0_exclude(data, bo, lower, upper, hf, sign)
    if manifold is None:
        raise FitError(report.note)
    rows = []
    for j, n in enumerate(names):
        rows.append([seed, n, *manifold.positions[j], manifold.distances[hf, j],
                     manifold.correlations[hf, j], "kept" if j in kept else "excluded"])
    return rows


def cmd_manifold(cfg: ExperimentConfig) -> int:
    """Fit on initial data and export the fidelity manifold with exclusion verdicts."""
    out = Path(cfg.out)
    rows = []
    for seed in cfg.rep_seeds():
        rows.extend(manifold_rows(cfg, seed))
    dh = len(rows[0]) - 5
    _write_csv(out / "manifold.csv", ["seed", "source", *[f"h{k + 1}" for k in range(dh)],
                                      "distance_to_hf", "correlation_to_hf", "verdict"],
               [[_fmt(v) for v in r] for r in rows])
    for r in rows:
        print(f"seed {r[0]} {r[1]:>8}: d={r[-3]:.3f} corr={r[-2]:.3f} {r[-1]}")
    return 0


# ---------------------------------------------------------------- rrmse

def cmd_rrmse(cfg: ExperimentConfig) -> int:
    """Tabulate the RRMSE of every low-fidelity source."""
    p = cfg.benchmark()
    rows = []
    for j in range(len(p.sources)):
        if j == p.space.hf_index:
            continue
        val = bm.rrmse(p, j, n_mc=cfg.n_mc, seed=cfg.seed)
        rows.append([p.source_names[j], val, p.reference_rrmse[j], cfg.n_mc, cfg.seed])
        print(f"{p.source_names[j]:>6}: {val:.4f} (table value {p.reference_rrmse[j]})")
    _write_csv(Path(cfg.out) / "rrmse.csv", ["source", "rrmse", "table_value", "n_mc", "seed"],
               [[_fmt(v) for v in r] for r in rows])
    return 0


# ---------------------------------------------------------------- emulate

def emulation_mse(problem: bm.BenchmarkProblem, seed: int, n_test: int = 1000,
                  fit_config: FitConfig | None = None):
    """Test MSE of an LMGP on all sources and of an HF-only GP, on a held-out Sobol grid.

    Returns a list of ``(model, source, mse)`` rows.
    """
    fc = dataclasses.replace(fit_config or FitConfig(), seed=seed)
    s = problem.space
    data = bm.initial_dataset(problem, seed)
    lm = fit(data, fc, s.lower, s.upper)
    hf_only = data.select_sources([s.hf_index])
    gp = fit(hf_only, fc, s.lower, s.upper)
    # an independent scrambled stream keeps the test grid disjoint from the design
    Xt, _ = bm.sobol_design(s, n_test, seed=int(np.random.SeedSequence([seed, 7919]).generate_state(1)[0]))
    rows = []
    for j, name in enumerate(problem.source_names):
        if data.counts[j] == 0:
            continue
        y = problem.evaluate(Xt, j)
        rows.append(("lmgp", name, float(np.mean((lm.predict(Xt, s=j) - y) ** 2))))
    y_hf = problem.evaluate(Xt, s.hf_index)
    rows.append(("gp_hf_only", problem.source_names[s.hf_index],
                 float(np.mean((gp.predict(Xt, s=0) - y_hf) ** 2))))
    return rows


def cmd_emulate(cfg: ExperimentConfig) -> int:
    """Compare LMGP and HF-only GP test errors."""
    p = cfg.benchmark()
    fc = cfg.bo_config(cfg.seed).fit
    rows = []
    for seed in cfg.rep_seeds():
        for model, src, mse in emulation_mse(p, seed, cfg.n_test, fc):
            rows.append([seed, model, src, mse])
            print(f"seed {seed} {model:>10} {src:>6}: mse={mse:.6g}")
    _write_csv(Path(cfg.out) / "emulate.csv", ["seed", "model", "source", "mse"],
               [[_fmt(v) for v in r] for r in rows])
    return 0


# ---------------------------------------------------------------- list

def cmd_list(cfg: ExperimentConfig) -> int:
    """List the built-in benchmark problems."""
    print(f"{'name':<12} {'dx':>3} {'sources':>7}  {'costs':<28} {'sizes':<20} table RRMSE")
    for name in bm.REGISTRY:
        p = bm.get_problem(name)
        costs = ",".join(f"{c:g}" for c in p.costs)
        sizes = ",".join(str(n) for n in p.initial_sizes)
        ref = ",".join("-" if v is None else f"{v:g}" for v in p.reference_rrmse)
        print(f"{name:<12} {p.space.dx:>3} {len(p.sources):>7}  {costs:<28} {sizes:<20} {ref}")
    return 0


COMMANDS = {"optimize": cmd_optimize, "manifold": cmd_manifold, "rrmse": cmd_rrmse,
            "emulate": cmd_emulate, "list": cmd_list}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("problem", nargs="?", help="benchmark name (overrides the config)")
    common.add_argument("--config", metavar="PATH", help="JSON experiment config")
    common.add_argument("--seed", type=int)
    common.add_argument("--reps", type=int)
    common.add_argument("--jobs", type=int)
    common.add_argument("--out", metavar="DIR", help=f"output directory (default ${OUT_ENV})")
    common.add_argument("--af", choices=["mfca", "ei", "pi", "kg"])
    common.add_argument("--no-exclude", action="store_true", help="skip step-0 source exclusion")
    common.add_argument("--budget", type=float, metavar="X")
    common.add_argument("--stagnation", type=int, metavar="N")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="mfcabo", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=(fn.__doc__ or name).splitlines()[0])
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
        return COMMANDS[args.command](cfg)
    except (ValueError, KeyError, FitError, OSError) as exc:
        print(f"mfcabo {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
