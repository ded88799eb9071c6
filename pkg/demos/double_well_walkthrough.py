"""Walk through one cost-aware multi-fidelity run on the double-well problem.

The HF source costs 1000 per sample and the LF source costs 1.  The run
starts from five HF samples and no LF data, so the first LF queries also
teach the emulator how the two sources relate.

    python3 demos/double_well_walkthrough.py [seed]
"""

import sys
from collections import Counter

from mfcabo import BOConfig, get_problem, initial_dataset, run
from mfcabo.benchmarks import brute_force_optimum


def main(seed: int = 0):
    problem = get_problem("double_well")
    truth = brute_force_optimum(problem)
    print(f"brute-force HF minimum: {truth.value:.5f} at x = {truth.location[0]:.4f}")

    init = initial_dataset(problem, seed)
    print(f"initial data: {init.counts} samples per source, cost {init.total_cost:g}")

    hist = run(problem, init, BOConfig(seed=seed))
    print(f"\n{'k':>4} {'src':>4} {'x':>9} {'y':>10} {'cost so far':>12} {'best HF':>10}")
    for r in hist.records:
        mark = " *" if r.improved else ""
        print(f"{r.k:>4} {r.source_name:>4} {r.x[0]:>9.4f} {r.y:>10.4f} "
              f"{r.cumulative_cost:>12g} {r.incumbent:>10.5f}{mark}")

    counts = Counter(r.source_name for r in hist.records)
    print(f"\nstopped by {hist.termination} after {len(hist.records)} queries "
          f"({dict(counts)}), total cost {hist.final_cost:g}")
    print(f"best HF value {hist.final_incumbent:.5f}, first reached at cost {hist.cost_at_best():g}")
    print(f"gap to brute force: {hist.final_incumbent - truth.value:.2e}")

    ei = run(problem, init, BOConfig(seed=seed, af="ei"))
    print(f"\nsingle-fidelity EI on the same start: best {ei.final_incumbent:.5f} "
          f"first reached at cost {ei.cost_at_best():g}")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 0)
