"""Show how the learned fidelity manifold flags biased low-fidelity sources.

Fits one emulator to the initial data of the five-source borehole problem
and prints each source's 2-D latent position, its distance to the HF source
and the implied correlation exp(-d^2).  Sources whose correlation falls
under the threshold are dropped before optimization starts.

    python3 demos/fidelity_manifold.py [seed]
"""

import sys

from mfcabo import BOConfig, get_problem, initial_dataset, rrmse, step0_exclude


def main(seed: int = 0):
    problem = get_problem("borehole")
    init = initial_dataset(problem, seed)
    cfg = BOConfig(seed=seed)
    s = problem.space
    kept, manifold, report = step0_exclude(init, cfg, s.lower, s.upper, s.hf_index, s.sign)

    print(f"{'source':>6} {'n':>4} {'h1':>8} {'h2':>8} {'dist':>7} {'corr':>7} {'RRMSE':>7}  verdict")
    for j, name in enumerate(problem.source_names):
        h1, h2 = manifold.positions[j]
        err = "-" if j == s.hf_index else f"{rrmse(problem, j):.3f}"
        verdict = "kept" if j in kept else "excluded"
        print(f"{name:>6} {init.counts[j]:>4} {h1:>8.3f} {h2:>8.3f} "
              f"{manifold.distances[s.hf_index, j]:>7.3f} {manifold.correlations[s.hf_index, j]:>7.3f} "
              f"{err:>7}  {verdict}")
    print(f"\nthreshold: correlation < {cfg.exclusion_correlation_min}")
    print("sources with a large RRMSE should sit far from HF in the manifold")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 0)
