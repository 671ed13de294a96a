"""Parameter-only enrichment on the two-parameter problem for both profit kinds.

Prints the selected indices and the parametric estimator after every step.
"""
import argparse

from scfem.adaptive import FineMeshSampler, sc_driver
from scfem.estimators import SpatialSampleSet
from scfem.problems import inclusion_reduced


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--eps", type=float, default=1e-3)
    ap.add_argument("--steps", type=int, default=15)
    ap.add_argument("--generations", type=int, default=3)
    args = ap.parse_args()
    problem = inclusion_reduced(2)
    pi = SpatialSampleSet.uniform(4096, 1, problem.label_of)
    sampler = FineMeshSampler(problem, pi, args.generations)
    for kind in ("workless", "with_work"):
        res = sc_driver(problem, args.eps, kind, args.steps, sampler=sampler)
        print(f"{kind}: {res.status}")
        print(f"  step 0: zeta {res.zeta_sc[0]:.4e}")
        for step, (i, z, I) in enumerate(zip(res.selected, res.zeta_sc[1:], res.index_sets[1:]),
                                         start=1):
            print(f"  step {step}: picked {i}, #I {len(I)}, zeta {z:.4e}")


if __name__ == "__main__":
    main()
