"""Pin the pure-CCMO IGD threshold used by the TRIC2 baseline acceptance test.

Runs 30 pure-CCMO runs (seeds 1000..1029, disjoint from the test seeds) on
TRIC2 with n=5, N=100 and 10,000 evaluations, and prints median final IGD and
the threshold median * 1.2.
"""

import statistics

from cmoforge.engine import EngineConfig, run
from cmoforge.problems import make_problem


def main() -> None:
    problem = make_problem("TRIC2", 5)
    values = []
    for seed in range(1000, 1030):
        result = run(problem, EngineConfig(llm_offspring_fraction=0.0, seed=seed, metrics_every_generation=False))
        values.append(result.final.igd)
        print(f"seed {seed}: igd={result.final.igd!r} feasible={result.final.feasible_count}")
    median = statistics.median(values)
    print(f"median={median!r} threshold={median * 1.2!r}")


if __name__ == "__main__":
    main()
