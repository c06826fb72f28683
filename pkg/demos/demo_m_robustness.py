"""Independence of the computed spectrum from the reduced dimension.

Sweeps the number of reduced basis functions per boundary index on a
fixed mesh and reports, for each eigenvalue index, the relative spread of
the computed values across the sweep -- the eigenvalues sit on horizontal
lines.
"""

import numpy as np

from rbvem import bench

config = bench.ExperimentConfig(
    problem="m_robustness",
    method="rbvem",
    mesh_family="dyadic",
    sizes=(8,),
    m_list=(1, 2, 5, 10, 20),
    num_eigs=10,
    level=4,
    l_samples=60,
)
report = bench.run_experiment(config)

lams = report.extra["eigenvalues"] / np.pi**2
m_list = report.extra["m_list"]
print(f"{'M':>4} " + " ".join(f"{f'lam_{i + 1}':>9}" for i in range(lams.shape[1])))
for m, row in zip(m_list, lams):
    print(f"{m:4d} " + " ".join(f"{v:9.5f}" for v in row))
print("\nrelative spread per index:")
print("  " + " ".join(f"{s:9.1e}" for s in report.errors["spread"]))
