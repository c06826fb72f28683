"""Dirichlet Laplace eigenvalues on the unit square.

Runs the reduced-basis virtual element method on a sequence of dyadic
meshes and prints the relative eigenvalue errors against the closed-form
values (i^2 + j^2) pi^2 together with the observed convergence rates
(expected: second order).
"""

import numpy as np

from rbvem import bench

config = bench.ExperimentConfig(
    problem="square_eig",
    method="rbvem",
    mesh_family="dyadic",
    sizes=(4, 8, 16),
    num_eigs=6,
    level=4,
    l_samples=60,
    window=3,
)
report = bench.run_experiment(config)

exact = report.references["exact"]
print("exact eigenvalues / pi^2:", np.round(exact / np.pi**2, 6))
print(f"{'h':>10} " + " ".join(f"{f'err_{i + 1}':>10}" for i in range(len(exact))))
for k, h in enumerate(report.h_values):
    errs = [report.errors[f"lambda_{i + 1}"][k] for i in range(len(exact))]
    print(f"{h:10.4f} " + " ".join(f"{e:10.2e}" for e in errs))

print("\nconvergence rates (log-log tail fit):")
for target, slope in report.slopes.items():
    print(f"  {target}: {slope:.3f}")
