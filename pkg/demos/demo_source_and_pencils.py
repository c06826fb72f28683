"""Source-problem convergence and the diagonal toy pencils.

The manufactured solution sin(pi x) sin(pi y) on the unit square converges
at first order in the energy seminorm and second order in L2.  The toy
pencil sweep shows how a stabilization parameter drags part of the
spectrum along lines (stiffness side) or hyperbolas (mass side) while the
remaining eigenvalues stay put.
"""

import numpy as np

from rbvem import bench

print("source problem, rbvem on dyadic meshes")
report = bench.run_experiment(
    bench.ExperimentConfig(
        problem="source_conv",
        method="rbvem",
        mesh_family="dyadic",
        sizes=(4, 8, 16),
        level=4,
        l_samples=60,
        window=3,
    )
)
for line in report.summary_lines():
    print(line)

for mode, label in (("alpha_stiff", "stiffness sweep"), ("beta_mass", "mass sweep")):
    report = bench.run_experiment(
        bench.ExperimentConfig(
            problem="param_sweep",
            sweep_mode=mode,
            sweep_values=(0.5, 1.0, 2.0, 4.0),
        )
    )
    print(f"\n{label}:")
    for p, lam, n_inf in report.extra["sweep"]:
        tail = f" (+{n_inf} infinite)" if n_inf else ""
        print(f"  p = {p:4g}: {np.round(lam, 6)}{tail}")
