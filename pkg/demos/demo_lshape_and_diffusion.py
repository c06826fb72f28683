"""Two Neumann benchmarks without closed-form spectra.

First the L-shaped domain, whose lowest eigenfunction is singular at the
re-entrant corner (expected eigenvalue rate 4/3, smooth modes rate 2);
then the checkerboard diffusion problem on (-1,1)^2 with contrast delta,
whose second eigenvalue at delta = 10 converges with the reduced rate
driven by the interface singularity.
"""

from rbvem import bench

print("L-shaped domain, Neumann, dyadic meshes")
report = bench.run_experiment(
    bench.ExperimentConfig(
        problem="lshape_eig",
        method="rbvem",
        mesh_family="dyadic_lshape",
        sizes=(4, 8, 16),
        bc="neumann",
        num_eigs=5,
        level=4,
        l_samples=60,
        window=3,
    )
)
for line in report.summary_lines():
    print(line)

print("\ncheckerboard diffusion, Neumann, symmetric Voronoi meshes")
for delta in (10.0, 100.0):
    report = bench.run_experiment(
        bench.ExperimentConfig(
            problem="diffusion_eig",
            method="rbvem",
            mesh_family="voronoi_quadrants",
            sizes=(16, 32, 64),
            bc="neumann",
            delta=delta,
            level=4,
            l_samples=60,
            window=3,
        )
    )
    print(f"delta = {delta:g}")
    for line in report.summary_lines()[1:]:
        print(line)
