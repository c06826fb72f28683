"""Benchmark harness: experiments, reference values, errors, rates, CSV.

Experiments cover the unit-square Dirichlet eigenproblem, robustness with
respect to the reduced dimension, spurious-mode comparisons between the
stabilized and reduced-basis variants, the L-shaped Neumann benchmark, the
checkerboard piecewise-diffusivity benchmark, a manufactured source
problem, and the diagonal toy pencil sweeps.  Outputs are deterministic
CSV files with fixed schemas.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import eigsolve, polymesh, rb_offline, rb_online, vem_core

# Neumann Laplace eigenvalues on the L-shaped domain (-1,1)^2 minus the
# lower-right quadrant, from a high-order reference computation.
LSHAPE_NEUMANN_REFERENCE = np.array(
    [1.47562182408, 3.53403136678, 9.86960440109, 9.86960440109, 11.3894793979]
)

# First two Neumann eigenvalues of the checkerboard diffusion problem on
# (-1,1)^2 (coefficient delta on the quadrants with x*y > 0), high-order
# reference values per contrast.
CHECKERBOARD_REFERENCE = {
    2.0: (3.3175487634150, 3.3663241572600),
    10.0: (4.5338518716700, 6.2503321866030),
    100.0: (4.8931933248910, 7.2066754224920),
    1e8: (4.9348021587850, 7.2252112326920),
}


class ConfigError(ValueError):
    """Invalid experiment configuration."""


def square_dirichlet_exact(count):
    """First Dirichlet Laplace eigenvalues of the unit square, ascending."""
    kmax = int(math.isqrt(count) + 3)
    vals = sorted((i * i + j * j) for i in range(1, kmax + 1) for j in range(1, kmax + 1))
    return np.pi**2 * np.array(vals[:count], dtype=float)


def compute_eigen_errors(eigenvalues, exact):
    """Relative errors pairing the i-th computed with the i-th exact value."""
    eigenvalues = np.asarray(eigenvalues, dtype=float)
    exact = np.asarray(exact, dtype=float)
    if len(eigenvalues) < len(exact):
        raise ValueError(
            f"need {len(exact)} computed eigenvalues, got {len(eigenvalues)}"
        )
    lam = eigenvalues[: len(exact)]
    return np.abs(lam - exact) / exact


def detect_spurious(eigenvalues, exact, tol_match, lambda_max=None):
    """Indices/values whose relative distance to every exact value > tol.

    Only eigenvalues below ``lambda_max`` (when given) are examined; the
    exact list should extend beyond that window so near-boundary values
    can still be matched.
    """
    if not 0.0 < tol_match < 1.0:
        raise ValueError("tol_match must be in (0, 1)")
    exact = np.asarray(exact, dtype=float)
    out = []
    for i, lam in enumerate(np.asarray(eigenvalues, dtype=float)):
        if lambda_max is not None and lam >= lambda_max:
            continue
        if np.min(np.abs(lam - exact) / exact) > tol_match:
            out.append((i, float(lam)))
    return out


def convergence_rate(h_values, errors, window=3):
    """Least-squares slope of log(error) vs log(h) over the trailing window."""
    h_values = np.asarray(h_values, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if len(h_values) < 2 or len(h_values) != len(errors):
        raise ValueError("need at least two (h, error) pairs")
    if np.any(errors <= 0.0):
        raise ValueError("errors must be positive for a log-log fit")
    window = min(max(window, 2), len(h_values))
    return float(np.polyfit(np.log(h_values[-window:]), np.log(errors[-window:]), 1)[0])


def compute_field_errors(system: eigsolve.GlobalSystem, solution, exact_u, exact_grad):
    """Global (H1 seminorm, L2) errors of a discrete source solution.

    Reduced-basis methods: the solution is reconstructed on each cell's
    pulled-back fine mesh, the exact solution interpolated at the fine
    nodes, and both error norms evaluated with the exact pulled-back P1
    forms.  Stabilized VEM: the error is measured against the projected
    polynomial by degree-4 quadrature on the fan triangles (a diagnostic;
    ``exact_grad`` is used there).
    """
    if not system.cells:
        raise ValueError("assemble with keep_cells=True to compute field errors")
    h1_sq = 0.0
    l2_sq = 0.0
    for cell_idx, rec in enumerate(system.cells):
        u_cell = solution[np.asarray(system.mesh.cells[cell_idx])]
        poly = rec.polygon
        if rec.online is not None:
            db = rec.db
            tri, forms = db.kernel()
            q = vem_core.pinabla_fan_values(rec.proj)
            basis_fe = rb_online.reconstruct_basis_fe(db, rec.online.coeffs)
            uh = tri.fan_hat_matrix() @ (q @ u_cell) + basis_fe @ (rec.proj.r @ u_cell)
            phys = tri.physical_nodes(poly)
            err = exact_u(phys[:, 0], phys[:, 1]) - uh
            emap_plain = rec.element_map
            if not np.allclose(emap_plain.kappa, np.eye(2)):
                emap_plain = polymesh.build_element_map(poly)
            h1_sq += forms.quadratic_stiffness(emap_plain.theta, err)
            l2_sq += forms.quadratic_mass(emap_plain.gamma, err)
        else:
            coeff = rec.proj.pin_poly @ u_cell  # projected polynomial
            grad = coeff[1:] / poly.diameter
            pts, w = vem_core._quad_points(poly, vem_core._QP_DEG4, vem_core._QW_DEG4)
            vals = (
                coeff[0]
                + coeff[1] * (pts[:, 0] - poly.centroid[0]) / poly.diameter
                + coeff[2] * (pts[:, 1] - poly.centroid[1]) / poly.diameter
            )
            du = exact_grad(pts[:, 0], pts[:, 1])
            h1_sq += float(w @ ((du[0] - grad[0]) ** 2 + (du[1] - grad[1]) ** 2))
            l2_sq += float(w @ (exact_u(pts[:, 0], pts[:, 1]) - vals) ** 2)
    return math.sqrt(h1_sq), math.sqrt(l2_sq)


# ---------------------------------------------------------------------------
# offline database cache and mesh factory
# ---------------------------------------------------------------------------

_db_cache = {}


def get_offline_db(n, m, l=150, level=5, seed=None, sampler="mixture"):
    """Memoized offline database; seed defaults to 100 + N.

    A cached database with a larger reduced dimension is reused by
    truncation, so M sweeps and repeated experiments share one build.
    """
    if seed is None:
        seed = 100 + n
    key = (n, l, level, seed, sampler)
    cached = _db_cache.get(key)
    if cached is None or cached.m < m:
        cached = rb_offline.build_offline_db(
            n, m, l, seed=seed, level=level, sampler=sampler
        )
        _db_cache[key] = cached
    return cached.truncated(m) if cached.m > m else cached


def db_map_for_mesh(mesh, m, l=150, level=5, sampler="mixture"):
    """One offline database per vertex count occurring in the mesh."""
    return {
        n: get_offline_db(n, m, l=l, level=level, sampler=sampler)
        for n in sorted({len(c) for c in mesh.cells})
    }


def make_mesh(family, size, seed=7, lloyd_iters=10, max_tries=10):
    """Mesh factory with deterministic retry for degenerate Voronoi draws."""
    if family == "dyadic":
        return polymesh.generate_dyadic_mesh(size)
    if family == "octagon":
        return polymesh.generate_octagon_mesh(size)
    if family == "dyadic_lshape":
        return polymesh.generate_dyadic_lshape_mesh(size)
    generators = {
        "voronoi": polymesh.generate_voronoi_mesh,
        "voronoi_lshape": polymesh.generate_voronoi_lshape_mesh,
        "voronoi_quadrants": polymesh.generate_voronoi_quadrant_mesh,
    }
    if family not in generators:
        raise ConfigError(f"unknown mesh family {family!r}")
    last = None
    for attempt in range(max_tries):
        try:
            return generators[family](size, seed=seed + 1000 * attempt, lloyd_iters=lloyd_iters)
        except polymesh.DegenerateCellError as exc:
            last = exc
    raise polymesh.DegenerateCellError(
        f"no valid {family} mesh of size {size} after {max_tries} seeds: {last}"
    )


# ---------------------------------------------------------------------------
# experiment configuration and report
# ---------------------------------------------------------------------------

@dataclass
class ExperimentConfig:
    """Inputs of one benchmark run (mirrors the bench config file keys)."""

    problem: str = "square_eig"
    method: str = "rbvem"
    alpha: float = 1.0
    beta: float = 1.0
    chi: int = 1
    m: int = 1
    m_list: tuple = (1, 2, 5, 10, 20, 50)
    mesh_family: str = "dyadic"
    sizes: tuple = (4, 8, 16, 32)
    bc: str = "dirichlet"
    num_eigs: int = 10
    delta: float = 1.0
    seed: int = 7
    lloyd_iters: int = 10
    level: int = 5
    l_samples: int = 150
    window: int = 3
    sweep_values: tuple = (0.5, 1.0, 2.0)
    sweep_mode: str = "alpha_stiff"
    out: str | None = None

    def validate(self):
        problems = (
            "square_eig", "lshape_eig", "diffusion_eig",
            "source_conv", "m_robustness", "param_sweep",
        )
        if self.problem not in problems:
            raise ConfigError(f"unknown problem {self.problem!r}")
        if self.method not in ("vem", "rbvem", "rbstab"):
            raise ConfigError(f"unknown method {self.method!r}")
        if self.method != "vem" and (self.alpha, self.beta) != (1.0, 1.0):
            raise ConfigError("alpha/beta apply to the vem method only")
        if self.method != "rbstab" and self.chi != 1:
            raise ConfigError("chi applies to the rbstab method only")
        if self.method == "vem" and self.problem == "m_robustness":
            raise ConfigError("m_robustness requires a reduced-basis method")
        if self.chi not in (0, 1):
            raise ConfigError("chi must be 0 or 1")
        if self.bc not in ("dirichlet", "neumann"):
            raise ConfigError(f"unknown bc {self.bc!r}")
        return self


@dataclass
class ConvergenceReport:
    """Mesh sizes, per-target errors, tail slopes and references used."""

    problem: str
    h_values: np.ndarray
    errors: dict  # target name -> array of errors per h
    slopes: dict  # target name -> least-squares tail slope
    references: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def summary_lines(self):
        out = [f"{self.problem}: h = {np.array2string(self.h_values, precision=4)}"]
        for target, slope in self.slopes.items():
            errs = self.errors.get(target)
            tail = f"{errs[-1]:.3e}" if errs is not None and len(errs) else "-"
            out.append(f"  {target}: slope {slope:.3f} (final error {tail})")
        return out


def _fmt(x):
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def write_csv(path, header, rows):
    with open(path, "w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _checked_spectrum(reduced, num_eigs, bc):
    """Solve and enforce the residual and M-orthonormality quality gates."""
    extra = 1 if bc == "neumann" else 0
    spectrum = eigsolve.solve_gevp(reduced.k, reduced.m, num_eigs + extra, bc=bc)
    if bc == "neumann":
        spectrum = eigsolve.drop_zero_modes(spectrum)
    if len(spectrum.eigenvalues):
        if spectrum.residuals.max() > 1e-8:
            raise RuntimeError(
                f"eigenpair residual {spectrum.residuals.max():.3e} above 1e-8"
            )
        x = spectrum.eigenvectors
        gram = x.T @ (reduced.m @ x)
        if np.abs(gram - np.eye(gram.shape[0])).max() > 1e-8:
            raise RuntimeError("eigenvectors lost M-orthonormality beyond 1e-8")
    return spectrum


def _solve_eigs(config, mesh, num_eigs, kappa_by_region=None):
    db_map = None
    if config.method in ("rbvem", "rbstab"):
        db_map = db_map_for_mesh(mesh, config.m, l=config.l_samples, level=config.level)
    system = eigsolve.assemble_global(
        mesh,
        config.method,
        alpha=config.alpha,
        beta=config.beta,
        chi=config.chi,
        db_map=db_map,
        kappa_by_region=kappa_by_region,
        bc=config.bc,
        keep_cells=False,
    )
    reduced = eigsolve.apply_boundary_conditions(system)
    return _checked_spectrum(reduced, num_eigs, config.bc)


def _eigen_convergence(config, meshes, exact):
    rows = []
    h_values = []
    errors = np.empty((len(meshes), len(exact)))
    for k, mesh in enumerate(meshes):
        spectrum = _solve_eigs(config, mesh, len(exact))
        errs = compute_eigen_errors(spectrum.eigenvalues, exact)
        errors[k] = errs
        h_values.append(mesh.h)
        for i in range(len(exact)):
            rows.append((mesh.h, i + 1, spectrum.eigenvalues[i], exact[i], errs[i]))
    slopes = {
        f"lambda_{i + 1}": convergence_rate(h_values, errors[:, i], config.window)
        for i in range(len(exact))
    }
    report = ConvergenceReport(
        problem=config.problem,
        h_values=np.asarray(h_values),
        errors={f"lambda_{i + 1}": errors[:, i] for i in range(len(exact))},
        slopes=slopes,
        references={"exact": exact},
    )
    return report, rows


def run_experiment(config: ExperimentConfig) -> ConvergenceReport:
    """Dispatch one experiment and write its CSV outputs (if out is set)."""
    config.validate()
    out = config.out

    if config.problem == "square_eig":
        exact = square_dirichlet_exact(config.num_eigs)
        meshes = [
            make_mesh(config.mesh_family, s, seed=config.seed, lloyd_iters=config.lloyd_iters)
            for s in config.sizes
        ]
        report, rows = _eigen_convergence(config, meshes, exact)
        if out:
            write_csv(f"{out}_eigenvalues.csv",
                      ["h", "index", "lambda_h", "lambda_exact", "rel_error"], rows)
            write_csv(f"{out}_convergence.csv", ["target", "slope", "window", "points"],
                      [(t, s, config.window, len(config.sizes)) for t, s in report.slopes.items()])
        return report

    if config.problem == "lshape_eig":
        if config.bc != "neumann":
            raise ConfigError("lshape_eig is a Neumann benchmark")
        exact = LSHAPE_NEUMANN_REFERENCE
        meshes = [
            make_mesh(config.mesh_family, s, seed=config.seed, lloyd_iters=config.lloyd_iters)
            for s in config.sizes
        ]
        report, rows = _eigen_convergence(config, meshes, exact)
        if out:
            write_csv(f"{out}_eigenvalues.csv",
                      ["h", "index", "lambda_h", "lambda_exact", "rel_error"], rows)
            write_csv(f"{out}_convergence.csv", ["target", "slope", "window", "points"],
                      [(t, s, config.window, len(config.sizes)) for t, s in report.slopes.items()])
        return report

    if config.problem == "diffusion_eig":
        if config.bc != "neumann":
            raise ConfigError("diffusion_eig is a Neumann benchmark")
        if config.delta not in CHECKERBOARD_REFERENCE:
            raise ConfigError(f"no reference eigenvalues for delta={config.delta}")
        exact = np.array(CHECKERBOARD_REFERENCE[config.delta])
        meshes = [
            make_mesh(config.mesh_family, s, seed=config.seed, lloyd_iters=config.lloyd_iters)
            for s in config.sizes
        ]
        rows, h_values = [], []
        errors = np.empty((len(meshes), 2))
        for k, mesh in enumerate(meshes):
            db_map = None
            if config.method in ("rbvem", "rbstab"):
                db_map = db_map_for_mesh(mesh, config.m, l=config.l_samples, level=config.level)
            system = eigsolve.assemble_global(
                mesh, config.method, alpha=config.alpha, beta=config.beta, chi=config.chi,
                db_map=db_map, kappa_by_region={0: 1.0, 1: config.delta},
                bc="neumann", keep_cells=False,
            )
            reduced = eigsolve.apply_boundary_conditions(system)
            spectrum = _checked_spectrum(reduced, 2, "neumann")
            errs = compute_eigen_errors(spectrum.eigenvalues, exact)
            errors[k] = errs
            h_values.append(mesh.h)
            for i in range(2):
                rows.append((mesh.h, i + 1, spectrum.eigenvalues[i], exact[i], errs[i]))
        slopes = {
            f"lambda_{i + 1}": convergence_rate(h_values, errors[:, i], config.window)
            for i in range(2)
        }
        report = ConvergenceReport(
            problem=config.problem,
            h_values=np.asarray(h_values),
            errors={f"lambda_{i + 1}": errors[:, i] for i in range(2)},
            slopes=slopes,
            references={"exact": exact, "delta": config.delta},
        )
        if out:
            write_csv(f"{out}_eigenvalues.csv",
                      ["h", "index", "lambda_h", "lambda_exact", "rel_error"], rows)
            write_csv(f"{out}_convergence.csv", ["target", "slope", "window", "points"],
                      [(t, s, config.window, len(config.sizes)) for t, s in report.slopes.items()])
        return report

    if config.problem == "source_conv":
        u = lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y)
        grad = lambda x, y: (
            np.pi * np.cos(np.pi * x) * np.sin(np.pi * y),
            np.pi * np.sin(np.pi * x) * np.cos(np.pi * y),
        )
        f = lambda x, y: 2.0 * np.pi**2 * u(x, y)
        h_values, h1_errors, l2_errors = [], [], []
        for s in config.sizes:
            mesh = make_mesh(config.mesh_family, s, seed=config.seed,
                             lloyd_iters=config.lloyd_iters)
            db_map = None
            if config.method in ("rbvem", "rbstab"):
                db_map = db_map_for_mesh(mesh, config.m, l=config.l_samples, level=config.level)
            system = eigsolve.assemble_global(
                mesh, config.method, alpha=config.alpha, beta=config.beta, chi=config.chi,
                db_map=db_map, bc="dirichlet", keep_cells=True,
            )
            load = np.zeros(mesh.n_points)
            for ci, rec in enumerate(system.cells):
                idx = np.asarray(mesh.cells[ci])
                load[idx] += vem_core.element_load(rec.polygon, f, rec.proj)
            solution = eigsolve.solve_dirichlet(
                system, np.zeros(int(mesh.boundary_vertex.sum())), load
            )
            h1, l2 = compute_field_errors(system, solution, u, grad)
            h_values.append(mesh.h)
            h1_errors.append(h1)
            l2_errors.append(l2)
        slopes = {
            "h1": convergence_rate(h_values, h1_errors, config.window),
            "l2": convergence_rate(h_values, l2_errors, config.window),
        }
        report = ConvergenceReport(
            problem="source_conv",
            h_values=np.asarray(h_values),
            errors={"h1": np.asarray(h1_errors), "l2": np.asarray(l2_errors)},
            slopes=slopes,
        )
        if out:
            write_csv(f"{out}_convergence.csv", ["target", "slope", "window", "points"],
                      [(t, s, config.window, len(config.sizes)) for t, s in report.slopes.items()])
        return report

    if config.problem == "m_robustness":
        mesh = make_mesh(config.mesh_family, config.sizes[0], seed=config.seed,
                         lloyd_iters=config.lloyd_iters)
        m_max = max(config.m_list)
        base = db_map_for_mesh(mesh, m_max, l=config.l_samples, level=config.level)
        rows = []
        lams = []
        for m in config.m_list:
            db_map = {n: db.truncated(m) for n, db in base.items()}
            system = eigsolve.assemble_global(
                mesh, config.method, chi=config.chi, db_map=db_map,
                bc=config.bc, keep_cells=False,
            )
            reduced = eigsolve.apply_boundary_conditions(system)
            spectrum = _checked_spectrum(reduced, config.num_eigs, config.bc)
            lams.append(spectrum.eigenvalues[: config.num_eigs])
            for i, lam in enumerate(lams[-1]):
                rows.append((m, i + 1, lam))
        lams = np.array(lams)
        spread = (lams.max(axis=0) - lams.min(axis=0)) / lams.mean(axis=0)
        report = ConvergenceReport(
            problem="m_robustness",
            h_values=np.asarray([mesh.h]),
            errors={"spread": spread},
            slopes={},
            extra={"m_list": tuple(config.m_list), "eigenvalues": lams},
        )
        if out:
            write_csv(f"{out}_robustness.csv", ["M", "index", "lambda_h"], rows)
        return report

    # param_sweep
    c1 = np.diag([3.0, 4.0, 5.0, 6.0, 0.0, 0.0])
    c2 = np.diag([0.0, 0.0, 0.0, 0.0, 1.0, 2.0])
    sweep = eigsolve.toy_parametric_sweep(c1, c2, config.sweep_mode, config.sweep_values)
    rows = []
    for p, lam, _ in sweep:
        for i, v in enumerate(lam):
            rows.append((p, i + 1, v))
    report = ConvergenceReport(
        problem="param_sweep",
        h_values=np.asarray(config.sweep_values, dtype=float),
        errors={},
        slopes={},
        extra={"sweep": sweep, "mode": config.sweep_mode},
    )
    if out:
        write_csv(f"{out}_sweep.csv", ["param", "index", "lambda"], rows)
    return report


# ---------------------------------------------------------------------------
# key=value config files
# ---------------------------------------------------------------------------

_TUPLE_KEYS = {"sizes", "m_list", "sweep_values"}
_INT_KEYS = {"chi", "m", "num_eigs", "seed", "lloyd_iters", "level", "l_samples", "window"}
_FLOAT_KEYS = {"alpha", "beta", "delta"}


def parse_config_file(path) -> ExperimentConfig:
    """Read a key=value experiment description."""
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            text = raw.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ConfigError(f"line {lineno}: expected key=value")
            key, val = (t.strip() for t in text.split("=", 1))
            if key not in ExperimentConfig.__dataclass_fields__:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            try:
                if key in _TUPLE_KEYS:
                    parts = [p for p in val.replace(",", " ").split() if p]
                    values[key] = tuple(
                        float(p) if key == "sweep_values" else int(p) for p in parts
                    )
                elif key in _INT_KEYS:
                    values[key] = int(val)
                elif key in _FLOAT_KEYS:
                    values[key] = float(val)
                else:
                    values[key] = val
            except ValueError as exc:
                raise ConfigError(f"line {lineno}: {exc}") from exc
    return ExperimentConfig(**values).validate()
