"""Batch front-end: mesh / solve / sweep / validate subcommands.

Configuration is flat key = value text with sections (INI).  Outputs are
deterministic for a fixed config and seed: CSV tables, legacy VTK files and
a flat key = value run manifest listing every artifact with its SHA-256.

Exit codes: 0 ok, 1 config error, 2 geometry error, 3 solver
non-convergence, 4 validation failure.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import sys
import time
from pathlib import Path

import numpy as np

from . import analysis, fem, geometry, mesh as meshmod
from .eigensolver import EigenResult, scalar_shift_root, solve_p, solve_p2
from .linalg import SolveError

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_GEOMETRY = 2
EXIT_SOLVER = 3
EXIT_VALIDATION = 4


class ConfigError(Exception):
    pass


def _fmt(x) -> str:
    return f"{float(x):.17g}"


DEFAULTS = {
    "domain": {
        "domain": "cusp",
        "disk_radius": "1.0",
        "n_lateral": "24",
        "n_arc": "48",
        "grading_q": "2.0",
        "target_h": "0.3",
    },
    "solver": {
        "p": "2.0",
        "weighted": "true",
        "refinements": "2",
        "eps_schedule": "auto",
        "restarts": "3",
        "seed": "0",
        "quadrature_order": "2",
    },
    "sweep": {
        "alphas": "1.25,1.5,1.75,2.5",
        "refinements": "3",
        "with_fp": "true",
        "n_lateral": "12",
        "n_arc": "24",
        "target_h": "0.4",
        "restarts": "1",
    },
    "output": {
        "output_dir": "steklov_out",
    },
}


def load_config(path) -> configparser.ConfigParser:
    cp = configparser.ConfigParser()
    cp.read_dict(DEFAULTS)
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except configparser.Error as exc:
        raise ConfigError(f"config parse error in {path}: {exc}") from None
    return cp


def _get(cp, section, key, conv):
    try:
        raw = cp.get(section, key)
    except (configparser.NoSectionError, configparser.NoOptionError):
        raise ConfigError(f"missing config key [{section}] {key}") from None
    try:
        if conv is bool:
            if raw.lower() in ("true", "1", "yes", "on"):
                return True
            if raw.lower() in ("false", "0", "no", "off"):
                return False
            raise ValueError(raw)
        return conv(raw)
    except ValueError:
        raise ConfigError(f"invalid value {raw!r} for config key [{section}] {key}") from None


def build_domain(cp) -> geometry.DomainSpec:
    kind = _get(cp, "domain", "domain", str).strip().lower()
    if kind == "cusp":
        alpha = _get(cp, "domain", "alpha", float)  # no default: must be explicit
        try:
            return geometry.DomainSpec.cusp(alpha)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    if kind == "disk":
        try:
            return geometry.DomainSpec.disk(_get(cp, "domain", "disk_radius", float))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    raise ConfigError(f"invalid value {kind!r} for config key [domain] domain")


def build_base_mesh(cp, spec: geometry.DomainSpec) -> meshmod.Mesh:
    grading = _get(cp, "domain", "grading_q", float)
    poly = geometry.boundary_polygon(
        spec,
        n_lateral=_get(cp, "domain", "n_lateral", int),
        n_arc=_get(cp, "domain", "n_arc", int),
        grading_q=grading)
    return meshmod.triangulate(poly, _get(cp, "domain", "target_h", float),
                               tip_grading=grading)


def solver_config(cp) -> fem.ProblemConfig:
    try:
        return fem.ProblemConfig(
            p=_get(cp, "solver", "p", float),
            weighted=_get(cp, "solver", "weighted", bool),
            quadrature_order=_get(cp, "solver", "quadrature_order", int))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


class Manifest:
    """Flat key = value run record, written even on partial failure."""

    def __init__(self, out_dir: Path, command: str, seed: int):
        self.out = out_dir
        self.entries: list[tuple[str, str]] = [("command", command), ("seed", str(seed))]
        self.t0 = time.time()

    def add(self, key: str, value):
        self.entries.append((key, str(value)))

    def add_config(self, cp):
        for section in cp.sections():
            for key, value in sorted(cp.items(section)):
                self.entries.append((f"config.{section}.{key}", value))

    def add_mesh(self, msh: meshmod.Mesh):
        self.add("mesh.vertices", msh.num_vertices)
        self.add("mesh.triangles", msh.num_triangles)
        self.add("mesh.h_max", _fmt(msh.h_max))
        self.add("mesh.h_min", _fmt(msh.h_min))
        if msh.t_star is not None:
            self.add("mesh.t_star", _fmt(msh.t_star))

    def add_artifact(self, path: Path):
        digest = hashlib.sha256(path.read_bytes()).hexdigest()
        self.entries.append((f"artifact.{path.name}", digest))

    def stage(self, name: str):
        self.entries.append((f"stage.{name}.seconds", f"{time.time() - self.t0:.3f}"))
        self.t0 = time.time()

    def write(self, status: str = "ok", error: str = ""):
        self.entries.append(("status", status))
        if error:
            self.entries.append(("error", error))
        lines = [f"{k} = {v}" for k, v in self.entries]
        (self.out / "manifest.txt").write_text("\n".join(lines) + "\n")


def cmd_mesh(cp, out: Path, seed: int) -> int:
    manifest = Manifest(out, "mesh", seed)
    manifest.add_config(cp)
    try:
        spec = build_domain(cp)
        msh = build_base_mesh(cp, spec)
        meshmod.validate(msh)
        manifest.add_mesh(msh)
        if spec.kind == "cusp":
            manifest.add("geometry.t_star", _fmt(geometry.cusp_cap_intersection(spec)))
        manifest.stage("mesh")
        files = {
            "mesh.vtk": lambda p: meshmod.write_vtk(msh, p, title="steklov-cusp mesh"),
            "vertices.csv": lambda p: meshmod.write_vertices_csv(msh, p),
            "triangles.csv": lambda p: meshmod.write_triangles_csv(msh, p),
            "boundary_edges.csv": lambda p: meshmod.write_boundary_csv(msh, p),
        }
        for name, writer in files.items():
            writer(out / name)
            manifest.add_artifact(out / name)
        manifest.stage("write")
    except geometry.GeometryError as exc:
        manifest.write("failed", str(exc))
        print(f"geometry error: {exc}", file=sys.stderr)
        return EXIT_GEOMETRY
    manifest.write()
    return EXIT_OK


RESULTS_HEADER = ("alpha,p,weighted,h_max,lambda,iterations,"
                  "constraint_residual,weakform_residual,converged")


def _result_row(alpha, cfg, msh, res: EigenResult) -> str:
    return ",".join([
        _fmt(alpha) if alpha is not None else "nan",
        _fmt(cfg.p), "true" if cfg.weighted else "false", _fmt(msh.h_max),
        _fmt(res.eigenvalue), str(res.iterations), _fmt(res.constraint_residual),
        _fmt(res.weakform_residual), "true" if res.converged else "false"])


def cmd_solve(cp, out: Path, seed: int) -> int:
    manifest = Manifest(out, "solve", seed)
    manifest.add_config(cp)
    try:
        spec = build_domain(cp)
        cfg = solver_config(cp)
        msh = build_base_mesh(cp, spec)
        for _ in range(_get(cp, "solver", "refinements", int) - 1):
            msh = meshmod.refine_uniform(msh)
        manifest.add_mesh(msh)
        manifest.stage("mesh")

        alpha = spec.alpha if spec.kind == "cusp" else None
        restarts = _get(cp, "solver", "restarts", int)
        results = [solve_p(msh, cfg, restarts=restarts, seed=seed)]
        if cfg.p == 2.0:
            results.append(solve_p2(msh, weighted=cfg.weighted))
        manifest.stage("solve")

        csv_path = out / "results.csv"
        with open(csv_path, "w") as fh:
            fh.write(RESULTS_HEADER + "\n")
            for res in results:
                fh.write(_result_row(alpha, cfg, msh, res) + "\n")
        manifest.add_artifact(csv_path)
        vtk_path = out / "eigenfunction.vtk"
        meshmod.write_vtk(msh, vtk_path, point_data={"u": results[0].u},
                          title="steklov-cusp eigenfunction")
        manifest.add_artifact(vtk_path)
        manifest.add("lambda", _fmt(results[0].eigenvalue))
        manifest.stage("write")

        if not all(r.converged for r in results):
            manifest.write("failed", "solver did not converge")
            print("solver did not converge", file=sys.stderr)
            return EXIT_SOLVER
    except geometry.GeometryError as exc:
        manifest.write("failed", str(exc))
        print(f"geometry error: {exc}", file=sys.stderr)
        return EXIT_GEOMETRY
    except SolveError as exc:
        manifest.write("failed", str(exc))
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    manifest.write()
    return EXIT_OK


def cmd_sweep(cp, out: Path, seed: int) -> int:
    manifest = Manifest(out, "sweep", seed)
    manifest.add_config(cp)
    try:
        raw = _get(cp, "sweep", "alphas", str)
        try:
            alphas = [float(tok) for tok in raw.split(",") if tok.strip()]
        except ValueError:
            raise ConfigError(f"invalid value {raw!r} for config key [sweep] alphas") from None
        if not all(a > 1.0 for a in alphas):
            raise ConfigError("all sweep alphas must exceed 1")
        cfg = solver_config(cp)
        report = analysis.alpha_sweep(
            cfg, alphas,
            refinements=_get(cp, "sweep", "refinements", int),
            n_lateral=_get(cp, "sweep", "n_lateral", int),
            n_arc=_get(cp, "sweep", "n_arc", int),
            grading_q=_get(cp, "domain", "grading_q", float),
            target_h=_get(cp, "sweep", "target_h", float),
            restarts=_get(cp, "sweep", "restarts", int),
            seed=seed,
            with_fp=_get(cp, "sweep", "with_fp", bool))
        manifest.stage("sweep")
        csv_path = out / "sweep.csv"
        report.to_csv(csv_path)
        manifest.add_artifact(csv_path)
        manifest.add("sweep.rows", len(report.rows))
        manifest.stage("write")
    except geometry.GeometryError as exc:
        manifest.write("failed", str(exc))
        print(f"geometry error: {exc}", file=sys.stderr)
        return EXIT_GEOMETRY
    manifest.write()
    return EXIT_OK


# -- built-in oracle suite -------------------------------------------------


def run_validation(inject_failure: bool = False) -> list[dict]:
    """Fast self-checks against independent oracles; see cmd_validate."""
    checks = []

    def record(name, expected, actual, tol):
        checks.append({"name": name, "expected": expected, "actual": actual,
                       "tolerance": tol, "passed": abs(actual - expected) <= tol})

    # disk p=2: first non-trivial eigenvalue of the unit disk is 1
    dpoly = geometry.boundary_polygon(geometry.DomainSpec.disk(1.0), n_arc=64)
    dm = meshmod.triangulate(dpoly, 0.25)
    lams = []
    msh = dm
    for _ in range(3):
        lams.append(solve_p2(msh, weighted=False).eigenvalue)
        msh = meshmod.refine_uniform(msh)
    rate = np.log2((lams[0] - lams[1]) / (lams[1] - lams[2]))
    extrap = lams[2] + (lams[2] - lams[1]) / (2.0 ** rate - 1.0)
    record("disk_p2_first_eigenvalue", 1.0, float(extrap), 0.02)

    # gradient vs central finite differences on a coarse cusp mesh
    cpoly = geometry.boundary_polygon(geometry.DomainSpec.cusp(2.0),
                                      n_lateral=8, n_arc=16)
    cm = meshmod.triangulate(cpoly, 0.6)
    rng = np.random.default_rng(42)
    worst = 0.0
    for p in (1.5, 2.0, 3.0):
        cfg = fem.ProblemConfig(p=p, weighted=True, eps_reg=1e-8)
        u = rng.standard_normal(cm.num_vertices)
        ga = fem.energy_gradient(cm, cfg, u)
        gf = np.zeros_like(ga)
        delta = 1e-6
        for i in range(cm.num_vertices):
            e = np.zeros(cm.num_vertices)
            e[i] = delta
            gf[i] = (fem.energy(cm, cfg, u + e) - fem.energy(cm, cfg, u - e)) / (2 * delta)
        worst = max(worst, float(np.abs(ga - gf).max() / np.abs(ga).max()))
    record("energy_gradient_fd", 0.0, worst, 1e-5)

    # p-homogeneity of the two norms
    cfg = fem.ProblemConfig(p=2.7, weighted=True)
    u = rng.standard_normal(cm.num_vertices)
    c = -1.7
    e_ratio = fem.energy(cm, cfg, c * u) / (abs(c) ** 2.7 * fem.energy(cm, cfg, u))
    b_ratio = fem.boundary_pnorm(cm, cfg, c * u) / (
        abs(c) ** 2.7 * fem.boundary_pnorm(cm, cfg, u))
    record("energy_homogeneity", 1.0, float(e_ratio), 1e-12)
    record("boundary_norm_homogeneity", 1.0, float(b_ratio), 1e-12)

    # two-point shift root: (3-c)|3-c| = c|c| at p=3 gives c = 1.5
    def toy(cshift):
        return (3.0 - cshift) * abs(3.0 - cshift) - cshift * abs(cshift)

    root = scalar_shift_root(toy, 0.0, 3.0, ftol=1e-14)
    record("shift_root_two_point", 1.5, float(root), 1e-10)

    # unit square zero-mean FP constant: 1/pi
    sq = geometry.polygon_from_points([(0, 0), (1, 0), (1, 1), (0, 1)])
    ms = meshmod.refine_uniform(meshmod.triangulate(sq, 0.15))
    C = analysis.fp_constant(ms, fem.ProblemConfig(p=2.0, weighted=False),
                             constraint="zero-mean")
    record("square_fp_constant", 1.0 / np.pi, float(C), 0.01 / np.pi)

    if inject_failure:
        record("injected_failure", 0.0, 1.0, 1e-12)
    return checks


def cmd_validate(out: Path, seed: int, inject_failure: bool = False) -> int:
    manifest = Manifest(out, "validate", seed)
    checks = run_validation(inject_failure=inject_failure)
    csv_path = out / "validation.csv"
    with open(csv_path, "w") as fh:
        fh.write("check,expected,actual,tolerance,passed\n")
        for c in checks:
            fh.write(f"{c['name']},{_fmt(c['expected'])},{_fmt(c['actual'])},"
                     f"{_fmt(c['tolerance'])},{'true' if c['passed'] else 'false'}\n")
    manifest.add_artifact(csv_path)
    n_failed = sum(0 if c["passed"] else 1 for c in checks)
    manifest.add("checks.total", len(checks))
    manifest.add("checks.failed", n_failed)
    for c in checks:
        status = "ok" if c["passed"] else "FAIL"
        print(f"{status:4s} {c['name']}: actual {c['actual']:.6g} vs "
              f"expected {c['expected']:.6g} (tol {c['tolerance']:.2g})")
    if n_failed:
        manifest.write("failed", f"{n_failed} checks failed")
        return EXIT_VALIDATION
    manifest.write()
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="steklov-cusp",
        description="Weighted Steklov p-eigenvalues on outward cuspidal domains")
    parser.add_argument("command", choices=["mesh", "solve", "sweep", "validate"])
    parser.add_argument("--config", help="path to the INI config file")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the seed from the config")
    parser.add_argument("--out", default=None, help="override the output directory")
    parser.add_argument("--inject-failure", action="store_true",
                        help=argparse.SUPPRESS)  # test hook for exit code 4
    args = parser.parse_args(argv)

    try:
        if args.command == "validate":
            cp = load_config(args.config) if args.config else \
                configparser.ConfigParser()
            if not args.config:
                cp.read_dict(DEFAULTS)
        else:
            if not args.config:
                raise ConfigError("--config is required for this command")
            cp = load_config(args.config)
        seed = args.seed if args.seed is not None else _get(cp, "solver", "seed", int)
        out = Path(args.out) if args.out else Path(_get(cp, "output", "output_dir", str))
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "mesh":
            return cmd_mesh(cp, out, seed)
        if args.command == "solve":
            return cmd_solve(cp, out, seed)
        if args.command == "sweep":
            return cmd_sweep(cp, out, seed)
        return cmd_validate(out, seed, inject_failure=args.inject_failure)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
