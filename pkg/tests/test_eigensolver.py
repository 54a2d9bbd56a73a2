import numpy as np
import pytest

from steklov_cusp import (ProblemConfig, SolveError, boundary_pnorm,
                          boundary_weighted_length, constraint_functional,
                          orthogonalize_shift, rayleigh, refine_uniform, solve_p,
                          solve_p2, steklov_p2_spectrum, weakform_residual)
from steklov_cusp import fem
from steklov_cusp.eigensolver import scalar_shift_root, _descent, _eps_schedule


def test_rayleigh_scale_invariance(cusp15_mesh):
    cfg = ProblemConfig(p=2.5, weighted=True)
    rng = np.random.default_rng(2)
    u = rng.standard_normal(cusp15_mesh.num_vertices)
    r0 = rayleigh(cusp15_mesh, cfg, u)
    for c in (2.0, -3.7, 1e3, 1e-4):
        assert rayleigh(cusp15_mesh, cfg, c * u) == pytest.approx(r0, rel=1e-12)


def test_rayleigh_constant_is_zero(disk_mesh):
    # zero up to fp cancellation in the per-triangle gradient sums
    cfg = ProblemConfig(p=2.0, weighted=False)
    assert abs(rayleigh(disk_mesh, cfg, np.ones(disk_mesh.num_vertices))) < 1e-20


def test_rayleigh_zero_boundary_error(square_mesh):
    cfg = ProblemConfig(p=2.0, weighted=False)
    u = np.zeros(square_mesh.num_vertices)
    with pytest.raises(SolveError, match="infinite"):
        rayleigh(square_mesh, cfg, u)


def test_shift_root_two_point_toy():
    # trace 3 on unit measure against 0 on unit measure at p = 3
    def toy(c):
        return (3.0 - c) * abs(3.0 - c) - c * abs(c)

    for method in ("bisection", "hybrid"):
        root = scalar_shift_root(toy, 0.0, 3.0, ftol=1e-14, method=method)
        assert root == pytest.approx(1.5, abs=1e-10)


def test_shift_bisection_newton_agree(cusp15_mesh):
    cfg = ProblemConfig(p=2.7, weighted=True)
    rng = np.random.default_rng(6)
    u = rng.standard_normal(cusp15_mesh.num_vertices)
    ua = orthogonalize_shift(cusp15_mesh, cfg, u, method="bisection")
    ub = orthogonalize_shift(cusp15_mesh, cfg, u, method="hybrid")
    assert np.abs(ua - ub).max() <= 1e-10


def test_shift_p2_weighted_mean(cusp15_mesh):
    msh = cusp15_mesh
    cfg = ProblemConfig(p=2.0, weighted=True)
    rng = np.random.default_rng(9)
    u = rng.standard_normal(msh.num_vertices)
    shifted = orthogonalize_shift(msh, cfg, u)
    ones = np.ones(msh.num_vertices)
    mean = constraint_functional(msh, cfg, u) / boundary_weighted_length(msh)
    assert np.allclose(u - shifted, mean * ones, atol=1e-11)


def test_shift_odd_disk_is_zero(disk_mesh):
    for p in (1.5, 2.0, 3.0):
        cfg = ProblemConfig(p=p, weighted=False)
        u = disk_mesh.vertices[:, 0].copy()
        shifted = orthogonalize_shift(disk_mesh, cfg, u)
        assert np.abs(u - shifted).max() <= 1e-11


def test_shift_constant_trace_error(disk_mesh):
    cfg = ProblemConfig(p=2.0, weighted=False)
    with pytest.raises(SolveError, match="admissible"):
        orthogonalize_shift(disk_mesh, cfg, np.ones(disk_mesh.num_vertices))


def test_shift_enforces_constraint(cusp15_mesh):
    cfg = ProblemConfig(p=1.5, weighted=True)
    rng = np.random.default_rng(10)
    u = rng.standard_normal(cusp15_mesh.num_vertices)
    shifted = orthogonalize_shift(cusp15_mesh, cfg, u)
    measure = boundary_weighted_length(cusp15_mesh)
    assert abs(constraint_functional(cusp15_mesh, cfg, shifted)) <= 1e-12 * measure


def test_p2_disk_spectrum(disk_mesh_chain):
    lams = []
    for msh in disk_mesh_chain:
        vals, _, _ = steklov_p2_spectrum(msh, weighted=False, k=5)
        lams.append(vals)
    finest = lams[-1]
    assert finest[0] == pytest.approx(1.0, abs=0.01)
    assert finest[1] == pytest.approx(finest[0], rel=0.01)  # multiplicity two
    assert finest[2] == pytest.approx(2.0, abs=0.05)
    # Richardson extrapolation of the first eigenvalue
    seq = [l[0] for l in lams]
    rate = np.log2((seq[0] - seq[1]) / (seq[1] - seq[2]))
    extrap = seq[2] + (seq[2] - seq[1]) / (2.0 ** rate - 1.0)
    assert abs(extrap - 1.0) < 0.01


def test_solve_p2_result_contract(cusp15_mesh):
    res = solve_p2(cusp15_mesh, weighted=True)
    assert res.eigenvalue > 0.0
    assert res.converged
    cfg = ProblemConfig(p=2.0, weighted=True)
    assert boundary_pnorm(cusp15_mesh, cfg, res.u) == pytest.approx(1.0, abs=1e-10)
    measure = boundary_weighted_length(cusp15_mesh)
    assert res.constraint_residual <= 1e-8 * measure
    assert res.weakform_residual <= 1e-8


def test_solve_p2_weighted_stable_under_refinement(cusp15_mesh):
    r0 = solve_p2(cusp15_mesh, weighted=True)
    r1 = solve_p2(refine_uniform(cusp15_mesh), weighted=True)
    assert abs(r1.eigenvalue - r0.eigenvalue) / r0.eigenvalue <= 0.05


def test_solve_p_matches_p2_on_cusp(cusp15_mesh):
    direct = solve_p2(cusp15_mesh, weighted=True)
    cfg = ProblemConfig(p=2.0, weighted=True)
    res = solve_p(cusp15_mesh, cfg, restarts=1, seed=0)
    assert res.converged
    assert abs(res.eigenvalue - direct.eigenvalue) / direct.eigenvalue <= 1e-3


def test_solve_p_invariant_under_initial_scaling(cusp15_mesh):
    cfg = ProblemConfig(p=2.5, weighted=True)
    u0 = solve_p2(cusp15_mesh, weighted=True).u
    r1 = solve_p(cusp15_mesh, cfg, restarts=1, seed=0, u0=u0)
    r2 = solve_p(cusp15_mesh, cfg, restarts=1, seed=0, u0=-123.0 * u0)
    assert r1.eigenvalue == pytest.approx(r2.eigenvalue, abs=1e-12)


def test_solve_p_smoothness_in_p(disk_mesh):
    msh = refine_uniform(disk_mesh)
    lams = {}
    for p in (1.9, 2.0, 2.1):
        res = solve_p(msh, ProblemConfig(p=p, weighted=False), restarts=1, seed=0)
        assert res.converged
        lams[p] = res.eigenvalue
    assert lams[1.9] < lams[2.0] < lams[2.1]
    for p in (1.9, 2.1):
        assert abs(lams[p] - lams[2.0]) / lams[2.0] < 0.15


def test_solve_p_result_contract(disk_mesh):
    cfg = ProblemConfig(p=2.5, weighted=False)
    res = solve_p(disk_mesh, cfg, restarts=2, seed=0)
    assert res.converged and res.eigenvalue > 0.0
    assert boundary_pnorm(disk_mesh, cfg, res.u) == pytest.approx(1.0, abs=1e-10)
    assert res.weakform_residual <= 1e-6
    # lambda equals the energy at unit boundary norm, i.e. the Rayleigh value
    assert res.eigenvalue == pytest.approx(rayleigh(disk_mesh, cfg, res.u), rel=1e-12)
    hist = res.energy_history
    assert all(b <= a * (1.0 + 1e-12) for a, b in zip(hist, hist[1:]))


def test_descent_constraint_at_every_accepted_step(disk_mesh):
    cfg = ProblemConfig(p=2.5, weighted=False)
    K, M, _ = fem.assemble_p2(disk_mesh, weighted=False)
    measure = boundary_weighted_length(disk_mesh)
    seen = []

    def on_accept(u):
        seen.append(abs(constraint_functional(disk_mesh, cfg, u)))

    u0 = disk_mesh.vertices[:, 0]
    _descent(disk_mesh, cfg, u0, fem.boundary_pnorm, fem.boundary_pnorm_gradient,
             K + M, _eps_schedule(cfg), on_accept=on_accept)
    assert len(seen) > 0
    assert max(seen) <= 1e-8 * measure


def test_weighted_quotient_dominates_unweighted(cusp15_mesh):
    # for w <= 1 the weighted denominator is smaller, so for any fixed field
    # the weighted quotient dominates the unweighted one
    rng = np.random.default_rng(33)
    for p in (1.5, 2.0, 3.0):
        cfg_w = ProblemConfig(p=p, weighted=True)
        cfg_u = ProblemConfig(p=p, weighted=False)
        for _ in range(5):
            v = rng.standard_normal(cusp15_mesh.num_vertices)
            assert rayleigh(cusp15_mesh, cfg_w, v) >= rayleigh(cusp15_mesh, cfg_u, v)


def test_weakform_residual_random_field_is_large(cusp15_mesh):
    cfg = ProblemConfig(p=2.0, weighted=True)
    rng = np.random.default_rng(40)
    u = rng.standard_normal(cusp15_mesh.num_vertices)
    lam = rayleigh(cusp15_mesh, cfg, u)
    assert weakform_residual(cusp15_mesh, cfg, u, lam) > 1e-3
