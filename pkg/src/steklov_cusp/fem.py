"""P1 discretizations: p-Dirichlet energy, weighted boundary functionals,
and the p=2 stiffness/mass/boundary-mass matrices.

Discrete fields are plain numpy vectors indexed by mesh vertices.  All
boundary integrals use per-edge Gauss quadrature of the linear trace, with
the weight sampled on the exact curve through each edge's (tag, parameter)
data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import SparseSym
from .mesh import DEFAULT_QUAD_ORDER, Mesh

# 6-point symmetric triangle rule, exact through degree 4 (weights sum to 1)
_TRI_QP = np.array([
    [0.108103018168070, 0.445948490915965, 0.445948490915965],
    [0.445948490915965, 0.108103018168070, 0.445948490915965],
    [0.445948490915965, 0.445948490915965, 0.108103018168070],
    [0.816847572980459, 0.091576213509771, 0.091576213509771],
    [0.091576213509771, 0.816847572980459, 0.091576213509771],
    [0.091576213509771, 0.091576213509771, 0.816847572980459],
])
_TRI_QW = np.array([0.223381589678011] * 3 + [0.109951743655322] * 3)


@dataclass(frozen=True)
class ProblemConfig:
    """Exponent p, weighted/unweighted switch, gradient regularization."""

    p: float = 2.0
    weighted: bool = True
    eps_reg: float = 0.0
    quadrature_order: int = DEFAULT_QUAD_ORDER

    def __post_init__(self):
        if not self.p > 1.0:
            raise ValueError(f"p must exceed 1, got {self.p}")
        if self.eps_reg < 0.0:
            raise ValueError("eps_reg must be non-negative")
        if not 1 <= self.quadrature_order <= 5:
            raise ValueError("quadrature_order must be in 1..5")


def as_field(mesh: Mesh, values) -> np.ndarray:
    u = np.asarray(values, dtype=float)
    if u.shape != (mesh.num_vertices,):
        raise ValueError(f"field length {u.shape} does not match mesh "
                         f"({mesh.num_vertices} vertices)")
    if not np.all(np.isfinite(u)):
        raise ValueError("field contains non-finite entries")
    return u


def _signed_power(u: np.ndarray, p: float) -> np.ndarray:
    """|u|**(p-2) * u with the removable singularity at 0 set to 0."""
    out = np.zeros_like(u)
    nz = u != 0.0
    out[nz] = np.abs(u[nz]) ** (p - 2.0) * u[nz]
    return out


def _magnitude_power(u: np.ndarray, p: float) -> np.ndarray:
    """|u|**(p-2) with the value at 0 set to 0 (only used inside integrals)."""
    out = np.zeros_like(u)
    nz = u != 0.0
    out[nz] = np.abs(u[nz]) ** (p - 2.0)
    return out


def _tri_gradients(mesh: Mesh, u: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    areas, grads = mesh.tri_geometry()
    uv = u[mesh.triangles]  # (T, 3)
    g = np.einsum("tk,tkd->td", uv, grads)
    g2 = np.einsum("td,td->t", g, g)
    return areas, g, g2


def energy(mesh: Mesh, cfg: ProblemConfig, u) -> float:
    """Regularized p-Dirichlet energy sum area * (|grad u|^2 + eps^2)^(p/2)."""
    u = as_field(mesh, u)
    areas, _, g2 = _tri_gradients(mesh, u)
    return float(np.sum(areas * (g2 + cfg.eps_reg ** 2) ** (cfg.p / 2.0)))


def energy_gradient(mesh: Mesh, cfg: ProblemConfig, u) -> np.ndarray:
    """Exact derivative of energy: p * area * (|g|^2+eps^2)^((p-2)/2) g . grad(phi_i)."""
    u = as_field(mesh, u)
    areas, g, g2 = _tri_gradients(mesh, u)
    _, grads = mesh.tri_geometry()
    s = g2 + cfg.eps_reg ** 2
    factor = np.zeros_like(s)
    nz = s > 0.0
    factor[nz] = s[nz] ** ((cfg.p - 2.0) / 2.0)
    coef = cfg.p * areas * factor  # (T,)
    contrib = coef[:, None] * np.einsum("td,tkd->tk", g, grads)
    return np.bincount(mesh.triangles.ravel(), weights=contrib.ravel(),
                       minlength=mesh.num_vertices)


def _boundary_samples(mesh: Mesh, cfg: ProblemConfig, u: np.ndarray):
    xi, gw, w = mesh.boundary_quadrature(cfg.quadrature_order)
    b = mesh.boundary
    uq = u[b.v0][:, None] * (1.0 - xi)[None, :] + u[b.v1][:, None] * xi[None, :]
    if not cfg.weighted:
        w = np.ones_like(w)
    jac = b.length[:, None] * gw[None, :]
    return xi, uq, w, jac


def boundary_pnorm(mesh: Mesh, cfg: ProblemConfig, u) -> float:
    """Integral of |u|^p w over the boundary (w = 1 in unweighted mode)."""
    u = as_field(mesh, u)
    _, uq, w, jac = _boundary_samples(mesh, cfg, u)
    return float(np.sum(jac * w * np.abs(uq) ** cfg.p))


def boundary_pnorm_gradient(mesh: Mesh, cfg: ProblemConfig, u) -> np.ndarray:
    """Derivative of boundary_pnorm: p * int |u|^(p-2) u phi_i w ds."""
    u = as_field(mesh, u)
    xi, uq, w, jac = _boundary_samples(mesh, cfg, u)
    s = cfg.p * jac * w * _signed_power(uq, cfg.p)
    b = mesh.boundary
    g = np.zeros(mesh.num_vertices)
    np.add.at(g, b.v0, np.sum(s * (1.0 - xi)[None, :], axis=1))
    np.add.at(g, b.v1, np.sum(s * xi[None, :], axis=1))
    return g


def constraint_functional(mesh: Mesh, cfg: ProblemConfig, u) -> float:
    """Weighted boundary orthogonality functional int |u|^(p-2) u w ds."""
    u = as_field(mesh, u)
    _, uq, w, jac = _boundary_samples(mesh, cfg, u)
    return float(np.sum(jac * w * _signed_power(uq, cfg.p)))


def constraint_gradient_direction(mesh: Mesh, cfg: ProblemConfig, u) -> np.ndarray:
    """Nodal vector int |u|^(p-2) phi_i w ds, the constraint multiplier direction."""
    u = as_field(mesh, u)
    xi, uq, w, jac = _boundary_samples(mesh, cfg, u)
    s = jac * w * _magnitude_power(uq, cfg.p)
    b = mesh.boundary
    g = np.zeros(mesh.num_vertices)
    np.add.at(g, b.v0, np.sum(s * (1.0 - xi)[None, :], axis=1))
    np.add.at(g, b.v1, np.sum(s * xi[None, :], axis=1))
    return g


def boundary_weighted_measure(mesh: Mesh, cfg: ProblemConfig) -> float:
    """Total measure int w ds (or the plain perimeter in unweighted mode)."""
    return boundary_pnorm(mesh, cfg, np.ones(mesh.num_vertices))


def volume_pnorm(mesh: Mesh, cfg: ProblemConfig, u) -> float:
    """Integral of |u|^p over the domain by a degree-4 triangle rule."""
    u = as_field(mesh, u)
    areas, _ = mesh.tri_geometry()
    uv = u[mesh.triangles]  # (T, 3)
    uq = uv @ _TRI_QP.T  # (T, Q)
    vals = np.abs(uq) ** cfg.p @ _TRI_QW
    return float(np.sum(areas * vals))


def volume_pnorm_gradient(mesh: Mesh, cfg: ProblemConfig, u) -> np.ndarray:
    u = as_field(mesh, u)
    areas, _ = mesh.tri_geometry()
    uv = u[mesh.triangles]
    uq = uv @ _TRI_QP.T
    s = cfg.p * _signed_power(uq, cfg.p) * _TRI_QW[None, :]  # (T, Q)
    contrib = areas[:, None] * (s @ _TRI_QP)  # (T, 3)
    return np.bincount(mesh.triangles.ravel(), weights=contrib.ravel(),
                       minlength=mesh.num_vertices)


def linearized_energy_matrix(mesh: Mesh, cfg: ProblemConfig, u) -> SparseSym:
    """Hessian of energy/p at u: the linearized p-Laplacian operator.

    Per triangle the local block is
    area * s^((p-4)/2) * ((p-2) (g.gphi_i)(g.gphi_j) + s gphi_i.gphi_j)
    with s = |g|^2 + eps^2.  Positive semidefinite for every p > 1 with the
    constants in its kernel; by Euler's identity (at eps = 0) applying it to
    u itself reproduces (p-1) times the energy gradient over p.
    """
    u = as_field(mesh, u)
    areas, g, g2 = _tri_gradients(mesh, u)
    _, grads = mesh.tri_geometry()
    p = cfg.p
    s = g2 + cfg.eps_reg ** 2
    f1 = np.zeros_like(s)
    f2 = np.zeros_like(s)
    nz = s > 0.0
    f1[nz] = s[nz] ** ((p - 4.0) / 2.0) * (p - 2.0)
    f2[nz] = s[nz] ** ((p - 2.0) / 2.0)
    gdot = np.einsum("td,tkd->tk", g, grads)  # (T, 3)
    loc = (f1 * areas)[:, None, None] * gdot[:, :, None] * gdot[:, None, :] \
        + (f2 * areas)[:, None, None] * np.einsum("tid,tjd->tij", grads, grads)
    tris = mesh.triangles
    rows = np.repeat(tris, 3, axis=1).ravel()
    cols = np.tile(tris, (1, 3)).ravel()
    return SparseSym(mesh.num_vertices, rows, cols, loc.ravel())


def linearized_boundary_mass(mesh: Mesh, cfg: ProblemConfig, u) -> SparseSym:
    """Boundary matrix with density |u|^(p-2) w: int |u|^(p-2) phi_i phi_j w ds.

    This is 1/(p-1) times the derivative of the boundary p-norm gradient;
    applying it to u itself reproduces the constraint-functional vector.
    """
    u = as_field(mesh, u)
    xi, uq, w, jac = _boundary_samples(mesh, cfg, u)
    dens = jac * w * _magnitude_power(uq, cfg.p)  # (E, Q)
    shapes = np.stack([1.0 - xi, xi], axis=0)  # (2, Q)
    loc = np.einsum("eq,aq,bq->eab", dens, shapes, shapes)
    b = mesh.boundary
    ev = np.stack([b.v0, b.v1], axis=1)
    rows = np.repeat(ev, 2, axis=1).ravel()
    cols = np.tile(ev, (1, 2)).ravel()
    return SparseSym(mesh.num_vertices, rows, cols, loc.ravel())


def volume_mean_direction(mesh: Mesh) -> np.ndarray:
    """Nodal vector int phi_i dx (row sums of the mass matrix)."""
    areas, _ = mesh.tri_geometry()
    contrib = np.repeat(areas[:, None] / 3.0, 3, axis=1)
    return np.bincount(mesh.triangles.ravel(), weights=contrib.ravel(),
                       minlength=mesh.num_vertices)


def assemble_p2(mesh: Mesh, weighted: bool, quadrature_order: int = DEFAULT_QUAD_ORDER):
    """Stiffness K, volume mass M and (weighted) boundary mass B as SparseSym.

    K has the constants in its kernel; row sums of B are the weighted hat
    integrals, so B @ 1 reproduces the boundary measure vector.
    """
    n = mesh.num_vertices
    tris = mesh.triangles
    areas, grads = mesh.tri_geometry()

    kloc = np.einsum("tid,tjd->tij", grads, grads) * areas[:, None, None]
    mloc = (np.ones((3, 3)) + np.eye(3))[None, :, :] * (areas / 12.0)[:, None, None]
    rows = np.repeat(tris, 3, axis=1).ravel()
    cols = np.tile(tris, (1, 3)).ravel()
    K = SparseSym(n, rows, cols, kloc.ravel())
    M = SparseSym(n, rows, cols, mloc.ravel())

    xi, gw, w = mesh.boundary_quadrature(quadrature_order)
    if not weighted:
        w = np.ones_like(w)
    b = mesh.boundary
    jac = b.length[:, None] * gw[None, :]
    shapes = np.stack([1.0 - xi, xi], axis=0)  # (2, Q)
    bloc = np.einsum("eq,aq,bq->eab", jac * w, shapes, shapes)  # (E, 2, 2)
    ev = np.stack([b.v0, b.v1], axis=1)  # (E, 2)
    brows = np.repeat(ev, 2, axis=1).ravel()
    bcols = np.tile(ev, (1, 2)).ravel()
    B = SparseSym(n, brows, bcols, bloc.ravel())
    return K, M, B
