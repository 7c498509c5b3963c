"""Plane-stress finite elements on a structured grid with a soft-material fill.

Each element receives a density in ``[alpha, 1]`` from the smoothed material
indicator of the component field sampled at its four corner nodes; element
stiffness scales with ``density**q`` while the volume measure uses the density
itself.  Compliance sensitivities chain the smoothed-indicator derivative with
central finite differences of the owning component's field.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse
import scipy.sparse.linalg

from . import kernels
from .geometry import (
    DesignDomain,
    DesignVector,
    heaviside_smooth,
    heaviside_smooth_deriv,
)


class FemError(RuntimeError):
    pass


class SingularStateError(FemError):
    """The reduced stiffness system could not be solved to tolerance."""


@dataclass
class MaterialModel:
    """Isotropic plane-stress material with a void-penalization exponent."""

    E: float = 1.0
    nu: float = 0.3
    q: int = 2

    def validate(self) -> None:
        if not self.E > 0.0:
            raise FemError(f"Young's modulus must be positive, got {self.E}")
        if not 0.0 <= self.nu < 0.5:
            raise FemError(f"Poisson's ratio must lie in [0, 0.5), got {self.nu}")
        if not self.q > 1:
            raise FemError(f"penalization exponent must exceed 1, got {self.q}")


@dataclass
class Mesh:
    """Structured bilinear-quad mesh with an active-element mask.

    Node ``(ix, iy)`` has id ``iy * (nx + 1) + ix`` (row-major, y growing
    upward) and dofs ``2*id`` (x) and ``2*id + 1`` (y).
    """

    nx: int
    ny: int
    hx: float
    hy: float
    active: np.ndarray  # (ny, nx) bool
    fixed_dofs: np.ndarray  # sorted unique dof ids
    loads: list[tuple[int, int, float]]  # (node, direction 0|1, magnitude)
    ubar: float = 0.0  # prescribed displacement on the fixed dofs

    def __post_init__(self) -> None:
        self.active = np.asarray(self.active, dtype=bool)
        if self.active.shape != (self.ny, self.nx):
            raise FemError("active mask shape must be (ny, nx)")
        self.fixed_dofs = np.unique(np.asarray(self.fixed_dofs, dtype=np.int64))
        if self.fixed_dofs.size == 0:
            raise FemError("Dirichlet set is empty; rigid-body modes present")

    @property
    def n_nodes(self) -> int:
        return (self.nx + 1) * (self.ny + 1)

    @property
    def n_dofs(self) -> int:
        return 2 * self.n_nodes

    @property
    def n_active(self) -> int:
        return int(self.active.sum())

    def node_coords(self) -> tuple[np.ndarray, np.ndarray]:
        xs = np.tile(np.arange(self.nx + 1) * self.hx, self.ny + 1)
        ys = np.repeat(np.arange(self.ny + 1) * self.hy, self.nx + 1)
        return xs, ys

    def node_id(self, ix: int, iy: int) -> int:
        return iy * (self.nx + 1) + ix

    def element_nodes(self) -> np.ndarray:
        """(ny*nx, 4) node ids per element, counter-clockwise from bottom-left."""
        ex = np.tile(np.arange(self.nx), self.ny)
        ey = np.repeat(np.arange(self.ny), self.nx)
        n0 = ey * (self.nx + 1) + ex
        return np.column_stack([n0, n0 + 1, n0 + self.nx + 2, n0 + self.nx + 1])

    def element_dofs(self) -> np.ndarray:
        nodes = self.element_nodes()
        dofs = np.empty((nodes.shape[0], 8), dtype=np.int64)
        dofs[:, 0::2] = 2 * nodes
        dofs[:, 1::2] = 2 * nodes + 1
        return dofs

    def load_vector(self) -> np.ndarray:
        f = np.zeros(self.n_dofs)
        for node, direction, mag in self.loads:
            f[2 * node + direction] += mag
        return f


def make_mesh(
    domain: DesignDomain,
    nx: int,
    ny: int,
    fixed_dofs,
    loads,
) -> Mesh:
    """Build a mesh over ``domain`` with the activity mask from its predicate."""
    hx = domain.width / nx
    hy = domain.height / ny
    cx = (np.arange(nx) + 0.5) * hx
    cy = (np.arange(ny) + 0.5) * hy
    active = domain.active(cx[None, :].repeat(ny, axis=0), cy[:, None].repeat(nx, axis=1))
    return Mesh(nx=nx, ny=ny, hx=hx, hy=hy, active=active, fixed_dofs=fixed_dofs, loads=list(loads))


def element_stiffness(hx: float, hy: float, E: float, nu: float) -> np.ndarray:
    """8x8 plane-stress stiffness of a rectangular bilinear quad, unit thickness.

    2x2 Gauss quadrature, exact for this element.
    """
    D = E / (1.0 - nu**2) * np.array([[1.0, nu, 0.0], [nu, 1.0, 0.0], [0.0, 0.0, (1.0 - nu) / 2.0]])
    gp = 1.0 / np.sqrt(3.0)
    ke = np.zeros((8, 8))
    # Natural coordinates of the corner nodes, CCW from bottom-left.
    xi_n = np.array([-1.0, 1.0, 1.0, -1.0])
    eta_n = np.array([-1.0, -1.0, 1.0, 1.0])
    for xi in (-gp, gp):
        for eta in (-gp, gp):
            dN_dxi = 0.25 * xi_n * (1.0 + eta * eta_n)
            dN_deta = 0.25 * eta_n * (1.0 + xi * xi_n)
            dN_dx = dN_dxi * 2.0 / hx
            dN_dy = dN_deta * 2.0 / hy
            B = np.zeros((3, 8))
            B[0, 0::2] = dN_dx
            B[1, 1::2] = dN_dy
            B[2, 0::2] = dN_dy
            B[2, 1::2] = dN_dx
            ke += B.T @ D @ B * (hx * hy / 4.0)
    return ke


@dataclass
class FieldConfig:
    """Smoothed-projection and differentiation settings for the density map.

    ``eps`` lives on the field-value scale, not the mesh scale: the component
    field is bounded by 1 inside and falls off steeply outside, so any
    ``eps`` of a few element edges leaves the transition band empty of nodes
    and the optimizer without gradients.  ``eps = 2`` keeps a nonzero
    projection derivative at every interior node and spreads it widely
    enough that whole-component moves stay well conditioned.
    """

    p: int = 6
    eps: float = 2.0
    alpha: float = 1e-3
    fd_step: float = 1e-6

    @classmethod
    def for_mesh(cls, hx: float, hy: float, p: int = 6, alpha: float = 1e-3) -> "FieldConfig":
        del hx, hy  # the field scale, not the mesh, sets the band width
        return cls(p=p, alpha=alpha)


@dataclass
class DensityField:
    """Element densities plus the nodal field data they came from."""

    rho: np.ndarray  # (ny, nx)
    phi: np.ndarray  # (n_nodes,)
    amax: np.ndarray  # (n_nodes,) owning component per node


def _param_array(design) -> np.ndarray:
    if isinstance(design, DesignVector):
        return design.param_array()
    return np.asarray(design, dtype=float).reshape(-1, 7)


def element_density(design, mesh: Mesh, cfg: FieldConfig) -> DensityField:
    """Density per element: corner-node average of the smoothed indicator."""
    params = _param_array(design)
    xs, ys = mesh.node_coords()
    phi, amax = kernels.phi_max(params, xs, ys, cfg.p)
    h = heaviside_smooth(phi, cfg.eps, cfg.alpha).reshape(mesh.ny + 1, mesh.nx + 1)
    rho = 0.25 * (h[:-1, :-1] + h[:-1, 1:] + h[1:, 1:] + h[1:, :-1])
    return DensityField(rho=rho, phi=phi, amax=amax)


@dataclass
class StateSolution:
    """Displacements and the scalar responses of one equilibrium solve."""

    u: np.ndarray  # (n_dofs,)
    densities: np.ndarray  # (ny, nx)
    compliance: float
    volume_fraction: float


def assemble_and_solve(densities: np.ndarray, mesh: Mesh, mat: MaterialModel) -> StateSolution:
    """Solve equilibrium with stiffness ``rho**q * E`` per active element.

    Raises :class:`SingularStateError` when the reduced solve fails the
    residual contract ``|K u - F| <= 1e-8 |F|``.
    """
    mat.validate()
    ke = element_stiffness(mesh.hx, mesh.hy, mat.E, mat.nu)
    edofs = mesh.element_dofs()
    act = mesh.active.ravel()
    scale = (np.asarray(densities, dtype=float).ravel()[act]) ** mat.q
    ed = edofs[act]

    data = (ke.ravel()[None, :] * scale[:, None]).ravel()
    rows = np.repeat(ed, 8, axis=1).ravel()
    cols = np.tile(ed, (1, 8)).ravel()
    K = scipy.sparse.coo_matrix((data, (rows, cols)), shape=(mesh.n_dofs, mesh.n_dofs)).tocsc()

    f = mesh.load_vector()
    attached = np.zeros(mesh.n_dofs, dtype=bool)
    attached[ed.ravel()] = True
    free = np.flatnonzero(attached)
    free = np.setdiff1d(free, mesh.fixed_dofs, assume_unique=False)

    u = np.zeros(mesh.n_dofs)
    if mesh.ubar != 0.0:
        u[mesh.fixed_dofs] = mesh.ubar
    rhs = f[free] - K[free][:, mesh.fixed_dofs] @ u[mesh.fixed_dofs]

    Kff = K[free][:, free].tocsc()
    try:
        lu = scipy.sparse.linalg.splu(Kff)
        uf = lu.solve(rhs)
    except Exception as exc:
        raise SingularStateError(str(exc)) from exc
    if not np.all(np.isfinite(uf)):
        raise SingularStateError("non-finite displacements")
    # Iterative refinement: void-dominated systems are ill-conditioned enough
    # that one LU pass can miss the residual target.  Very soft transient
    # states (|u| ~ 1e8 |F|) cannot meet 1e-8|F| in double precision at all,
    # so the acceptance scale is the backward-stable one; healthy states end
    # up far below the plain 1e-8|F| bound.
    f_norm = max(np.linalg.norm(f), 1e-300)
    tol = 1e-8 * f_norm
    for _ in range(10):
        r = rhs - Kff @ uf
        if np.linalg.norm(r) <= tol:
            break
        du = lu.solve(r)
        if not np.all(np.isfinite(du)):
            raise SingularStateError("refinement diverged")
        uf = uf + du
    resid = np.linalg.norm(Kff @ uf - rhs)
    diag_scale = np.abs(Kff.diagonal()).max()
    stable_tol = 1e-8 * max(f_norm, diag_scale * np.linalg.norm(uf))
    if not np.isfinite(resid) or resid > stable_tol:
        raise SingularStateError(f"residual {resid:.3e} exceeds tolerance")
    u[free] = uf

    C = float(f @ u)
    V = float(np.asarray(densities, dtype=float).ravel()[act].sum() / mesh.n_active)
    return StateSolution(u=u, densities=np.asarray(densities, dtype=float), compliance=C, volume_fraction=V)


def compliance_and_volume(sol: StateSolution, mesh: Mesh) -> tuple[float, float]:
    return sol.compliance, sol.volume_fraction


def element_energies(sol: StateSolution, mesh: Mesh, mat: MaterialModel) -> np.ndarray:
    """Unit-density strain energy ``u_e . k0 u_e`` per active element."""
    ke = element_stiffness(mesh.hx, mesh.hy, mat.E, mat.nu)
    ed = mesh.element_dofs()[mesh.active.ravel()]
    ue = sol.u[ed]
    return np.einsum("ei,ij,ej->e", ue, ke, ue)


def sensitivities(
    design,
    mesh: Mesh,
    mat: MaterialModel,
    cfg: FieldConfig,
    sol: StateSolution,
    dens: DensityField,
) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of compliance and volume fraction w.r.t. the flat design vector.

    The nodal chain is ``H'(phi) * dphi/ds`` where ``dphi/ds`` is a central
    finite difference of the component owning the nodal max (ties already
    resolved to the lowest index by the field kernel).
    """
    params = _param_array(design)
    n_vars = params.size
    xs, ys = mesh.node_coords()

    hprime = heaviside_smooth_deriv(dens.phi, cfg.eps, cfg.alpha)
    band = np.flatnonzero(hprime != 0.0)
    dC = np.zeros(n_vars)
    dV = np.zeros(n_vars)
    if band.size == 0:
        return dC, dV

    dphi = kernels.component_fd_grad(params, xs[band], ys[band], dens.amax[band], cfg.p, cfg.fd_step)
    node_grad = np.zeros((mesh.n_nodes, 7))
    node_grad[band] = hprime[band, None] * dphi

    act = mesh.active.ravel()
    energies = element_energies(sol, mesh, mat)
    rho_act = dens.rho.ravel()[act]
    # d(rho^q * E)/drho * u k0 u, with the E scale already inside k0.
    coefC = -0.25 * mat.q * rho_act ** (mat.q - 1) * energies
    coefV = 0.25 / mesh.n_active

    enodes = mesh.element_nodes()[act]
    cols_of_node = dens.amax * 7  # first variable of the owning component
    offsets = np.arange(7)
    for corner in range(4):
        nodes = enodes[:, corner]
        cols = cols_of_node[nodes, None] + offsets[None, :]
        np.add.at(dC, cols, coefC[:, None] * node_grad[nodes])
        np.add.at(dV, cols, coefV * node_grad[nodes])
    return dC, dV


def argmax_tie_variables(dens: DensityField, design, mesh: Mesh, cfg: FieldConfig,
                         tol: float = 1e-4, fd_step: float = 1e-5) -> np.ndarray:
    """Variables whose finite-difference bracket can cross an arg-max switch.

    A central difference of step ``fd_step`` sweeps a component field by
    about ``2 * fd_step * |dphi/ds|`` at each node; wherever the gap between
    the nodal max and a runner-up component is within that sweep (plus
    ``tol``), the max composition is effectively tied for that variable and
    its semi-analytic gradient need not match the bracketed difference.
    Verification-grade helper, not part of the optimization path.
    """
    params = _param_array(design)
    n_comp = params.shape[0]
    xs, ys = mesh.node_coords()
    band = np.flatnonzero(np.abs(dens.phi) < cfg.eps)
    mask = np.zeros(params.size, dtype=bool)
    if band.size == 0 or n_comp < 2:
        return mask

    bx, by = xs[band], ys[band]
    nb = band.size
    top = dens.amax[band]
    top_val = dens.phi[band]
    stack = np.stack([kernels.phi_one(params[i], bx, by, cfg.p) for i in range(n_comp)])
    grads = np.stack([
        kernels.component_fd_grad(params, bx, by, np.full(nb, i, dtype=np.int64), cfg.p, cfg.fd_step)
        for i in range(n_comp)
    ])  # (n_comp, n_band, 7)
    sweep = 2.0 * fd_step * np.abs(grads) + tol
    top_sweep = sweep[top, np.arange(nb), :]  # (n_band, 7)

    for other in range(n_comp):
        gap = (top_val - stack[other])[:, None]  # (n_band, 1)
        contested = top != other
        # The runner-up's variable can raise its field across the gap ...
        hit_other = contested[:, None] & (gap <= sweep[other])
        for k in np.flatnonzero(hit_other.any(axis=0)):
            mask[7 * other + k] = True
        # ... or the leader's variable can drop its field across it.
        hit_top = contested[:, None] & (gap <= top_sweep)
        for n, k in zip(*np.nonzero(hit_top)):
            mask[7 * top[n] + k] = True
    return mask


def export_density_csv(dens_rho: np.ndarray, mesh: Mesh) -> str:
    """Densities as a CSV grid, ny rows by nx columns, row 0 at the top.

    Inactive elements are written as 0 (no material can occupy them).
    """
    grid = np.where(mesh.active, dens_rho, 0.0)[::-1]
    return "\n".join(",".join(repr(v) for v in row) for row in grid.tolist()) + "\n"
