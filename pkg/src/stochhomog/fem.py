"""Trilinear hexahedral finite elements for the six corrector problems on the unit cube.

For each unit engineering strain ``e_J`` (Voigt order 11, 22, 33, 23, 13, 12) the
corrector ``U^J`` vanishes on the boundary and solves

    int C (B U^J) . (B v) dx = - int C e_J . (B v) dx    for all admissible v,

and column J of the effective matrix is the volume average of ``C (e_J + B U^J)``.
The imposed affine displacement is never meshed: its strain is constant.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as spla

__all__ = [
    "RealizationError",
    "FieldError",
    "SolverError",
    "HexMesh",
    "DirichletSystem",
    "CorrectorSolution",
    "EffectiveSample",
    "build_mesh",
    "imposed_strain",
    "assemble",
    "pcg",
    "solve_correctors",
    "effective_matrix",
    "homogenize",
    "h_norm",
]

log = logging.getLogger(__name__)

_G = 1.0 / math.sqrt(3.0)
# local node -> (a, b, c) corner in {0, 1}^3
_CORNERS = np.array([(0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0), (0, 0, 1), (1, 0, 1), (1, 1, 1), (0, 1, 1)])
# Gauss point -> (gx, gy, gz) in {0, 1}^3, C order
_GAUSS_IDX = np.array([(i, j, k) for i in range(2) for j in range(2) for k in range(2)])


class RealizationError(RuntimeError):
    """One realization could not be homogenized."""


class FieldError(RealizationError):
    pass


class SolverError(RealizationError):
    pass


def _reference_gradients() -> np.ndarray:
    """dN_a/dxi at the 8 Gauss points, shape (8 gauss, 8 nodes, 3)."""
    s = 2 * _CORNERS - 1  # corner signs
    xi = (2 * _GAUSS_IDX - 1) * _G
    one = 1.0 + xi[:, None, :] * s[None, :, :]  # (8, 8, 3)
    d = np.empty((8, 8, 3))
    d[..., 0] = s[None, :, 0] * one[..., 1] * one[..., 2] / 8.0
    d[..., 1] = one[..., 0] * s[None, :, 1] * one[..., 2] / 8.0
    d[..., 2] = one[..., 0] * one[..., 1] * s[None, :, 2] / 8.0
    return d


def _strain_operator(dN: np.ndarray) -> np.ndarray:
    """Engineering-Voigt strain-displacement matrices, shape (8 gauss, 6, 24)."""
    B = np.zeros((dN.shape[0], 6, 24))
    for a in range(8):
        c = 3 * a
        dx, dy, dz = dN[:, a, 0], dN[:, a, 1], dN[:, a, 2]
        B[:, 0, c] = dx
        B[:, 1, c + 1] = dy
        B[:, 2, c + 2] = dz
        B[:, 3, c + 1], B[:, 3, c + 2] = dz, dy
        B[:, 4, c], B[:, 4, c + 2] = dz, dx
        B[:, 5, c], B[:, 5, c + 1] = dy, dx
    return B


@dataclass(frozen=True)
class HexMesh:
    """Uniform mesh of ``[0, 1]^3`` with ``n`` trilinear hexahedra per axis and 2x2x2 Gauss quadrature."""

    n: int

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def n_nodes(self) -> int:
        return (self.n + 1) ** 3

    @property
    def n_dofs(self) -> int:
        return 3 * self.n_nodes

    @property
    def n_elements(self) -> int:
        return self.n**3

    @property
    def n_quadrature(self) -> int:
        return 8 * self.n_elements

    @cached_property
    def nodes(self) -> np.ndarray:
        t = np.linspace(0.0, 1.0, self.n + 1)
        X = np.stack(np.meshgrid(t, t, t, indexing="ij"), axis=-1)
        return X.reshape(-1, 3)

    @cached_property
    def elements(self) -> np.ndarray:
        n, m = self.n, self.n + 1
        e = np.arange(n)
        I, J, K = np.meshgrid(e, e, e, indexing="ij")
        base = np.stack([I.ravel(), J.ravel(), K.ravel()], axis=1)  # element lower corner
        ijk = base[:, None, :] + _CORNERS[None, :, :]
        return (ijk[..., 0] * m + ijk[..., 1]) * m + ijk[..., 2]

    @cached_property
    def boundary_nodes(self) -> np.ndarray:
        X = self.nodes
        on = np.any((X == 0.0) | (X == 1.0), axis=1)
        return np.flatnonzero(on)

    @cached_property
    def constrained_dofs(self) -> np.ndarray:
        return (3 * self.boundary_nodes[:, None] + np.arange(3)).ravel()

    @cached_property
    def free_dofs(self) -> np.ndarray:
        mask = np.ones(self.n_dofs, dtype=bool)
        mask[self.constrained_dofs] = False
        return np.flatnonzero(mask)

    @cached_property
    def element_dofs(self) -> np.ndarray:
        return (3 * self.elements[:, :, None] + np.arange(3)).reshape(self.n_elements, 24)

    @cached_property
    def B(self) -> np.ndarray:
        """Strain-displacement matrices at the Gauss points (identical for all elements)."""
        return _strain_operator(_reference_gradients() * (2.0 / self.h))

    @property
    def quadrature_weight(self) -> float:
        """Gauss weight times Jacobian determinant (the same for every point)."""
        return (self.h / 2.0) ** 3

    def quadrature_axes(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Per-axis Gauss abscissae; the quadrature points are their tensor product."""
        i = np.arange(2 * self.n)
        x = (i // 2 + (1.0 + (2 * (i % 2) - 1) * _G) / 2.0) * self.h
        return x, x.copy(), x.copy()

    def quadrature_points(self) -> np.ndarray:
        """Quadrature points, shape ``(n_elements, 8, 3)``."""
        x = self.quadrature_axes()[0]
        n = self.n
        e = np.arange(n)
        I, J, K = (a.ravel() for a in np.meshgrid(e, e, e, indexing="ij"))
        idx = 2 * np.stack([I, J, K], axis=1)[:, None, :] + _GAUSS_IDX[None, :, :]
        return x[idx]

    def grid_to_elements(self, values: np.ndarray) -> np.ndarray:
        """Reorder values on the ``(2n, 2n, 2n, ...)`` quadrature grid to ``(n_elements, 8, ...)``."""
        n = self.n
        tail = values.shape[3:]
        v = values.reshape((n, 2, n, 2, n, 2) + tail)
        v = v.transpose((0, 2, 4, 1, 3, 5) + tuple(range(6, 6 + len(tail))))
        return v.reshape((n**3, 8) + tail)


def build_mesh(n: int) -> HexMesh:
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise ValueError(f"mesh size must be a positive integer, got {n!r}")
    return HexMesh(int(n))


def imposed_strain(l: int, r: int) -> np.ndarray:
    """Engineering-Voigt strain of ``u0_j = (delta_jl x_r + delta_jr x_l) / 2`` (1-based l, r)."""
    eps = np.zeros((3, 3))
    for p in range(3):
        for q in range(3):
            eps[p, q] = ((p == l - 1) * (q == r - 1) + (p == r - 1) * (q == l - 1)) / 2.0
    return np.array([eps[0, 0], eps[1, 1], eps[2, 2], 2 * eps[1, 2], 2 * eps[0, 2], 2 * eps[0, 1]])


#: Load cases (l, r), l <= r, in Voigt column order.
LOAD_CASES = ((1, 1), (2, 2), (3, 3), (2, 3), (1, 3), (1, 2))


def _field_at_quadrature(mesh: HexMesh, field) -> np.ndarray:
    if hasattr(field, "on_grid"):
        values = field.on_grid(mesh.quadrature_axes())
        return mesh.grid_to_elements(np.asarray(values, dtype=float))
    pts = mesh.quadrature_points().reshape(-1, 3)
    return np.asarray(field(pts), dtype=float).reshape(mesh.n_elements, 8, 6, 6)


@dataclass
class DirichletSystem:
    """Assembled stiffness (all dofs) and the six load vectors, columns in Voigt order."""

    mesh: HexMesh
    K: sparse.csr_matrix = field(repr=False)
    F: np.ndarray = field(repr=False)
    Cq: np.ndarray = field(repr=False)

    @cached_property
    def K_free(self) -> sparse.csr_matrix:
        f = self.mesh.free_dofs
        return self.K[f][:, f].tocsr()

    @property
    def F_free(self) -> np.ndarray:
        return self.F[self.mesh.free_dofs]


def assemble(mesh: HexMesh, field) -> DirichletSystem:
    """Galerkin stiffness and corrector loads for the elasticity field `field`.

    `field` maps points of shape ``(N, 3)`` to matrices ``(N, 6, 6)``; if it also
    provides ``on_grid(axes)`` that tensor-grid path is used. The field is
    evaluated once per quadrature point and shared by all load cases.
    """
    Cq = _field_at_quadrature(mesh, field)
    if not np.all(np.isfinite(Cq)):
        raise FieldError("elasticity field returned non-finite values")
    try:
        np.linalg.cholesky(Cq)
    except np.linalg.LinAlgError as exc:
        lam = np.linalg.eigvalsh(Cq.reshape(-1, 6, 6))[:, 0]
        i = int(np.argmin(lam))
        raise FieldError(f"elasticity not positive definite at quadrature point {i} (min eig {lam[i]:.3e})") from exc

    B, w = mesh.B, mesh.quadrature_weight
    CB = np.einsum("egij,gjb->egib", Cq, B)
    Ke = w * np.einsum("gia,egib->eab", B, CB)
    Fe = -w * np.einsum("gia,egiJ->eaJ", B, Cq)

    edof = mesh.element_dofs
    rows = np.repeat(edof, 24, axis=1).ravel()
    cols = np.tile(edof, (1, 24)).ravel()
    K = sparse.coo_matrix((Ke.ravel(), (rows, cols)), shape=(mesh.n_dofs,) * 2).tocsr()
    K.sum_duplicates()
    F = np.stack([np.bincount(edof.ravel(), weights=Fe[:, :, J].ravel(), minlength=mesh.n_dofs) for J in range(6)],
                 axis=1)
    return DirichletSystem(mesh=mesh, K=K, F=F, Cq=Cq)


def pcg(A, B, rtol: float = 1e-9, maxiter: int | None = None):
    """Jacobi-preconditioned conjugate gradient for several right-hand sides at once.

    Each column keeps its own step lengths and stops when its residual norm drops
    below ``rtol * ||b||``. Returns ``(X, iterations, relative_residuals)``.
    """
    B = np.asarray(B, dtype=float)
    squeeze = B.ndim == 1
    if squeeze:
        B = B[:, None]
    n, k = B.shape
    maxiter = int(20 * math.sqrt(n)) + 1 if maxiter is None else maxiter
    dinv = 1.0 / A.diagonal()
    bnorm = np.linalg.norm(B, axis=0)
    target = rtol * bnorm
    X = np.zeros_like(B)
    R = B.copy()
    Z = dinv[:, None] * R
    P = Z.copy()
    rz = np.einsum("ij,ij->j", R, Z)
    rnorm = bnorm.copy()
    active = rnorm > target
    it = 0
    while active.any() and it < maxiter:
        it += 1
        AP = A @ P
        pap = np.einsum("ij,ij->j", P, AP)
        alpha = np.where(active, rz / np.where(active, pap, 1.0), 0.0)
        X += alpha * P
        R -= alpha * AP
        rnorm = np.linalg.norm(R, axis=0)
        active = rnorm > target
        Z = dinv[:, None] * R
        rz_new = np.einsum("ij,ij->j", R, Z)
        beta = np.where(active, rz_new / np.where(rz > 0, rz, 1.0), 0.0)
        P = Z + beta * P
        rz = rz_new
    rel = np.where(bnorm > 0, rnorm / np.where(bnorm > 0, bnorm, 1.0), 0.0)
    if active.any():
        raise SolverError(f"PCG did not converge in {maxiter} iterations (relative residuals {rel})")
    return (X[:, 0] if squeeze else X), it, rel


@dataclass
class CorrectorSolution:
    """Nodal correctors for the six load cases, shape ``(n_dofs, 6)``; zero on the boundary."""

    U: np.ndarray = field(repr=False)
    method: str
    iterations: int
    residuals: np.ndarray

    def case(self, l: int, r: int) -> np.ndarray:
        """Corrector for the symmetric load case (l, r) in either index order."""
        return self.U[:, LOAD_CASES.index((min(l, r), max(l, r)))]


def solve_correctors(system: DirichletSystem, method: str = "auto", rtol: float = 1e-9,
                     maxiter: int | None = None) -> CorrectorSolution:
    """Solve the reduced interior system for the six load cases.

    `method` is ``"direct"`` (sparse LU), ``"pcg"`` or ``"auto"`` (direct for n <= 10).
    """
    mesh = system.mesh
    if method == "auto":
        method = "direct" if mesh.n <= 10 else "pcg"
    U = np.zeros((mesh.n_dofs, 6))
    free = mesh.free_dofs
    if free.size == 0:
        return CorrectorSolution(U=U, method=method, iterations=0, residuals=np.zeros(6))
    A, b = system.K_free, system.F_free
    if method == "direct":
        lu = spla.splu(A.tocsc(), permc_spec="MMD_AT_PLUS_A")
        X = lu.solve(b)
        its = 1
    elif method == "pcg":
        X, its, _ = pcg(A, b, rtol=rtol, maxiter=maxiter)
    else:
        raise ValueError(f"unknown solver method {method!r}")
    bnorm = np.linalg.norm(b, axis=0)
    res = np.linalg.norm(A @ X - b, axis=0) / np.where(bnorm > 0, bnorm, 1.0)
    if np.any(res > max(rtol, 1e-9) * 10):
        raise SolverError(f"corrector residuals too large: {res}")
    U[free] = X
    return CorrectorSolution(U=U, method=method, iterations=its, residuals=res)


@dataclass
class EffectiveSample:
    """Effective 6x6 matrix of one realization with its eigenvalues (descending)."""

    C_eff: np.ndarray
    lam: np.ndarray
    kappa: int | None = None
    seed: int | None = None
    asymmetry: float = 0.0
    meta: dict = field(default_factory=dict)


def effective_matrix(system: DirichletSystem, solution: CorrectorSolution, kappa: int | None = None,
                     seed: int | None = None) -> EffectiveSample:
    """Volume average of the stress under imposed unit strains plus correctors."""
    mesh = system.mesh
    Ue = solution.U[mesh.element_dofs]  # (ne, 24, 6)
    eps = np.einsum("gia,eaJ->egiJ", mesh.B, Ue) + np.eye(6)
    stress = np.einsum("egij,egjJ->iJ", system.Cq, eps)
    C = stress * mesh.quadrature_weight  # |Omega| = 1
    scale = np.linalg.norm(C)
    asym = float(np.linalg.norm(C - C.T) / scale) if scale > 0 else 0.0
    if asym > 1e-6:
        log.warning("effective matrix asymmetry %.2e before symmetrization", asym)
    C = 0.5 * (C + C.T)
    lam = np.linalg.eigvalsh(C)[::-1]
    if not lam[-1] > 0:
        raise RealizationError(f"effective matrix not positive definite (smallest eigenvalue {lam[-1]:.3e})")
    return EffectiveSample(C_eff=C, lam=lam, kappa=kappa, seed=seed, asymmetry=asym)


def homogenize(mesh: HexMesh, field, method: str = "auto", rtol: float = 1e-9, kappa=None, seed=None):
    """Assemble, solve and average for one field realization."""
    system = assemble(mesh, field)
    sol = solve_correctors(system, method=method, rtol=rtol)
    sample = effective_matrix(system, sol, kappa=kappa, seed=seed)
    sample.meta.update(solver=sol.method, iterations=sol.iterations, max_residual=float(sol.residuals.max()))
    return sample


def h_norm(mesh: HexMesh, u: np.ndarray) -> float:
    """``(int ||eps(u)||_F^2 dx)^(1/2)`` for a nodal displacement vector."""
    ue = np.asarray(u)[mesh.element_dofs]
    e = np.einsum("gia,ea->egi", mesh.B, ue)
    # tensor Frobenius norm from engineering Voigt: normal^2 + shear^2 / 2
    sq = (e[..., :3] ** 2).sum(-1) + 0.5 * (e[..., 3:] ** 2).sum(-1)
    return float(math.sqrt(sq.sum() * mesh.quadrature_weight))
