"""Positive-definite 6x6 elasticity field from 21 Gaussian germ fields.

The normalized random matrix is ``C = L^T L`` with an upper-triangular ``L`` whose
off-diagonal entries are ``sigma_c * G_mn`` and whose diagonal entries are
``sigma_c * sqrt(2 h(G_mm; alpha_m))``, where ``h`` maps a standard normal variate
onto a Gamma(alpha) variate. The physical field is

    Cfield(x) = (1 + eps)^-1 Lbar^T (eps I + C(x)) Lbar,   Cbar = Lbar^T Lbar.

Matrices use engineering Voigt order (11, 22, 33, 23, 13, 12) with shear strains
``gamma = 2 eps``, so entries coincide with the tensor components ``C_ijpq``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .gfield import BLOCKS, NoiseVector, eval_g, eval_g_grid, NoiseBlock
from .spectral import SpectralGrid, SpectrumParams

__all__ = [
    "VOIGT",
    "InadmissibleConstantsError",
    "HTransformError",
    "MeanElasticity",
    "MatrixFieldParams",
    "default_shear_moduli",
    "orthotropic_compliance",
    "orthotropic_mean",
    "isotropic_stiffness",
    "h_transform",
    "matrix_from_gaussian",
    "normalize",
    "eval_C",
    "eval_elasticity",
    "gamma_certificate",
    "ElasticityField",
    "upper_triangle",
]

#: Voigt index -> tensor index pair (0-based).
VOIGT = ((0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1))

_DIAG = np.array([BLOCKS.index((m, m)) for m in range(1, 7)])
_ROWS = np.array([m - 1 for m, _ in BLOCKS])
_COLS = np.array([n - 1 for _, n in BLOCKS])
_IU = np.triu_indices(6)


class InadmissibleConstantsError(ValueError):
    pass


class HTransformError(RuntimeError):
    pass


def upper_triangle(C) -> np.ndarray:
    """Row-major upper triangle (21 entries) of a 6x6 matrix or a stack of them."""
    C = np.asarray(C)
    return C[..., _IU[0], _IU[1]]


@dataclass(frozen=True)
class MeanElasticity:
    """Mean elasticity matrix with its upper Cholesky factor and bounds.

    ``c0`` is the smallest eigenvalue and ``c1`` the trace, both in Pa.
    """

    C_bar: np.ndarray
    L_bar: np.ndarray = field(repr=False)
    c0: float
    c1: float
    meta: dict = field(default_factory=dict, compare=False)

    @classmethod
    def from_matrix(cls, C, meta: dict | None = None) -> "MeanElasticity":
        C = np.asarray(C, dtype=float)
        if C.shape != (6, 6):
            raise ValueError("mean elasticity must be 6x6")
        if not np.allclose(C, C.T, rtol=1e-12, atol=0.0):
            raise InadmissibleConstantsError("mean elasticity matrix is not symmetric")
        C = 0.5 * (C + C.T)
        lam = np.linalg.eigvalsh(C)
        if lam[0] <= 0:
            raise InadmissibleConstantsError(f"mean elasticity matrix is not positive definite (min eig {lam[0]:.3e})")
        L = np.linalg.cholesky(C).T
        return cls(C_bar=C, L_bar=L, c0=float(lam[0]), c1=float(np.trace(C)), meta=dict(meta or {}))

    def c_eps(self, epsilon: float) -> float:
        """Uniform coercivity constant ``c0 * eps / (1 + eps)``."""
        return self.c0 * epsilon / (1.0 + epsilon)


def default_shear_moduli(E1, E2, E3, nu23, nu31, nu12) -> tuple[float, float, float]:
    """Shear moduli estimate used when only Young moduli and Poisson ratios are known."""
    G23 = E2 * E3 / (E2 + E3 + 2.0 * nu23 * E3)
    G31 = E3 * E1 / (E3 + E1 + 2.0 * nu31 * E1)
    G12 = E1 * E2 / (E1 + E2 + 2.0 * nu12 * E2)
    return G23, G31, G12


def orthotropic_compliance(E1, E2, E3, nu23, nu31, nu12, G23, G31, G12) -> np.ndarray:
    """Orthotropic compliance in engineering Voigt order.

    ``nu_ij`` is the contraction along j for a stress along i, so that
    ``S_12 = -nu12/E1``, ``S_23 = -nu23/E2`` and ``S_31 = -nu31/E3``.
    """
    S = np.zeros((6, 6))
    S[0, 0], S[1, 1], S[2, 2] = 1.0 / E1, 1.0 / E2, 1.0 / E3
    S[0, 1] = S[1, 0] = -nu12 / E1
    S[1, 2] = S[2, 1] = -nu23 / E2
    S[0, 2] = S[2, 0] = -nu31 / E3
    S[3, 3], S[4, 4], S[5, 5] = 1.0 / G23, 1.0 / G31, 1.0 / G12
    return S


def orthotropic_mean(E1, E2, E3, nu23, nu31, nu12, G23=None, G31=None, G12=None) -> MeanElasticity:
    """Mean elasticity of an orthotropic material from its engineering constants."""
    defaults = default_shear_moduli(E1, E2, E3, nu23, nu31, nu12)
    G23 = defaults[0] if G23 is None else G23
    G31 = defaults[1] if G31 is None else G31
    G12 = defaults[2] if G12 is None else G12
    if min(E1, E2, E3, G23, G31, G12) <= 0:
        raise InadmissibleConstantsError("moduli must be positive")
    S = orthotropic_compliance(E1, E2, E3, nu23, nu31, nu12, G23, G31, G12)
    if np.linalg.eigvalsh(S)[0] <= 0:
        raise InadmissibleConstantsError("engineering constants give a non positive-definite compliance")
    C = np.linalg.inv(S)
    meta = dict(E1=E1, E2=E2, E3=E3, nu23=nu23, nu31=nu31, nu12=nu12, G23=G23, G31=G31, G12=G12)
    return MeanElasticity.from_matrix(0.5 * (C + C.T), meta=meta)


def isotropic_stiffness(E: float, nu: float) -> np.ndarray:
    lam = E * nu / ((1 + nu) * (1 - 2 * nu))
    mu = E / (2 * (1 + nu))
    C = np.zeros((6, 6))
    C[:3, :3] = lam
    C[np.arange(3), np.arange(3)] += 2 * mu
    C[np.arange(3, 6), np.arange(3, 6)] = mu
    return C


@dataclass(frozen=True)
class MatrixFieldParams:
    """Dispersion ``delta_c`` of the normalized matrix and lower-bound parameter ``epsilon``."""

    delta_c: float
    epsilon: float = 1e-3

    def __post_init__(self):
        if not 0.0 < self.delta_c < math.sqrt(7.0 / 11.0):
            raise ValueError(f"delta_c must lie in (0, sqrt(7/11)), got {self.delta_c!r}")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")

    @property
    def sigma_c(self) -> float:
        return self.delta_c / math.sqrt(7.0)

    @property
    def alpha(self) -> np.ndarray:
        m = np.arange(1, 7)
        return 1.0 / (2.0 * self.sigma_c**2) + (1.0 - m) / 2.0


def h_transform(b, alpha, tol: float = 1e-12) -> np.ndarray:
    """Map standard-normal values `b` to Gamma(`alpha`) quantiles: ``F_alpha^-1(Phi(b))``.

    The inverse is taken on the lower CDF for ``b <= 0`` and on the upper tail for
    ``b > 0`` so neither side saturates. The library inverse is polished by
    safeguarded Newton steps and, where the CDF residual still exceeds `tol`,
    by bisection on ``[0, 2 alpha + b^2]``. For very large `alpha` the CDF is so
    steep that a few ulps of ``h`` move it by more than `tol`; the residual gate is
    then relaxed to that floor.
    """
    b, alpha = np.broadcast_arrays(np.asarray(b, dtype=float), np.asarray(alpha, dtype=float))
    if np.any(~(alpha > 3.0)):
        raise ValueError("alpha must be > 3")
    lower = b <= 0.0
    p = special.ndtr(b)
    q = special.ndtr(-b)
    lg = special.gammaln(alpha)

    def residual(h):
        return np.where(lower, special.gammainc(alpha, h) - p, q - special.gammaincc(alpha, h))

    with np.errstate(divide="ignore", invalid="ignore", over="ignore", under="ignore"):
        h = np.where(lower, special.gammaincinv(alpha, p), special.gammainccinv(alpha, q))
        r = residual(h)
        for _ in range(3):
            act = ~(np.abs(r) <= 0.1 * tol)
            if not act.any():
                break
            ha, ra, aa = h[act], r[act], alpha[act]
            dens = np.exp((aa - 1.0) * np.log(ha) - ha - lg[act])
            trial = ha - ra / dens
            trial = np.where(np.isfinite(trial) & (trial > 0), trial, ha)
            rt = np.where(lower[act], special.gammainc(aa, trial) - p[act], q[act] - special.gammaincc(aa, trial))
            better = np.abs(rt) < np.abs(ra)
            h = h.copy()
            r = r.copy()
            h[act] = np.where(better, trial, ha)
            r[act] = np.where(better, rt, ra)

    def floor(h):
        # CDF change over a few ulps of h: the best residual double precision can reach
        with np.errstate(divide="ignore", invalid="ignore", over="ignore", under="ignore"):
            dens = np.exp((alpha - 1.0) * np.log(h) - h - lg)
        return np.nan_to_num(4.0 * dens * np.spacing(np.abs(h)))

    bad = ~(np.isfinite(h) & (h > 0) & (np.abs(r) <= np.maximum(tol, floor(h))))
    if np.any(bad):
        h = h.copy()
        lo = np.zeros(np.count_nonzero(bad))
        hi = 2.0 * alpha[bad] + b[bad] ** 2
        lw, pb, qb, ab = lower[bad], p[bad], q[bad], alpha[bad]
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            rm = np.where(lw, special.gammainc(ab, mid) - pb, qb - special.gammaincc(ab, mid))
            lo = np.where(rm < 0, mid, lo)
            hi = np.where(rm < 0, hi, mid)
        h[bad] = 0.5 * (lo + hi)
        r = residual(h)
        still = ~(np.isfinite(h) & (h > 0) & (np.abs(r) <= np.maximum(max(tol, 1e-10), floor(h))))
        if np.any(still):
            i = np.flatnonzero(still.ravel())[0]
            raise HTransformError(
                f"h-transform did not converge for b={b.ravel()[i]!r}, alpha={alpha.ravel()[i]!r}, "
                f"residual={r.ravel()[i]!r}"
            )
    return h


def matrix_from_gaussian(G, mfp: MatrixFieldParams) -> np.ndarray:
    """Normalized matrices ``L^T L`` from germ values `G` of shape ``(..., 21)`` (BLOCKS order)."""
    G = np.asarray(G, dtype=float)
    s = mfp.sigma_c
    L = np.zeros(G.shape[:-1] + (6, 6))
    L[..., _ROWS, _COLS] = s * G
    L[..., np.arange(6), np.arange(6)] = s * np.sqrt(2.0 * h_transform(G[..., _DIAG], mfp.alpha))
    return np.einsum("...ki,...kj->...ij", L, L)


def normalize(C, mfp: MatrixFieldParams, mean: MeanElasticity) -> np.ndarray:
    """``(1 + eps)^-1 Lbar^T (eps I + C) Lbar`` for one matrix or a stack."""
    eps = mfp.epsilon
    A = np.asarray(C, dtype=float) + eps * np.eye(6)
    out = np.einsum("ki,...kl,lj->...ij", mean.L_bar, A, mean.L_bar) / (1.0 + eps)
    return 0.5 * (out + np.swapaxes(out, -1, -2))


def _germ_values(x, params, xi: NoiseVector, weights, grid) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.stack([eval_g(x, params, NoiseBlock(xi.z[k], xi.phi[k]), weights, grid) for k in range(len(BLOCKS))],
                    axis=-1)


def eval_C(x, params: SpectrumParams, xi: NoiseVector, mfp: MatrixFieldParams, weights, grid: SpectralGrid):
    """Normalized random matrix at point(s) `x`, shape ``(..., 6, 6)``."""
    return matrix_from_gaussian(_germ_values(x, params, xi, weights, grid), mfp)


def eval_elasticity(x, params, xi, mfp, mean: MeanElasticity, weights, grid):
    """Elasticity matrix (Pa) at point(s) `x`."""
    return normalize(eval_C(x, params, xi, mfp, weights, grid), mfp, mean)


def gamma_certificate(xi: NoiseVector, mfp: MatrixFieldParams, mean: MeanElasticity) -> tuple[float, float]:
    """Almost-sure Frobenius bounds of the normalized and physical matrices over all x.

    Returns ``(Gamma_C, Gamma_Cfield)`` with
    ``Gamma_C = sigma_c^2 (4 sum alpha + 4 sum_diag |z|^2 + 2 sum_offdiag |z|^2)``
    and ``Gamma_Cfield = c1 (eps sqrt(6) + Gamma_C) / (1 + eps)``.
    """
    z2 = np.sum(np.asarray(xi.z) ** 2, axis=1)
    diag = np.zeros(len(BLOCKS), dtype=bool)
    diag[_DIAG] = True
    gc = mfp.sigma_c**2 * (4.0 * mfp.alpha.sum() + 4.0 * z2[diag].sum() + 2.0 * z2[~diag].sum())
    eps = mfp.epsilon
    gcf = mean.c1 * (eps * math.sqrt(6.0) + gc) / (1.0 + eps)
    return float(gc), float(gcf)


@dataclass(frozen=True)
class ElasticityField:
    """Deterministic evaluator ``x -> Cfield(x)`` for one realization ``(S, xi)``."""

    grid: SpectralGrid
    params: SpectrumParams
    xi: NoiseVector
    mfp: MatrixFieldParams
    mean: MeanElasticity
    weights: np.ndarray = field(repr=False)

    def gaussian(self, x) -> np.ndarray:
        return _germ_values(x, self.params, self.xi, self.weights, self.grid)

    def __call__(self, x) -> np.ndarray:
        return normalize(matrix_from_gaussian(self.gaussian(x), self.mfp), self.mfp, self.mean)

    def on_grid(self, axes) -> np.ndarray:
        """Values on a tensor grid, shape ``(n1, n2, n3, 6, 6)``."""
        G = eval_g_grid(axes, self.params, self.xi.z, self.xi.phi, self.weights, self.grid)
        G = np.moveaxis(G, 0, -1)
        return normalize(matrix_from_gaussian(G, self.mfp), self.mfp, self.mean)

    def certificate(self) -> tuple[float, float]:
        return gamma_certificate(self.xi, self.mfp, self.mean)
