"""Discretized dimensionless spectral measure with an uncertain, parameterized shape.

The spectral density of the normalized Gaussian germ field is written in the
dimensionless variable ``tau = k / K`` with support ``[-1, 1]^3``. It is sampled
on a midpoint grid of ``nu_s`` points per axis, and its weights are perturbed by a
matrix ``y`` of shape ``(3, nu_s/2)`` living in ``[0, 1]``, mirrored to respect
quadrant symmetry.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

__all__ = [
    "DegenerateSpectrumError",
    "DimensionlessSdf",
    "SpectralGrid",
    "SpectrumParams",
    "SpectrumDistribution",
    "build_grid",
    "affine_q",
    "a_coefficients",
    "chi_tilde",
    "sample_w",
    "sample_y",
    "sample_spectrum_params",
    "DELTA_MAX",
]

#: Strict upper bound on the per-axis spectrum uncertainty levels and on the
#: coefficient of variation of the correlation lengths.
DELTA_MAX = 1.0 / math.sqrt(3.0)


class DegenerateSpectrumError(ValueError):
    """All perturbed spectral amplitudes vanish."""


def _triangle(t):
    t = np.asarray(t, dtype=float)
    return np.where(np.abs(t) <= 1.0, 1.0 - np.abs(t), 0.0)


@dataclass(frozen=True)
class DimensionlessSdf:
    """Separable dimensionless spectral density ``chi(tau) = prod_j chi_j(tau_j)``.

    Each ``chi_j`` maps an array of reals to nonnegative values, vanishes outside
    ``[-1, 1]``, is even and integrates to one.
    """

    axes: tuple[Callable, Callable, Callable]
    kind: str = "custom"

    @classmethod
    def triangular(cls) -> "DimensionlessSdf":
        return cls(axes=(_triangle, _triangle, _triangle), kind="triangular")

    def axis(self, j: int, t) -> np.ndarray:
        return np.asarray(self.axes[j](np.asarray(t, dtype=float)), dtype=float)

    def __call__(self, tau) -> np.ndarray:
        tau = np.asarray(tau, dtype=float)
        return self.axis(0, tau[..., 0]) * self.axis(1, tau[..., 1]) * self.axis(2, tau[..., 2])

    def check_normalization(self, tol: float = 1e-6) -> float:
        """Integrate ``chi`` over ``[-1, 1]^3`` (product of 1D quadratures).

        Raises ``ValueError`` if the integral differs from one by more than `tol`.
        """
        total = 1.0
        for j in range(3):
            val, _ = integrate.quad(lambda t: float(self.axis(j, t)), -1.0, 1.0, points=[0.0], limit=200)
            total *= val
        if abs(total - 1.0) > tol:
            raise ValueError(f"spectral density integrates to {total!r}, expected 1")
        return total


@dataclass(frozen=True)
class SpectralGrid:
    """Midpoint sampling of ``[-1, 1]^3`` with ``nu_s`` points per axis.

    Attributes
    ----------
    nu_s : int
        Points per axis (even).
    tau_axis : ndarray, shape (nu_s,)
        Sampling abscissae, identical on the three axes.
    chi_axis : ndarray, shape (3, nu_s)
        Per-axis weights ``(2/nu_s) * chi_j(tau)``.
    tau : ndarray, shape (nu, 3)
        Grid points in C order over ``(beta1, beta2, beta3)``.
    chi_delta : ndarray, shape (nu,)
        Weights ``(2/nu_s)^3 * chi(tau_beta)``.
    eta_nu : float
        Sum of `chi_delta`.
    """

    nu_s: int
    tau_axis: np.ndarray
    chi_axis: np.ndarray
    tau: np.ndarray = field(repr=False)
    chi_delta: np.ndarray = field(repr=False)
    eta_nu: float

    @property
    def nu(self) -> int:
        return self.nu_s**3

    @property
    def nu_hat(self) -> int:
        return self.nu_s // 2

    @property
    def mirror_index(self) -> np.ndarray:
        """Map a 0-based axis index to its first-half representative."""
        b = np.arange(self.nu_s)
        return np.minimum(b, self.nu_s - 1 - b)


def build_grid(nu_s: int, sdf: DimensionlessSdf | None = None, eps_s: float = 1e-6) -> SpectralGrid:
    """Sample the dimensionless spectral density on the midpoint grid.

    ``tau_j = -1 + (beta_j - 1/2) * 2/nu_s`` for ``beta_j = 1..nu_s``. A warning is
    emitted when the total weight differs from one by more than `eps_s`.
    """
    if isinstance(nu_s, bool) or int(nu_s) != nu_s or nu_s < 2 or nu_s % 2:
        raise ValueError(f"nu_s must be an even integer >= 2, got {nu_s!r}")
    nu_s = int(nu_s)
    sdf = DimensionlessSdf.triangular() if sdf is None else sdf

    step = 2.0 / nu_s
    half = -1.0 + (np.arange(1, nu_s // 2 + 1) - 0.5) * step
    tau_axis = np.concatenate([half, -half[::-1]])  # exact sign symmetry
    chi_axis = np.stack([step * sdf.axis(j, tau_axis) for j in range(3)])
    if np.any(chi_axis < 0) or not np.all(np.isfinite(chi_axis)):
        raise ValueError("spectral density must be finite and nonnegative")
    if not np.allclose(chi_axis, chi_axis[:, ::-1], rtol=1e-12, atol=0.0):
        raise ValueError("spectral density is not even on the sampling grid")
    chi_axis = 0.5 * (chi_axis + chi_axis[:, ::-1])

    t1, t2, t3 = np.meshgrid(tau_axis, tau_axis, tau_axis, indexing="ij")
    tau = np.stack([t1.ravel(), t2.ravel(), t3.ravel()], axis=1)
    chi_delta = np.einsum("i,j,k->ijk", *chi_axis).ravel()
    eta = float(chi_delta.sum())
    if abs(eta - 1.0) > eps_s:
        warnings.warn(f"spectral weights sum to {eta:.3e}; increase nu_s (|eta-1| > {eps_s:g})", stacklevel=2)
    return SpectralGrid(nu_s=nu_s, tau_axis=tau_axis, chi_axis=chi_axis, tau=tau, chi_delta=chi_delta, eta_nu=eta)


@dataclass(frozen=True)
class SpectrumParams:
    """One value of the spectrum parameters: correlation lengths `w` and shape matrix `y`."""

    w: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float).reshape(3)
        y = np.atleast_2d(np.asarray(self.y, dtype=float))
        if np.any(w <= 0) or not np.all(np.isfinite(w)):
            raise ValueError("correlation lengths w must be positive and finite")
        if y.shape[0] != 3:
            raise ValueError(f"y must have 3 rows, got shape {y.shape}")
        if np.any(y < 0) or np.any(y > 1):
            raise ValueError("y entries must lie in [0, 1]")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "y", y)

    @classmethod
    def nominal(cls, w, nu_s: int) -> "SpectrumParams":
        """Parameters at the mean shape point (all ``y = 1/2``)."""
        w = np.broadcast_to(np.asarray(w, dtype=float), (3,))
        return cls(w=w.copy(), y=np.full((3, nu_s // 2), 0.5))

    @property
    def wavenumber_scale(self) -> np.ndarray:
        """``K_j = pi / w_j``."""
        return np.pi / self.w


@dataclass(frozen=True)
class SpectrumDistribution:
    """Probability model of the spectrum parameters.

    ``W_j`` is uniform on ``[w_min, w_max]`` with mean `Lc_mean` and coefficient of
    variation `delta_Lc`; the entries of ``Y`` are iid uniform on ``[0, 1]``.
    `deltas` are the per-axis levels of spectrum-shape uncertainty.
    """

    Lc_mean: float
    delta_Lc: float = 0.0
    deltas: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        d = tuple(float(v) for v in np.broadcast_to(np.asarray(self.deltas, dtype=float), (3,)))
        object.__setattr__(self, "deltas", d)
        if not self.Lc_mean > 0:
            raise ValueError("mean correlation length must be positive")
        if not 0.0 <= self.delta_Lc < DELTA_MAX:
            raise ValueError(f"delta_Lc must lie in [0, 1/sqrt(3)), got {self.delta_Lc!r}")
        if any(not 0.0 <= v < DELTA_MAX for v in d):
            raise ValueError(f"deltas must lie in [0, 1/sqrt(3)), got {d!r}")

    @property
    def w_min(self) -> float:
        return self.Lc_mean * (1.0 - math.sqrt(3.0) * self.delta_Lc)

    @property
    def w_max(self) -> float:
        return 2.0 * self.Lc_mean - self.w_min

    @property
    def delta_s(self) -> float:
        return math.sqrt(math.prod(1.0 + d * d for d in self.deltas) - 1.0)


def affine_q(y: np.ndarray, deltas: Sequence[float]) -> np.ndarray:
    """Separable affine shape factor on the first octant.

    ``q[b1, b2, b3] = prod_j (1 + sqrt(12) * delta_j * (y[j, b_j] - 1/2))``, equal to
    one at ``y = 1/2``.
    """
    y = np.asarray(y, dtype=float)
    d = np.asarray(deltas, dtype=float).reshape(3, 1)
    f = 1.0 + math.sqrt(12.0) * d * (y - 0.5)
    return np.einsum("i,j,k->ijk", f[0], f[1], f[2])


def a_coefficients(y, grid: SpectralGrid, deltas: Sequence[float], q: Callable = affine_q) -> np.ndarray:
    """Perturbed spectral amplitudes ``a_beta = sqrt(chi_delta_beta) * q(mirror(beta))``.

    Returns an array of shape ``(nu_s, nu_s, nu_s)`` in the grid's C order.
    `q` receives ``(y, deltas)`` and returns the first-octant factors, shape
    ``(nu_s/2,) * 3``.
    """
    y = np.asarray(y, dtype=float)
    deltas = np.broadcast_to(np.asarray(deltas, dtype=float), (3,))
    if y.shape != (3, grid.nu_hat):
        raise ValueError(f"y must have shape (3, {grid.nu_hat}), got {y.shape}")
    if np.any(y < 0) or np.any(y > 1):
        raise ValueError("y entries must lie in [0, 1]")
    if np.any(deltas < 0) or np.any(deltas >= DELTA_MAX):
        raise ValueError(f"deltas must lie in [0, 1/sqrt(3)), got {tuple(deltas)}")

    q_hat = np.asarray(q(y, deltas), dtype=float)
    m = grid.mirror_index
    q_full = q_hat[np.ix_(m, m, m)]
    return np.sqrt(grid.chi_delta.reshape((grid.nu_s,) * 3)) * q_full


def chi_tilde(y, grid: SpectralGrid, deltas: Sequence[float], q: Callable = affine_q) -> np.ndarray:
    """Normalized perturbed spectral weights, flattened in grid order (sum to one)."""
    a2 = a_coefficients(y, grid, deltas, q) ** 2
    total = a2.sum()
    if not total > 0:
        raise DegenerateSpectrumError("all perturbed spectral amplitudes are zero")
    return (a2 / total).ravel()


def sample_w(rng: np.random.Generator, dist: SpectrumDistribution) -> np.ndarray:
    return rng.uniform(dist.w_min, dist.w_max, size=3)


def sample_y(rng: np.random.Generator, nu_s: int) -> np.ndarray:
    return rng.random((3, nu_s // 2))


def sample_spectrum_params(
    rng: np.random.Generator,
    dist: SpectrumDistribution,
    nu_s: int,
    rng_y: np.random.Generator | None = None,
) -> SpectrumParams:
    """Draw ``S = {W, Y}``; `rng_y` lets the shape matrix come from its own stream."""
    w = sample_w(rng, dist)
    y = sample_y(rng if rng_y is None else rng_y, nu_s)
    return SpectrumParams(w=w, y=y)
