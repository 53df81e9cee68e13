"""Normalized Gaussian homogeneous field by truncated spectral representation.

One realization of the field is

    g(x) = sum_beta sqrt(2 w_beta) z_beta cos(phi_beta + sum_j K_j tau_beta_j x_j)

with ``K_j = pi / w_j``, normalized weights ``w_beta`` summing to one, Rayleigh-type
amplitudes ``z = sqrt(-log psi)`` and uniform phases. Twenty-one independent
copies, one per upper-triangular entry of a 6x6 matrix, make up the germ of one
elasticity field realization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rng import block_label, substream
from .spectral import SpectralGrid, SpectrumParams

__all__ = [
    "BLOCKS",
    "NoiseBlock",
    "NoiseVector",
    "sample_noise_block",
    "sample_noise",
    "eval_g",
    "eval_g_grid",
    "correlation_oracle",
]

#: Upper-triangular (m, n) pairs, 1-based, row-major. The order is part of the
#: reproducibility contract.
BLOCKS: tuple[tuple[int, int], ...] = tuple((m, n) for m in range(1, 7) for n in range(m, 7))


@dataclass(frozen=True)
class NoiseBlock:
    z: np.ndarray
    phi: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float)
        phi = np.asarray(self.phi, dtype=float)
        if z.shape != phi.shape or z.ndim != 1:
            raise ValueError("z and phi must be 1D arrays of equal length")
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "phi", phi)


@dataclass(frozen=True)
class NoiseVector:
    """Germ of one realization: amplitudes and phases of the 21 blocks, shape ``(21, nu)``."""

    z: np.ndarray
    phi: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float)
        phi = np.asarray(self.phi, dtype=float)
        if z.shape != phi.shape or z.ndim != 2 or z.shape[0] != len(BLOCKS):
            raise ValueError(f"expected arrays of shape (21, nu), got {z.shape} and {phi.shape}")
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "phi", phi)

    @property
    def nu(self) -> int:
        return self.z.shape[1]

    @property
    def dim(self) -> int:
        return 2 * self.z.size

    def block(self, m: int, n: int) -> NoiseBlock:
        k = BLOCKS.index((m, n))
        return NoiseBlock(self.z[k], self.phi[k])

    @classmethod
    def zeros(cls, nu: int) -> "NoiseVector":
        return cls(np.zeros((len(BLOCKS), nu)), np.zeros((len(BLOCKS), nu)))


def sample_noise_block(rng: np.random.Generator, nu: int, rng_phi: np.random.Generator | None = None) -> NoiseBlock:
    """Draw amplitudes ``sqrt(-log psi)``, ``psi`` uniform on (0, 1], and phases on [0, 2 pi)."""
    if nu < 1:
        raise ValueError("nu must be >= 1")
    psi = 1.0 - rng.random(nu)  # (0, 1]: keeps the amplitude finite
    z = np.sqrt(-np.log(psi))
    phi = 2.0 * np.pi * (rng if rng_phi is None else rng_phi).random(nu)
    return NoiseBlock(z, phi)


def sample_noise(seed: int, kappa: int, nu: int) -> NoiseVector:
    """Germ of realization `kappa`; each block amplitude/phase vector has its own substream."""
    z = np.empty((len(BLOCKS), nu))
    phi = np.empty((len(BLOCKS), nu))
    for k, (m, n) in enumerate(BLOCKS):
        b = sample_noise_block(substream(seed, kappa, block_label("Z", m, n)), nu,
                               substream(seed, kappa, block_label("Phi", m, n)))
        z[k], phi[k] = b.z, b.phi
    return NoiseVector(z, phi)


def _check_weights(weights, grid: SpectralGrid) -> np.ndarray:
    weights = np.asarray(weights, dtype=float).ravel()
    if weights.shape != (grid.nu,):
        raise ValueError(f"expected {grid.nu} spectral weights, got {weights.shape}")
    return weights


def eval_g(x, params: SpectrumParams, block: NoiseBlock, weights, grid: SpectralGrid) -> np.ndarray:
    """Evaluate one field copy at points `x` (shape ``(3,)`` or ``(..., 3)``) by the direct sum."""
    weights = _check_weights(weights, grid)
    x = np.asarray(x, dtype=float)
    theta = (x[..., None, :] * params.wavenumber_scale * grid.tau).sum(axis=-1)
    amp = np.sqrt(2.0 * weights) * block.z
    g = (amp * np.cos(block.phi + theta)).sum(axis=-1)
    assert np.all(np.abs(g) <= np.sqrt(2.0 * np.sum(block.z**2)) * (1 + 1e-12) + 1e-300)
    return g


def eval_g_grid(axes, params: SpectrumParams, z, phi, weights, grid: SpectralGrid) -> np.ndarray:
    """Evaluate several field copies on the tensor grid ``axes[0] x axes[1] x axes[2]``.

    `z` and `phi` have shape ``(B, nu)``; the result has shape ``(B, n1, n2, n3)``.
    The cosine sum is factored through per-axis complex exponentials, which costs
    ``O(nu_s * n)`` per axis instead of ``O(nu * n^3)``.
    """
    weights = _check_weights(weights, grid)
    z = np.atleast_2d(np.asarray(z, dtype=float))
    phi = np.atleast_2d(np.asarray(phi, dtype=float))
    ns = grid.nu_s
    coef = (np.sqrt(2.0 * weights) * z * np.exp(1j * phi)).reshape(-1, ns, ns, ns)
    K = params.wavenumber_scale
    e = [np.exp(1j * K[j] * np.outer(grid.tau_axis, np.asarray(axes[j], dtype=float))) for j in range(3)]
    out = np.einsum("zabc,ai,bj,ck->zijk", coef, e[0], e[1], e[2], optimize="greedy")
    return out.real


def correlation_oracle(zeta, params: SpectrumParams, weights, grid: SpectralGrid) -> np.ndarray:
    """Closed-form correlation ``sum_beta w_beta cos(sum_j K_j tau_beta_j zeta_j)``."""
    weights = _check_weights(weights, grid)
    zeta = np.asarray(zeta, dtype=float)
    theta = (zeta[..., None, :] * params.wavenumber_scale * grid.tau).sum(axis=-1)
    return (weights * np.cos(theta)).sum(axis=-1)
