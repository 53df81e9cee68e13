import math

import numpy as np
import pytest

from stochhomog.gfield import (
    BLOCKS,
    NoiseBlock,
    NoiseVector,
    correlation_oracle,
    eval_g,
    eval_g_grid,
    sample_noise,
    sample_noise_block,
)
from stochhomog.spectral import SpectrumParams, build_grid, chi_tilde


class _FixedUniform:
    def __init__(self, u):
        self.u = np.asarray(u, dtype=float)

    def random(self, n):
        return self.u[:n]


@pytest.fixture(scope="module")
def setup():
    grid = build_grid(4)
    params = SpectrumParams(w=(0.3, 0.2, 0.25), y=np.random.default_rng(0).random((3, 2)))
    weights = chi_tilde(params.y, grid, (0.3, 0.2, 0.1))
    return grid, params, weights


@pytest.fixture(scope="module")
def germs(setup):
    """g at the corners of a small box for 1e5 iid germs, shape (N, 2, 2, 2)."""
    grid, params, weights = setup
    rng = np.random.default_rng(11)
    axes = ([0.1, 0.17], [0.4, 0.52], [0.3, 0.35])
    out = []
    for _ in range(10):
        b = sample_noise_block(rng, 10_000 * grid.nu)
        out.append(eval_g_grid(axes, params, b.z.reshape(-1, grid.nu), b.phi.reshape(-1, grid.nu), weights, grid))
    return axes, np.concatenate(out)


def test_blocks_row_major():
    assert len(BLOCKS) == 21
    assert BLOCKS[:7] == ((1, 1), (1, 2), (1, 3), (1, 4), (1, 5), (1, 6), (2, 2))
    assert BLOCKS[-1] == (6, 6)


def test_amplitude_inverse_map():
    b = sample_noise_block(_FixedUniform([0.0, 1.0 - math.exp(-1.0)]), 2, _FixedUniform([0.0, 0.5]))
    np.testing.assert_allclose(b.z, [0.0, 1.0], atol=1e-15)
    np.testing.assert_allclose(b.phi, [0.0, math.pi])


def test_amplitude_moments():
    b = sample_noise_block(np.random.default_rng(1), 1_000_000)
    assert np.all(b.z >= 0) and np.all(np.isfinite(b.z))
    assert np.all((b.phi >= 0) & (b.phi < 2 * math.pi))
    se = b.z.std() / 1000
    assert abs(b.z.mean() - math.sqrt(math.pi) / 2) <= 3 * se
    z2 = b.z**2
    assert abs(z2.mean() - 1) <= 3 * z2.std() / 1000


def test_sample_noise_deterministic_and_blockwise_independent():
    a = sample_noise(7, 3, 64)
    b = sample_noise(7, 3, 64)
    np.testing.assert_array_equal(a.z, b.z)
    np.testing.assert_array_equal(a.phi, b.phi)
    assert a.z.shape == (21, 64) and a.dim == 2 * 21 * 64
    assert len({row.tobytes() for row in a.z}) == 21
    assert not np.array_equal(sample_noise(7, 4, 64).z, a.z)
    np.testing.assert_array_equal(a.block(2, 5).z, a.z[BLOCKS.index((2, 5))])


def test_noise_vector_shape_validation():
    with pytest.raises(ValueError):
        NoiseVector(np.zeros((20, 4)), np.zeros((20, 4)))
    with pytest.raises(ValueError):
        NoiseBlock(np.zeros(3), np.zeros(4))


def test_zero_germ_gives_zero_field(setup):
    grid, params, weights = setup
    x = np.random.default_rng(2).random((10, 3))
    blk = NoiseBlock(np.zeros(grid.nu), np.random.default_rng(3).random(grid.nu))
    np.testing.assert_array_equal(eval_g(x, params, blk, weights, grid), 0.0)


def test_single_term_is_pure_cosine():
    grid = build_grid(4)
    params = SpectrumParams.nominal(0.3, 4)
    k = 37
    weights = np.zeros(grid.nu)
    weights[k] = 1.0
    z = np.zeros(grid.nu)
    z[k] = 1.0
    x = np.random.default_rng(4).random((20, 3))
    g = eval_g(x, params, NoiseBlock(z, np.zeros(grid.nu)), weights, grid)
    np.testing.assert_allclose(g, math.sqrt(2) * np.cos(x @ (math.pi / 0.3 * grid.tau[k])), atol=1e-14)


def test_grid_path_matches_direct_sum(setup):
    grid, params, weights = setup
    xi = sample_noise(5, 1, grid.nu)
    axes = [np.linspace(0, 1, 5), np.linspace(0, 1, 4), np.linspace(0.1, 0.9, 3)]
    fast = eval_g_grid(axes, params, xi.z, xi.phi, weights, grid)
    X = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    for k in (0, 6, 20):
        slow = eval_g(X, params, NoiseBlock(xi.z[k], xi.phi[k]), weights, grid)
        np.testing.assert_allclose(fast[k], slow, rtol=1e-13, atol=1e-13 * np.abs(slow).max())


def test_amplitude_bound(setup):
    grid, params, weights = setup
    xi = sample_noise(9, 2, grid.nu)
    x = np.random.default_rng(5).random((500, 3))
    for k in range(21):
        g = eval_g(x, params, xi.block(*BLOCKS[k]), weights, grid)
        assert np.all(np.abs(g) <= math.sqrt(2 * np.sum(xi.z[k] ** 2)))


def test_weights_length_checked(setup):
    grid, params, weights = setup
    with pytest.raises(ValueError):
        eval_g(np.zeros(3), params, NoiseBlock(np.ones(4), np.zeros(4)), weights[:4], grid)


def test_correlation_oracle_basic(setup):
    grid, params, weights = setup
    assert abs(correlation_oracle(np.zeros(3), params, weights, grid) - 1) <= 1e-12
    zeta = np.random.default_rng(6).normal(size=(50, 3))
    rho = correlation_oracle(zeta, params, weights, grid)
    np.testing.assert_allclose(rho, correlation_oracle(-zeta, params, weights, grid), atol=1e-15)
    assert np.all(np.abs(rho) <= 1 + 1e-15)


def test_zero_mean_unit_variance_gaussian(germs):
    _, g = germs
    v = g[:, 0, 0, 0]
    n = v.size
    assert abs(v.mean()) <= 4 / math.sqrt(n)
    assert abs((v**2).mean() - 1) <= 3 * (v**2).std() / math.sqrt(n)
    kurt = ((v - v.mean()) ** 4).mean() / v.var() ** 2 - 3
    assert abs(kurt) <= 4 * math.sqrt(24 / n)


def test_empirical_covariance_matches_oracle(setup, germs):
    grid, params, weights = setup
    axes, g = germs
    n = g.shape[0]
    base = g[:, 0, 0, 0]
    for idx in [(1, 0, 0), (0, 1, 0), (0, 0, 1), (1, 1, 0), (1, 1, 1)]:
        zeta = np.array([axes[j][idx[j]] - axes[j][0] for j in range(3)])
        prod = base * g[(slice(None), *idx)]
        assert abs(prod.mean() - correlation_oracle(zeta, params, weights, grid)) <= 3 * prod.std() / math.sqrt(n)


def test_covariance_depends_only_on_separation(germs):
    # (x0, x0 + e1) and (x0 + e2, x0 + e1 + e2) share a separation
    _, g = germs
    p1 = g[:, 0, 0, 0] * g[:, 1, 0, 0]
    p2 = g[:, 0, 1, 0] * g[:, 1, 1, 0]
    se = math.sqrt(p1.var() + p2.var()) / math.sqrt(g.shape[0])
    assert abs(p1.mean() - p2.mean()) <= 4 * se
