"""Monte Carlo campaign over (spectrum parameters, germ) and its statistics."""

from __future__ import annotations

import logging
import math
import multiprocessing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy import stats

from .fem import EffectiveSample, RealizationError, build_mesh, homogenize
from .gfield import sample_noise
from .maxent import ElasticityField, HTransformError, MatrixFieldParams, MeanElasticity
from .rng import substream
from .spectral import SpectrumDistribution, SpectrumParams, build_grid, chi_tilde, sample_w, sample_y

__all__ = [
    "DEFAULT_ETA",
    "CampaignConfig",
    "CampaignResult",
    "realize_field",
    "realize",
    "run_campaign",
    "convergence",
    "normalized_norm_stats",
    "kde_pdf",
    "prob_band",
    "prob_band_cdf",
    "proportion_trend",
]

log = logging.getLogger(__name__)

DEFAULT_ETA = tuple(round(0.01 * k, 2) for k in range(1, 101))


@dataclass(frozen=True)
class CampaignConfig:
    kappa_sim: int
    mesh_n: int
    seed: int
    spectrum: SpectrumDistribution
    mfp: MatrixFieldParams
    mean: MeanElasticity
    nu_s: int = 8
    eta: tuple[float, ...] = DEFAULT_ETA
    kde_points: int = 512
    bandwidth: str = "silverman"
    solver: str = "auto"
    rtol: float = 1e-9
    workers: int = 1

    def __post_init__(self):
        if self.kappa_sim < 1:
            raise ValueError("kappa_sim must be >= 1")
        if any(not 0.0 < e <= 1.0 for e in self.eta):
            raise ValueError("eta values must lie in (0, 1]")
        if self.bandwidth != "silverman":
            raise ValueError(f"unsupported bandwidth rule {self.bandwidth!r}")
        build_mesh(self.mesh_n)


@dataclass
class CampaignResult:
    config: CampaignConfig
    records: list[EffectiveSample]
    failures: list[tuple[int, str]]
    conv: np.ndarray
    mean_lambda1: float
    lambda1_normalized: np.ndarray
    pdf_grid: np.ndarray
    pdf: np.ndarray
    eta: np.ndarray
    p_eta: np.ndarray

    @property
    def n_effective(self) -> int:
        return len(self.records)

    def p(self, eta: float) -> float:
        return float(prob_band(self.lambda1_normalized, eta))


@lru_cache(maxsize=8)
def _grid(nu_s: int):
    return build_grid(nu_s)


def realize_field(config: CampaignConfig, kappa: int) -> ElasticityField:
    """Elasticity field of realization `kappa`: draws W, Y and the germ from their substreams."""
    grid = _grid(config.nu_s)
    dist = config.spectrum
    w = sample_w(substream(config.seed, kappa, "W"), dist)
    y = sample_y(substream(config.seed, kappa, "Y"), config.nu_s)
    params = SpectrumParams(w=w, y=y)
    xi = sample_noise(config.seed, kappa, grid.nu)
    weights = chi_tilde(y, grid, dist.deltas)
    return ElasticityField(grid=grid, params=params, xi=xi, mfp=config.mfp, mean=config.mean, weights=weights)


def realize(config: CampaignConfig, kappa: int) -> EffectiveSample:
    field = realize_field(config, kappa)
    sample = homogenize(build_mesh(config.mesh_n), field, method=config.solver, rtol=config.rtol,
                        kappa=kappa, seed=config.seed)
    gc, gcf = field.certificate()
    sample.meta.update(w=field.params.w.tolist(), gamma_C=gc, gamma_Cfield=gcf)
    return sample


def _realize_safe(args):
    config, kappa = args
    try:
        return kappa, realize(config, kappa), None
    except (RealizationError, HTransformError) as exc:
        return kappa, None, f"{type(exc).__name__}: {exc}"


def _run_all(config: CampaignConfig, kappas: Sequence[int]):
    jobs = [(config, k) for k in kappas]
    if config.workers <= 1 or len(jobs) <= 1:
        return [_realize_safe(j) for j in jobs]
    ctx = multiprocessing.get_context("fork")
    with ProcessPoolExecutor(max_workers=config.workers, mp_context=ctx) as ex:
        return list(ex.map(_realize_safe, jobs, chunksize=max(1, len(jobs) // (4 * config.workers))))


def run_campaign(config: CampaignConfig) -> CampaignResult:
    """Run realizations ``1..kappa_sim`` and compute the campaign statistics.

    Each realization draws from substreams keyed by ``(seed, kappa)``, so the
    result does not depend on the number of workers. Failed realizations are
    excluded and listed in ``failures``.
    """
    out = sorted(_run_all(config, range(1, config.kappa_sim + 1)), key=lambda t: t[0])
    records = [s for _, s, _ in out if s is not None]
    failures = [(k, err) for k, _, err in out if err is not None]
    if failures:
        level = logging.WARNING if len(failures) > 0.01 * config.kappa_sim else logging.INFO
        log.log(level, "%d of %d realizations failed", len(failures), config.kappa_sim)
    if not records:
        raise RealizationError("every realization failed")

    conv = convergence(records, config.mean.C_bar)
    eta = np.asarray(config.eta, dtype=float)
    if len(records) >= 2:
        mean1, lam1 = normalized_norm_stats(records)
    else:
        mean1, lam1 = float(records[0].lam[0]), np.ones(1)
    try:
        pdf_grid, pdf = kde_pdf(lam1, n_points=config.kde_points)
    except ValueError as exc:
        log.info("density estimate skipped: %s", exc)
        pdf_grid, pdf = np.empty(0), np.empty(0)
    return CampaignResult(config=config, records=records, failures=failures, conv=conv, mean_lambda1=mean1,
                          lambda1_normalized=lam1, pdf_grid=pdf_grid, pdf=pdf, eta=eta,
                          p_eta=prob_band(lam1, eta))


def convergence(records: Sequence[EffectiveSample], C_bar) -> np.ndarray:
    """``conv(k) = ||Cbar||_F^-1 (k^-1 sum_{kappa <= k} ||lambda^kappa||^2)^(1/2)`` for every prefix k."""
    if len(records) < 1:
        raise ValueError("need at least one record")
    sq = np.array([np.dot(r.lam, r.lam) for r in records])
    k = np.arange(1, len(sq) + 1)
    return np.sqrt(np.cumsum(sq) / k) / np.linalg.norm(C_bar)


def normalized_norm_stats(records: Sequence[EffectiveSample]) -> tuple[float, np.ndarray]:
    """Mean of the largest eigenvalue and the samples normalized by it."""
    if len(records) < 2:
        raise ValueError("need at least two records")
    lam1 = np.array([r.lam[0] for r in records])
    mean = float(lam1.mean())
    return mean, lam1 / mean


def kde_pdf(samples, grid=None, bandwidth: str = "silverman", n_points: int = 512):
    """Gaussian kernel density of 1D `samples`.

    Without an explicit `grid`, ``n_points`` points span ``[min - 3h, max + 3h]``
    with ``h`` the kernel bandwidth. Returns ``(grid, density)``.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 10:
        raise ValueError("kernel density needs at least 10 samples")
    if not np.std(x) > 0:
        raise ValueError("samples have zero variance")
    kde = stats.gaussian_kde(x, bw_method=bandwidth)
    h = float(np.sqrt(kde.covariance[0, 0]))
    if grid is None:
        grid = np.linspace(x.min() - 3 * h, x.max() + 3 * h, n_points)
    grid = np.asarray(grid, dtype=float)
    return grid, kde(grid)


def prob_band(samples, eta):
    """Fraction of samples in ``(1 - eta, 1 + eta]``; `eta` may be an array."""
    x = np.asarray(samples, dtype=float).ravel()
    e = np.asarray(eta, dtype=float)
    inside = (x > 1.0 - e[..., None]) & (x <= 1.0 + e[..., None])
    return inside.mean(axis=-1)


def prob_band_cdf(samples, eta):
    """Same probability as :func:`prob_band`, as a difference of empirical CDF values."""
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    e = np.asarray(eta, dtype=float)
    F = lambda t: np.searchsorted(x, t, side="right") / x.size
    return F(1.0 + e) - F(1.0 - e)


def proportion_trend(p_a: float, n_a: int, p_b: float, n_b: int, z: float = 2.0) -> tuple[str, float, float]:
    """Two-proportion comparison of ``p_a > p_b``.

    Returns ``(verdict, gap, se)`` with verdict ``"greater"`` or ``"less"`` when
    ``|gap| > z * se`` and ``"inconclusive"`` otherwise. The standard error uses
    the pooled proportion.
    """
    gap = p_a - p_b
    pool = (p_a * n_a + p_b * n_b) / (n_a + n_b)
    se = math.sqrt(max(pool * (1 - pool), 0.0) * (1.0 / n_a + 1.0 / n_b))
    if abs(gap) > z * se and gap != 0:
        return ("greater" if gap > 0 else "less"), gap, se
    return "inconclusive", gap, se
