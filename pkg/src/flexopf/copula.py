"""Moment ambiguity set for spatially correlated net-demand errors.

Dependence is estimated with Spearman rank correlation (invariant under the
marginal transforms), mapped to the Gaussian-copula score correlation
rho = 2 sin(pi/6 rho_s), and combined with marginal dispersions into the
covariance Gamma = (sigma sigma^T) o rho used by every chance-constraint
reformulation. Sampling inverts the same construction, so empirical rank
correlations of the draws converge to the configured Spearman matrix.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import stats

from .errors import InsufficientSamples, NotPSD, ShapeMismatch
from .marginals import Marginal
from .network import FeederModel

PSD_PROJECTION_WARN = 1e-6


@dataclass(frozen=True)
class UncertaintySource:
    id: str
    bus: int
    phase: str
    marginal: Marginal


@dataclass(frozen=True)
class UncertaintyModel:
    """Per-period spatial uncertainty description (means, covariance, incidence)."""

    sources: tuple[UncertaintySource, ...]
    mu: np.ndarray                 # (M,) pu
    sigma: np.ndarray              # (M,) pu
    rho_spearman: np.ndarray       # (M, M)
    rho_pearson: np.ndarray        # (M, M)
    gamma: np.ndarray              # (M, M) pu^2
    gamma_half: np.ndarray         # symmetric, gamma_half.T @ gamma_half == gamma
    a_xi: np.ndarray               # (nbp, M) 0/1 incidence

    @property
    def n_sources(self) -> int:
        return len(self.sources)

    @classmethod
    def build(cls, model: FeederModel, sources, rho_spearman=None) -> "UncertaintyModel":
        """Assemble the moment set from sources and a Spearman matrix.

        Means and standard deviations come from the marginals (the k-th
        coordinate of a Gaussian-copula sample is distributed exactly as its
        marginal). ``rho_spearman`` defaults to independence.
        """
        sources = tuple(sources)
        m = len(sources)
        if rho_spearman is None:
            rho_s = np.eye(m)
        else:
            rho_s = np.asarray(rho_spearman, dtype=float)
            if rho_s.shape != (m, m):
                raise ShapeMismatch(f"spearman matrix is {rho_s.shape}, expected ({m}, {m})")
        rho_p = spearman_to_pearson(rho_s)
        mu = np.array([s.marginal.mean for s in sources])
        sigma = np.array([s.marginal.std for s in sources])
        gamma, gamma_half = assemble_covariance(sigma, rho_p)
        a_xi = np.zeros((model.nbp, m))
        for k, s in enumerate(sources):
            a_xi[model.index(s.bus, s.phase), k] = 1.0
        return cls(sources=sources, mu=mu, sigma=sigma, rho_spearman=rho_s,
                   rho_pearson=rho_p, gamma=gamma, gamma_half=gamma_half, a_xi=a_xi)


def spearman_matrix(samples: np.ndarray) -> np.ndarray:
    """Rank correlation of an (M, T) history matrix, average-rank ties.

    Pairs involving a constant series carry no rank information and are
    defined as 0.
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim != 2:
        raise ShapeMismatch("history must be a 2-d (sources x time) array")
    m, t = x.shape
    if t < 3:
        raise InsufficientSamples(t, 3)
    ranks = np.vstack([stats.rankdata(row) for row in x])
    sd = ranks.std(axis=1)
    constant = sd == 0.0
    safe = np.where(constant, 1.0, sd)
    centered = (ranks - ranks.mean(axis=1, keepdims=True)) / safe[:, None]
    rho = (centered @ centered.T) / t
    rho[constant, :] = 0.0
    rho[:, constant] = 0.0
    np.fill_diagonal(rho, 1.0)
    return np.clip(rho, -1.0, 1.0)


def spearman_to_pearson(rho_s: np.ndarray) -> np.ndarray:
    """Elementwise rho = 2 sin(pi/6 rho_s), projected to the nearest PSD
    correlation matrix when the map leaves the cone."""
    rho_s = np.asarray(rho_s, dtype=float)
    rho = 2.0 * np.sin(np.pi / 6.0 * rho_s)
    rho = 0.5 * (rho + rho.T)
    np.fill_diagonal(rho, 1.0)
    w, U = np.linalg.eigh(rho)
    if w.min() < -1e-12:
        proj = (U * np.clip(w, 0.0, None)) @ U.T
        d = np.sqrt(np.clip(np.diag(proj), 1e-300, None))
        proj = proj / np.outer(d, d)
        adjustment = float(np.abs(proj - rho).max())
        if adjustment > PSD_PROJECTION_WARN:
            warnings.warn(
                f"PSD projection of the Pearson map adjusted entries by {adjustment:.2e}",
                RuntimeWarning, stacklevel=2)
        rho = proj
        np.fill_diagonal(rho, 1.0)
    return rho


def assemble_covariance(sigma: np.ndarray, rho_pearson: np.ndarray):
    """Gamma = (sigma sigma^T) o rho and its symmetric PSD square root."""
    sigma = np.asarray(sigma, dtype=float)
    rho = np.asarray(rho_pearson, dtype=float)
    if rho.shape != (sigma.size, sigma.size):
        raise ShapeMismatch(f"rho is {rho.shape}, expected ({sigma.size}, {sigma.size})")
    gamma = np.outer(sigma, sigma) * rho
    gamma = 0.5 * (gamma + gamma.T)
    w, U = np.linalg.eigh(gamma)
    scale = max(float(w.max()), 0.0)
    if w.min() < -1e-8 * max(scale, 1.0):
        raise NotPSD(float(w.min()))
    gamma_half = (U * np.sqrt(np.clip(w, 0.0, None))) @ U.T
    err = np.abs(gamma_half.T @ gamma_half - gamma).max()
    if err > 1e-10 * max(scale, 1.0):
        raise NotPSD(float(w.min()))
    return gamma, gamma_half


def _score_correlation_root(rho_pearson: np.ndarray) -> np.ndarray:
    w, U = np.linalg.eigh(np.asarray(rho_pearson, dtype=float))
    return (U * np.sqrt(np.clip(w, 0.0, None))) @ U.T


def copula_mean(marginals, rho_pearson, n_samples: int = 100_000, seed: int = 0):
    """Monte Carlo estimate of E[F^-1(Phi(Z))] under the Gaussian copula.

    Returns (mu, standard_error); reproducible for a fixed seed.
    """
    marginals = list(marginals)
    m = len(marginals)
    root = _score_correlation_root(rho_pearson)
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((int(n_samples), m)) @ root
    u = stats.norm.cdf(z)
    vals = np.column_stack([marginals[k].ppf(u[:, k]) for k in range(m)])
    mu = vals.mean(axis=0)
    se = vals.std(axis=0, ddof=1) / np.sqrt(n_samples)
    return mu, se


def sample(model: UncertaintyModel, n: int, seed: int = 0) -> np.ndarray:
    """Draw n correlated realizations (rows) via the inverse transform."""
    m = model.n_sources
    if n == 0:
        return np.empty((0, m))
    root = _score_correlation_root(model.rho_pearson)
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((int(n), m)) @ root
    u = stats.norm.cdf(z)
    out = np.empty((int(n), m))
    for k in range(m):
        out[:, k] = model.sources[k].marginal.ppf(u[:, k])
    return out


def load_history_csv(path: str | Path):
    """Read a history CSV (source_id, timestamp, value_pu) into an (M, T) matrix.

    Returns (source_ids, matrix) with sources ordered by first appearance and
    samples by ascending timestamp within each source.
    """
    series: dict[str, list[tuple[str, float]]] = {}
    order: list[str] = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"source_id", "timestamp", "value_pu"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise ShapeMismatch(f"history CSV must have columns {sorted(required)}")
        for row in reader:
            sid = row["source_id"]
            if sid not in series:
                series[sid] = []
                order.append(sid)
            series[sid].append((row["timestamp"], float(row["value_pu"])))
    lengths = {len(v) for v in series.values()}
    if len(lengths) != 1:
        raise ShapeMismatch("history series have unequal lengths")
    mat = np.array([[v for _, v in sorted(series[sid])] for sid in order])
    return order, mat
