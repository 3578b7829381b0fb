"""Closed-form benchmarks and large-population limits."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import SignalProfile

__all__ = [
    "LimitConstants",
    "NaiveLimits",
    "benchmark_variance",
    "aggregation_ratio",
    "homogeneous_limit",
    "limit_equations_residual",
    "naive_limit",
]


@dataclass(frozen=True)
class LimitConstants:
    v_inf: float
    cov_inf: float


@dataclass(frozen=True)
class NaiveLimits:
    v_a: float
    v_b: float
    kappa2: float


def benchmark_variance(sigma2):
    """Error variance with yesterday's state known exactly plus the own signal."""
    return 1.0 / (1.0 / np.asarray(sigma2, dtype=float) + 1.0)


def aggregation_ratio(V: np.ndarray, sig: SignalProfile) -> np.ndarray:
    """Per-agent ratio of equilibrium variance to the benchmark variance."""
    n = sig.n
    return np.diag(V)[:n] / benchmark_variance(sig.sigma2)


def _check_rho(rho: float) -> None:
    if not abs(rho) < 1:
        raise ValueError(f"limit requires |rho| < 1, got {rho}")


def _limit_map(cov: float, sigma2: float, rho: float):
    x = 1.0 / (rho ** 2 * cov + 1.0)
    s = 1.0 / sigma2
    return 1.0 / (s + x), x / (s + x) ** 2


def homogeneous_limit(sigma2: float, rho: float, xtol: float = 1e-13) -> LimitConstants:
    """Limit variance and covariance on large symmetric-neighbor networks.

    The covariance is the root of ``c - g(c)`` on ``(0, sigma2)``, located by
    bisection.  ``g(0) > 0`` and ``g(c) <= sigma2/4`` bound the bracket.
    """
    _check_rho(rho)
    if not sigma2 > 0:
        raise ValueError("sigma2 must be positive")
    lo, hi = 0.0, float(sigma2)
    while hi - lo > xtol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if mid - _limit_map(mid, sigma2, rho)[1] > 0:
            hi = mid
        else:
            lo = mid
    cov = 0.5 * (lo + hi)
    v, _ = _limit_map(cov, sigma2, rho)
    return LimitConstants(v_inf=v, cov_inf=cov)


def limit_equations_residual(lim: LimitConstants, sigma2: float, rho: float) -> float:
    v, c = _limit_map(lim.cov_inf, sigma2, rho)
    return max(abs(v - lim.v_inf), abs(c - lim.cov_inf))


def naive_limit(sigma_a2: float, sigma_b2: float, rho: float) -> NaiveLimits:
    """Large-network naive variances with two equally represented signal types.

    ``kappa2`` is the limiting error variance of the precision-weighted social
    estimate; the weights of that average sum to one, hence the squared
    normalization by the total precision.
    """
    _check_rho(rho)
    pa, pb = 1.0 / sigma_a2, 1.0 / sigma_b2
    mix = (pa / (1 + pa) + pb / (1 + pb)) / (pa + pb)
    kappa_inv2 = 1.0 - rho ** 2 * mix ** 2
    k2 = 1.0 / kappa_inv2
    return NaiveLimits(
        v_a=(k2 + pa) / (1 + pa) ** 2,
        v_b=(k2 + pb) / (1 + pb) ** 2,
        kappa2=k2,
    )
