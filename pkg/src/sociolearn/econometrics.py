"""Recovering weights and signal variances from an action panel.

Each agent's (possibly noisy) action is regressed, without intercept, on the
discounted lagged actions of its candidate neighbors and on the realized
state, which the analyst is assumed to observe ex post.  With measurement
noise the lagged regressors are error-ridden and the estimates carry an
attenuation bias of order ``xi_var``; no instrumenting is attempted.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .exceptions import IdentificationError
from .kernel import WeightProfile
from .montecarlo import PanelData
from .network import Environment, Network

__all__ = [
    "IdentificationResult",
    "add_measurement_noise",
    "recover_weights",
    "recover_signal_variance",
    "naive_implied_signal_variance",
    "write_report_csv",
]


@dataclass(frozen=True, eq=False)
class IdentificationResult:
    weights_hat: WeightProfile
    social_se: np.ndarray  # same layout as weights_hat.social
    own_se: np.ndarray
    fit: np.ndarray  # per-agent residual variance
    links_hat: frozenset
    candidate: Network
    threshold: float
    sigma2_hat: Optional[np.ndarray] = None
    sigma2_valid: Optional[np.ndarray] = None

    def valid_sigma2(self) -> np.ndarray:
        """Estimated signal variances with invalid entries replaced by NaN."""
        if self.sigma2_hat is None:
            raise ValueError("signal variances have not been recovered")
        return np.where(self.sigma2_valid, self.sigma2_hat, np.nan)

    def t_stats(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.social_se > 0, self.weights_hat.social / self.social_se, 0.0)


def add_measurement_noise(panel: PanelData, xi_var: float, seed=0) -> PanelData:
    if xi_var < 0:
        raise ValueError("xi_var must be non-negative")
    if xi_var == 0:
        return panel
    rng = np.random.default_rng(seed)
    noisy = panel.actions + math.sqrt(xi_var) * rng.standard_normal(panel.actions.shape)
    return replace(panel, actions=noisy,
                   measurement_noise_var=panel.measurement_noise_var + xi_var)


def recover_weights(
    panel: PanelData,
    env: Environment,
    candidate_net: Network,
    threshold: float = 3.0,
) -> IdentificationResult:
    """Per-agent least squares of actions on lagged neighbor actions and the state.

    Regressors for agent ``i`` are ``rho**l * a[j, t-l]`` for candidate
    neighbors ``j`` and lags ``l = 1..m``, plus ``theta[t]``.  A link
    ``i -> j`` is reported when some lag's coefficient exceeds ``threshold``
    standard errors in absolute value.
    """
    n, m, T = panel.n, env.memory, panel.T
    if candidate_net.n != n:
        raise ValueError("candidate network size differs from panel")
    need = 10 * (int(candidate_net.degrees.max(initial=0)) * m + 1)
    if T - m < need:
        raise IdentificationError(f"panel too short: {T - m} usable periods, need {need}")
    disc = np.concatenate([env.rho ** l * panel.actions[m - l:T - l] for l in range(1, m + 1)], axis=1)
    theta = panel.states[m:]
    social = np.zeros((n, n * m))
    social_se = np.zeros((n, n * m))
    own = np.zeros(n)
    own_se = np.zeros(n)
    fit = np.zeros(n)
    links = set()
    for i, row in enumerate(candidate_net.neighbors):
        cols = np.array([l * n + j for l in range(m) for j in row], dtype=int)
        X = np.column_stack([disc[:, cols], theta])
        y = panel.actions[m:, i]
        coef, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
        if rank < X.shape[1]:
            raise IdentificationError(f"rank-deficient regressors for agent {i}")
        resid = y - X @ coef
        dof = X.shape[0] - X.shape[1]
        s2 = float(resid @ resid) / dof
        cov = s2 * np.linalg.inv(X.T @ X)
        se = np.sqrt(np.diag(cov))
        social[i, cols] = coef[:-1]
        social_se[i, cols] = se[:-1]
        own[i], own_se[i] = coef[-1], se[-1]
        fit[i] = s2
        for k, c in enumerate(cols):
            if abs(coef[k]) > threshold * se[k]:
                links.add((i, int(c % n)))
    return IdentificationResult(
        weights_hat=WeightProfile(social, own),
        social_se=social_se,
        own_se=own_se,
        fit=fit,
        links_hat=frozenset(links),
        candidate=candidate_net,
        threshold=threshold,
    )


def recover_signal_variance(
    result: IdentificationResult,
    V_hat: np.ndarray,
    env: Environment,
) -> IdentificationResult:
    """Back out signal variances from the stationary variance equation.

    ``sigma2_i = (V_ii - sum_jk W_ij W_ik (rho**2 V_jk + 1)) / w_i**2``.
    Negative estimates are kept but flagged invalid.
    """
    if env.memory != 1:
        raise ValueError("signal-variance recovery implemented for m=1")
    w = result.weights_hat
    n = w.n
    V = np.asarray(V_hat)[:n, :n]
    if np.any(w.own == 0):
        i = int(np.flatnonzero(w.own == 0)[0])
        raise IdentificationError(f"signal weight degenerate for agent {i}")
    B = env.rho ** 2 * V + 1.0
    social_part = np.einsum("ij,jk,ik->i", w.social, B, w.social)
    sigma2 = (np.diag(V) - social_part) / w.own ** 2
    return replace(result, sigma2_hat=sigma2, sigma2_valid=sigma2 > 0)


def naive_implied_signal_variance(
    result: IdentificationResult,
    env: Environment,
    tol: float = 1e-12,
    max_iter: int = 10000,
) -> np.ndarray:
    """Signal variances implied by the estimated own weights under naive play.

    A naive agent sets ``w_i = p_i / (p_i + 1/kappa_i**2)`` with
    ``kappa_i**2 = rho**2 / sum_{j in N_i} p_j + 1`` and ``p = 1/sigma2``;
    the resulting system in ``p`` is solved by fixed-point iteration.
    Entries with an own weight outside ``(0, 1)`` are NaN.
    """
    if env.memory != 1:
        raise ValueError("naive defined for m=1 only")
    w = result.weights_hat.own
    nbrs = result.candidate.neighbors
    odds = np.where((w > 0) & (w < 1), w / np.where(w < 1, 1 - w, 1), np.nan)
    p = np.where(np.isnan(odds), 1.0, odds)
    for _ in range(max_iter):
        new = np.empty_like(p)
        for i, row in enumerate(nbrs):
            if not row:
                new[i] = np.nan
                continue
            kappa2 = env.rho ** 2 / p[list(row)].sum() + 1.0
            new[i] = odds[i] / kappa2
        step = np.nanmax(np.abs(new - p)) if np.any(np.isfinite(new)) else 0.0
        p = np.where(np.isfinite(new), new, p)
        if step < tol:
            break
    with np.errstate(divide="ignore", invalid="ignore"):
        out = 1.0 / p
    out[np.isnan(odds)] = np.nan
    return out


def write_report_csv(result: IdentificationResult, path) -> None:
    """Rows ``agent,neighbor,weight,stderr,sigma2_hat,flag``.

    Social rows carry ``neighbor`` as ``j`` (or ``j:lag`` when memory > 1) and
    flag ``link``/``nolink``; the own-signal row uses ``signal`` and flags
    the validity of the recovered variance.
    """
    w = result.weights_hat
    n, m = w.n, w.memory
    s2 = result.sigma2_hat
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["agent", "neighbor", "weight", "stderr", "sigma2_hat", "flag"])
        for i, row in enumerate(result.candidate.neighbors):
            for l in range(1, m + 1):
                for j in row:
                    c = (l - 1) * n + j
                    name = str(j) if m == 1 else f"{j}:{l}"
                    flag = "link" if (i, j) in result.links_hat else "nolink"
                    wr.writerow([i, name, f"{w.social[i, c]:.12g}",
                                 f"{result.social_se[i, c]:.12g}", "", flag])
            if s2 is None:
                sflag, sval = "", ""
            else:
                sflag = "valid" if result.sigma2_valid[i] else "invalid"
                sval = f"{s2[i]:.12g}"
            wr.writerow([i, "signal", f"{w.own[i]:.12g}", f"{result.own_se[i]:.12g}", sval, sflag])
