"""Forward simulation of states, signals and linear actions.

Random draws come from a single ``numpy.random.Generator`` (PCG64) seeded by
the caller.  The draw order is fixed: first the initial state, then for each
period the innovation followed by the signal noises in node order.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .kernel import WeightProfile
from .network import Environment, Network, SignalProfile

try:
    from numba import njit
except ImportError:  # pragma: no cover
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f

__all__ = [
    "PanelData",
    "default_burn_in",
    "simulate_paths",
    "error_vectors",
    "empirical_cov",
    "empirical_cov_se",
    "write_panel_csv",
    "read_panel_csv",
]

CHUNK = 1 << 16


@dataclass(frozen=True, eq=False)
class PanelData:
    states: np.ndarray  # (T,)
    actions: np.ndarray  # (T, n)
    seed: Optional[int] = None
    burn_in: int = 0
    measurement_noise_var: float = 0.0

    def __post_init__(self):
        states = np.asarray(self.states, dtype=float).reshape(-1)
        actions = np.asarray(self.actions, dtype=float)
        if actions.ndim != 2 or actions.shape[0] != states.size:
            raise ValueError("actions must be a (T, n) array matching the states")
        if not (np.all(np.isfinite(states)) and np.all(np.isfinite(actions))):
            raise ValueError("panel contains non-finite entries")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "actions", actions)

    @property
    def T(self) -> int:
        return self.states.size

    @property
    def n(self) -> int:
        return self.actions.shape[1]


def default_burn_in(rho: float) -> int:
    if abs(rho) >= 1:
        return 1000
    return max(1000, math.ceil(10.0 / (1.0 - abs(rho))))


@njit(cache=False)
def _run(z, theta0, rho, own, sigma, social, memory, hist, out_theta, out_a, start):
    """Advance the recursion over one block of draws.

    ``hist[l]`` holds ``rho**(l+1) * a[t-1-l]`` for the upcoming period.
    Returns the last state.
    """
    n = own.shape[0]
    theta = theta0
    steps = z.shape[0]
    for s in range(steps):
        theta = rho * theta + z[s, 0]
        a = np.empty(n)
        for i in range(n):
            acc = own[i] * (theta + sigma[i] * z[s, 1 + i])
            for l in range(memory):
                base = l * n
                for j in range(n):
                    w = social[i, base + j]
                    if w != 0.0:
                        acc += w * hist[l, j]
            a[i] = acc
        for l in range(memory - 1, 0, -1):
            for j in range(n):
                hist[l, j] = rho * hist[l - 1, j]
        for j in range(n):
            hist[0, j] = rho * a[j]
        t = start + s
        if t >= 0:
            out_theta[t] = theta
            for j in range(n):
                out_a[t, j] = a[j]
    return theta


def simulate_paths(
    w: WeightProfile,
    net: Optional[Network],
    sig: SignalProfile,
    env: Environment,
    T: int,
    burn_in: Optional[int] = None,
    seed=0,
) -> PanelData:
    """Simulate ``T`` periods after discarding ``burn_in`` warm-up periods.

    Action history starts at zero and the initial state is drawn from the
    stationary law (zero when ``rho == 1``).
    """
    if T < 1:
        raise ValueError("T must be positive")
    n, m = sig.n, env.memory
    if w.n != n or w.memory != m:
        raise ValueError("weight profile does not match signals/environment")
    if net is not None and net.n != n:
        raise ValueError("network size differs from signal profile")
    burn = default_burn_in(env.rho) if burn_in is None else int(burn_in)
    rng = np.random.default_rng(seed)
    rho = float(env.rho)
    theta = rng.standard_normal() / math.sqrt(1 - rho ** 2) if abs(rho) < 1 else 0.0
    hist = np.zeros((m, n))
    out_theta = np.empty(T)
    out_a = np.empty((T, n))
    sigma = np.sqrt(sig.sigma2)
    social = np.ascontiguousarray(w.social)
    own = np.ascontiguousarray(w.own)
    total = burn + T
    done = 0
    while done < total:
        k = min(CHUNK, total - done)
        z = rng.standard_normal((k, n + 1))
        theta = _run(z, theta, rho, own, sigma, social, m, hist, out_theta, out_a, done - burn)
        done += k
    return PanelData(out_theta, out_a, seed=seed if isinstance(seed, int) else None, burn_in=burn)


def error_vectors(panel: PanelData, env: Environment) -> np.ndarray:
    """Rows ``t >= m-1`` of ``rho**l a[i, t-l] - theta[t]`` in lag-major order."""
    m, n, T = env.memory, panel.n, panel.T
    if T < m:
        raise ValueError("panel shorter than the memory depth")
    rows = T - m + 1
    out = np.empty((rows, n * m))
    th = panel.states[m - 1:]
    for l in range(m):
        out[:, l * n:(l + 1) * n] = env.rho ** l * panel.actions[m - 1 - l:T - l] - th[:, None]
    return out


def empirical_cov(panel: PanelData, env: Environment) -> np.ndarray:
    """Sample covariance (``N-1`` normalization) of the action-error vectors."""
    if panel.T < env.memory + 2:
        raise ValueError(
            f"insufficient periods: {panel.T} < memory + 2 = {env.memory + 2}"
        )
    e = error_vectors(panel, env)
    e = e - e.mean(axis=0)
    return e.T @ e / (e.shape[0] - 1)


def empirical_cov_se(panel: PanelData, env: Environment, batches: int = 50) -> np.ndarray:
    """Batch-means standard error of each entry of :func:`empirical_cov`."""
    e = error_vectors(panel, env)
    size = e.shape[0] // batches
    if size < 2:
        raise ValueError("insufficient periods for batch means")
    covs = np.empty((batches,) + (e.shape[1],) * 2)
    for b in range(batches):
        chunk = e[b * size:(b + 1) * size]
        chunk = chunk - chunk.mean(axis=0)
        covs[b] = chunk.T @ chunk / (size - 1)
    return covs.std(axis=0, ddof=1) / math.sqrt(batches)


def write_panel_csv(panel: PanelData, path) -> None:
    n = panel.n
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["t", "theta"] + [f"a_{i}" for i in range(n)])
        for t in range(panel.T):
            wr.writerow([t, f"{panel.states[t]:.12g}"] + [f"{x:.12g}" for x in panel.actions[t]])


def read_panel_csv(path, measurement_noise_var: float = 0.0) -> PanelData:
    with open(path, newline="") as fh:
        header = next(csv.reader(fh))
    if header[:2] != ["t", "theta"] or not all(h.startswith("a_") for h in header[2:]):
        raise ValueError(f"{path}: expected header t,theta,a_0,...")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return PanelData(data[:, 1], data[:, 2:], measurement_noise_var=measurement_noise_var)
