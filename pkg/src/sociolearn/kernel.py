"""Covariance dynamics, Bayesian best responses and stationary equilibria.

Covariance layout
-----------------
A covariance matrix ``V`` over ``n`` nodes with memory ``m`` is a symmetric
``(n*m, n*m)`` array in *lag-major* order: row ``l*n + i`` corresponds to the
error ``rho**l * a[i, t-l] - theta[t]`` for ``l = 0, ..., m-1``.  The leading
``n x n`` block is therefore the covariance of current action errors.

The observation-error matrix ``B`` produced by :func:`shift_block` uses the
same layout, with array block ``l-1`` holding lag ``l`` for ``l = 1, ..., m``.
A :class:`WeightProfile` stores social weights as an ``(n, n*m)`` array whose
column ``(l-1)*n + j`` is the weight agent ``i`` puts on ``rho**l a[j, t-l]``.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import lapack

from .exceptions import DivergenceError, IllConditionedNeighborhood, NonContractiveWeights
from .network import Environment, Network, SignalProfile

log = logging.getLogger(__name__)

__all__ = [
    "WeightProfile",
    "EquilibriumResult",
    "shift_block",
    "initial_cov",
    "best_response_weights",
    "propagate",
    "phi_step",
    "phi_fixed",
    "residual",
    "solve_equilibrium",
    "steady_state",
    "iterate_fixed_weights",
    "check_cov",
    "lag0",
]

RIDGE_CONDITION = 1e12
RIDGE_SCALE = 1e-12
SINGULAR_RCOND = 1e-15


@dataclass(frozen=True, eq=False)
class WeightProfile:
    """Linear strategy profile.

    ``social[i, (l-1)*n + j]`` is agent ``i``'s weight on ``rho**l a[j, t-l]``
    and ``own[i]`` the weight on her current private signal.
    """

    social: np.ndarray
    own: np.ndarray

    def __post_init__(self):
        social = np.array(self.social, dtype=float, ndmin=2)
        own = np.array(self.own, dtype=float).reshape(-1)
        if social.shape[0] != own.size or social.shape[1] % own.size:
            raise ValueError(
                f"weight shapes inconsistent: social {social.shape}, own {own.shape}"
            )
        object.__setattr__(self, "social", social)
        object.__setattr__(self, "own", own)

    @property
    def n(self) -> int:
        return self.own.size

    @property
    def memory(self) -> int:
        return self.social.shape[1] // self.own.size

    @classmethod
    def own_signal(cls, n: int, memory: int = 1) -> "WeightProfile":
        return cls(np.zeros((n, n * memory)), np.ones(n))

    @classmethod
    def from_triplets(cls, n: int, memory: int, triplets, own=None) -> "WeightProfile":
        """Build from ``(agent, neighbor, lag, weight)`` rows.

        Without ``own``, each own-signal weight is set so the agent's weights
        sum to one.
        """
        social = np.zeros((n, n * memory))
        for i, j, lag, w in triplets:
            if not 1 <= lag <= memory:
                raise ValueError(f"lag {lag} outside 1..{memory}")
            social[int(i), (int(lag) - 1) * n + int(j)] = float(w)
        if own is None:
            own = 1.0 - social.sum(axis=1)
        return cls(social, own)

    def sums(self) -> np.ndarray:
        return self.own + self.social.sum(axis=1)

    def validate(self, net: Optional[Network] = None, atol: float = 1e-10) -> None:
        gap = np.abs(self.sums() - 1.0)
        if np.any(gap > atol):
            i = int(np.argmax(gap))
            raise ValueError(f"weights of agent {i} sum to {self.sums()[i]!r}, not 1")
        if net is not None:
            mask = _observation_mask(net, self.memory)
            if np.any(self.social[~mask] != 0):
                raise ValueError("weight placed on an unobserved node")

    def triplets(self, net: Network):
        """Yield ``(agent, neighbor, lag, weight)`` over every observed pair."""
        n = self.n
        for i, row in enumerate(net.neighbors):
            for lag in range(1, self.memory + 1):
                for j in row:
                    yield i, j, lag, float(self.social[i, (lag - 1) * n + j])

    def weight_on(self, i: int, j: int, lag: int = 1) -> float:
        return float(self.social[i, (lag - 1) * self.n + j])


@dataclass(frozen=True, eq=False)
class EquilibriumResult:
    V: np.ndarray
    weights: WeightProfile
    iterations: int
    residual: float
    converged: bool
    tol: float = 1e-10

    @property
    def n(self) -> int:
        return self.weights.n

    @property
    def variances(self) -> np.ndarray:
        return np.diag(self.V)[: self.n].copy()

    def to_json(self, net: Network, sig: SignalProfile, env: Environment) -> str:
        doc = {
            "n": self.n,
            "memory": env.memory,
            "rho": env.rho,
            "sigma2": sig.sigma2.tolist(),
            "own_weights": self.weights.own.tolist(),
            "weights": [list(t) for t in self.weights.triplets(net)],
            "V": self.V.reshape(-1).tolist(),
            "iterations": self.iterations,
            "residual": self.residual,
            "converged": self.converged,
            "tol": self.tol,
        }
        return json.dumps(doc, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "EquilibriumResult":
        doc = json.loads(text)
        n, m = doc["n"], doc["memory"]
        w = WeightProfile.from_triplets(n, m, doc["weights"], own=doc["own_weights"])
        V = np.asarray(doc["V"], dtype=float).reshape(n * m, n * m)
        return cls(V, w, doc["iterations"], doc["residual"], doc["converged"], doc["tol"])


def lag0(V: np.ndarray, n: int) -> np.ndarray:
    """Current-period block of a covariance matrix."""
    return V[:n, :n]


def check_cov(V: np.ndarray, atol_sym: float = 1e-12, atol_psd: float = 1e-9) -> None:
    """Raise ``AssertionError`` unless ``V`` is a valid covariance matrix (up to tolerance)."""
    V = np.asarray(V)
    scale = max(1.0, float(np.abs(V).max()))
    asym = float(np.abs(V - V.T).max())
    assert asym <= atol_sym * scale, f"asymmetry {asym:.3e}"
    lam = float(np.linalg.eigvalsh((V + V.T) / 2).min())
    assert lam >= -atol_psd * scale, f"smallest eigenvalue {lam:.3e}"
    d = np.sqrt(np.clip(np.diag(V), 0, None))
    excess = float((np.abs(V) - np.outer(d, d)).max())
    assert excess <= atol_psd * scale, f"Cauchy-Schwarz violated by {excess:.3e}"


def shift_block(V: np.ndarray, env: Environment) -> np.ndarray:
    """Covariance of next-period observation errors.

    Entry ``((i, l), (j, l'))`` of the result, for lags ``l, l' >= 1`` stored
    in array blocks ``l-1`` and ``l'-1``, is ``rho**2 V[(i,l-1),(j,l'-1)] + 1``.
    """
    return env.rho ** 2 * np.asarray(V, dtype=float) + 1.0


def initial_cov(sig: SignalProfile, env: Environment) -> np.ndarray:
    """Cold-start covariance: every action has always equalled its signal.

    The lag-0 block is ``diag(sigma2)``; deeper lags carry the shifted
    structure, which makes this the steady state of all-own-signal play.
    """
    n, m, r2 = sig.n, env.memory, env.rho ** 2
    V = np.empty((n * m, n * m))
    for a in range(m):
        for b in range(m):
            common = sum(r2 ** k for k in range(min(a, b)))
            blk = np.full((n, n), float(common))
            if a == b:
                blk[np.diag_indices(n)] += r2 ** a * sig.sigma2
            V[a * n:(a + 1) * n, b * n:(b + 1) * n] = blk
    return V


def _observation_mask(net: Network, memory: int) -> np.ndarray:
    mask = net.adjacency().astype(bool)
    return np.tile(mask, (1, memory))


def _solve_ones(C: np.ndarray, agent: int) -> np.ndarray:
    """Solve ``C x = 1`` with a Bunch-Kaufman factorization.

    A ridge of ``1e-12 * trace(C)/dim`` is added once the reciprocal condition
    estimate drops below ``1e-12``.
    """
    dim = C.shape[0]
    ones = np.ones((dim, 1))
    anorm = float(np.abs(C).sum(axis=0).max())
    ldu, ipiv, info = lapack.dsytrf(C, lower=1)
    rcond = 0.0
    if info == 0:
        rcond, _ = lapack.dsycon(ldu, ipiv, anorm, lower=1)
    if info != 0 or rcond * RIDGE_CONDITION < 1.0:
        ridged = C + RIDGE_SCALE * np.trace(C) / dim * np.eye(dim)
        ldu, ipiv, info = lapack.dsytrf(ridged, lower=1)
        rcond2 = 0.0
        if info == 0:
            rcond2, _ = lapack.dsycon(ldu, ipiv, float(np.abs(ridged).sum(axis=0).max()), lower=1)
        if info != 0 or rcond2 < SINGULAR_RCOND:
            cond = np.inf if rcond2 == 0 else 1.0 / rcond2
            raise IllConditionedNeighborhood(agent, cond)
        log.debug("ridge added for agent %d (rcond %.3e)", agent, rcond)
    x, info = lapack.dsytrs(ldu, ipiv, ones, lower=1)
    if info != 0:
        raise IllConditionedNeighborhood(agent, np.inf)
    return x[:, 0]


def best_response_weights(
    V: np.ndarray, net: Network, sig: SignalProfile, env: Environment
) -> WeightProfile:
    """Bayesian best response to the covariance ``V``.

    Agent ``i``'s observation covariance is block diagonal (social observations,
    then her private signal), so ``C_i^{-1} 1`` splits into ``B_N^{-1} 1`` and
    ``1/sigma_i^2``.  Agents with identical observation sets share one solve.
    """
    n, m = net.n, env.memory
    B = shift_block(V, env)
    social = np.zeros((n, n * m))
    own = np.ones(n)
    lag_offsets = np.arange(m)[:, None] * n
    for nbrs, agents in net.neighborhood_groups:
        if nbrs.size == 0:
            continue
        idx = (lag_offsets + nbrs[None, :]).reshape(-1)
        x = _solve_ones(B[np.ix_(idx, idx)], int(agents[0]))
        prec = 1.0 / sig.sigma2[agents]
        denom = x.sum() + prec
        social[np.ix_(agents, idx)] = np.outer(1.0 / denom, x)
        own[agents] = prec / denom
    return WeightProfile(social, own)


def propagate(B: np.ndarray, w: WeightProfile, sig: SignalProfile) -> np.ndarray:
    """Covariance after one period of play with weights ``w``.

    ``B`` is the observation-error covariance from :func:`shift_block`.
    """
    n, m = w.n, w.memory
    WB = w.social @ B
    out = np.empty_like(B)
    top = WB @ w.social.T
    top = 0.5 * (top + top.T)
    top[np.diag_indices(n)] += w.own ** 2 * sig.sigma2
    out[:n, :n] = top
    if m > 1:
        k = n * (m - 1)
        cross = WB[:, :k]
        out[:n, n:] = cross
        out[n:, :n] = cross.T
        out[n:, n:] = B[:k, :k]
    return out


def phi_step(V: np.ndarray, net: Network, sig: SignalProfile, env: Environment):
    """One application of the best-response update.

    Returns ``(V_next, weights)`` where ``weights`` best-respond to ``V``.
    """
    w = best_response_weights(V, net, sig, env)
    return propagate(shift_block(V, env), w, sig), w


def phi_fixed(V: np.ndarray, w: WeightProfile, sig: SignalProfile, env: Environment) -> np.ndarray:
    """Update with the weights held fixed at ``w``."""
    return propagate(shift_block(V, env), w, sig)


def _sup(a: np.ndarray) -> float:
    return float(np.abs(a).max())


def residual(V: np.ndarray, net: Network, sig: SignalProfile, env: Environment) -> float:
    Vn, _ = phi_step(V, net, sig, env)
    return _sup(Vn - V)


def solve_equilibrium(
    net: Network,
    sig: SignalProfile,
    env: Environment,
    tol: float = 1e-10,
    max_iter: int = 10000,
    init: Optional[np.ndarray] = None,
    damping: float = 0.0,
) -> EquilibriumResult:
    """Iterate the best-response map to a stationary equilibrium.

    Returns the first iterate ``V`` whose residual ``|Phi(V) - V|_sup`` is at
    most ``tol`` together with the best response to that ``V``; if none is
    found within ``max_iter`` steps the last iterate is returned with
    ``converged=False``.  ``damping`` in ``[0, 1)`` blends the previous
    iterate into each update.
    """
    if sig.n != net.n:
        raise ValueError("signal profile and network sizes differ")
    if not 0.0 <= damping < 1.0:
        raise ValueError("damping must lie in [0, 1)")
    V = initial_cov(sig, env) if init is None else np.array(init, dtype=float)
    if V.shape != (net.n * env.memory,) * 2:
        raise ValueError(f"init has shape {V.shape}")
    res = np.inf
    w = None
    it = 0
    for it in range(1, max_iter + 1):
        Vn, w = phi_step(V, net, sig, env)
        if not np.all(np.isfinite(Vn)):
            raise DivergenceError(f"divergence: non-finite covariance at iteration {it}")
        res = _sup(Vn - V)
        if res <= tol:
            return EquilibriumResult(V, w, it, res, True, tol)
        V = Vn if damping == 0.0 else (1.0 - damping) * Vn + damping * V
    log.warning("equilibrium iteration stopped at max_iter=%d, residual %.3e", max_iter, res)
    w = best_response_weights(V, net, sig, env)
    res = residual(V, net, sig, env)
    return EquilibriumResult(V, w, it, res, res <= tol, tol)


def iterate_fixed_weights(
    w: WeightProfile,
    sig: SignalProfile,
    env: Environment,
    tol: float = 1e-10,
    max_iter: int = 100000,
    init: Optional[np.ndarray] = None,
    patience: int = 100,
):
    """Iterate the fixed-weight update; return ``(V, iterations, residual)``.

    Raises :class:`NonContractiveWeights` when the residual fails to decrease
    for ``patience`` consecutive iterations or the iterates blow up.
    """
    if w.memory != env.memory:
        raise ValueError("weight profile memory differs from environment memory")
    V = initial_cov(sig, env) if init is None else np.array(init, dtype=float)
    prev = np.inf
    stall = 0
    for it in range(1, max_iter + 1):
        Vn = phi_fixed(V, w, sig, env)
        res = _sup(Vn - V)
        if not np.isfinite(res):
            raise NonContractiveWeights("non-contractive weights: iterates diverged")
        if res <= tol:
            return V, it, res
        if res < prev:
            stall = 0
        else:
            stall += 1
            if stall >= patience:
                raise NonContractiveWeights(
                    f"non-contractive weights: residual stuck at {res:.3e} "
                    f"for {patience} iterations"
                )
        prev = res
        V = Vn
    raise NonContractiveWeights(f"non-contractive weights: no convergence in {max_iter} iterations")


def steady_state(
    w: WeightProfile,
    net: Network,
    sig: SignalProfile,
    env: Environment,
    tol: float = 1e-10,
    max_iter: int = 100000,
    init: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Covariance matrix reproduced by the frozen weight profile ``w``."""
    w.validate(net)
    V, _, _ = iterate_fixed_weights(w, sig, env, tol=tol, max_iter=max_iter, init=init)
    return V
