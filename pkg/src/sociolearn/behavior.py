"""Non-equilibrium behavioral regimes and welfare comparisons.

Covers naive (correlation-neglecting) agents, a planner restricted to
group-symmetric weights, Pareto comparisons between steady states and the
single-agent perturbation toward the private signal.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .exceptions import NonContractiveWeights
from .kernel import EquilibriumResult, WeightProfile, iterate_fixed_weights
from .network import Environment, Network, SignalProfile

log = logging.getLogger(__name__)

__all__ = [
    "ParetoVerdict",
    "GroupWeightSpec",
    "naive_weights",
    "solve_naive",
    "planner_optimize",
    "pareto_compare",
    "perturb_toward_signal",
    "golden_section",
]

INVGOLD = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True, eq=False)
class ParetoVerdict:
    relation: str
    margins: np.ndarray  # variance of first minus variance of second, per agent


def naive_weights(net: Network, sig: SignalProfile, env: Environment) -> WeightProfile:
    """Weights of agents who believe every neighbor simply reports its signal.

    Observed actions are combined in proportion to the neighbors' signal
    precisions; the believed variance of that combination as an estimate of
    the current state is ``rho**2 / sum(precisions) + 1``.
    """
    if env.memory != 1:
        raise ValueError("naive defined for m=1 only")
    n = net.n
    prec = sig.precision
    social = np.zeros((n, n))
    own = np.ones(n)
    for i, row in enumerate(net.neighbors):
        if not row:
            continue
        nb = np.array(row)
        total = prec[nb].sum()
        kappa2 = env.rho ** 2 / total + 1.0
        own[i] = prec[i] / (prec[i] + 1.0 / kappa2)
        social[i, nb] = (1.0 - own[i]) * prec[nb] / total
    return WeightProfile(social, own)


def solve_naive(
    net: Network,
    sig: SignalProfile,
    env: Environment,
    tol: float = 1e-10,
    max_iter: int = 100000,
) -> EquilibriumResult:
    """Steady state of naive play (the naive update is a sup-norm contraction)."""
    w = naive_weights(net, sig, env)
    V, it, res = iterate_fixed_weights(w, sig, env, tol=tol, max_iter=max_iter)
    return EquilibriumResult(V, w, it, res, True, tol)


@dataclass(frozen=True, eq=False)
class GroupWeightSpec:
    """Weights that depend only on group membership.

    ``own[g]`` is the own-signal weight of every member of group ``g``;
    ``social[(g, h)]`` is the total weight a member of ``g`` places on the
    members of group ``h`` she observes, split equally among them.
    """

    grouping: np.ndarray
    own: dict
    social: dict = field(default_factory=dict)

    def to_profile(self, net: Network, memory: int = 1) -> WeightProfile:
        """Expand to a per-agent profile (lag-1 observations only).

        An agent who observes no member of some group ``h`` spreads her social
        weight over the groups she does observe, rescaled to sum to
        ``1 - own[g]``; agents with empty neighborhoods use only their signal.
        """
        n = net.n
        grp = np.asarray(self.grouping)
        social = np.zeros((n, n * memory))
        own = np.ones(n)
        for i, row in enumerate(net.neighbors):
            if not row:
                continue
            g = int(grp[i])
            nb = np.array(row)
            present = sorted(set(grp[nb].tolist()))
            tot = {h: self.social.get((g, h), 0.0) for h in present}
            ws = self.own[g]
            mass = sum(tot.values())
            target = 1.0 - ws
            if abs(mass - target) > 1e-14:
                if abs(mass) > 1e-12:
                    tot = {h: v * target / mass for h, v in tot.items()}
                else:
                    tot = {h: target / len(present) for h in present}
            own[i] = ws
            for h in present:
                members = nb[grp[nb] == h]
                social[i, members] = tot[h] / members.size
        return WeightProfile(social, own)


def golden_section(f: Callable[[float], float], lo: float, hi: float, xtol: float = 1e-9):
    """Minimize a unimodal scalar function on ``[lo, hi]``; return ``(x, f(x))``."""
    a, b = lo, hi
    c = b - INVGOLD * (b - a)
    d = a + INVGOLD * (b - a)
    fc, fd = f(c), f(d)
    while b - a > xtol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - INVGOLD * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INVGOLD * (b - a)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)


def _line_search(f, lo, hi, x0, f0, grid: int, xtol: float):
    """Coarse grid to bracket a feasible minimum, then golden-section refinement."""
    xs = np.linspace(lo, hi, grid)
    fs = np.array([f(x) for x in xs])
    k = int(np.argmin(fs))
    if not np.isfinite(fs[k]):
        return x0, f0
    x, fx = golden_section(f, xs[max(k - 1, 0)], xs[min(k + 1, grid - 1)], xtol)
    if fs[k] < fx:
        x, fx = xs[k], fs[k]
    return (x, fx) if fx < f0 else (x0, f0)


class _GroupParams:
    """Free coordinates of a group-symmetric weight profile."""

    def __init__(self, net: Network, grouping: np.ndarray, box: float):
        self.grouping = grouping
        self.groups = sorted(set(grouping.tolist()))
        observed = {g: set() for g in self.groups}
        for i, row in enumerate(net.neighbors):
            observed[int(grouping[i])].update(int(grouping[j]) for j in row)
        self.observed = {g: sorted(h) for g, h in observed.items()}
        self.coords = []  # (kind, g, h)
        for g in self.groups:
            hs = self.observed[g]
            if not hs:
                continue
            self.coords.append(("own", g, None))
            self.coords.extend(("social", g, h) for h in hs[:-1])
        self.bounds = [(0.0, 1.0) if k == "own" else (-box, box) for k, _, _ in self.coords]

    def start(self) -> np.ndarray:
        x = []
        for kind, g, h in self.coords:
            x.append(0.5 if kind == "own" else 0.5 / len(self.observed[g]))
        return np.array(x)

    def random(self, rng) -> np.ndarray:
        return np.array([rng.uniform(lo, hi) for lo, hi in self.bounds])

    def spec(self, x) -> GroupWeightSpec:
        own = {g: 1.0 for g in self.groups}
        social = {}
        for (kind, g, h), v in zip(self.coords, x):
            if kind == "own":
                own[g] = float(v)
            else:
                social[(g, h)] = float(v)
        for g in self.groups:
            hs = self.observed[g]
            if hs:
                rest = sum(social.get((g, h), 0.0) for h in hs[:-1])
                social[(g, hs[-1])] = 1.0 - own[g] - rest
        return GroupWeightSpec(self.grouping.copy(), own, social)


def planner_optimize(
    net: Network,
    sig: SignalProfile,
    env: Environment,
    grouping: Optional[Sequence[int]] = None,
    param_box: float = 2.0,
    restarts: int = 2,
    tol: float = 1e-10,
    seed=0,
    grid: int = 11,
    xtol: float = 1e-9,
    max_sweeps: int = 200,
):
    """Group-symmetric weights minimizing the mean steady-state variance.

    Coordinate descent over each group's own-signal weight (in ``[0, 1]``) and
    its group-to-group social weights (in ``[-param_box, param_box]``; the
    last observed group absorbs the remainder so weights sum to one).  Each
    coordinate is searched on a coarse grid then refined by golden section.
    The first start is the equal-split profile with own weight 1/2, followed
    by ``restarts`` uniform random starts.  Candidates whose fixed-weight
    iteration fails to contract score ``+inf``.

    Returns ``(GroupWeightSpec, V)`` with ``V`` the steady state at the optimum.
    """
    grp = np.zeros(net.n, dtype=int) if grouping is None else np.asarray(grouping, dtype=int)
    if grp.shape != (net.n,):
        raise ValueError("grouping must assign one group to every node")
    params = _GroupParams(net, grp, param_box)
    cache = {}

    def objective(x) -> float:
        key = tuple(np.round(x, 15))
        if key in cache:
            return cache[key][0]
        w = params.spec(x).to_profile(net, env.memory)
        try:
            V, _, _ = iterate_fixed_weights(w, sig, env, tol=tol, max_iter=20000)
            val = float(np.diag(V)[: net.n].mean())
        except NonContractiveWeights:
            V, val = None, math.inf
        cache[key] = (val, V)
        return val

    rng = np.random.default_rng(seed)
    starts = [params.start()] + [params.random(rng) for _ in range(restarts)]
    best_x, best_f = None, math.inf
    for k, x0 in enumerate(starts):
        x = x0.copy()
        fx = objective(x)
        for _ in range(max_sweeps):
            f_before = fx
            for c, (lo, hi) in enumerate(params.bounds):
                def along(v, c=c):
                    y = x.copy()
                    y[c] = v
                    return objective(y)
                x[c], fx = _line_search(along, lo, hi, x[c], fx, grid, xtol)
            if not f_before - fx >= tol:
                break
        log.debug("planner start %d: objective %.12g", k, fx)
        if fx < best_f:
            best_x, best_f = x.copy(), fx
    if best_x is None:
        raise NonContractiveWeights("non-contractive weights: no feasible planner start")
    spec = params.spec(best_x)
    objective(best_x)
    V = cache[tuple(np.round(best_x, 15))][1]
    return spec, V


def pareto_compare(V1: np.ndarray, V2: np.ndarray, n: Optional[int] = None) -> ParetoVerdict:
    """Compare current-action variances of two steady states.

    ``n`` selects the lag-0 block; by default the full diagonals are compared.
    """
    V1, V2 = np.asarray(V1), np.asarray(V2)
    if V1.shape != V2.shape:
        raise ValueError(f"dimension mismatch: {V1.shape} vs {V2.shape}")
    k = V1.shape[0] if n is None else n
    margins = np.diag(V1)[:k] - np.diag(V2)[:k]
    if np.all(margins <= -1e-12) and np.any(margins < -1e-9):
        rel = "first_dominates"
    elif np.all(margins >= 1e-12) and np.any(margins > 1e-9):
        rel = "second_dominates"
    elif np.all(np.abs(margins) <= 1e-9):
        rel = "equal"
    else:
        rel = "incomparable"
    return ParetoVerdict(rel, margins)


def perturb_toward_signal(w: WeightProfile, agent: int, eps: float) -> WeightProfile:
    """Move weight ``eps`` of one agent's strategy onto her private signal."""
    if not 0.0 <= eps <= 1.0:
        raise ValueError("eps must lie in [0, 1]")
    social = w.social.copy()
    own = w.own.copy()
    social[agent] *= 1.0 - eps
    own[agent] = (1.0 - eps) * own[agent] + eps
    return WeightProfile(social, own)
