"""Observation networks, signal profiles and the model environment.

A :class:`Network` stores, for every node ``i``, the ordered list of nodes
whose past actions ``i`` observes.  Edge ``i -> j`` therefore means that
``j`` is in ``neighbors[i]``.  Generators return undirected networks
(``directed=False``) except where noted.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .exceptions import NetworkError

__all__ = [
    "Environment",
    "SignalProfile",
    "Network",
    "BlockSpec",
    "gen_complete",
    "gen_sbm",
    "gen_erdos_renyi",
    "gen_circle",
    "load_edge_list",
    "load_signal_file",
    "largest_remainder_counts",
]


@dataclass(frozen=True)
class Environment:
    """AR(1) state process parameters.

    The innovation variance is normalized to one and is not configurable.
    ``rho = 0`` (an i.i.d. state) is admitted as a degenerate case.
    """

    rho: float
    memory: int = 1

    def __post_init__(self):
        if not math.isfinite(self.rho) or not abs(self.rho) <= 1:
            raise ValueError(f"rho must satisfy |rho| <= 1, got {self.rho}")
        if int(self.memory) != self.memory or self.memory < 1:
            raise ValueError(f"memory must be a positive integer, got {self.memory}")
        object.__setattr__(self, "memory", int(self.memory))

    @property
    def innovation_var(self) -> float:
        return 1.0


@dataclass(frozen=True, eq=False)
class SignalProfile:
    """Private-signal noise variances, one per node."""

    sigma2: np.ndarray

    def __post_init__(self):
        s = np.array(self.sigma2, dtype=float).reshape(-1)
        if s.size == 0:
            raise ValueError("signal profile is empty")
        if not np.all(np.isfinite(s)) or np.any(s <= 0):
            raise ValueError("signal variances must be positive and finite")
        s.flags.writeable = False
        object.__setattr__(self, "sigma2", s)

    @classmethod
    def uniform(cls, n: int, sigma2: float) -> "SignalProfile":
        return cls(np.full(n, float(sigma2)))

    @classmethod
    def two_types(cls, n: int, sigma_a2: float, sigma_b2: float) -> "SignalProfile":
        """First ``ceil(n/2)`` nodes get ``sigma_a2``, the rest ``sigma_b2``."""
        na = n - n // 2
        return cls(np.r_[np.full(na, float(sigma_a2)), np.full(n - na, float(sigma_b2))])

    @property
    def n(self) -> int:
        return self.sigma2.size

    @property
    def precision(self) -> np.ndarray:
        return 1.0 / self.sigma2

    def with_value(self, node: int, sigma2: float) -> "SignalProfile":
        s = self.sigma2.copy()
        s[node] = sigma2
        return SignalProfile(s)

    def __len__(self):
        return self.n

    def __eq__(self, other):
        return isinstance(other, SignalProfile) and np.array_equal(self.sigma2, other.sigma2)


@dataclass(frozen=True, eq=False)
class Network:
    """Directed observation structure over ``n`` nodes.

    Parameters
    ----------
    n : int
        Number of nodes.
    neighbors : sequence of sequences
        ``neighbors[i]`` lists the nodes observed by ``i``.  Self-observation is
        allowed and is expressed by ``i`` appearing in its own list.
    directed : bool
        When False, reciprocity is enforced for distinct pairs.
    node_class : optional sequence of ``(network_type, signal_type)`` pairs
    labels : optional original node ids (e.g. from an edge-list file)
    """

    n: int
    neighbors: tuple
    directed: bool = False
    node_class: Optional[tuple] = None
    labels: Optional[tuple] = None

    def __post_init__(self):
        n = int(self.n)
        if n < 1:
            raise NetworkError("a network needs at least one node")
        if len(self.neighbors) != n:
            raise NetworkError(f"expected {n} neighbor lists, got {len(self.neighbors)}")
        nbrs = tuple(tuple(int(j) for j in row) for row in self.neighbors)
        for i, row in enumerate(nbrs):
            if len(set(row)) != len(row):
                raise NetworkError(f"node {i} has duplicate neighbors")
            if row and (min(row) < 0 or max(row) >= n):
                raise NetworkError(f"node {i} has a neighbor id outside [0, {n})")
        if not self.directed:
            sets = [set(r) for r in nbrs]
            for i, row in enumerate(nbrs):
                for j in row:
                    if j != i and i not in sets[j]:
                        raise NetworkError(
                            f"undirected network is not reciprocal: {i} observes {j} "
                            f"but not vice versa"
                        )
        if self.node_class is not None:
            nc = tuple(tuple(int(x) for x in c) for c in self.node_class)
            if len(nc) != n:
                raise NetworkError("node_class length does not match n")
            object.__setattr__(self, "node_class", nc)
        if self.labels is not None:
            if len(self.labels) != n:
                raise NetworkError("labels length does not match n")
            object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "neighbors", nbrs)

    @property
    def includes_self(self) -> tuple:
        return tuple(i in row for i, row in enumerate(self.neighbors))

    @cached_property
    def degrees(self) -> np.ndarray:
        return np.array([len(r) for r in self.neighbors], dtype=int)

    @cached_property
    def neighborhood_groups(self) -> tuple:
        """Agents grouped by identical (sorted) observation sets.

        Returns a tuple of ``(neighbor_ids, agent_ids)`` pairs of int arrays,
        ordered by the smallest agent id of each group.
        """
        groups: dict = {}
        for i, row in enumerate(self.neighbors):
            groups.setdefault(tuple(sorted(row)), []).append(i)
        return tuple(
            (np.array(k, dtype=int), np.array(v, dtype=int)) for k, v in groups.items()
        )

    def adjacency(self) -> np.ndarray:
        """Dense 0/1 matrix with ``A[i, j] = 1`` iff ``i`` observes ``j``."""
        a = np.zeros((self.n, self.n))
        for i, row in enumerate(self.neighbors):
            a[i, list(row)] = 1.0
        return a

    def edges(self):
        for i, row in enumerate(self.neighbors):
            for j in row:
                yield i, j

    def __eq__(self, other):
        return (
            isinstance(other, Network)
            and self.n == other.n
            and self.neighbors == other.neighbors
            and self.directed == other.directed
            and self.node_class == other.node_class
        )

    def __hash__(self):
        return hash((self.n, self.neighbors, self.directed))


def _from_adjacency(a: np.ndarray, directed: bool = False, **kw) -> Network:
    nbrs = tuple(tuple(np.flatnonzero(row).tolist()) for row in a)
    return Network(a.shape[0], nbrs, directed=directed, **kw)


def gen_complete(n: int, include_self: bool = True) -> Network:
    if n < 1:
        raise NetworkError("n must be at least 1")
    if include_self:
        nbrs = (tuple(range(n)),) * n
    else:
        nbrs = tuple(tuple(j for j in range(n) if j != i) for i in range(n))
    return Network(n, nbrs)


def gen_circle(n: int) -> Network:
    if n < 3:
        raise NetworkError("a circle needs at least 3 nodes")
    return Network(n, tuple(((i - 1) % n, (i + 1) % n) for i in range(n)))


def gen_erdos_renyi(n: int, p: float, seed=None) -> Network:
    if not 0.0 <= p <= 1.0:
        raise NetworkError(f"link probability must lie in [0, 1], got {p}")
    if n < 1:
        raise NetworkError("n must be at least 1")
    rng = np.random.default_rng(seed)
    u = rng.random((n, n))
    a = np.triu(u < p, k=1)
    return _from_adjacency(a | a.T)


def largest_remainder_counts(shares: Sequence[float], total: int) -> np.ndarray:
    """Round ``shares * total`` to integers summing to ``total``.

    Each count is the floor or the ceiling of its exact value; leftover units go
    to the largest fractional parts, ties to the lowest index.
    """
    exact = np.asarray(shares, dtype=float) * total
    counts = np.floor(exact).astype(int)
    frac = exact - counts
    left = total - counts.sum()
    # stable sort on -frac keeps lowest index first among ties
    order = np.argsort(-frac, kind="stable")
    counts[order[:left]] += 1
    return counts


@dataclass(frozen=True, eq=False)
class BlockSpec:
    """Stochastic block model together with a signal distribution.

    ``link_probs[k, k']`` is the probability that a type-``k`` node and a
    type-``k'`` node are linked; ``signal_shares[k, tau]`` is the share of
    type-``k`` nodes holding signal variance ``signal_type_variances[tau]``.
    """

    shares: np.ndarray
    link_probs: np.ndarray
    signal_shares: np.ndarray
    signal_type_variances: np.ndarray

    def __post_init__(self):
        alpha = np.asarray(self.shares, dtype=float).reshape(-1)
        p = np.atleast_2d(np.asarray(self.link_probs, dtype=float))
        q = np.atleast_2d(np.asarray(self.signal_shares, dtype=float))
        s = np.asarray(self.signal_type_variances, dtype=float).reshape(-1)
        k = alpha.size
        if np.any(alpha <= 0) or abs(alpha.sum() - 1.0) > 1e-12:
            raise NetworkError("shares must be positive and sum to 1")
        if p.shape != (k, k) or not np.allclose(p, p.T, rtol=0, atol=0):
            raise NetworkError("link_probs must be a symmetric K x K matrix")
        if np.any(p < 0) or np.any(p > 1):
            raise NetworkError("link probabilities must lie in [0, 1]")
        if not np.all(p.max(axis=1) > 0):
            raise NetworkError("every network type needs a positive link probability")
        if q.shape != (k, s.size) or np.any(q < 0) or not np.allclose(q.sum(axis=1), 1.0):
            raise NetworkError("signal_shares must be row-stochastic with one column per signal type")
        if np.any(s <= 0) or len(set(s.tolist())) != s.size:
            raise NetworkError("signal type variances must be distinct and positive")
        for name, val in (("shares", alpha), ("link_probs", p), ("signal_shares", q),
                          ("signal_type_variances", s)):
            object.__setattr__(self, name, val)

    @property
    def n_types(self) -> int:
        return self.shares.size


def gen_sbm(spec: BlockSpec, n: int, seed=None) -> tuple:
    """Draw a stochastic block model network and its signal assignment.

    Nodes are laid out type by type; within a type, signal types are assigned
    in contiguous runs in order of signal-type index.
    """
    if n < spec.n_types:
        raise NetworkError(f"insufficient nodes: n={n} for {spec.n_types} network types")
    counts = largest_remainder_counts(spec.shares, n)
    ntype = np.repeat(np.arange(spec.n_types), counts)
    stype = np.concatenate([
        np.repeat(np.arange(spec.signal_type_variances.size),
                  largest_remainder_counts(spec.signal_shares[k], c))
        for k, c in enumerate(counts)
    ])
    rng = np.random.default_rng(seed)
    u = rng.random((n, n))
    a = np.triu(u < spec.link_probs[np.ix_(ntype, ntype)], k=1)
    net = _from_adjacency(a | a.T, node_class=tuple(zip(ntype.tolist(), stype.tolist())))
    return net, SignalProfile(spec.signal_type_variances[stype])


_EDGE_RE = re.compile(r"^\s*([+-]?\d+)\s*,\s*([+-]?\d+)\s*$")


def load_edge_list(path, undirected: bool = True, allow_self_loops: bool = False) -> Network:
    """Read a ``src,dst`` edge list.

    Node ids may be arbitrary integers; they are mapped to dense indices in
    increasing id order and kept in ``Network.labels``.  Blank lines and lines
    starting with ``#`` are ignored.
    """
    edges = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            m = _EDGE_RE.match(text)
            if m is None:
                raise NetworkError(f"{path}:{lineno}: malformed edge line {text!r}")
            src, dst = int(m.group(1)), int(m.group(2))
            if src == dst and not allow_self_loops:
                raise NetworkError(f"{path}:{lineno}: self-loop on node {src}")
            edges.append((src, dst))
    if not edges:
        raise NetworkError(f"{path}: no edges")
    ids = sorted({v for e in edges for v in e})
    index = {v: k for k, v in enumerate(ids)}
    sets = [set() for _ in ids]
    for src, dst in edges:
        sets[index[src]].add(index[dst])
        if undirected:
            sets[index[dst]].add(index[src])
    nbrs = tuple(tuple(sorted(s)) for s in sets)
    return Network(len(ids), nbrs, directed=not undirected, labels=tuple(ids))


def load_signal_file(path, net: Optional[Network] = None, default: Optional[float] = None) -> SignalProfile:
    """Read ``node_id,sigma2`` lines.

    With a network carrying labels, ids are matched against those labels;
    otherwise ids must be the dense indices ``0..n-1``.  Nodes missing from the
    file take ``default`` or raise.
    """
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            parts = [p.strip() for p in text.split(",")]
            try:
                if len(parts) != 2:
                    raise ValueError
                values[int(parts[0])] = float(parts[1])
            except ValueError:
                raise NetworkError(f"{path}:{lineno}: malformed signal line {text!r}") from None
    if net is None:
        n = max(values) + 1 if values else 0
        labels = list(range(n))
    else:
        labels = list(net.labels) if net.labels is not None else list(range(net.n))
    out = []
    for lab in labels:
        if lab in values:
            out.append(values[lab])
        elif default is not None:
            out.append(default)
        else:
            raise NetworkError(f"{path}: no signal variance for node {lab}")
    try:
        return SignalProfile(np.array(out))
    except ValueError as exc:
        raise NetworkError(f"{path}: {exc}") from None
