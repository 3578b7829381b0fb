"""Experiment configuration files (YAML) and their translation to model objects.

A configuration has the sections ``environment``, ``network``, ``signals``,
``regime`` and ``run``; ``simulate``, ``identify``, ``sweep`` and
``villages`` sections are read by the corresponding subcommands.  Every
validation failure raises :class:`ConfigError` naming the offending key.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

import numpy as np
import yaml

from .exceptions import ConfigError, NetworkError
from .network import (
    BlockSpec,
    Environment,
    Network,
    SignalProfile,
    gen_circle,
    gen_complete,
    gen_erdos_renyi,
    gen_sbm,
    largest_remainder_counts,
    load_edge_list,
    load_signal_file,
)

REGIMES = ("bayesian", "naive", "planner", "steady_state")
_MISSING = object()


def _parse_path(dotted: str):
    parts = []
    for p in dotted.split("."):
        parts.append(int(p) if p.lstrip("-").isdigit() else p)
    return parts


@dataclass
class ExperimentConfig:
    raw: dict
    base_dir: Path = Path(".")

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: invalid YAML: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        return cls(raw, path.parent)

    # -- generic access -------------------------------------------------
    def get(self, dotted: str, default: Any = _MISSING):
        node = self.raw
        for p in _parse_path(dotted):
            try:
                node = node[p]
            except (KeyError, IndexError, TypeError):
                if default is _MISSING:
                    raise ConfigError(f"missing config key '{dotted}'") from None
                return default
        return node

    def number(self, dotted: str, default: Any = _MISSING, kind=float, lo=None, hi=None):
        val = self.get(dotted, default)
        if val is None:
            return None
        try:
            out = kind(val)
        except (TypeError, ValueError):
            raise ConfigError(f"'{dotted}' must be a {kind.__name__}, got {val!r}") from None
        if kind is int and out != float(val):
            raise ConfigError(f"'{dotted}' must be an integer, got {val!r}")
        if (lo is not None and out < lo) or (hi is not None and out > hi):
            raise ConfigError(f"'{dotted}' = {out} outside [{lo}, {hi}]")
        return out

    def with_value(self, dotted: str, value) -> "ExperimentConfig":
        raw = copy.deepcopy(self.raw)
        node = raw
        parts = _parse_path(dotted)
        for p in parts[:-1]:
            try:
                node = node[p]
            except (KeyError, IndexError, TypeError):
                raise ConfigError(f"sweep axis '{dotted}' does not exist in the config") from None
        try:
            node[parts[-1]]
        except (KeyError, IndexError, TypeError):
            raise ConfigError(f"sweep axis '{dotted}' does not exist in the config") from None
        node[parts[-1]] = value
        return ExperimentConfig(raw, self.base_dir)

    def path(self, dotted: str) -> Path:
        p = Path(str(self.get(dotted)))
        p = p if p.is_absolute() else self.base_dir / p
        if not p.exists():
            raise ConfigError(f"'{dotted}': file not found: {p}")
        return p

    # -- model objects --------------------------------------------------
    @property
    def seed(self) -> int:
        return self.number("run.seed", 0, int)

    def environment(self) -> Environment:
        rho = self.number("environment.rho")
        m = self.number("environment.memory", 1, int, lo=1)
        try:
            return Environment(rho, m)
        except ValueError as exc:
            raise ConfigError(f"'environment.rho': {exc}") from None

    def network(self):
        """Return ``(network, signals_or_None)``; SBM networks carry signals."""
        kind = self.get("network.kind")
        seed = self.number("network.seed", self.seed, int)
        try:
            if kind == "complete":
                n = self.number("network.n", kind=int, lo=1)
                return gen_complete(n, bool(self.get("network.include_self", True))), None
            if kind == "circle":
                return gen_circle(self.number("network.n", kind=int, lo=3)), None
            if kind == "erdos_renyi":
                n = self.number("network.n", kind=int, lo=1)
                p = self.number("network.p", lo=0.0, hi=1.0)
                return gen_erdos_renyi(n, p, seed), None
            if kind == "sbm":
                spec = BlockSpec(
                    shares=self.get("network.shares"),
                    link_probs=self.get("network.link_probs"),
                    signal_shares=self.get("network.signal_shares"),
                    signal_type_variances=self.get("network.signal_variances"),
                )
                return gen_sbm(spec, self.number("network.n", kind=int, lo=1), seed)
            if kind == "edge_list":
                net = load_edge_list(
                    self.path("network.path"),
                    undirected=bool(self.get("network.undirected", True)),
                    allow_self_loops=bool(self.get("network.allow_self_loops", False)),
                )
                return net, None
        except NetworkError as exc:
            raise ConfigError(f"'network': {exc}") from None
        raise ConfigError(f"'network.kind' must be one of complete, circle, erdos_renyi, "
                          f"sbm, edge_list; got {kind!r}")

    def signals(self, net: Network, sbm_signals: Optional[SignalProfile] = None):
        """Return ``(SignalProfile, type_labels)``.

        ``type_labels`` assigns each node a signal-type index used by summaries.
        """
        sec = self.get("signals", None)
        n = net.n
        if sec is None:
            if sbm_signals is None:
                raise ConfigError("missing config key 'signals'")
            sig = sbm_signals
            labels = np.array([c[1] for c in net.node_class])
        elif "types" in sec:
            var = self.get("signals.types.variances")
            shares = self.get("signals.types.shares", None)
            if not isinstance(var, list) or not var:
                raise ConfigError("'signals.types.variances' must be a non-empty list")
            shares = [1.0 / len(var)] * len(var) if shares is None else shares
            if len(shares) != len(var) or abs(sum(shares) - 1) > 1e-9 or min(shares) < 0:
                raise ConfigError("'signals.types.shares' must match variances and sum to 1")
            counts = largest_remainder_counts(shares, n)
            labels = np.repeat(np.arange(len(var)), counts)
            sig = self._profile(np.asarray(var, dtype=float)[labels], "signals.types.variances")
        elif "sigma2" in sec:
            s2 = self.number("signals.sigma2")
            sig = self._profile(np.full(n, s2), "signals.sigma2")
            labels = np.zeros(n, dtype=int)
        elif "values" in sec:
            vals = np.asarray(self.get("signals.values"), dtype=float)
            if vals.shape != (n,):
                raise ConfigError(f"'signals.values' needs {n} entries, got {vals.size}")
            sig = self._profile(vals, "signals.values")
            labels = None
        elif "file" in sec:
            try:
                sig = load_signal_file(self.path("signals.file"), net,
                                       default=self.get("signals.default", None))
            except NetworkError as exc:
                raise ConfigError(f"'signals.file': {exc}") from None
            labels = None
        else:
            raise ConfigError("'signals' needs one of: sigma2, values, types, file")
        overrides = self.get("signals.overrides", {}) if sec else {}
        if overrides:
            s = sig.sigma2.copy()
            for node, val in overrides.items():
                if not 0 <= int(node) < n:
                    raise ConfigError(f"'signals.overrides': node {node} outside [0, {n})")
                s[int(node)] = float(val)
            sig = self._profile(s, "signals.overrides")
        if labels is None:
            _, labels = np.unique(sig.sigma2, return_inverse=True)
        return sig, np.asarray(labels, dtype=int)

    @staticmethod
    def _profile(values, key) -> SignalProfile:
        try:
            return SignalProfile(values)
        except ValueError as exc:
            raise ConfigError(f"'{key}': {exc}") from None

    def regime(self, override: Optional[str] = None) -> str:
        kind = override or self.get("regime.kind", "bayesian")
        if kind not in REGIMES:
            raise ConfigError(f"'regime.kind' must be one of {REGIMES}, got {kind!r}")
        return kind

    def solver_options(self) -> dict:
        return {
            "tol": self.number("run.tol", 1e-10, lo=0.0),
            "max_iter": self.number("run.max_iter", 10000, int, lo=1),
            "damping": self.number("run.damping", 0.0, lo=0.0, hi=0.999999),
        }
