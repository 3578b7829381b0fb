"""Command-line experiment runner.

Every subcommand reads a YAML configuration (see :mod:`sociolearn.config`)
and writes CSV files with a header row and numbers at 12 significant digits.
Exit status is 0 on success, 1 on a configuration error and 2 on a numerical
failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .asymptotics import aggregation_ratio
from .behavior import planner_optimize, solve_naive
from .config import ExperimentConfig
from .econometrics import (
    add_measurement_noise,
    naive_implied_signal_variance,
    recover_signal_variance,
    recover_weights,
    write_report_csv,
)
from .exceptions import ConfigError, NetworkError, NumericalError
from .kernel import WeightProfile, iterate_fixed_weights, solve_equilibrium
from .montecarlo import empirical_cov, read_panel_csv, simulate_paths, write_panel_csv
from .network import (
    Environment,
    Network,
    SignalProfile,
    gen_complete,
    largest_remainder_counts,
    load_edge_list,
    load_signal_file,
)

log = logging.getLogger("sociolearn")

SUBCOMMANDS = {
    "equilibrium": "bayesian",
    "naive": "naive",
    "steady-state": "steady_state",
    "planner": "planner",
}
PCT_METHOD = "inverted_cdf"


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.12g}"
    return str(x)


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for row in rows:
            wr.writerow([fmt(v) for v in row])


def read_weights_csv(path: Path, net: Network, memory: int) -> WeightProfile:
    """Read ``agent,neighbor,lag,weight`` triplets; own weights complete each row to one.

    Node ids are the network's labels when it carries them (edge-list input),
    dense indices otherwise.
    """
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"'regime.weights': cannot read {path}: {exc}") from None
    if data.size and data.shape[1] != 4:
        raise ConfigError(f"'regime.weights': {path} must have columns agent,neighbor,lag,weight")
    index = {lab: k for k, lab in enumerate(node_names(net))}
    try:
        trip = [(index[int(i)], index[int(j)], int(lag), w) for i, j, lag, w in data.tolist()]
        return WeightProfile.from_triplets(net.n, memory, trip)
    except KeyError as exc:
        raise ConfigError(f"'regime.weights': unknown node {exc.args[0]}") from None
    except ValueError as exc:
        raise ConfigError(f"'regime.weights': {exc}") from None


@dataclass
class Outcome:
    regime: str
    V: np.ndarray
    weights: WeightProfile
    iterations: int
    residual: float
    converged: bool
    extra: Optional[dict] = None


@dataclass
class Problem:
    net: Network
    sig: SignalProfile
    env: Environment
    types: np.ndarray


def build_problem(cfg: ExperimentConfig) -> Problem:
    env = cfg.environment()
    net, sbm_sig = cfg.network()
    sig, types = cfg.signals(net, sbm_sig)
    if sig.n != net.n:
        raise ConfigError(f"'signals': {sig.n} variances for a {net.n}-node network")
    return Problem(net, sig, env, types)


def solve_regime(cfg: ExperimentConfig, regime: str, prob: Problem) -> Outcome:
    net, sig, env = prob.net, prob.sig, prob.env
    opts = cfg.solver_options()
    if regime == "bayesian":
        res = solve_equilibrium(net, sig, env, **opts)
        return Outcome(regime, res.V, res.weights, res.iterations, res.residual, res.converged,
                       {"result": res})
    if regime == "naive":
        if env.memory != 1:
            raise ConfigError("'environment.memory': naive defined for m=1 only")
        res = solve_naive(net, sig, env, tol=opts["tol"], max_iter=max(opts["max_iter"], 100000))
        return Outcome(regime, res.V, res.weights, res.iterations, res.residual, True)
    if regime == "steady_state":
        source = cfg.get("regime.weights", "own_signal")
        if source == "own_signal":
            w = WeightProfile.own_signal(net.n, env.memory)
        elif source in ("equilibrium", "naive"):
            w = solve_regime(cfg, "bayesian" if source == "equilibrium" else "naive", prob).weights
        else:
            w = read_weights_csv(cfg.path("regime.weights"), net, env.memory)
        try:
            w.validate(net)
        except ValueError as exc:
            raise ConfigError(f"'regime.weights': {exc}") from None
        V, it, res = iterate_fixed_weights(w, sig, env, tol=opts["tol"],
                                           max_iter=max(opts["max_iter"], 100000))
        return Outcome(regime, V, w, it, res, True)
    if regime == "planner":
        grouping = cfg.get("regime.grouping", "none")
        if grouping == "signal_type":
            grp = prob.types
        elif grouping == "none":
            grp = None
        elif isinstance(grouping, list):
            grp = np.asarray(grouping, dtype=int)
            if grp.shape != (net.n,):
                raise ConfigError(f"'regime.grouping' needs {net.n} entries")
        else:
            raise ConfigError("'regime.grouping' must be none, signal_type or a list")
        spec, V = planner_optimize(
            net, sig, env, grouping=grp,
            param_box=cfg.number("regime.param_box", 2.0, lo=0.0),
            restarts=cfg.number("regime.restarts", 2, int, lo=0),
            tol=opts["tol"], seed=cfg.seed,
        )
        w = spec.to_profile(net, env.memory)
        _, it, res = iterate_fixed_weights(w, sig, env, tol=opts["tol"], init=V)
        return Outcome(regime, V, w, it, res, True, {"spec": spec})
    raise ConfigError(f"unknown regime {regime!r}")


def node_names(net: Network):
    return list(net.labels) if net.labels is not None else list(range(net.n))


def write_run_outputs(out: Path, prob: Problem, oc: Outcome, wall: float) -> None:
    net, sig, env = prob.net, prob.sig, prob.env
    n = net.n
    diag = np.diag(oc.V)[:n]
    ratio = aggregation_ratio(oc.V, sig)
    names = node_names(net)
    write_csv(out / "result.csv", ["node", "sigma2", "w_s", "V_ii", "aggregation_ratio"],
              ([names[i], sig.sigma2[i], oc.weights.own[i], diag[i], ratio[i]] for i in range(n)))
    write_csv(out / "weights.csv", ["agent", "neighbor", "lag", "weight"],
              ([names[i], names[j], lag, w] for i, j, lag, w in oc.weights.triplets(net)))
    write_csv(out / "meta.csv", ["key", "value"], [
        ["regime", oc.regime], ["n", n], ["memory", env.memory], ["rho", env.rho],
        ["iterations", oc.iterations], ["residual", oc.residual],
        ["converged", oc.converged], ["wall_time_s", wall],
    ])
    extra = oc.extra or {}
    if "result" in extra:
        (out / "equilibrium.json").write_text(extra["result"].to_json(net, sig, env) + "\n")
    if "spec" in extra:
        spec = extra["spec"]
        rows = [["own", g, "", v] for g, v in sorted(spec.own.items())]
        rows += [["social", g, h, v] for (g, h), v in sorted(spec.social.items())]
        write_csv(out / "planner.csv", ["kind", "group", "target_group", "weight"], rows)


def cmd_run(cfg: ExperimentConfig, regime: str, out: Path) -> int:
    t0 = time.perf_counter()
    prob = build_problem(cfg)
    oc = solve_regime(cfg, regime, prob)
    write_run_outputs(out, prob, oc, time.perf_counter() - t0)
    if not oc.converged:
        log.error("iteration did not converge: residual %.3e after %d iterations",
                  oc.residual, oc.iterations)
        return 2
    return 0


def cmd_simulate(cfg: ExperimentConfig, out: Path) -> int:
    t0 = time.perf_counter()
    prob = build_problem(cfg)
    regime = cfg.regime(cfg.get("simulate.regime", None))
    oc = solve_regime(cfg, regime, prob)
    T = cfg.number("simulate.T", kind=int, lo=1)
    burn = cfg.number("simulate.burn_in", None, int, lo=0)
    seed = cfg.number("simulate.seed", cfg.seed, int)
    noise = cfg.number("simulate.noise_var", 0.0, lo=0.0)
    panel = simulate_paths(oc.weights, prob.net, prob.sig, prob.env, T, burn_in=burn, seed=seed)
    panel = add_measurement_noise(panel, noise, seed=seed + 1)
    write_panel_csv(panel, out / "panel.csv")
    write_run_outputs(out, prob, oc, time.perf_counter() - t0)
    return 0


def cmd_identify(cfg: ExperimentConfig, out: Path) -> int:
    env = cfg.environment()
    try:
        panel = read_panel_csv(cfg.path("identify.panel"),
                               measurement_noise_var=cfg.number("identify.noise_var", 0.0, lo=0.0))
    except ValueError as exc:
        raise ConfigError(f"'identify.panel': {exc}") from None
    cand = cfg.get("identify.candidate", "complete")
    if cand == "complete":
        net = gen_complete(panel.n, include_self=bool(cfg.get("identify.include_self", False)))
    elif cand == "network":
        net, _ = cfg.network()
        if net.n != panel.n:
            raise ConfigError(f"'network': {net.n} nodes but the panel has {panel.n} agents")
    else:
        raise ConfigError("'identify.candidate' must be complete or network")
    res = recover_weights(panel, env, net, threshold=cfg.number("identify.threshold", 3.0, lo=0.0))
    naive = np.full(panel.n, np.nan)
    if env.memory == 1:
        res = recover_signal_variance(res, empirical_cov(panel, env), env)
        naive = naive_implied_signal_variance(res, env)
    write_report_csv(res, out / "identification.csv")
    eq = res.sigma2_hat if res.sigma2_hat is not None else np.full(panel.n, np.nan)
    write_csv(out / "hypotheses.csv", ["agent", "sigma2_equilibrium", "sigma2_naive"],
              ([i, eq[i], naive[i]] for i in range(panel.n)))
    return 0


def percentiles(x: np.ndarray):
    return np.percentile(x, [25, 50, 75], method=PCT_METHOD)


def _sweep_point(cfg: ExperimentConfig, axis: str, value, regime: str):
    try:
        prob = build_problem(cfg.with_value(axis, value))
        oc = solve_regime(cfg.with_value(axis, value), regime, prob)
    except (ConfigError, NetworkError, NumericalError, ValueError) as exc:
        return None, str(exc)
    diag = np.diag(oc.V)[: prob.net.n]
    summary = [(float(prob.sig.sigma2[prob.types == k][0]), diag[prob.types == k])
               for k in np.unique(prob.types)]
    msg = "" if oc.converged else f"not converged (residual {oc.residual:.3e})"
    return (oc, diag, summary), msg


def cmd_sweep(cfg: ExperimentConfig, out: Path, threads: int) -> int:
    axis = cfg.get("sweep.axis")
    grid = cfg.get("sweep.grid")
    if not isinstance(grid, list) or not grid:
        raise ConfigError("'sweep.grid' must be a non-empty list")
    for v in grid:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"'sweep.grid' entries must be numbers, got {v!r}")
    base = cfg.get(axis)
    if isinstance(base, bool) or not isinstance(base, (int, float)):
        raise ConfigError(f"sweep axis '{axis}' must be a numeric scalar in the config")
    regime = cfg.regime(cfg.get("sweep.regime", None))
    with ThreadPoolExecutor(max_workers=threads) as pool:
        results = list(pool.map(lambda v: _sweep_point(cfg, axis, v, regime), grid))
    ntypes = max((len(r[0][2]) for r in results if r[0] is not None), default=0)
    header = ["value", "status", "message", "iterations", "mean_V"]
    for k in range(ntypes):
        header += [f"type{k}_{c}" for c in ("sigma2", "count", "mean", "p25", "p50", "p75")]
    rows = []
    for v, (payload, msg) in zip(grid, results):
        if payload is None:
            rows.append([v, "error", msg] + [math.nan] * (len(header) - 3))
            continue
        oc, diag, summary = payload
        row = [v, "ok" if oc.converged else "not_converged", msg, oc.iterations, diag.mean()]
        for k in range(ntypes):
            if k < len(summary):
                s2, d = summary[k]
                row += [s2, d.size, d.mean(), *percentiles(d)]
            else:
                row += [math.nan] * 6
        rows.append(row)
    write_csv(out / "sweep.csv", header, rows)
    return 0


def _scenario_signals(sc: dict, net: Network, path: Path, key: str) -> SignalProfile:
    if "sigma2" in sc:
        return SignalProfile(np.full(net.n, float(sc["sigma2"])))
    if "split" in sc:
        split = sc["split"]
        var = np.asarray(split["variances"], dtype=float)
        counts = largest_remainder_counts(split["shares"], net.n)
        perm = np.random.default_rng(int(split.get("seed", 0))).permutation(net.n)
        s2 = np.empty(net.n)
        s2[perm] = np.repeat(var, counts)
        return SignalProfile(s2)
    if "file_suffix" in sc:
        return load_signal_file(path.with_name(path.name + sc["file_suffix"]), net,
                                default=sc.get("default"))
    raise ConfigError(f"'{key}' needs one of: sigma2, split, file_suffix")


def _village(cfg: ExperimentConfig, path: Path, scenarios):
    rows = []
    try:
        net = load_edge_list(path, undirected=bool(cfg.get("villages.undirected", True)))
    except (OSError, UnicodeDecodeError, NetworkError) as exc:
        log.warning("skipping %s: %s", path.name, exc)
        return [[path.name, "", "", math.nan, math.nan, math.nan, math.nan, math.nan,
                 "skipped", str(exc)]]
    env = cfg.environment()
    mean_deg = float(net.degrees.mean())
    for k, sc in enumerate(scenarios):
        name = sc.get("name", f"scenario{k}")
        regime = cfg.regime(sc.get("regime", "bayesian"))
        try:
            sig = _scenario_signals(sc, net, path, f"villages.scenarios.{k}")
            prob = Problem(net, sig, env, np.unique(sig.sigma2, return_inverse=True)[1])
            oc = solve_regime(cfg, regime, prob)
            p = percentiles(np.diag(oc.V)[: net.n])
            status = "ok" if oc.converged else "not_converged"
            rows.append([path.name, name, regime, net.n, mean_deg, *p, status, ""])
        except ConfigError:
            raise
        except (NetworkError, NumericalError, ValueError, OSError) as exc:
            log.warning("%s / %s failed: %s", path.name, name, exc)
            rows.append([path.name, name, regime, net.n, mean_deg, math.nan, math.nan, math.nan,
                         "error", str(exc)])
    return rows


def cmd_villages(cfg: ExperimentConfig, out: Path, threads: int) -> int:
    d = cfg.path("villages.dir")
    if not d.is_dir():
        raise ConfigError(f"'villages.dir': not a directory: {d}")
    pattern = cfg.get("villages.pattern", "*.csv")
    exclude = cfg.get("villages.exclude_suffix", ".signals.csv")
    files = sorted(p for p in d.glob(pattern)
                   if p.is_file() and not (exclude and p.name.endswith(exclude)))
    scenarios = cfg.get("villages.scenarios", [{"name": "default", "sigma2": 2.0}])
    if not isinstance(scenarios, list) or not scenarios:
        raise ConfigError("'villages.scenarios' must be a non-empty list")
    with ThreadPoolExecutor(max_workers=threads) as pool:
        results = list(pool.map(lambda p: _village(cfg, p, scenarios), files))
    header = ["file", "scenario", "regime", "n", "mean_degree", "p25_V", "p50_V", "p75_V",
              "status", "message"]
    write_csv(out / "villages.csv", header, (row for rows in results for row in rows))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sociolearn", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in list(SUBCOMMANDS) + ["simulate", "identify", "sweep", "villages"]:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="YAML experiment configuration")
        p.add_argument("--out", default=None, help="output directory (overrides run.output)")
        p.add_argument("--threads", type=int, default=1, help="parallel grid points / files")
        p.add_argument("--seed", type=int, default=None, help="overrides run.seed")
        p.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        cfg = ExperimentConfig.load(args.config)
        if args.seed is not None:
            run = dict(cfg.raw.get("run") or {})
            run["seed"] = args.seed
            cfg = ExperimentConfig({**cfg.raw, "run": run}, cfg.base_dir)
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        out = Path(args.out) if args.out else cfg.base_dir / str(cfg.get("run.output", "out"))
        out.mkdir(parents=True, exist_ok=True)
        if args.command in SUBCOMMANDS:
            return cmd_run(cfg, cfg.regime(SUBCOMMANDS[args.command]), out)
        if args.command == "simulate":
            return cmd_simulate(cfg, out)
        if args.command == "identify":
            return cmd_identify(cfg, out)
        if args.command == "sweep":
            return cmd_sweep(cfg, out, args.threads)
        return cmd_villages(cfg, out, args.threads)
    except NumericalError as exc:
        log.error("%s", exc)
        return 2
    except (ConfigError, NetworkError, ValueError, OSError) as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
