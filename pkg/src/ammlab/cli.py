"""Command-line entry point exposing every pipeline stage as a subcommand.

Every command takes a JSON run config (validated against the published
schema before any work), an output directory, and a seed; all randomness
flows from that seed. Each run writes a manifest.json recording the
command, the config hash, and the artifacts produced, so any output can
be traced back to the exact configuration that made it.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import agent as agent_mod
from . import backtest as backtest_mod
from . import config as config_mod
from . import envsim, marketdata, neural, qvi, regime, strategies, synthpath

THREADS_ENV = "RAMMSTEIN_THREADS"


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(1)


def _build_parser() -> _Parser:
    parser = _Parser(prog="ammlab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, help_text in [
        ("ingest", "aggregate a trade CSV into 1 Hz bars"),
        ("synth", "generate a synthetic bar series from the configured schedule"),
        ("estimate", "rolling regime estimates for every bar"),
        ("train", "train the rebalancing agent and write a checkpoint"),
        ("backtest", "run one strategy over the configured data"),
        ("sweep-gas", "backtest strategies across gas-cost levels"),
        ("qvi", "solve the impulse-control oracle and export value/boundary"),
        ("heatmap", "export the Q-difference grid for a checkpoint"),
    ]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="run-config JSON path")
        p.add_argument("--out", required=True, help="output directory (all writes go here)")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--strategy", default=None, help="strategy name override (backtest)")
        p.add_argument("--checkpoint", default=None, help="policy checkpoint path")
        p.add_argument("--profile", choices=["smoke", "full"], default=None, help="training profile")
    return parser


def _load_series(doc, seed):
    data = doc.get("data", {})
    if "bars_csv" in data:
        series = marketdata.read_bars_csv(data["bars_csv"])
    elif "synth" in data:
        series = synthpath.simulate_schedule(config_mod.schedule(doc), seed)
    else:
        raise config_mod.ConfigError("config needs data.bars_csv or data.synth")
    if "splits" in data:
        series = marketdata.split(series, tuple(data["splits"]))
    return series


def _segment(series, doc):
    name = doc.get("backtest", {}).get("segment", "test")
    if series.split_marks is None or name == "all":
        return series
    train, val, test = series.segments()
    return {"train": train, "val": val, "test": test}[name]


def _write_manifest(out_dir, command, cfg_hash, seed, outputs):
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w") as fh:
        json.dump(
            {"command": command, "config_hash": cfg_hash, "seed": seed, "outputs": sorted(outputs)},
            fh,
            indent=2,
            sort_keys=True,
        )
    return path


def _strategy_from(doc, args):
    spec = doc.get("strategy", {"name": "lancelot"})
    name = args.strategy or spec.get("name", "lancelot")
    params = dict(spec.get("params", {}))
    if args.checkpoint:
        params["checkpoint"] = args.checkpoint
    return strategies.make_strategy(name, params)


def cmd_ingest(args, doc, seed, cfg_hash, out_dir):
    trades_path = doc.get("data", {}).get("trades_csv")
    if trades_path is None:
        raise config_mod.ConfigError("ingest needs data.trades_csv")
    trades = marketdata.read_trades_csv(trades_path)
    series = marketdata.aggregate(trades)
    splits = doc.get("data", {}).get("splits")
    if splits:
        series = marketdata.split(series, tuple(splits))
    out = os.path.join(out_dir, "bars.csv")
    marketdata.write_bars_csv(out, series)
    return [out]


def cmd_synth(args, doc, seed, cfg_hash, out_dir):
    series = synthpath.simulate_schedule(config_mod.schedule(doc), seed)
    out = os.path.join(out_dir, "bars.csv")
    marketdata.write_bars_csv(out, series)
    return [out]


def cmd_estimate(args, doc, seed, cfg_hash, out_dir):
    series = _load_series(doc, seed)
    window = doc.get("estimate", {}).get("window", regime.DEFAULT_WINDOW)
    theta, mu, sigma, valid = regime.rolling_estimates(series.close, 1.0, window)
    out = os.path.join(out_dir, "regime.csv")
    with open(out, "w", newline="") as fh:
        fh.write("t,theta,mu,sigma,half_life,valid\n")
        for i in range(len(series)):
            hl = regime.half_life(float(theta[i])) if valid[i] else math.inf
            fh.write(
                f"{int(series.t[i])},{theta[i]!r},{mu[i]!r},{sigma[i]!r},{hl!r},{int(valid[i])}\n"
            )
    return [out]


def cmd_train(args, doc, seed, cfg_hash, out_dir):
    series = _load_series(doc, seed)
    if series.split_marks is not None:
        series = series.segments()[0]
    tc = config_mod.train_config(doc, seed)
    env = envsim.LpEnv(
        series,
        config_mod.pool_config(doc),
        config_mod.reward_params(doc),
        capital=config_mod.capital(doc),
        episode_length=tc.episode_length,
    )
    agent, log_rows = agent_mod.train(env, tc)
    ckpt = os.path.join(out_dir, "checkpoint.json")
    neural.save_checkpoint(
        ckpt,
        agent.online,
        metadata={"seed": seed, "training_step": agent.updates, "config_hash": cfg_hash},
    )
    log = os.path.join(out_dir, "training_log.csv")
    agent_mod.write_train_log(log, log_rows)
    return [ckpt, log]


def cmd_backtest(args, doc, seed, cfg_hash, out_dir):
    series = _segment(_load_series(doc, seed), doc)
    strategy = _strategy_from(doc, args)
    report, trace = backtest_mod.run(
        strategy,
        series,
        config_mod.pool_config(doc),
        capital=config_mod.capital(doc),
        collect_trace=True,
        config_hash=cfg_hash,
    )
    trace_path = os.path.join(out_dir, "trace.csv")
    envsim.write_trace_csv(trace_path, trace)
    report = dataclasses.replace(report, trace_path=trace_path)
    report_path = os.path.join(out_dir, "report.json")
    backtest_mod.write_report_json(report_path, report)
    return [report_path, trace_path]


def cmd_sweep_gas(args, doc, seed, cfg_hash, out_dir):
    series = _segment(_load_series(doc, seed), doc)
    sweep = doc.get("sweep", {})
    specs = sweep.get("strategies") or [doc.get("strategy", {"name": "lancelot"})]
    levels = sweep.get("gas_levels", [1.0, 2.0, 5.0, 10.0, 20.0, 50.0])

    def make_factory(spec):
        params = dict(spec.get("params", {}))
        if args.checkpoint and spec["name"] == "rammstein":
            params["checkpoint"] = args.checkpoint
        return spec["name"], lambda: strategies.make_strategy(spec["name"], params)

    factories = [make_factory(s) for s in specs]
    pool = config_mod.pool_config(doc)
    cap = config_mod.capital(doc)
    features = envsim.FeatureTrack(series)

    n_workers = worker_count()
    if n_workers > 1:
        # independent cells; RAMMSTEIN_THREADS caps the pool size
        def cell(item):
            (name, factory), g = item
            cfg = dataclasses.replace(pool, gas_cost=g)
            rep, _ = backtest_mod.run(factory(), series, cfg, cap, features)
            return g, name, rep.net_roi

        jobs = [((name, f), g) for name, f in factories for g in sorted(levels)]
        with ThreadPoolExecutor(max_workers=n_workers) as ex:
            rows = list(ex.map(cell, jobs))
        curves = {}
        for g, name, roi in rows:
            curves.setdefault(name, []).append((g, roi))
        break_evens = {name: backtest_mod._break_even(sorted(c)) for name, c in curves.items()}
    else:
        rows, break_evens = backtest_mod.gas_sweep(factories, series, levels, pool, cap, features)

    sweep_path = os.path.join(out_dir, "gas_sweep.csv")
    backtest_mod.write_gas_sweep_csv(sweep_path, rows)
    be_path = os.path.join(out_dir, "break_even.json")
    with open(be_path, "w") as fh:
        json.dump({"config_hash": cfg_hash, "break_even_gas": break_evens}, fh, indent=2, sort_keys=True)
    return [sweep_path, be_path]


def cmd_qvi(args, doc, seed, cfg_hash, out_dir):
    q = doc.get("qvi", {})
    ou = synthpath.OuParams(q.get("theta", 0.05), q.get("mu", 100.0), q.get("sigma", 0.5))
    problem = qvi.QviProblem.default(
        ou,
        config_mod.pool_config(doc),
        n_s=q.get("n_s", 400),
        n_c=q.get("n_c", 100),
        span_sigmas=q.get("span_sigmas", 5.0),
        rho=q.get("rho", qvi.DEFAULT_RHO),
        capital=config_mod.capital(doc),
        ref_volume=q.get("ref_volume", 50_000.0),
        cost=q.get("cost"),
    )
    sol = qvi.solve(problem, tol=q.get("tol", 1e-6), max_iters=q.get("max_iters", 20_000))
    sol_path = os.path.join(out_dir, "qvi_solution.csv")
    qvi.write_solution_csv(sol_path, sol)
    b_path = os.path.join(out_dir, "qvi_boundary.csv")
    qvi.write_boundary_csv(b_path, sol)
    meta_path = os.path.join(out_dir, "qvi_meta.json")
    with open(meta_path, "w") as fh:
        json.dump(
            {
                "config_hash": cfg_hash,
                "converged": sol.converged,
                "iterations": sol.iterations,
                "sup_change": sol.sup_change,
                "fee_rate": problem.fee_rate(),
                "cost": problem.cost_value(),
            },
            fh,
            indent=2,
            sort_keys=True,
        )
    return [sol_path, b_path, meta_path]


def cmd_heatmap(args, doc, seed, cfg_hash, out_dir):
    if not args.checkpoint:
        raise config_mod.ConfigError("heatmap needs --checkpoint")
    net, _, _ = neural.load_checkpoint(args.checkpoint)
    series = _load_series(doc, seed)
    features = envsim.FeatureTrack(series)
    h = doc.get("heatmap", {})
    theta_axis = np.linspace(h.get("theta_min", 0.0), h.get("theta_max", 0.1), h.get("theta_points", 41))
    d_edge_axis = np.linspace(-1.0, 1.0, h.get("d_edge_points", 41))
    pool = config_mod.pool_config(doc)
    ok = features.valid
    sigma_ref = float(np.median(features.sigma[ok] / features.series.close[ok])) if ok.any() else 0.0
    grid = backtest_mod.heatmap(
        net,
        theta_axis,
        d_edge_axis,
        width=pool.width,
        sigma_norm=min(sigma_ref, envsim.SIGMA_NORM_CLIP),
        recent_vol=min(float(np.median(features.recent_vol)), envsim.RECENT_VOL_CLIP),
    )
    out = os.path.join(out_dir, "heatmap.csv")
    backtest_mod.write_heatmap_csv(out, grid)
    return [out]


_COMMANDS = {
    "ingest": cmd_ingest,
    "synth": cmd_synth,
    "estimate": cmd_estimate,
    "train": cmd_train,
    "backtest": cmd_backtest,
    "sweep-gas": cmd_sweep_gas,
    "qvi": cmd_qvi,
    "heatmap": cmd_heatmap,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    try:
        doc = config_mod.load(args.config)
        doc = config_mod.apply_profile(doc, args.profile)
        seed = args.seed if args.seed is not None else doc.get("seed", 0)
    except (config_mod.ConfigError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    try:
        os.makedirs(args.out, exist_ok=True)
        cfg_hash = config_mod.config_hash(doc)
        outputs = _COMMANDS[args.command](args, doc, seed, cfg_hash, args.out)
        outputs.append(_write_manifest(args.out, args.command, cfg_hash, seed, outputs))
        return 0
    except config_mod.ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure, distinct from config errors
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
