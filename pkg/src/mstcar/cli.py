"""Command-line entry points: simulate, fit, baseline, metrics, summarize.

Exit codes: 0 success, 1 validation error (bad config, malformed input,
unsatisfiable request), 2 runtime failure.  Commands validate inputs
before writing anything; outputs go through atomic renames.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .baseline import eb_hyperparams, eb_posterior, eb_predictive_replicates
from .config import ConfigError, RunConfig, load_config
from .diagnostics import effective_sample_size, split_rhat
from .graph import AdjacencyFormatError, load_adjacency
from .metrics import (
    coverage_assess,
    percent_decline,
    predictive_replicates,
    rates_from_store,
    sigma_eta_trajectories,
    spy_posterior,
    summary_rows,
    suppression_flags,
    trend_series,
    write_summary,
    write_trend_series,
)
from .panel import CountPanel, PanelFormatError, infer_panel_index, load_count_panel
from .rng import KIND_BASELINE, KIND_PREDICTIVE, RngStream
from .simulate import SimSpec, simulate_panel, uniform_year_covs, write_simulation
from .store import SampleStore, atomic_write_text
from .sampler import run_chain


def _read_inputs(config: RunConfig) -> tuple[CountPanel, "object"]:
    lines = Path(config["counts"]).read_text().splitlines()
    index = infer_panel_index(lines)
    panel = load_count_panel(lines, index)
    adjacency = Path(config["adjacency"]).read_text().splitlines()
    graph = load_adjacency(adjacency, list(index.region_labels))
    return panel, graph


def _percentile_summary(draws: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    lo, med, hi = np.percentile(draws, [2.5, 50.0, 97.5], axis=0)
    return med, lo, hi


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_simulate(args: argparse.Namespace) -> int:
    rates = np.array([float(r) for r in args.rates.split(",")])
    if rates.size == 1:
        rates = np.repeat(rates, args.groups)
    if rates.size != args.groups:
        raise ValueError(f"--rates needs 1 or {args.groups} values")
    if np.any(rates <= 0):
        raise ValueError("rates must be positive")
    rho = np.full(args.groups, args.rho)
    tau2 = np.full(args.groups, args.tau2)
    decline = np.log1p(-args.annual_decline) if args.annual_decline else 0.0
    base_log = (np.log(rates)[None, :]
                + decline * np.arange(args.times)[:, None])
    spec = SimSpec(
        rows=args.rows, cols=args.cols, n_groups=args.groups, n_times=args.times,
        seed=args.seed, rho=rho, tau2=tau2,
        year_covs=uniform_year_covs(args.times, args.groups, args.year_var, args.cross_corr),
        baseline_log_rates=base_log,
        population_range=(args.pop_lo, args.pop_hi),
        adjacency_path=args.adjacency,
    )
    result = simulate_panel(spec)
    paths = write_simulation(result, args.out)
    print(f"wrote {', '.join(str(p) for p in paths.values())}")
    return 0


def cmd_fit(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    config.validate_for_fit()
    panel, graph = _read_inputs(config)
    cfg = config.chain_config()
    hp = config.hyper_params(panel.shape[2])
    config.output_dir.mkdir(parents=True, exist_ok=True)
    started = time.time()
    store = run_chain(panel, graph, hp, cfg,
                      store_dir=config.store_dir,
                      checkpoint_path=config.checkpoint_path,
                      resume=args.resume)
    wall = time.time() - started
    manifest = {
        "command": "fit",
        "version": __version__,
        "seed": cfg.seed,
        "mode": "separable" if cfg.separable else "nonseparable",
        "iterations": cfg.n_iterations,
        "burn_in": cfg.burn_in,
        "thin_theta": cfg.thin_theta,
        "threads": cfg.n_threads,
        "wall_time_s": wall,
        "acceptance": {
            "theta_mean": float(np.mean(store.theta_acceptance))
            if store.theta_acceptance else None,
            "rho_mean": np.mean(store.rho_acceptance, axis=0).tolist()
            if store.rho_acceptance else None,
        },
        "config": {k: v for k, v in sorted(config.values.items())},
        "store": str(config.store_dir),
    }
    atomic_write_text(config.output_dir / "run_manifest.json", json.dumps(manifest, indent=2))
    print(f"fit complete in {wall:.1f}s; store at {config.store_dir}")
    return 0


def cmd_baseline(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    config.validate_for_fit()
    panel, _ = _read_inputs(config)
    params = eb_hyperparams(panel, pseudo_population=config["metrics.pseudo_population"])
    shape, rate = eb_posterior(panel, params)
    n_reps = config["metrics.replicates"]
    reps, report = eb_predictive_replicates(
        panel, (shape, rate), n_reps, RngStream(config["chain.seed"], (KIND_BASELINE,)))
    out = config.output_dir
    out.mkdir(parents=True, exist_ok=True)
    mean = shape / rate
    lo = np.percentile(reps, 2.5, axis=0)
    hi = np.percentile(reps, 97.5, axis=0)
    flags = suppression_flags(panel, config["metrics.suppression_threshold"])
    rows = summary_rows("poisson_gamma_rate", panel.index, mean,
                        _gamma_quantile(shape, rate, 0.025),
                        _gamma_quantile(shape, rate, 0.975),
                        flags, group_axis=True, time_axis=True)
    write_summary(out / "baseline_rates.csv", rows)
    cov_rows = summary_rows("predictive_coverage", panel.index,
                            report.region_coverage, report.region_coverage,
                            report.region_coverage, flags.any(axis=1))
    write_summary(out / "baseline_coverage.csv", cov_rows)
    atomic_write_text(out / "baseline_summary.json", json.dumps({
        "method": "poisson-gamma",
        "pseudo_population": config["metrics.pseudo_population"],
        "replicates": n_reps,
        "mean_coverage": report.mean_coverage,
        "mean_interval_width": report.mean_width,
        "zero_death_layers": int(params.zero_death_layers.sum()),
    }, indent=2))
    print(f"baseline coverage {report.mean_coverage:.4f}, "
          f"mean width {report.mean_width:.2f}")
    return 0


def _gamma_quantile(shape: np.ndarray, rate: np.ndarray, q: float) -> np.ndarray:
    from scipy.stats import gamma as gamma_dist

    return gamma_dist.ppf(q, shape, scale=1.0 / rate)


def cmd_metrics(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    panel, _ = _read_inputs(config)
    store = SampleStore.load(config.store_dir)
    rates = rates_from_store(store, panel)
    out = config.output_dir
    out.mkdir(parents=True, exist_ok=True)
    flags = suppression_flags(panel, config["metrics.suppression_threshold"])
    region_flags = flags.any(axis=1)

    spy_res = spy_posterior(rates)
    write_summary(out / "spy.csv", summary_rows(
        "saved_person_years", panel.index, spy_res.median, spy_res.lower,
        spy_res.upper, region_flags))

    t_last = panel.shape[1] - 1
    per_group = np.stack([
        percent_decline(d, rates.populations, 0, t_last, "per-group")
        for d in rates.draws])
    med, lo, hi = _percentile_summary(per_group)
    write_summary(out / "decline_groups.csv", summary_rows(
        "percent_decline", panel.index, med, lo, hi, flags, group_axis=True))
    agg = np.stack([
        percent_decline(d, rates.populations, 0, t_last, "age-aggregated")
        for d in rates.draws])
    med, lo, hi = _percentile_summary(agg)
    write_summary(out / "decline.csv", summary_rows(
        "percent_decline_aggregated", panel.index, med, lo, hi, region_flags))

    n_reps = min(config["metrics.replicates"], store.n_theta_draws)
    reps = predictive_replicates(store, panel, n_reps,
                                 RngStream(config["chain.seed"], (KIND_PREDICTIVE,)))
    report = coverage_assess(reps, panel)
    write_summary(out / "coverage.csv", summary_rows(
        "predictive_coverage", panel.index, report.region_coverage,
        report.region_coverage, report.region_coverage, region_flags))
    atomic_write_text(out / "coverage_summary.json", json.dumps({
        "method": "mstcar",
        "replicates": n_reps,
        "mean_coverage": report.mean_coverage,
        "mean_interval_width": report.mean_width,
    }, indent=2))

    traj = sigma_eta_trajectories(store)
    lines = ["group,time,median,lo95,hi95"]
    for t, tl in enumerate(panel.index.time_labels):
        for k, gl in enumerate(panel.index.group_labels):
            lines.append(f"{gl},{tl},{traj['median'][t, k]:.10g},"
                         f"{traj['lower'][t, k]:.10g},{traj['upper'][t, k]:.10g}")
    atomic_write_text(out / "sigma_eta_diag.csv", "\n".join(lines) + "\n")

    weights = config.standard_weights(panel.shape[2])
    std = np.stack([d @ weights for d in rates.draws])
    med, lo, hi = _percentile_summary(std)
    rows = []
    for i, region in enumerate(panel.index.region_labels):
        for t, tl in enumerate(panel.index.time_labels):
            rows.append(f"{region},,{tl},age_standardized_rate,{med[i, t]:.10g},"
                        f"{lo[i, t]:.10g},{hi[i, t]:.10g},{int(region_flags[i])}")
    write_summary(out / "age_standardized.csv", rows)

    for label in config.trend_regions():
        if label not in panel.index.region_labels:
            raise ValueError(f"unknown trend region {label!r}")
        region = panel.index.region_labels.index(label)
        write_trend_series(out / f"trend_{label}.json",
                           trend_series(rates, panel, region))
    print(f"metrics written to {out}")
    return 0


def cmd_summarize(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    store = SampleStore.load(config.store_dir)
    if store.n_hyper_draws == 0:
        raise ValueError("store holds no post-burn-in draws to summarize")
    out = config.output_dir
    out.mkdir(parents=True, exist_ok=True)
    lines = ["parameter,median,lo95,hi95,ess,split_rhat"]

    def add(name: str, chain: np.ndarray) -> None:
        lo, med, hi = np.percentile(chain, [2.5, 50.0, 97.5])
        lines.append(f"{name},{med:.10g},{lo:.10g},{hi:.10g},"
                     f"{effective_sample_size(chain):.1f},{split_rhat(chain):.4f}")

    dims = store.meta["dims"]
    ng, nt = dims["n_groups"], dims["n_times"]
    beta = store.draws("beta")
    tau2 = store.draws("tau2")
    rho = store.draws("rho")
    year = store.draws("year_covs")
    hyper = store.draws("hyper_cov")
    for k in range(ng):
        add(f"tau2[{k + 1}]", tau2[:, k])
        add(f"rho[{k + 1}]", rho[:, k])
    for a in range(ng):
        for b in range(a, ng):
            add(f"G[{a + 1}.{b + 1}]", hyper[:, a, b])
    for t in range(nt):
        for k in range(ng):
            add(f"beta[t{t + 1}.g{k + 1}]", beta[:, t, k])
            add(f"G_t[{t + 1}][{k + 1}.{k + 1}]", year[:, t, k, k])
    atomic_write_text(out / "summaries.csv", "\n".join(lines) + "\n")
    print(f"wrote {out / 'summaries.csv'} ({len(lines) - 1} parameters)")
    return 0


# ---------------------------------------------------------------------------
# argument plumbing
# ---------------------------------------------------------------------------

def _config_from_args(args: argparse.Namespace) -> RunConfig:
    overrides: dict[str, object] = {}
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, _, value = item.partition("=")
        overrides[key.strip()] = value.strip()
    if args.seed is not None:
        overrides["chain.seed"] = args.seed
    if args.threads is not None:
        overrides["chain.threads"] = args.threads
    if getattr(args, "separable", False):
        overrides["chain.separable"] = True
    if getattr(args, "checkpoint_every", None) is not None:
        overrides["chain.checkpoint_every"] = args.checkpoint_every
    return load_config(args.config, overrides)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mstcar",
        description="Nonseparable multivariate space-time CAR models for count panels",
    )
    parser.add_argument("--version", action="version", version=f"mstcar {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", type=Path, default=None, help="key=value config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override one config key (repeatable)")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int, default=None)

    sim = sub.add_parser("simulate", help="generate a synthetic panel")
    sim.add_argument("--out", required=True, type=Path)
    sim.add_argument("--rows", type=int, default=5)
    sim.add_argument("--cols", type=int, default=6)
    sim.add_argument("--groups", type=int, default=2)
    sim.add_argument("--times", type=int, default=8)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--rho", type=float, default=0.8)
    sim.add_argument("--tau2", type=float, default=0.005)
    sim.add_argument("--year-var", type=float, default=0.02, dest="year_var")
    sim.add_argument("--cross-corr", type=float, default=0.25, dest="cross_corr")
    sim.add_argument("--rates", default="0.01", help="per-group baseline rates")
    sim.add_argument("--annual-decline", type=float, default=0.0, dest="annual_decline")
    sim.add_argument("--pop-lo", type=int, default=200, dest="pop_lo")
    sim.add_argument("--pop-hi", type=int, default=2000, dest="pop_hi")
    sim.add_argument("--adjacency", default=None, help="edge list replacing the lattice")
    sim.set_defaults(func=cmd_simulate)

    fit = sub.add_parser("fit", help="run the Gibbs sampler")
    common(fit)
    fit.add_argument("--separable", action="store_true")
    fit.add_argument("--checkpoint-every", type=int, default=None, dest="checkpoint_every")
    fit.add_argument("--resume", action="store_true")
    fit.set_defaults(func=cmd_fit)

    base = sub.add_parser("baseline", help="empirical-Bayes Poisson-gamma comparator")
    common(base)
    base.set_defaults(func=cmd_baseline)

    met = sub.add_parser("metrics", help="posterior metrics from a completed store")
    common(met)
    met.set_defaults(func=cmd_metrics)

    summ = sub.add_parser("summarize", help="parameter summaries and diagnostics")
    common(summ)
    summ.set_defaults(func=cmd_summarize)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, PanelFormatError, AdjacencyFormatError,
            FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - last-resort runtime failure path
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
