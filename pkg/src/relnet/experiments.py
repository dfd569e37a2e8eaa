"""Experiment runners behind the command line.

Each runner reads a validated :class:`~relnet.config.Config`, computes its
tables and hands them to a :class:`ReportWriter`, which is the only code
that touches the output directory.  CSV files have a one-line header, a fixed
column order and floats printed with 12 significant digits, so identical
inputs give byte-identical files.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import entsim
from .config import Config
from .correlations import d3_multi_information, joint_cumulant, temporal_correlation
from .errors import ConfigError
from .reliability import (
    BlockModel,
    ChainModel,
    ConnectionLaw,
    InitialDistribution,
    gompertz_makeham,
    match_multiplicity,
    weibull,
)
from .repair import RepairSpec, all_patterns, build_joint_distribution, p_eff_broken, system_pattern_probability
from .repair_sim import estimate_patterns
from .topology import (
    Topology,
    build_indicator,
    enumerate_chain_configurations,
    enumerate_network_configurations,
    network_failure_rate,
    network_survival,
)


def format_value(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".12g")
    return str(value)


@dataclass
class ReportWriter:
    """Writes CSV files and the run manifest into one directory."""

    out_dir: Path
    files: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.out_dir = Path(self.out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)

    def _atomic(self, name: str, text: str) -> Path:
        path = self.out_dir / name
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text(text)
        os.replace(tmp, path)
        return path

    def csv(self, name: str, header, rows) -> Path:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        n = len(header)
        for row in rows:
            if len(row) != n:
                raise ValueError(f"{name}: row has {len(row)} fields, header has {n}")
            writer.writerow([format_value(v) for v in row])
        path = self._atomic(name, buf.getvalue())
        self.files.append(name)
        return path

    def manifest(self, cfg: Config, experiment: str, seed, samples, started: float) -> Path:
        body = {
            "experiment": experiment,
            "config": str(cfg.path) if cfg.path else None,
            "config_sha256": cfg.sha256,
            "seed": seed,
            "samples": samples,
            "wall_clock_seconds": round(time.time() - started, 3),
            "files": sorted(self.files),
        }
        return self._atomic("manifest.json", json.dumps(body, indent=2, sort_keys=True) + "\n")


@dataclass
class RunOptions:
    seed: int | None = None
    samples: int | None = None
    threads: int = 1


# --------------------------------------------------------------------------
# reliability curves
# --------------------------------------------------------------------------


def _system_curves(topology: Topology, block: BlockModel, t: np.ndarray):
    if len(topology.paths) == 1 and not topology.nodes:
        chain = ChainModel.uniform(len(topology.edges), block)
        return chain.survival(t), chain.failure_rate(t)
    models = {c: (block if kind == "edge" else 1.0) for c, kind in topology.kinds.items()}
    poly = build_indicator(topology)
    S = np.array([network_survival(topology, models, x, poly) for x in t], dtype=float)
    mu = np.array([network_failure_rate(topology, models, x, poly) for x in t], dtype=float)
    return S, mu


def run_reliability_curves(cfg: Config, writer: ReportWriter, opts: RunOptions) -> dict:
    t = cfg.grid("time_grid", lo=0.0)
    systems = cfg.get("systems")
    if not isinstance(systems, list) or not systems:
        raise cfg.error("systems", "expected a nonempty list of topology names")
    topologies = [cfg.topology(name, f"systems[{i}]") for i, name in enumerate(systems)]
    models = cfg.get("models")
    if not isinstance(models, dict) or not models:
        raise cfg.error("models", "expected an object of named block models")
    blocks = {name: cfg.block_model(f"models.{name}") for name in models}

    rows = []
    for topo in topologies:
        for name, block in blocks.items():
            S, mu = _system_curves(topo, block, t)
            for ti, si, mi in zip(t, S, mu):
                rows.append((topo.label, name, ti, si, mi))
    writer.csv("reliability.csv", ["system", "model", "t", "S", "mu"], rows)

    ref_rows = []
    refs = cfg.get("reference_curves", {})
    if "gompertz_makeham" in refs:
        A = cfg.number("reference_curves.gompertz_makeham.A", lo=0)
        B = cfg.number("reference_curves.gompertz_makeham.B", lo=0)
        lam = cfg.number("reference_curves.gompertz_makeham.lambda", lo=0)
        S, mu = gompertz_makeham(A, B, lam, t)
        ref_rows += [("gompertz_makeham", ti, si, mi) for ti, si, mi in zip(t, S, mu)]
    if "weibull" in refs:
        a = cfg.number("reference_curves.weibull.a", lo=0, lo_open=True)
        b = cfg.number("reference_curves.weibull.b", lo=0, lo_open=True)
        S, mu = weibull(a, b, t)
        ref_rows += [("weibull", ti, si, mi) for ti, si, mi in zip(t, S, mu)]
    if ref_rows:
        writer.csv("reference_curves.csv", ["curve", "t", "S", "mu"], ref_rows)
    return {"samples": None}


# --------------------------------------------------------------------------
# multiplicity matching
# --------------------------------------------------------------------------


def run_match_multiplicity(cfg: Config, writer: ReportWriter, opts: RunOptions) -> dict:
    M = cfg.number("reference.M", integer=True, lo=1)
    N = cfg.number("reference.N", integer=True, lo=1)
    flux = cfg.number("reference.flux", 1, integer=True, lo=1, hi=N)
    k = cfg.number("reference.k", lo=0, lo_open=True)
    p_grid = cfg.grid("p_grid", lo=0.0, hi=1.0)
    if p_grid[0] <= 0:
        raise cfg.error("p_grid", "p must be positive")
    mu_grid = cfg.grid("mu_prime_grid", lo=0.0)
    if mu_grid[0] <= 0:
        raise cfg.error("mu_prime_grid", "mu' must be positive")
    p_thres = cfg.number("p_thres", 0.9, lo=0, hi=1)
    n_max = cfg.number("max_multiplicity", 10_000, integer=True, lo=1)
    reference = ChainModel.uniform(M, BlockModel(N, flux, ConnectionLaw(k), InitialDistribution.perfect()))

    rows = []
    for p in p_grid:
        for mu in mu_grid:
            for criterion in ("mttf", "initial", "both"):
                n_prime = match_multiplicity(
                    reference, float(p), float(mu), criterion, p_thres=p_thres, max_multiplicity=n_max,
                )
                rows.append((p, mu, criterion, n_prime, n_prime * p))
    writer.csv("match_multiplicity.csv", ["p", "mu_prime", "criterion", "N_prime", "N_prime_p"], rows)
    return {"samples": None}


# --------------------------------------------------------------------------
# repair correlations
# --------------------------------------------------------------------------


def _repair_systems(cfg: Config):
    systems = cfg.get("systems")
    if not isinstance(systems, list) or not systems:
        raise cfg.error("systems", "expected a nonempty list of {topology, N} objects")
    out = []
    for i, s in enumerate(systems):
        if not isinstance(s, dict):
            raise cfg.error(f"systems[{i}]", "expected an object with 'topology' and 'N'")
        topo = cfg.topology(s.get("topology"), f"systems[{i}].topology")
        N = s.get("N")
        if not isinstance(N, int) or isinstance(N, bool) or N < 1:
            raise cfg.error(f"systems[{i}].N", f"expected a positive integer, got {N!r}")
        out.append((topo, N))
    return out


def correlation_row(topology: Topology, spec: RepairSpec, N: int):
    P = build_joint_distribution(topology, spec, N)
    uptime = P.mean(1)
    return (
        temporal_correlation(P, (1, 2)),
        temporal_correlation(P, (1, 3)),
        joint_cumulant(P, absolute=False),
        d3_multi_information(P),
        uptime,
    )


def run_repair_correlations(cfg: Config, writer: ReportWriter, opts: RunOptions) -> dict:
    tau = cfg.number("tau", integer=True, lo=1)
    grid = cfg.grid("p_down_grid", lo=0.0, hi=1.0)
    if grid[0] <= 0:
        raise cfg.error("p_down_grid", "p_down must be positive")
    systems = _repair_systems(cfg)

    rows = []
    for topo, N in systems:
        for p in grid:
            spec = RepairSpec(float(p), tau)
            cor12, cor13, c3, d3, up = correlation_row(topo, spec, N)
            rows.append((topo.label, N, p, tau, up, cor12, cor13, c3, abs(c3), d3))
    writer.csv(
        "repair_correlations.csv",
        ["system", "N", "p_down", "tau", "uptime", "cor12", "cor13", "c3", "abs_c3", "d3"],
        rows,
    )

    mc = cfg.get("monte_carlo", None)
    windows = None
    if mc is not None:
        windows = opts.samples or cfg.number("monte_carlo.windows", 10**6, integer=True, lo=1)
        shards = cfg.number("monte_carlo.shards", 100, integer=True, lo=2)
        check = cfg.grid("monte_carlo.p_down", list(grid), lo=0.0, hi=1.0)
        seed = opts.seed if opts.seed is not None else cfg.number("seed", 0, integer=True, lo=0)
        mc_rows = []
        for s_idx, (topo, N) in enumerate(systems):
            for p_idx, p in enumerate(check):
                spec = RepairSpec(float(p), tau)
                est = estimate_patterns(
                    topo, spec, N, n_windows=windows, n_shards=shards,
                    seed=seed + 1000 * s_idx + p_idx, workers=opts.threads,
                )["system"]
                for pattern in all_patterns(3):
                    exact = system_pattern_probability(topo, spec, N, pattern)
                    value, se = est.estimate(pattern)
                    # batch means give se = 0 when no shard saw the pattern
                    se = max(se, math.sqrt(exact * (1.0 - exact) / est.n_windows))
                    z = (value - exact) / se if se > 0 else 0.0
                    mc_rows.append((topo.label, N, p, tau, pattern, exact, value, se, z))
        writer.csv(
            "repair_monte_carlo.csv",
            ["system", "N", "p_down", "tau", "pattern", "analytic", "monte_carlo", "std_error", "z"],
            mc_rows,
        )
    return {"samples": windows}


# --------------------------------------------------------------------------
# key rates
# --------------------------------------------------------------------------


def _protocol(cfg: Config, opts: RunOptions) -> tuple[entsim.ProtocolParams, np.ndarray, str]:
    seed = opts.seed if opts.seed is not None else cfg.number("seed", integer=True, lo=0)
    samples = opts.samples or cfg.number("protocol.samples", 100_000, integer=True, lo=1)
    params = entsim.ProtocolParams(
        P_gen=cfg.number("protocol.P_gen", lo=0, lo_open=True, hi=1),
        T_coh=cfg.number("protocol.T_coh", lo=0, lo_open=True),
        t_ts=cfg.number("protocol.t_ts", lo=0, lo_open=True),
        samples=samples,
        seed=seed,
    )
    spec = cfg.get("protocol.t_cut_grid", {"max": 1500, "points": 40})
    if isinstance(spec, dict) and "max" in spec:
        t_max = cfg.number("protocol.t_cut_grid.max", integer=True, lo=1)
        points = cfg.number("protocol.t_cut_grid.points", integer=True, lo=1)
        try:
            grid = entsim.default_cutoff_grid(t_max, points)
        except ConfigError as exc:
            raise cfg.error("protocol.t_cut_grid", str(exc)) from None
    else:
        grid = cfg.grid("protocol.t_cut_grid", integer=True, lo=1)
    mode = cfg.get("protocol.rate_mode", "mean_w")
    if mode not in entsim.RATE_MODES:
        raise cfg.error("protocol.rate_mode", f"expected one of {list(entsim.RATE_MODES)}, got {mode!r}")
    return params, grid, mode


def run_key_rates(cfg: Config, writer: ReportWriter, opts: RunOptions) -> dict:
    params, grid, mode = _protocol(cfg, opts)
    curve_rows, avg_rows, opt_rows = [], [], []

    def emit(system, configs, curves, averages):
        for cfg_obj, curve in zip(configs, curves):
            for row in curve.rows():
                curve_rows.append((system, cfg_obj.count) + row)
            opt_rows.append((system, "configuration", curve.label, entsim.optimize_cutoff(grid, curve.R), curve.R.max()))
        for weighting, q, avg in averages:
            for t, R in zip(avg.t_cut, avg.R):
                avg_rows.append((system, weighting, q, t, R))
            opt_rows.append((system, weighting, format_value(q), entsim.optimize_cutoff(grid, avg.R), avg.R.max()))

    net = cfg.get("network", None)
    if net is not None:
        topo = cfg.topology(cfg.get("network.topology"), "network.topology")
        qs = cfg.grid("network.q", lo=0.0, hi=1.0) if isinstance(net.get("q"), list) else [cfg.number("network.q", lo=0, hi=1)]
        configs = enumerate_network_configurations(topo, 1.0)
        layouts = [entsim.LinkLayout.from_configuration(c, topo) for c in configs]
        curves = entsim.simulate_configurations(layouts, params, grid, mode=mode, workers=opts.threads)
        averages = []
        for q in sorted(qs, reverse=True):
            weights = [c.probability for c in enumerate_network_configurations(topo, float(q))]
            averages.append(("unconditional", float(q), entsim.average_key_rate(curves, weights)))
        emit(topo.label, configs, curves, averages)

    chain = cfg.get("chain", None)
    if chain is not None:
        M = cfg.number("chain.M", integer=True, lo=1)
        N = cfg.number("chain.N", integer=True, lo=1)
        spec = RepairSpec(cfg.number("chain.p_down", lo=0, lo_open=True, hi=1), cfg.number("chain.tau", integer=True, lo=1))
        u = 1.0 - p_eff_broken(spec)
        configs = enumerate_chain_configurations(M, N, u)
        layouts = [entsim.LinkLayout.from_configuration(c) for c in configs]
        chain_params = entsim.ProtocolParams(
            params.P_gen, params.T_coh, params.t_ts, params.t_cut, params.samples, params.seed + 1,
        )
        curves = entsim.simulate_configurations(layouts, chain_params, grid, mode=mode, workers=opts.threads)
        weights = entsim.chain_conditioned_weights([c.key for c in configs], spec, N)
        counts = np.array([c.count for c in configs])
        averages = [
            (name, u, entsim.average_key_rate(curves, w * counts, mode=name))
            for name, w in weights.items()
        ]
        emit(f"chain{M}", configs, curves, averages)

    if net is None and chain is None:
        raise cfg.error("network", "key-rates needs a 'network' and/or a 'chain' section")

    writer.csv(
        "key_rates_configurations.csv",
        ["system", "class_size", "configuration", "t_cut", "p_cut", "mean_T_steps", "mean_T_seconds",
         "mean_W", "r", "R_bits_per_second", "n_samples"],
        curve_rows,
    )
    writer.csv("key_rates_average.csv", ["system", "weighting", "q", "t_cut", "R_bits_per_second"], avg_rows)
    writer.csv("key_rates_optimum.csv", ["system", "curve", "label", "t_cut_opt", "R_max"], opt_rows)
    return {"samples": params.samples}


RUNNERS = {
    "reliability-curves": run_reliability_curves,
    "match-multiplicity": run_match_multiplicity,
    "repair-correlations": run_repair_correlations,
    "key-rates": run_key_rates,
}


def run_experiment(experiment: str, cfg: Config, out_dir, opts: RunOptions | None = None) -> ReportWriter:
    """Run one experiment and write its CSV files and manifest into ``out_dir``."""
    opts = opts or RunOptions()
    if cfg.experiment is not None and cfg.experiment != experiment:
        raise cfg.error("experiment", f"config is for {cfg.experiment!r}, not {experiment!r}")
    started = time.time()
    writer = ReportWriter(Path(out_dir))
    info = RUNNERS[experiment](cfg, writer, opts)
    seed = opts.seed if opts.seed is not None else cfg.data.get("seed")
    writer.manifest(cfg, experiment, seed, info.get("samples"), started)
    return writer
