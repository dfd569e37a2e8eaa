"""Monte Carlo estimates of window statistics for the break-and-repair model.

Trajectories are built cycle by cycle: ``tau`` broken steps followed by a
geometric number (support from 0) of working steps.  Each shard starts a
fresh set of trajectories, discards a burn-in of ``100 * (1/p_down + tau)``
steps, and counts the sign patterns of all overlapping windows of the
stationary remainder.  Standard errors come from the spread of the
per-shard frequencies, which are independent.

Shards carry their own ``SeedSequence`` children, so results do not depend on
how many workers process them.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .repair import RepairSpec, normalize_pattern
from .topology import Topology


def sample_states(spec: RepairSpec, n_steps: int, rng: np.random.Generator, burn_in: int | None = None) -> np.ndarray:
    """Working indicator of one connection over ``n_steps`` stationary steps."""
    if burn_in is None:
        burn_in = int(math.ceil(100 * (1.0 / spec.p_down + spec.tau)))
    total = burn_in + n_steps
    mean_cycle = spec.tau + (1.0 - spec.p_down) / spec.p_down
    pieces = []
    have = 0
    while have < total:
        n_cycles = int((total - have) / mean_cycle * 1.1) + 16
        ups = rng.geometric(spec.p_down, size=n_cycles) - 1
        lengths = np.empty(2 * n_cycles, dtype=np.int64)
        lengths[0::2] = spec.tau
        lengths[1::2] = ups
        values = np.tile(np.array([False, True]), n_cycles)
        chunk = np.repeat(values, lengths)
        pieces.append(chunk)
        have += chunk.size
    states = np.concatenate(pieces) if len(pieces) > 1 else pieces[0]
    return states[burn_in:total]


def pattern_codes(series: np.ndarray, length: int) -> np.ndarray:
    """Integer code of every window; the first step is the most significant bit."""
    n = series.size - length + 1
    code = np.zeros(n, dtype=np.int64)
    for k in range(length):
        code = (code << 1) | series[k : k + n]
    return code


def pattern_index(pattern: str) -> int:
    """Code of a full sign pattern, with ``+`` as bit 1."""
    code = 0
    for ch in pattern:
        code = (code << 1) | (1 if ch == "+" else 0)
    return code


def matching_codes(pattern: str) -> list[int]:
    """All codes compatible with a pattern that may contain ``*``."""
    codes = [0]
    for ch in pattern:
        bits = (1, 0) if ch == "*" else ((1,) if ch == "+" else (0,))
        codes = [(c << 1) | b for c in codes for b in bits]
    return codes


@dataclass
class PatternEstimate:
    """Per-shard window frequencies of one observable."""

    length: int
    shard_frequencies: np.ndarray  # (n_shards, 2**length)
    windows_per_shard: int

    @property
    def n_windows(self) -> int:
        return self.windows_per_shard * self.shard_frequencies.shape[0]

    def estimate(self, pattern: str) -> tuple[float, float]:
        """Mean frequency of ``pattern`` and its standard error."""
        pattern = normalize_pattern(pattern)
        if len(pattern) > self.length:
            raise ValueError(f"pattern longer than the simulated window ({self.length})")
        pattern = pattern + "*" * (self.length - len(pattern))
        per_shard = self.shard_frequencies[:, matching_codes(pattern)].sum(axis=1)
        n = per_shard.size
        se = per_shard.std(ddof=1) / math.sqrt(n) if n > 1 else math.nan
        return float(per_shard.mean()), float(se)

    def moment_estimate(self, fn) -> tuple[float, float]:
        """Mean and standard error of ``fn(per_shard_table)`` across shards.

        ``fn`` receives the per-shard frequency table reshaped to
        ``(n_shards,) + (2,) * length`` with axis value 1 meaning working.
        """
        table = self.shard_frequencies.reshape((-1,) + (2,) * self.length)
        values = np.asarray(fn(table), dtype=float)
        n = values.size
        return float(values.mean()), float(values.std(ddof=1) / math.sqrt(n))


def _system_series(topology: Topology, edge_series: dict[str, np.ndarray]) -> np.ndarray:
    up = None
    for path in topology.paths:
        edges = [c for c in path if c in edge_series]
        ok = np.logical_and.reduce([edge_series[e] for e in edges])
        up = ok if up is None else (up | ok)
    return up


def _run_shard(args):
    topology, spec, multiplicity, length, windows, seed_seq = args
    rng = np.random.default_rng(seed_seq)
    n_steps = windows + length - 1
    edge_series = {}
    first_connection = None
    first_block = None
    for edge in topology.edges:
        n_conn = int(multiplicity[edge]) if isinstance(multiplicity, dict) else int(multiplicity)
        conns = [sample_states(spec, n_steps, rng) for _ in range(n_conn)]
        block = np.logical_or.reduce(conns)
        if first_connection is None:
            first_connection, first_block = conns[0], block
        edge_series[edge] = block
    system = _system_series(topology, edge_series)
    out = {}
    for name, series in (("connection", first_connection), ("block", first_block), ("system", system)):
        counts = np.bincount(pattern_codes(series.astype(np.int64), length), minlength=2**length)
        out[name] = counts / windows
    return out


def estimate_patterns(
    topology: Topology, spec: RepairSpec, multiplicity, *, length: int = 3,
    n_windows: int = 10**6, n_shards: int = 100, seed: int = 0, workers: int = 1,
) -> dict[str, PatternEstimate]:
    """Window-pattern frequencies of a connection, a block and the whole system.

    The ``connection`` and ``block`` observables are the first connection
    and the first edge of the simulated system.  Nodes are always up.
    """
    windows = int(math.ceil(n_windows / n_shards))
    children = np.random.SeedSequence(seed).spawn(n_shards)
    tasks = [(topology, spec, multiplicity, length, windows, child) for child in children]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_shard, tasks))
    else:
        results = [_run_shard(t) for t in tasks]
    return {
        name: PatternEstimate(length, np.stack([r[name] for r in results]), windows)
        for name in ("connection", "block", "system")
    }
