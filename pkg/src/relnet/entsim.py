"""Entanglement distribution with a cut-off on a fixed hardware configuration.

Every working connection of an edge tries to create an entangled link once
per time step and succeeds with probability ``P_gen``; an edge holds a link
as soon as one of its connections succeeded.  Links are Werner states whose
visibility decays as ``exp(-age * t_ts / T_coh)`` until the attempt
completes at step ``T``.  Swaps are perfect, so the end-to-end visibility is
the product over the links of the path used.

An attempt is abandoned after ``t_cut`` steps, all links are erased and a new
attempt starts.  A fresh attempt truncated at ``t_cut`` has the law of the
uncut process restricted to ``T <= t_cut``, so one sample of ``(T, W)`` per
configuration serves every cut-off of a curve.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError
from .repair import RepairSpec, consecutive_broken, p_eff_broken
from .topology import Configuration, Topology

RATE_MODES = ("mean_w", "mean_r")


@dataclass(frozen=True)
class ProtocolParams:
    """Link generation and memory parameters of the quantum protocol."""

    P_gen: float = 0.01
    T_coh: float = 1.0
    t_ts: float = 2.0e-3 / 3.0
    t_cut: int = 1500
    samples: int = 100_000
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.P_gen <= 1.0:
            raise ConfigError(f"P_gen must lie in (0, 1], got {self.P_gen}")
        if not self.T_coh > 0:
            raise ConfigError(f"T_coh must be positive, got {self.T_coh}")
        if not self.t_ts > 0:
            raise ConfigError(f"t_ts must be positive, got {self.t_ts}")
        if int(self.t_cut) != self.t_cut or self.t_cut < 1:
            raise ConfigError(f"t_cut must be an integer >= 1, got {self.t_cut}")
        if int(self.samples) != self.samples or self.samples < 1:
            raise ConfigError(f"samples must be a positive integer, got {self.samples}")


@dataclass(frozen=True)
class WernerState:
    w: float

    def __post_init__(self):
        if not 0.0 <= self.w <= 1.0:
            raise ValueError(f"visibility must lie in [0, 1], got {self.w}")

    @property
    def fidelity(self) -> float:
        return (1.0 + 3.0 * self.w) / 4.0


@dataclass(frozen=True)
class AttemptOutcome:
    success: bool
    T: int | None = None
    W: float | None = None


@dataclass(frozen=True)
class LinkLayout:
    """Edges with their working multiplicities and the usable paths.

    ``paths`` hold edge indices and are stored in tie-break order: fewer
    hops first, then declaration order.
    """

    edges: tuple[str, ...]
    multiplicity: tuple[int, ...]
    paths: tuple[tuple[int, ...], ...]
    label: str = ""

    def __post_init__(self):
        if len(self.edges) != len(self.multiplicity):
            raise ConfigError("one multiplicity per edge is required")
        if any(int(n) != n or n < 1 for n in self.multiplicity):
            raise ConfigError(f"multiplicities must be positive integers, got {self.multiplicity}")
        if not self.paths:
            raise ConfigError("a layout needs at least one usable path")
        order = sorted(range(len(self.paths)), key=lambda i: (len(self.paths[i]), i))
        object.__setattr__(self, "paths", tuple(tuple(self.paths[i]) for i in order))

    @classmethod
    def chain(cls, profile: Sequence[int], label: str | None = None) -> "LinkLayout":
        """Serial chain whose edge ``i`` has ``profile[i]`` working connections."""
        profile = tuple(int(n) for n in profile)
        edges = tuple(f"e{i}" for i in range(1, len(profile) + 1))
        return cls(edges, profile, (tuple(range(len(edges))),), label or "-".join(map(str, profile)))

    @classmethod
    def network(
        cls, topology: Topology, working: Sequence[str], multiplicity: int | Mapping[str, int] = 1,
        label: str | None = None,
    ) -> "LinkLayout":
        """Paths of ``topology`` whose edges all belong to ``working`` (nodes up)."""
        working = set(working)
        edges = tuple(e for e in topology.edges if e in working)
        index = {e: i for i, e in enumerate(edges)}
        paths = []
        for path in topology.paths:
            path_edges = [e for e in topology.edges if e in path]
            if all(e in working for e in path_edges):
                paths.append(tuple(index[e] for e in path_edges))
        if isinstance(multiplicity, Mapping):
            mult = tuple(int(multiplicity[e]) for e in edges)
        else:
            mult = (int(multiplicity),) * len(edges)
        return cls(edges, mult, tuple(paths), label or "".join(sorted(working)))

    @classmethod
    def from_configuration(cls, config: Configuration, topology: Topology | None = None) -> "LinkLayout":
        if isinstance(config.key, frozenset):
            if topology is None:
                raise ConfigError("network configurations need their topology")
            return cls.network(topology, config.key, label=config.label)
        return cls.chain(config.key, label=config.label)


# --------------------------------------------------------------------------
# sampling
# --------------------------------------------------------------------------


def _geometric(success: float, size, rng: np.random.Generator) -> np.ndarray:
    # inverse CDF with V in (0, 1]
    if success >= 1.0:
        return np.ones(size, dtype=np.int64)
    v = 1.0 - rng.random(size)
    return np.floor(np.log(v) / math.log1p(-success)).astype(np.int64) + 1


def min_geometric_probability(n: int, P_gen: float) -> float:
    """Per-step success probability of the first of ``n`` connections."""
    return -math.expm1(n * math.log1p(-P_gen)) if P_gen < 1.0 else 1.0


def sample_segment_waiting_time(n: int, P_gen: float, rng: np.random.Generator, size=None):
    """Steps until the first of ``n`` connections creates a link.

    The minimum of ``n`` independent geometric variables with parameter
    ``P_gen`` is geometric with parameter ``1 - (1 - P_gen)**n``, which is
    sampled directly.
    """
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n}")
    if not 0.0 < P_gen <= 1.0:
        raise ValueError(f"P_gen must lie in (0, 1], got {P_gen}")
    out = _geometric(min_geometric_probability(int(n), P_gen), 1 if size is None else size, rng)
    return int(out[0]) if size is None else out


def attempt_from_waiting_times(layout: LinkLayout, edge_times, t_ts: float, T_coh: float):
    """Completion step and visibility from per-edge link creation steps.

    ``edge_times`` has shape ``(n, n_edges)``.  The first path to hold all
    its links wins; ties follow the layout's path order.  Each link of the
    winning path ages from its creation step to completion.
    """
    times = np.atleast_2d(np.asarray(edge_times, dtype=np.int64))
    done = np.stack([times[:, list(p)].max(axis=1) for p in layout.paths], axis=1)
    choice = np.argmin(done, axis=1)
    T = done[np.arange(times.shape[0]), choice]
    total_age = np.zeros(times.shape[0], dtype=np.int64)
    for k, path in enumerate(layout.paths):
        sel = choice == k
        if np.any(sel):
            total_age[sel] = (T[sel, None] - times[sel][:, list(path)]).sum(axis=1)
    W = np.exp(-total_age * (t_ts / T_coh))
    return T, W


def sample_attempts(layout: LinkLayout, params: ProtocolParams, n: int, rng: np.random.Generator):
    """``n`` uncut attempts: completion steps ``T`` and visibilities ``W``."""
    times = np.empty((n, len(layout.edges)), dtype=np.int64)
    for j, mult in enumerate(layout.multiplicity):
        times[:, j] = sample_segment_waiting_time(mult, params.P_gen, rng, size=n)
    return attempt_from_waiting_times(layout, times, params.t_ts, params.T_coh)


def simulate_attempt(layout: LinkLayout, params: ProtocolParams, rng: np.random.Generator) -> AttemptOutcome:
    """One attempt under the cut-off ``params.t_cut``."""
    T, W = sample_attempts(layout, params, 1, rng)
    if T[0] > params.t_cut:
        return AttemptOutcome(False)
    return AttemptOutcome(True, int(T[0]), float(W[0]))


# --------------------------------------------------------------------------
# key rates
# --------------------------------------------------------------------------


def swap_visibility(w_list) -> float:
    """Visibility after perfect swaps of Werner states: the product."""
    return float(np.prod(np.asarray(w_list, dtype=float)))


def secret_key_fraction(w):
    """BB84 secret-key fraction of a Werner state with visibility ``w``."""
    w = np.asarray(w, dtype=float)
    a = (1.0 - w) / 2.0
    b = (1.0 + w) / 2.0
    with np.errstate(divide="ignore", invalid="ignore"):
        ta = np.where(a > 0, (1.0 - w) * np.log2(np.where(a > 0, a, 1.0)), 0.0)
        tb = np.where(b > 0, (1.0 + w) * np.log2(np.where(b > 0, b, 1.0)), 0.0)
    r = np.maximum(0.0, 1.0 + ta + tb)
    return float(r) if r.ndim == 0 else r


def key_rate(mean_W: float, mean_T_seconds: float) -> float:
    """Secret-key rate ``r(<W>) / <T>`` in bits per second."""
    if not mean_T_seconds > 0 or not math.isfinite(mean_T_seconds):
        return 0.0
    return secret_key_fraction(mean_W) / mean_T_seconds


@dataclass(frozen=True)
class CutoffStats:
    """Restart statistics at one cut-off.  ``p_cut == 0`` marks an unattainable point."""

    t_cut: int
    p_cut: float
    mean_T_steps: float
    mean_T_seconds: float
    mean_W: float
    r: float
    R: float
    n_samples: int
    se_T_steps: float = math.nan

    @property
    def attainable(self) -> bool:
        return self.p_cut > 0


def cutoff_statistics(T, W, t_cut: int, t_ts: float = 1.0, mode: str = "mean_w") -> CutoffStats:
    """``p_cut``, mean waiting time and mean visibility under restarts.

    ``<T> = t_cut (1 - p_cut) / p_cut + E[T | T <= t_cut]`` and
    ``<W> = E[W | T <= t_cut]`` from samples of uncut attempts.  With
    ``mode="mean_r"`` the key fraction is averaged over successes instead
    of evaluated at ``<W>``.  ``se_T_steps`` is a delta-method standard
    error of ``<T>``.
    """
    if mode not in RATE_MODES:
        raise ValueError(f"mode must be one of {RATE_MODES}, got {mode!r}")
    T = np.asarray(T)
    W = np.asarray(W, dtype=float)
    n = T.size
    ok = T <= t_cut
    k = int(ok.sum())
    if k == 0:
        return CutoffStats(int(t_cut), 0.0, math.inf, math.inf, math.nan, 0.0, 0.0, n)
    p = k / n
    Ts = T[ok].astype(float)
    mean_T = t_cut * (1.0 - p) / p + Ts.mean()
    var_restart = (t_cut / p**2) ** 2 * p * (1.0 - p) / n
    var_cond = Ts.var(ddof=1) / k if k > 1 else 0.0
    mean_W = float(W[ok].mean())
    r = float(np.mean(secret_key_fraction(W[ok]))) if mode == "mean_r" else secret_key_fraction(mean_W)
    seconds = mean_T * t_ts
    return CutoffStats(
        int(t_cut), p, float(mean_T), float(seconds), mean_W, float(r), float(r / seconds), n,
        float(math.sqrt(var_restart + var_cond)),
    )


def default_cutoff_grid(t_max: int = 1500, points: int = 40) -> np.ndarray:
    """Logarithmically spaced integer cut-offs from 1 to ``t_max``."""
    if points < 1 or t_max < points:
        raise ConfigError(f"cannot place {points} distinct cut-offs in 1..{t_max}")
    raw = np.rint(np.geomspace(1, t_max, points)).astype(np.int64)
    grid = raw.copy()
    for i in range(1, points):
        grid[i] = max(raw[i], grid[i - 1] + 1)
    return grid


@dataclass
class KeyRateCurve:
    """Cut-off statistics of one configuration over a grid."""

    label: str
    t_cut: np.ndarray
    p_cut: np.ndarray
    mean_T_steps: np.ndarray
    mean_T_seconds: np.ndarray
    mean_W: np.ndarray
    r: np.ndarray
    R: np.ndarray
    n_samples: int
    weight: float = 1.0

    @classmethod
    def from_samples(cls, label, T, W, grid, t_ts, mode="mean_w", weight=1.0) -> "KeyRateCurve":
        stats = [cutoff_statistics(T, W, int(t), t_ts, mode) for t in grid]
        col = lambda name: np.array([getattr(s, name) for s in stats], dtype=float)  # noqa: E731
        return cls(
            label, np.asarray(grid, dtype=np.int64), col("p_cut"), col("mean_T_steps"),
            col("mean_T_seconds"), col("mean_W"), col("r"), col("R"), int(np.asarray(T).size), weight,
        )

    def rows(self):
        for i in range(self.t_cut.size):
            yield (
                self.label, int(self.t_cut[i]), self.p_cut[i], self.mean_T_steps[i], self.mean_T_seconds[i],
                self.mean_W[i], self.r[i], self.R[i], self.n_samples,
            )


@dataclass
class AverageCurve:
    """Weighted sum of per-configuration key rates."""

    mode: str
    t_cut: np.ndarray
    R: np.ndarray
    weights: dict[str, float] = field(default_factory=dict)


def average_key_rate(
    curves: Sequence[KeyRateCurve], weights: Sequence[float] | None = None, mode: str = "unconditional",
    normalize: bool = False,
) -> AverageCurve:
    """``sum_i w_i R_i(t_cut)``.

    Weights default to the curves' own ``weight`` fields.  They are the
    probabilities of the configurations and need not sum to one: the
    remainder is the probability that no path works, which contributes no
    key.  ``normalize=True`` conditions on a functional configuration.
    """
    if not curves:
        raise ValueError("no curves to average")
    grid = curves[0].t_cut
    if any(not np.array_equal(c.t_cut, grid) for c in curves):
        raise ValueError("curves must share the cut-off grid")
    w = np.array([c.weight for c in curves] if weights is None else list(weights), dtype=float)
    if w.size != len(curves) or np.any(w < 0):
        raise ValueError("need one non-negative weight per curve")
    if normalize:
        if w.sum() <= 0:
            raise ValueError("weights sum to zero")
        w = w / w.sum()
    R = np.sum(w[:, None] * np.stack([c.R for c in curves]), axis=0)
    return AverageCurve(mode, grid.copy(), R, {c.label: float(x) for c, x in zip(curves, w)})


def optimize_cutoff(t_cut, R) -> int:
    """Cut-off with the largest rate; ties go to the smaller cut-off."""
    t_cut = np.asarray(t_cut)
    R = np.asarray(R, dtype=float)
    if t_cut.size == 0 or t_cut.size != R.size:
        raise ValueError("need matching, nonempty t_cut and R arrays")
    order = np.argsort(t_cut, kind="stable")
    return int(t_cut[order][int(np.argmax(R[order]))])


# --------------------------------------------------------------------------
# many configurations
# --------------------------------------------------------------------------


def simulate_configurations(
    layouts: Sequence[LinkLayout], params: ProtocolParams, grid=None, *, weights: Sequence[float] | None = None,
    mode: str = "mean_w", n_shards: int = 10, workers: int = 1,
) -> list[KeyRateCurve]:
    """Key-rate curves of several configurations.

    Configuration ``i`` draws its samples from child ``i`` of
    ``SeedSequence(params.seed)``, split into ``n_shards`` fixed sub-streams,
    so the result does not depend on ``workers``.
    """
    grid = default_cutoff_grid() if grid is None else np.asarray(grid, dtype=np.int64)
    children = np.random.SeedSequence(params.seed).spawn(len(layouts))
    sizes = [params.samples // n_shards + (1 if s < params.samples % n_shards else 0) for s in range(n_shards)]
    tasks = [
        (i, s, child_shard, size)
        for i, child in enumerate(children)
        for s, (child_shard, size) in enumerate(zip(child.spawn(n_shards), sizes))
        if size > 0
    ]

    def run(task):
        i, _, seq, size = task
        return sample_attempts(layouts[i], params, size, np.random.default_rng(seq))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, tasks))
    else:
        results = [run(t) for t in tasks]

    curves = []
    for i, layout in enumerate(layouts):
        parts = [res for task, res in zip(tasks, results) if task[0] == i]
        T = np.concatenate([p[0] for p in parts])
        W = np.concatenate([p[1] for p in parts])
        w = 1.0 if weights is None else float(weights[i])
        curves.append(KeyRateCurve.from_samples(layout.label, T, W, grid, params.t_ts, mode, w))
    return curves


def chain_conditioned_weights(
    profiles: Sequence[Sequence[int]], spec: RepairSpec, N: int,
) -> dict[str, np.ndarray]:
    """Probabilities of chain multiplicity profiles under the repair model.

    Returns per-profile probabilities (one member of each permutation class)
    that the chain is in that profile now, unconditionally and conditioned
    on the chain having been functional or broken in the previous step.
    """
    pb = p_eff_broken(spec)
    m2 = consecutive_broken(spec, 2) if spec.tau >= 2 else pb * spec.p_down
    up_after_down = pb - m2
    now = [math.comb(N, n) * (1.0 - pb) ** n * pb ** (N - n) for n in range(N + 1)]
    now_after_broken = [math.comb(N, n) * up_after_down**n * m2 ** (N - n) for n in range(N + 1)]
    M = len(profiles[0])
    p_func_before = (1.0 - pb**N) ** M
    uncond, func, broken = [], [], []
    for profile in profiles:
        if len(profile) != M:
            raise ValueError("all profiles need the same length")
        joint = math.prod(now[n] for n in profile)
        joint_func = math.prod(now[n] - now_after_broken[n] for n in profile)
        uncond.append(joint)
        func.append(joint_func / p_func_before)
        broken.append((joint - joint_func) / (1.0 - p_func_before))
    return {
        "unconditional": np.array(uncond),
        "conditioned-functional": np.array(func),
        "conditioned-broken": np.array(broken),
    }
