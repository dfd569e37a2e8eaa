"""Exact window statistics of the break-and-repair model.

Every connection breaks in a time step with probability ``p_down``.  A broken
connection stays broken for exactly ``tau`` steps; once repaired it may break
again in the very next step.  A window of consecutive steps is started at a
uniformly random point of the stationary process.

Patterns are strings over ``+`` (functional), ``-`` (broken) and ``*``
(either).  Single-connection probabilities of broken/wildcard patterns are
closed forms; a block of ``N`` parallel connections is broken iff all of them
are, and every pattern containing ``+`` follows from the marginal identity
``P(..+..) = P(..*..) - P(..-..)``.  Chains and networks expand a
time-indexed indicator polynomial whose monomials factor over components.
Analytic results cover windows of up to three steps; longer windows go
through :mod:`relnet.repair_sim`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping

from .correlations import JointDistribution3
from .errors import ConfigError, UnsupportedPatternError
from .topology import IndicatorPolynomial, Topology, build_indicator

MAX_ANALYTIC_LENGTH = 3

_SYMBOLS = {"+": "+", "-": "-", "*": "*", "−": "-", "∗": "*"}


@dataclass(frozen=True)
class RepairSpec:
    """Per-step breaking probability and repair duration (in steps)."""

    p_down: float
    tau: int

    def __post_init__(self):
        if not 0.0 < self.p_down <= 1.0:
            raise ConfigError(f"p_down must lie in (0, 1], got {self.p_down}")
        if int(self.tau) != self.tau or self.tau < 1:
            raise ConfigError(f"tau must be an integer >= 1, got {self.tau}")
        object.__setattr__(self, "tau", int(self.tau))

    @property
    def cycle_length(self) -> float:
        """Mean length of one up-and-down cycle, ``1/p_down - 1 + tau``."""
        return 1.0 / self.p_down - 1.0 + self.tau


def normalize_pattern(pattern: str) -> str:
    try:
        out = "".join(_SYMBOLS[ch] for ch in pattern)
    except KeyError as exc:
        raise ValueError(f"pattern {pattern!r} contains {exc.args[0]!r}; use '+', '-' or '*'") from None
    if not out:
        raise ValueError("pattern must have at least one step")
    return out


def all_patterns(length: int) -> list[str]:
    """Sign patterns of the given length, ``+`` before ``-`` at every position."""
    out = [""]
    for _ in range(length):
        out = [p + s for p in out for s in "+-"]
    return out


# --------------------------------------------------------------------------
# single connection
# --------------------------------------------------------------------------


def p_eff_broken(spec: RepairSpec) -> float:
    """Stationary probability that a connection is broken in a given step."""
    return spec.tau / spec.cycle_length


def consecutive_broken(spec: RepairSpec, t: int) -> float:
    """Probability ``m(t)`` of ``t`` consecutive broken steps, ``1 <= t <= tau``."""
    if int(t) != t or t < 1:
        raise ValueError(f"t must be a positive integer, got {t}")
    if t > spec.tau:
        raise UnsupportedPatternError(
            f"closed form for m(t) needs t <= tau={spec.tau}, got t={t}; use the Monte Carlo path"
        )
    return p_eff_broken(spec) * (1.0 - (t - 1) * (1.0 - spec.p_down) / spec.tau)


def broken_functional_broken(spec: RepairSpec) -> float:
    """Probability of the single-connection pattern ``-+-``."""
    return (1.0 - spec.p_down) * spec.p_down / spec.cycle_length


def _connection_broken_wildcard(spec: RepairSpec, pattern: str) -> float:
    core = pattern.strip("*")
    if not core:
        return 1.0
    if set(core) == {"-"}:
        return consecutive_broken(spec, len(core))
    if core == "-*-":
        return consecutive_broken(spec, 3) + broken_functional_broken(spec)
    raise UnsupportedPatternError(f"no closed form for the connection pattern {pattern!r}")


# --------------------------------------------------------------------------
# block of N connections
# --------------------------------------------------------------------------


@lru_cache(maxsize=4096)
def _block(spec: RepairSpec, N: int, pattern: str) -> float:
    i = pattern.find("+")
    if i < 0:
        return _connection_broken_wildcard(spec, pattern) ** N
    return _block(spec, N, pattern[:i] + "*" + pattern[i + 1 :]) - _block(
        spec, N, pattern[:i] + "-" + pattern[i + 1 :]
    )


def block_pattern_probability(spec: RepairSpec, N: int, pattern: str) -> float:
    """Probability that a block of ``N`` connections follows ``pattern``.

    The block is functional while at least one connection is.
    """
    pattern = normalize_pattern(pattern)
    if len(pattern) > MAX_ANALYTIC_LENGTH:
        raise UnsupportedPatternError(
            f"analytic patterns are limited to {MAX_ANALYTIC_LENGTH} steps; "
            "use relnet.repair_sim.estimate_patterns"
        )
    if int(N) != N or N < 1:
        raise ValueError(f"N must be a positive integer, got {N}")
    return _block(spec, int(N), pattern)


def connection_pattern_probability(spec: RepairSpec, pattern: str) -> float:
    return block_pattern_probability(spec, 1, pattern)


# --------------------------------------------------------------------------
# chains and networks
# --------------------------------------------------------------------------


def temporal_indicator(topology: Topology, pattern: str) -> IndicatorPolynomial:
    """Indicator of ``pattern`` for the whole system, with time-indexed variables.

    Nodes never fail in the repair model and are fixed to 1.
    """
    pattern = normalize_pattern(pattern)
    base = build_indicator(topology).fix({(n, None): 1 for n in topology.nodes})
    poly = IndicatorPolynomial.constant(1)
    for step, symbol in enumerate(pattern):
        if symbol == "*":
            continue
        x = base.at_time(step)
        poly = poly * (x if symbol == "+" else 1 - x)
    return poly


def _multiplicity_of(multiplicity, edge: str) -> int:
    if isinstance(multiplicity, Mapping):
        return int(multiplicity[edge])
    return int(multiplicity)


def system_pattern_probability(
    topology: Topology, spec: RepairSpec, multiplicity: int | Mapping[str, int], pattern: str,
    poly: IndicatorPolynomial | None = None,
) -> float:
    """Probability that the system follows ``pattern`` in consecutive steps.

    Each monomial of the time-indexed indicator is a product over distinct
    components, which are independent; the factors of one component at
    different times are not, so each component contributes the block
    probability of ``+`` at its time indices and ``*`` elsewhere.
    """
    pattern = normalize_pattern(pattern)
    if len(pattern) > MAX_ANALYTIC_LENGTH:
        raise UnsupportedPatternError(
            f"analytic patterns are limited to {MAX_ANALYTIC_LENGTH} steps; "
            "use relnet.repair_sim.estimate_patterns"
        )
    poly = poly if poly is not None else temporal_indicator(topology, pattern)
    length = len(pattern)

    def moment(mono) -> float:
        times: dict[str, set] = {}
        for cid, step in mono:
            times.setdefault(cid, set()).add(step)
        value = 1.0
        for cid, steps in times.items():
            comp = "".join("+" if k in steps else "*" for k in range(length))
            value *= _block(spec, _multiplicity_of(multiplicity, cid), comp)
        return value

    return float(poly.expectation(moment))


def average_uptime(spec: RepairSpec, N: int, M: int) -> float:
    """Stationary probability that an ``M``-edge chain of multiplicity ``N`` works."""
    return (1.0 - p_eff_broken(spec) ** N) ** M


def build_joint_distribution(topology: Topology, spec: RepairSpec, multiplicity) -> JointDistribution3:
    """Joint law of the system state in three consecutive steps."""
    table = {
        pattern: system_pattern_probability(topology, spec, multiplicity, pattern)
        for pattern in all_patterns(3)
    }
    return JointDistribution3.from_patterns(table)
