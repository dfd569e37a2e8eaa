"""Temporal correlation measures of a binary system state over three steps.

``JointDistribution3`` stores ``P(S1, S2, S3)`` with ``S = 1`` for a working
system.  From it we compute the normalized two-time correlation, the third
joint cumulant, and ``D3``: the Kullback-Leibler divergence (in bits) from
``P`` to the closest distribution of the pairwise exponential family, i.e.
the maximum-entropy distribution with the same pairwise marginals.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import NumericalError

NEGATIVE_TOLERANCE = 1e-12
_PAIRS = ((0, 1), (0, 2), (1, 2))


def _pattern_index(pattern: str) -> tuple[int, int, int]:
    return tuple(1 if ch == "+" else 0 for ch in pattern)


@dataclass(frozen=True)
class JointDistribution3:
    """Probabilities over ``{0,1}^3`` indexed ``[s1, s2, s3]``."""

    table: np.ndarray

    def __post_init__(self):
        p = np.array(self.table, dtype=float).reshape(2, 2, 2)
        if not np.all(np.isfinite(p)):
            raise ValueError("joint distribution has non-finite entries")
        if np.any(p < -NEGATIVE_TOLERANCE):
            raise ValueError(f"joint distribution has negative entries: min {p.min()!r}")
        p = np.clip(p, 0.0, None)
        total = p.sum()
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"joint distribution sums to {total!r}, not 1")
        p.setflags(write=False)
        object.__setattr__(self, "table", p)

    @classmethod
    def from_patterns(cls, probabilities: Mapping[str, float]) -> "JointDistribution3":
        p = np.zeros((2, 2, 2))
        for pattern, value in probabilities.items():
            if len(pattern) != 3 or set(pattern) - {"+", "-"}:
                raise ValueError(f"expected a length-3 sign pattern, got {pattern!r}")
            p[_pattern_index(pattern)] = value
        return cls(p)

    @classmethod
    def product(cls, m1: float, m2: float, m3: float) -> "JointDistribution3":
        """Independent steps with the given working probabilities."""
        axes = [np.array([1 - m, m]) for m in (m1, m2, m3)]
        return cls(np.einsum("i,j,k->ijk", *axes))

    def probability(self, pattern: str) -> float:
        """Probability of a length-3 pattern over ``+``, ``-`` and ``*``."""
        idx = tuple(slice(None) if ch == "*" else (1 if ch == "+" else 0) for ch in pattern)
        return float(np.sum(self.table[idx]))

    def patterns(self) -> dict[str, float]:
        out = {}
        for bits in itertools.product((1, 0), repeat=3):
            out["".join("+" if b else "-" for b in bits)] = float(self.table[bits])
        return out

    def mean(self, i: int) -> float:
        """``<S_i>`` for step ``i`` in 1..3."""
        pattern = ["*"] * 3
        pattern[i - 1] = "+"
        return self.probability("".join(pattern))

    def moment(self, *steps: int) -> float:
        pattern = ["*"] * 3
        for i in steps:
            pattern[i - 1] = "+"
        return self.probability("".join(pattern))

    def pairwise_marginal(self, i: int, j: int) -> np.ndarray:
        drop = tuple(k for k in range(3) if k not in (i, j))
        return self.table.sum(axis=drop)

    def to_csv(self, path) -> None:
        """Write the eight ``pattern,probability`` rows."""
        path = Path(path)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["pattern", "probability"])
            for pattern, value in self.patterns().items():
                writer.writerow([pattern, f"{value:.12g}"])


def temporal_correlation(P: JointDistribution3, steps: tuple[int, int] = (1, 2)) -> float:
    """Normalized correlation ``Cor(t_a, t_b)``.

    Raises :class:`NumericalError` when either step has zero variance.
    """
    a, b = steps
    ma, mb = P.mean(a), P.mean(b)
    var = ma * (1 - ma) * mb * (1 - mb)
    if var <= 0:
        raise NumericalError("correlation undefined: a marginal is deterministic")
    return (P.moment(a, b) - ma * mb) / math.sqrt(var)


def joint_cumulant(P: JointDistribution3, absolute: bool = True) -> float:
    """Third joint cumulant of ``S1, S2, S3`` (its absolute value by default)."""
    A, B, C = P.mean(1), P.mean(2), P.mean(3)
    value = (
        P.moment(1, 2, 3)
        - A * P.moment(2, 3)
        - B * P.moment(1, 3)
        - C * P.moment(1, 2)
        + 2 * A * B * C
    )
    return abs(value) if absolute else value


def pairwise_projection(
    P: JointDistribution3, tol: float = 1e-10, max_sweeps: int = 100_000,
) -> tuple[np.ndarray, int]:
    """Iterative proportional fitting of the three pairwise marginals.

    Starts from the uniform distribution; each sweep rescales to match the
    (1,2), (1,3) and (2,3) marginals in turn.  Returns the fitted table and
    the number of sweeps used.
    """
    target = [P.pairwise_marginal(i, j) for i, j in _PAIRS]
    q = np.full((2, 2, 2), 0.125)
    for sweep in range(1, max_sweeps + 1):
        for (i, j), want in zip(_PAIRS, target):
            drop = tuple(k for k in range(3) if k not in (i, j))
            have = q.sum(axis=drop)
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio = np.where(have > 0, want / have, 0.0)
            q = q * np.expand_dims(ratio, drop)
        deviation = max(
            np.max(np.abs(q.sum(axis=tuple(k for k in range(3) if k not in (i, j))) - want))
            for (i, j), want in zip(_PAIRS, target)
        )
        if deviation < tol:
            return q, sweep
    raise NumericalError(f"pairwise fitting did not converge in {max_sweeps} sweeps")


def kl_divergence_bits(p: np.ndarray, q: np.ndarray) -> float:
    p = np.asarray(p, dtype=float).ravel()
    q = np.asarray(q, dtype=float).ravel()
    mask = p > 0
    if np.any(q[mask] <= 0):
        return math.inf
    return float(np.sum(p[mask] * np.log2(p[mask] / q[mask])))


def d3_multi_information(P: JointDistribution3, tol: float = 1e-10, max_sweeps: int = 100_000) -> float:
    """Genuine three-step correlation ``D3 = min_{Q pairwise} D(P || Q)`` in bits."""
    q, _ = pairwise_projection(P, tol=tol, max_sweeps=max_sweeps)
    return max(kl_divergence_bits(P.table, q), 0.0)
