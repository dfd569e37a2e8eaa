"""Survival functions and failure rates of multiplexed blocks and serial chains.

Every physical connection fails with a constant rate ``k``, so it survives to
time ``t`` with probability ``alpha = exp(-k t)``.  A block of ``N`` parallel
connections carries a flux ``f`` while at least ``f`` of them work; a chain of
blocks works while every block does.

All block quantities are evaluated in log space.  Binomial coefficients are
exact integers up to ``N = 60`` and come from ``gammaln`` above that, so the
same code path serves small blocks and the ``N' ~ 10^4`` multiplicities that
the multiplicity search may probe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import gammaln, logsumexp

from .errors import ConfigError, NumericalError

EXACT_BINOMIAL_MAX = 60


# --------------------------------------------------------------------------
# model types
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ConnectionLaw:
    """Exponential failure law of one physical connection."""

    k: float

    def __post_init__(self):
        if not (self.k >= 0 and math.isfinite(self.k)):
            raise ConfigError(f"failure rate k must be finite and >= 0, got {self.k}")


@dataclass(frozen=True)
class InitialDistribution:
    """Distribution of the number of connections working at ``t = 0``.

    Use the constructors :meth:`perfect`, :meth:`binomial` and
    :meth:`explicit` rather than building instances by hand.
    """

    kind: str = "perfect"
    p: float | None = None
    q: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind == "perfect":
            return
        if self.kind == "binomial":
            if self.p is None or not 0.0 <= self.p <= 1.0:
                raise ConfigError(f"binomial start needs 0 <= p <= 1, got {self.p}")
            return
        if self.kind == "explicit":
            if not self.q:
                raise ConfigError("explicit start needs a nonempty list q_0..q_N")
            q = np.asarray(self.q, dtype=float)
            if np.any(q < 0) or np.any(q > 1) or not np.all(np.isfinite(q)):
                raise ConfigError(f"every q_n must lie in [0, 1], got {list(self.q)}")
            total = math.fsum(self.q)
            if abs(total - 1.0) > 1e-9:
                raise ConfigError(f"q_n must sum to 1, got sum {total!r}")
            return
        raise ConfigError(f"unknown initial distribution kind {self.kind!r}")

    @classmethod
    def perfect(cls) -> "InitialDistribution":
        return cls("perfect")

    @classmethod
    def binomial(cls, p: float) -> "InitialDistribution":
        return cls("binomial", p=float(p))

    @classmethod
    def explicit(cls, q: Sequence[float]) -> "InitialDistribution":
        return cls("explicit", q=tuple(float(x) for x in q))

    def probabilities(self, N: int) -> np.ndarray:
        """Return ``q_0 .. q_N`` for a block of multiplicity ``N``."""
        if self.kind == "perfect":
            q = np.zeros(N + 1)
            q[N] = 1.0
            return q
        if self.kind == "binomial":
            n = np.arange(N + 1)
            return np.exp(_log_binom(N, n) + _xlogy(n, self.p) + _xlogy(N - n, 1.0 - self.p))
        if len(self.q) != N + 1:
            raise ConfigError(f"explicit start for N={N} needs {N + 1} values, got {len(self.q)}")
        return np.asarray(self.q, dtype=float)


@dataclass(frozen=True)
class BlockModel:
    """One edge of multiplicity ``N`` that must carry ``flux`` connections."""

    N: int
    flux: int
    law: ConnectionLaw
    init: InitialDistribution = field(default_factory=InitialDistribution.perfect)

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ConfigError(f"multiplicity N must be a positive integer, got {self.N}")
        if int(self.flux) != self.flux or not 1 <= self.flux <= self.N:
            raise ConfigError(f"flux must satisfy 1 <= flux <= N={self.N}, got {self.flux}")
        if self.init.kind == "explicit":
            self.init.probabilities(self.N)

    def survival(self, t):
        return block_survival_probabilistic(self, t)

    def failure_rate(self, t):
        return block_failure_rate_probabilistic(self, t)

    def initial_working_probability(self) -> float:
        q = self.init.probabilities(self.N)
        return float(math.fsum(q[self.flux:]))


@dataclass(frozen=True)
class ChainModel:
    """Serial chain of independent blocks."""

    blocks: tuple[BlockModel, ...]

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(self.blocks))
        if len(self.blocks) < 1:
            raise ConfigError("a chain needs at least one block")

    @classmethod
    def uniform(cls, M: int, block: BlockModel) -> "ChainModel":
        return cls(tuple([block] * M))

    @property
    def M(self) -> int:
        return len(self.blocks)

    def survival(self, t):
        return chain_survival(self, t)

    def failure_rate(self, t):
        return chain_failure_rate(self, t)

    def mean_time_to_failure(self, **kwargs) -> float:
        return mean_time_to_failure(self.survival, **kwargs)


# --------------------------------------------------------------------------
# log-space helpers
# --------------------------------------------------------------------------


def _log_binom(N: int, i) -> np.ndarray:
    i = np.asarray(i)
    if N <= EXACT_BINOMIAL_MAX:
        table = np.log(np.array([math.comb(N, j) for j in range(N + 1)], dtype=float))
        return table[i]
    return gammaln(N + 1.0) - gammaln(i + 1.0) - gammaln(N - i + 1.0)


def _xlogy(n, x):
    """``n * log(x)`` with ``0 * log(0) = 0``."""
    n = np.asarray(n, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(n == 0, 0.0, n * np.log(x))


def _as_time(t):
    arr = np.asarray(t, dtype=float)
    if np.any(np.isnan(arr)) or np.any(arr < 0):
        raise ValueError("time must be >= 0")
    return arr


def _finish(value, t):
    return float(value) if np.ndim(t) == 0 else value


def _log_tail(N: int, f: int, log_a, log_1ma):
    """``log P(Binomial(N, a) >= f)`` for broadcastable ``log a``, ``log(1-a)``."""
    i = np.arange(N - f + 1)
    log_a = np.asarray(log_a)[..., None]
    log_1ma = np.asarray(log_1ma)[..., None]
    with np.errstate(invalid="ignore"):
        broken = np.where(i == 0, 0.0, i * log_1ma)
        working = np.where(N - i == 0, 0.0, (N - i) * log_a)
    return logsumexp(_log_binom(N, i) + broken + working, axis=-1)


def _log_tail_density(N: int, f: int, log_rate, log_a, log_1ma):
    """Log of ``-d/dt P(Binomial(N, a(t)) >= f)`` when ``da/dt = -rate * a``."""
    log_a = np.asarray(log_a)
    log_1ma = np.asarray(log_1ma)
    with np.errstate(invalid="ignore"):
        broken = np.where(N - f == 0, 0.0, (N - f) * log_1ma)
    return log_rate + math.log(f) + float(_log_binom(N, f)) + broken + f * log_a


def _log_complement(log_x):
    """``log(1 - x)`` from ``log x``."""
    with np.errstate(divide="ignore"):
        return np.log(-np.expm1(log_x))


def _log_tail_pair(N, f, k, log_a):
    log_1ma = _log_complement(log_a)
    log_s = _log_tail(N, f, log_a, log_1ma)
    log_rate = math.log(k) if k > 0 else -np.inf
    return log_s, _log_tail_density(N, f, log_rate, log_a, log_1ma)


def _log_perfect(N, f, k, t):
    return _log_tail_pair(N, f, k, -k * np.asarray(t))


def _log_binomial_start(N, f, p, k, t):
    # binomial thinning: a connection works at t w.p. p * alpha
    return _log_tail_pair(N, f, k, math.log(p) - k * np.asarray(t))


def _log_block(model: BlockModel, t):
    N, f, k = model.N, model.flux, model.law.k
    init = model.init
    if init.kind == "perfect" or (init.kind == "binomial" and init.p == 1.0):
        return _log_perfect(N, f, k, t)
    if init.kind == "binomial":
        if init.p == 0.0:
            shape = np.shape(t)
            return np.full(shape, -np.inf), np.full(shape, -np.inf)
        return _log_binomial_start(N, f, init.p, k, t)
    q = init.probabilities(N)
    log_s_terms, log_d_terms = [], []
    for n in range(f, N + 1):
        if q[n] == 0:
            continue
        ls, ld = _log_perfect(n, f, k, t)
        log_s_terms.append(math.log(q[n]) + ls)
        log_d_terms.append(math.log(q[n]) + ld)
    if not log_s_terms:
        shape = np.shape(t)
        return np.full(shape, -np.inf), np.full(shape, -np.inf)
    return logsumexp(np.stack(log_s_terms), axis=0), logsumexp(np.stack(log_d_terms), axis=0)


def _rate_from_logs(log_s, log_d, t):
    if np.any(np.isneginf(log_s)):
        raise NumericalError("failure rate diverges: survival is exactly 0")
    return _finish(np.exp(log_d - log_s), t)


# --------------------------------------------------------------------------
# public operations
# --------------------------------------------------------------------------


def connection_survival(law: ConnectionLaw, t):
    """Survival ``exp(-k t)`` of a single connection."""
    t_arr = _as_time(t)
    return _finish(np.exp(-law.k * t_arr), t)


def block_survival_perfect(N: int, flux: int, law: ConnectionLaw, t):
    """Probability that at least ``flux`` of ``N`` initially working connections survive to ``t``."""
    model = BlockModel(N, flux, law)
    t_arr = _as_time(t)
    log_s, _ = _log_perfect(model.N, model.flux, law.k, t_arr)
    return _finish(np.exp(log_s), t)


def block_failure_rate_perfect(N: int, flux: int, law: ConnectionLaw, t):
    """Failure rate of a perfect-start block.

    Equal to ``k f C(N,f) (1-a)^(N-f) a^f / S`` with ``a = exp(-k t)``;
    raises :class:`NumericalError` if the survival is exactly zero.
    """
    model = BlockModel(N, flux, law)
    t_arr = _as_time(t)
    log_s, log_d = _log_perfect(model.N, model.flux, law.k, t_arr)
    return _rate_from_logs(log_s, log_d, t)


def block_survival_probabilistic(model: BlockModel, t):
    """Survival of a block whose initial working count follows ``model.init``.

    This is ``sum_{n >= f} q_n S(n, f, t)``.  For a binomial start each
    connection independently works at time ``t`` with probability
    ``p exp(-k t)``, which sums the same series in closed form.
    """
    t_arr = _as_time(t)
    log_s, _ = _log_block(model, t_arr)
    return _finish(np.exp(log_s), t)


def block_failure_rate_probabilistic(model: BlockModel, t):
    """Conditional failure rate given survival, with the full survival weights.

    ``mu = (1/S) sum_n q_n mu_n S_n``.  The initial distribution is used as
    given; ``q_0`` is not renormalized away.
    """
    t_arr = _as_time(t)
    log_s, log_d = _log_block(model, t_arr)
    return _rate_from_logs(log_s, log_d, t)


def chain_survival(chain: ChainModel, t):
    t_arr = _as_time(t)
    log_s = sum(_log_block(b, t_arr)[0] for b in chain.blocks)
    return _finish(np.exp(log_s), t)


def chain_failure_rate(chain: ChainModel, t):
    """Sum of the block failure rates."""
    t_arr = _as_time(t)
    total = np.zeros(np.shape(t_arr))
    for block in chain.blocks:
        log_s, log_d = _log_block(block, t_arr)
        total = total + _rate_from_logs(log_s, log_d, t_arr)
    return _finish(total, t)


def initial_working_probability(chain: ChainModel) -> float:
    """Probability that every block carries its flux at ``t = 0``."""
    return math.prod(b.initial_working_probability() for b in chain.blocks)


# --------------------------------------------------------------------------
# mean time to failure
# --------------------------------------------------------------------------


def _adaptive_simpson(f: Callable, a: float, b: float, atol: float, n_init=32, max_depth=40):
    """Adaptive Simpson rule, refining all open panels of a level in one call."""
    edges = np.linspace(a, b, n_init + 1)
    left, right = edges[:-1], edges[1:]
    mid = 0.5 * (left + right)
    vals = np.asarray(f(np.concatenate([edges, mid])), dtype=float)
    fe, fm = vals[: n_init + 1], vals[n_init + 1 :]
    fl, fr = fe[:-1], fe[1:]
    whole = (right - left) / 6.0 * (fl + 4 * fm + fr)
    tol = atol * (right - left) / (b - a)
    pieces = []
    for depth in range(max_depth + 1):
        if left.size == 0:
            break
        lm, rm = 0.5 * (left + mid), 0.5 * (mid + right)
        new = np.asarray(f(np.concatenate([lm, rm])), dtype=float)
        flm, frm = new[: left.size], new[left.size :]
        s_left = (mid - left) / 6.0 * (fl + 4 * flm + fm)
        s_right = (right - mid) / 6.0 * (fm + 4 * frm + fr)
        err = s_left + s_right - whole
        done = (np.abs(err) <= 15 * tol) | (depth == max_depth)
        pieces.append((s_left + s_right + err / 15.0)[done])
        keep = ~done
        left, mid, right = left[keep], mid[keep], right[keep]
        fl, fm, fr, flm, frm = fl[keep], fm[keep], fr[keep], flm[keep], frm[keep]
        whole_l, whole_r = s_left[keep], s_right[keep]
        tol = tol[keep] / 2
        left, right = np.concatenate([left, mid]), np.concatenate([mid, right])
        mid = 0.5 * (left + right)
        fl, fr = np.concatenate([fl, fm]), np.concatenate([fm, fr])
        fm = np.concatenate([flm, frm])
        whole = np.concatenate([whole_l, whole_r])
        tol = np.concatenate([tol, tol])
    return math.fsum(np.concatenate(pieces)) if pieces else 0.0


def survival_horizon(survival: Callable, threshold=1e-12, horizon=1e7, t_start=1.0) -> float:
    """Smallest doubling of ``t_start`` where ``survival`` drops below ``threshold``."""
    t = t_start
    while survival(t) >= threshold:
        t *= 2.0
        if t > horizon:
            raise NumericalError(
                f"survival stays above {threshold:g} up to the horizon t={horizon:g}"
            )
    return t


def mean_time_to_failure(
    survival: Callable, *, atol: float = 1e-8, threshold: float = 1e-12,
    horizon: float = 1e7,
) -> float:
    """Integrate ``survival`` over ``[0, inf)``.

    The integral is truncated where the survival first drops below
    ``threshold`` and evaluated with adaptive Simpson to absolute tolerance
    ``atol``.  ``survival`` must accept numpy arrays.
    """
    t_max = survival_horizon(survival, threshold=threshold, horizon=horizon)
    return _adaptive_simpson(survival, 0.0, t_max, atol)


# --------------------------------------------------------------------------
# multiplicity matching
# --------------------------------------------------------------------------

CRITERIA = ("mttf", "initial", "both")


def probabilistic_chain(M: int, n_prime: int, flux: int, k_prime: float, p: float) -> ChainModel:
    block = BlockModel(n_prime, flux, ConnectionLaw(k_prime), InitialDistribution.binomial(p))
    return ChainModel.uniform(M, block)


def match_multiplicity(
    reference: ChainModel, p: float, k_prime: float, criteria: str = "mttf", *,
    p_thres: float = 0.9, max_multiplicity: int = 10_000, atol: float = 1e-8,
) -> int:
    """Smallest ``N'`` for which a binomial-start chain matches ``reference``.

    The candidate chain has as many blocks as ``reference``, each with
    multiplicity ``N'``, the reference block's flux, rate ``k_prime`` and
    every connection initially working with probability ``p``.

    ``criteria`` selects ``"mttf"`` (mean time to failure at least the
    reference's, up to the quadrature tolerance ``atol``), ``"initial"``
    (initial working probability at least ``p_thres``) or ``"both"``.  Both
    criteria are monotone in ``N'``, so the search gallops upward and then
    bisects.  Raises :class:`NumericalError` if no ``N' <= max_multiplicity``
    qualifies.
    """
    if criteria not in CRITERIA:
        raise ConfigError(f"criteria must be one of {CRITERIA}, got {criteria!r}")
    if any(b.init.kind != "perfect" for b in reference.blocks):
        raise ConfigError("the reference chain must use perfect-start blocks")
    fluxes = [b.flux for b in reference.blocks]
    if len(set(fluxes)) != 1:
        raise ConfigError("multiplicity matching needs a common flux across blocks")
    flux, M = fluxes[0], reference.M

    need_mttf = criteria in ("mttf", "both")
    need_init = criteria in ("initial", "both")
    target = mean_time_to_failure(reference.survival, atol=atol) if need_mttf else None

    def ok(n: int) -> bool:
        chain = probabilistic_chain(M, n, flux, k_prime, p)
        if need_init and initial_working_probability(chain) < p_thres:
            return False
        if need_mttf:
            try:
                value = mean_time_to_failure(chain.survival, atol=atol)
            except NumericalError:
                return False
            if value + atol < target:
                return False
        return True

    lo, hi = flux - 1, flux  # ok(lo) is False by convention, hi is probed
    while not ok(hi):
        lo = hi
        if hi >= max_multiplicity:
            raise NumericalError(
                f"no multiplicity N' <= {max_multiplicity} satisfies {criteria!r} "
                f"(p={p}, k'={k_prime})"
            )
        hi = min(2 * hi, max_multiplicity)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


# --------------------------------------------------------------------------
# reference laws for overlays
# --------------------------------------------------------------------------


def gompertz_makeham(A: float, B: float, lam: float, t):
    """Survival and failure rate of the law ``mu(t) = A + B exp(lam t)``."""
    t_arr = _as_time(t)
    if lam == 0:
        cumulative = (A + B) * t_arr
    else:
        cumulative = A * t_arr + B / lam * np.expm1(lam * t_arr)
    return _finish(np.exp(-cumulative), t), _finish(A + B * np.exp(lam * t_arr), t)


def weibull(a: float, b: float, t):
    """Survival and failure rate of the law ``mu(t) = a t^b``."""
    t_arr = _as_time(t)
    return (
        _finish(np.exp(-a * t_arr ** (b + 1) / (b + 1)), t),
        _finish(a * t_arr**b, t),
    )
