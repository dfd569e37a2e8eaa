import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from oracles import block_survival_enumerated
from relnet.errors import ConfigError, NumericalError
from relnet.reliability import (
    BlockModel,
    ChainModel,
    ConnectionLaw,
    InitialDistribution,
    block_failure_rate_perfect,
    block_survival_perfect,
    block_survival_probabilistic,
    chain_failure_rate,
    chain_survival,
    connection_survival,
    gompertz_makeham,
    initial_working_probability,
    match_multiplicity,
    mean_time_to_failure,
    probabilistic_chain,
    weibull,
)


def test_connection_survival_is_exponential():
    assert connection_survival(ConnectionLaw(0.5), 0.0) == 1.0
    assert connection_survival(ConnectionLaw(0.5), 2.0) == pytest.approx(math.exp(-1.0), rel=1e-15)


def test_block_two_of_three():
    a = math.exp(-0.5)
    expected = 3 * a**2 * (1 - a) + a**3
    assert block_survival_perfect(3, 2, ConnectionLaw(1.0), 0.5) == pytest.approx(expected, rel=1e-14)
    assert expected == pytest.approx(0.657378, abs=1e-6)


def test_block_one_of_two_at_half_life():
    assert block_survival_perfect(2, 1, ConnectionLaw(math.log(2)), 1.0) == pytest.approx(0.75, rel=1e-14)


def test_full_flux_rate_is_constant():
    # all N connections needed: the block fails at the first failure, rate N k
    t = np.array([1e-8, 0.3, 2.0])
    assert np.allclose(block_failure_rate_perfect(3, 3, ConnectionLaw(1.0), t), 3.0, rtol=1e-12)


def test_failure_rate_starts_at_zero_with_redundancy():
    assert block_failure_rate_perfect(3, 1, ConnectionLaw(1.0), 0.0) == 0.0


@settings(max_examples=40, deadline=None)
@given(
    N=st.integers(1, 6), data=st.data(), k=st.floats(0.05, 3.0),
    p=st.floats(0.0, 1.0), t=st.floats(0.0, 6.0),
)
def test_probabilistic_block_matches_enumeration(N, data, k, p, t):
    f = data.draw(st.integers(1, N))
    model = BlockModel(N, f, ConnectionLaw(k), InitialDistribution.binomial(p))
    expected = block_survival_enumerated(N, f, k, np.array([t]), p)[0]
    assert block_survival_probabilistic(model, t) == pytest.approx(expected, abs=1e-13)


def test_explicit_start_equals_binomial_start():
    N, p = 5, 0.3
    q = [math.comb(N, n) * p**n * (1 - p) ** (N - n) for n in range(N + 1)]
    t = np.linspace(0, 4, 17)
    a = BlockModel(N, 2, ConnectionLaw(0.8), InitialDistribution.binomial(p))
    b = BlockModel(N, 2, ConnectionLaw(0.8), InitialDistribution.explicit(q))
    assert np.allclose(a.survival(t), b.survival(t), atol=1e-15, rtol=0)
    assert np.allclose(a.failure_rate(t), b.failure_rate(t), rtol=1e-12)


def test_binomial_start_offset_at_zero():
    model = BlockModel(6, 1, ConnectionLaw(0.5), InitialDistribution.binomial(0.5))
    assert model.survival(0.0) == pytest.approx(1 - 0.5**6, rel=1e-15)


def test_chain_is_product_and_rate_is_sum():
    b1 = BlockModel(3, 1, ConnectionLaw(0.5))
    b2 = BlockModel(4, 2, ConnectionLaw(0.2), InitialDistribution.binomial(0.7))
    chain = ChainModel((b1, b2, b1))
    t = np.linspace(0.1, 3, 9)
    assert np.allclose(chain_survival(chain, t), b1.survival(t) ** 2 * b2.survival(t), rtol=1e-13)
    assert np.allclose(chain_failure_rate(chain, t), 2 * b1.failure_rate(t) + b2.failure_rate(t), rtol=1e-13)


def test_large_multiplicity_is_finite():
    model = BlockModel(5000, 1, ConnectionLaw(1.0), InitialDistribution.binomial(0.01))
    s = model.survival(np.array([0.0, 1.0, 5.0]))
    assert np.all(np.isfinite(s)) and np.all(np.diff(s) < 0)
    assert s[0] == pytest.approx(1 - 0.99**5000, rel=1e-12)


def test_mttf_of_parallel_block_is_harmonic_number():
    # max of three unit exponentials has mean 1 + 1/2 + 1/3
    chain = ChainModel.uniform(1, BlockModel(3, 1, ConnectionLaw(1.0)))
    assert chain.mean_time_to_failure() == pytest.approx(11 / 6, abs=1e-8)


def test_mttf_matches_quadrature():
    chain = ChainModel.uniform(6, BlockModel(3, 1, ConnectionLaw(0.5)))
    ref, _ = quad(lambda x: float(chain.survival(x)), 0, np.inf, epsabs=1e-12, epsrel=1e-12, limit=200)
    assert chain.mean_time_to_failure() == pytest.approx(ref, abs=1e-8)


def test_mttf_horizon_error():
    with pytest.raises(NumericalError):
        mean_time_to_failure(lambda t: np.ones_like(np.asarray(t, dtype=float)), horizon=1e3)


def _linear_match(reference, p, k, criterion):
    target = reference.mean_time_to_failure()
    n = 1
    while True:
        chain = probabilistic_chain(reference.M, n, 1, k, p)
        ok = True
        if criterion in ("initial", "both"):
            ok &= initial_working_probability(chain) >= 0.9
        if criterion in ("mttf", "both"):
            ok &= chain.mean_time_to_failure() + 1e-8 >= target
        if ok:
            return n
        n += 1


@pytest.mark.parametrize("p,k", [(0.5, 0.5), (0.3, 0.2), (0.9, 1.0)])
@pytest.mark.parametrize("criterion", ["mttf", "initial", "both"])
def test_match_agrees_with_linear_scan(p, k, criterion):
    ref = ChainModel.uniform(6, BlockModel(3, 1, ConnectionLaw(0.5)))
    assert match_multiplicity(ref, p, k, criterion) == _linear_match(ref, p, k, criterion)


def test_match_is_identity_for_perfect_start():
    ref = ChainModel.uniform(6, BlockModel(3, 1, ConnectionLaw(0.5)))
    assert match_multiplicity(ref, 1.0, 0.5, "mttf") == 3


def test_match_reports_infeasible():
    ref = ChainModel.uniform(2, BlockModel(3, 1, ConnectionLaw(0.5)))
    with pytest.raises(NumericalError):
        match_multiplicity(ref, 0.5, 50.0, "mttf", max_multiplicity=8)


def test_explicit_distribution_must_sum_to_one():
    with pytest.raises(ConfigError, match="sum 0.9"):
        InitialDistribution.explicit([0.2, 0.3, 0.4])


def test_invalid_models():
    with pytest.raises(ConfigError):
        BlockModel(3, 4, ConnectionLaw(1.0))
    with pytest.raises(ConfigError):
        ConnectionLaw(-1.0)
    with pytest.raises(ConfigError):
        BlockModel(3, 1, ConnectionLaw(1.0), InitialDistribution.explicit([0.5, 0.5]))
    with pytest.raises(ValueError):
        block_survival_perfect(3, 1, ConnectionLaw(1.0), -0.1)


def test_rate_undefined_when_survival_vanishes():
    model = BlockModel(3, 1, ConnectionLaw(1.0), InitialDistribution.binomial(0.0))
    with pytest.raises(NumericalError):
        model.failure_rate(1.0)


@pytest.mark.parametrize("law", ["gompertz", "weibull"])
def test_reference_laws_integrate_their_rates(law):
    t = np.array([0.5, 1.0, 2.5])
    if law == "gompertz":
        S, mu = gompertz_makeham(0.01, 0.05, 1.0, t)
        rate = lambda x: 0.01 + 0.05 * math.exp(x)  # noqa: E731
    else:
        S, mu = weibull(1.0, 2.0, t)
        rate = lambda x: x**2  # noqa: E731
    for ti, si, mi in zip(t, S, mu):
        assert si == pytest.approx(math.exp(-quad(rate, 0, ti)[0]), rel=1e-12)
        assert mi == pytest.approx(rate(ti), rel=1e-14)
