import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import block_window_law, connection_window_law, pattern_string, system_window_law
from relnet.errors import ConfigError, UnsupportedPatternError
from relnet.repair import (
    RepairSpec,
    all_patterns,
    average_uptime,
    block_pattern_probability,
    broken_functional_broken,
    connection_pattern_probability,
    consecutive_broken,
    normalize_pattern,
    p_eff_broken,
    system_pattern_probability,
)
from relnet.repair_sim import estimate_patterns, matching_codes, pattern_codes
from relnet.topology import chain_topology, netherlands_topology


def test_p_eff_closed_form():
    spec = RepairSpec(0.1, 5)
    assert p_eff_broken(spec) == pytest.approx(5 / 14, rel=1e-15)


def test_never_breaking_edge_case():
    spec = RepairSpec(1.0, 3)
    assert p_eff_broken(spec) == 1.0
    assert consecutive_broken(spec, 3) == pytest.approx(1.0)


@pytest.mark.parametrize("p,tau", [(0.05, 7), (0.2, 7), (0.5, 7), (0.3, 3), (0.7, 2), (0.1, 1)])
def test_connection_patterns_match_markov_chain(p, tau):
    spec = RepairSpec(p, tau)
    for length in (1, 2, 3):
        law = connection_window_law(p, tau, length)
        for bits, value in law.items():
            pattern = pattern_string(bits)
            if length > tau + 1 and "+" not in pattern:
                continue
            try:
                got = connection_pattern_probability(spec, pattern)
            except UnsupportedPatternError:
                assert tau < length
                continue
            assert got == pytest.approx(value, abs=1e-14)


def test_broken_functional_broken():
    p, tau = 0.2, 7
    law = connection_window_law(p, tau, 3)
    assert broken_functional_broken(RepairSpec(p, tau)) == pytest.approx(law[(0, 1, 0)], abs=1e-15)


@pytest.mark.parametrize("p,tau,N", [(0.05, 7, 3), (0.2, 7, 3), (0.5, 7, 3), (0.4, 4, 2)])
def test_block_patterns_match_markov_chain(p, tau, N):
    spec = RepairSpec(p, tau)
    law = block_window_law(p, tau, N, 3)
    for bits, value in law.items():
        assert block_pattern_probability(spec, N, pattern_string(bits)) == pytest.approx(value, abs=1e-14)


@pytest.mark.parametrize("p", [0.05, 0.5])
@pytest.mark.parametrize("topology", [chain_topology(6), netherlands_topology()], ids=["chain", "network"])
def test_system_patterns_match_markov_chain(p, topology):
    spec = RepairSpec(p, 7)
    block = block_window_law(p, 7, 3, 3)
    paths = [[e for e in topology.edges if e in path] for path in topology.paths]
    law = system_window_law(topology.edges, paths, block, 3)
    for bits, value in law.items():
        got = system_pattern_probability(topology, spec, 3, pattern_string(bits))
        assert got == pytest.approx(value, abs=1e-12)


def test_uptime_of_chain():
    spec = RepairSpec(0.2, 7)
    u = system_pattern_probability(chain_topology(6), spec, 3, "+")
    assert u == pytest.approx(average_uptime(spec, 3, 6), rel=1e-13)


@settings(max_examples=30, deadline=None)
@given(p=st.floats(0.01, 1.0), tau=st.integers(3, 12), N=st.integers(1, 4))
def test_block_patterns_form_a_distribution(p, tau, N):
    spec = RepairSpec(p, tau)
    probs = [block_pattern_probability(spec, N, s) for s in all_patterns(3)]
    assert min(probs) > -1e-12
    assert sum(probs) == pytest.approx(1.0, abs=1e-12)
    # marginalizing the last step recovers the length-2 law
    assert block_pattern_probability(spec, N, "+-") == pytest.approx(
        block_pattern_probability(spec, N, "+-+") + block_pattern_probability(spec, N, "+--"), abs=1e-13
    )


def test_wildcards_and_unicode_symbols():
    spec = RepairSpec(0.2, 7)
    assert normalize_pattern("−∗+") == "-*+"
    assert block_pattern_probability(spec, 3, "*+*") == pytest.approx(block_pattern_probability(spec, 3, "+"))


def test_unsupported_patterns():
    spec = RepairSpec(0.2, 2)
    with pytest.raises(UnsupportedPatternError):
        consecutive_broken(spec, 3)
    with pytest.raises(UnsupportedPatternError):
        block_pattern_probability(spec, 3, "+-+-")
    with pytest.raises(ValueError):
        normalize_pattern("+x")


def test_invalid_spec():
    with pytest.raises(ConfigError):
        RepairSpec(0.0, 3)
    with pytest.raises(ConfigError):
        RepairSpec(0.5, 0)


def test_pattern_codes():
    series = np.array([1, 0, 1, 1], dtype=np.int64)
    assert list(pattern_codes(series, 3)) == [0b101, 0b011]
    assert sorted(matching_codes("+*-")) == [0b100, 0b110]


def test_monte_carlo_agrees_with_analytic():
    spec = RepairSpec(0.2, 7)
    topo = netherlands_topology()
    est = estimate_patterns(topo, spec, 3, n_windows=400_000, n_shards=40, seed=3)
    for level, exact in (
        ("connection", lambda s: connection_pattern_probability(spec, s)),
        ("block", lambda s: block_pattern_probability(spec, 3, s)),
        ("system", lambda s: system_pattern_probability(topo, spec, 3, s)),
    ):
        for s in ("+", "-", "--", "-+-", "+++", "---"):
            value, se = est[level].estimate(s)
            assert abs(value - exact(s)) < 4.5 * max(se, 1e-9), (level, s)


def test_monte_carlo_independent_of_workers():
    spec = RepairSpec(0.3, 4)
    a = estimate_patterns(chain_topology(2), spec, 2, n_windows=20_000, n_shards=8, seed=9, workers=1)
    b = estimate_patterns(chain_topology(2), spec, 2, n_windows=20_000, n_shards=8, seed=9, workers=3)
    for level in a:
        assert np.array_equal(a[level].shard_frequencies, b[level].shard_frequencies)


def test_monte_carlo_longer_windows():
    spec = RepairSpec(0.3, 2)
    est = estimate_patterns(chain_topology(1), spec, 1, length=4, n_windows=200_000, n_shards=20, seed=1)
    law = connection_window_law(0.3, 2, 4)
    value, se = est["connection"].estimate("+--+")
    assert law[(1, 0, 0, 1)] > 0.01
    assert abs(value - law[(1, 0, 0, 1)]) < 4.5 * se
