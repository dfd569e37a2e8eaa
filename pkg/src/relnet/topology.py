"""Indicator-function algebra for small two-terminal topologies.

A topology lists its components (edges and nodes) and the end-to-end paths
explicitly.  The system indicator ``1 - prod_paths (1 - prod_{c in path} x_c)``
is expanded into a multilinear polynomial with integer coefficients, using
``x^2 = x`` for indicator variables.  Its expectation under independent
components is the probability that the terminals are connected.

Variables are ``(component_id, time_index)`` pairs; the time index is
``None`` for static questions and an integer for the temporal expansions
used by :mod:`relnet.repair`.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigError

Variable = tuple  # (component_id, time_index | None)

MAX_COMPONENTS = 30
MAX_ENUMERATED_EDGES = 20


# --------------------------------------------------------------------------
# polynomial
# --------------------------------------------------------------------------


class IndicatorPolynomial:
    """Multilinear polynomial over indicator variables with integer coefficients.

    Instances are immutable.  Arithmetic keeps the canonical form: one entry
    per distinct monomial, no zero coefficients.
    """

    __slots__ = ("_terms",)

    def __init__(self, terms: Mapping[frozenset, int] | Iterable[tuple[int, Iterable]] = ()):
        acc: dict[frozenset, int] = {}
        items = terms.items() if isinstance(terms, Mapping) else ((frozenset(m), c) for c, m in terms)
        for mono, coeff in items:
            mono = frozenset(mono)
            acc[mono] = acc.get(mono, 0) + int(coeff)
        self._terms = {m: c for m, c in acc.items() if c != 0}

    @classmethod
    def constant(cls, value: int) -> "IndicatorPolynomial":
        return cls({frozenset(): value})

    @classmethod
    def monomial(cls, variables: Iterable[Variable], coeff: int = 1) -> "IndicatorPolynomial":
        return cls({frozenset(variables): coeff})

    @property
    def terms(self) -> list[tuple[int, frozenset]]:
        """``(coefficient, monomial)`` pairs in a deterministic order."""
        return [(self._terms[m], m) for m in sorted(self._terms, key=_monomial_key)]

    @property
    def variables(self) -> set:
        return set().union(*self._terms) if self._terms else set()

    def __len__(self):
        return len(self._terms)

    def __eq__(self, other):
        if isinstance(other, int):
            other = IndicatorPolynomial.constant(other)
        return isinstance(other, IndicatorPolynomial) and self._terms == other._terms

    def __hash__(self):
        return hash(frozenset(self._terms.items()))

    def __repr__(self):
        if not self._terms:
            return "IndicatorPolynomial(0)"
        parts = []
        for coeff, mono in self.terms:
            name = "*".join(_var_name(v) for v in sorted(mono, key=_var_key)) or "1"
            parts.append(f"{coeff:+d}*{name}")
        return "IndicatorPolynomial(" + " ".join(parts) + ")"

    def _coerce(self, other) -> "IndicatorPolynomial":
        if isinstance(other, IndicatorPolynomial):
            return other
        if isinstance(other, int):
            return IndicatorPolynomial.constant(other)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        merged = dict(self._terms)
        for m, c in other._terms.items():
            merged[m] = merged.get(m, 0) + c
        return IndicatorPolynomial(merged)

    __radd__ = __add__

    def __neg__(self):
        return IndicatorPolynomial({m: -c for m, c in self._terms.items()})

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return other + (-self)

    def __mul__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        acc: dict[frozenset, int] = {}
        for m1, c1 in self._terms.items():
            for m2, c2 in other._terms.items():
                m = m1 | m2  # idempotence
                acc[m] = acc.get(m, 0) + c1 * c2
        return IndicatorPolynomial(acc)

    __rmul__ = __mul__

    def map_variables(self, fn: Callable[[Variable], Variable]) -> "IndicatorPolynomial":
        return IndicatorPolynomial({frozenset(fn(v) for v in m): c for m, c in self._terms.items()})

    def at_time(self, index: int) -> "IndicatorPolynomial":
        """Attach a time index to every variable."""
        return self.map_variables(lambda v: (v[0], index))

    def fix(self, values: Mapping[Variable, int]) -> "IndicatorPolynomial":
        """Substitute 0/1 constants for some variables."""
        acc: dict[frozenset, int] = {}
        for m, c in self._terms.items():
            if any(values.get(v, 1) == 0 for v in m):
                continue
            rest = frozenset(v for v in m if v not in values)
            acc[rest] = acc.get(rest, 0) + c
        return IndicatorPolynomial(acc)

    def expectation(self, moment: Callable[[frozenset], float]):
        """``sum coeff * moment(monomial)`` for a user supplied joint moment."""
        total = 0.0
        for coeff, mono in self.terms:
            total = total + coeff * moment(mono)
        return total

    def evaluate(self, assign: Mapping):
        """Expectation under independent variables with ``P(x_v = 1) = assign[v]``.

        Values may be numpy arrays (broadcast together).
        """
        missing = self.variables - set(assign)
        if missing:
            names = ", ".join(sorted(_var_name(v) for v in missing))
            raise KeyError(f"unassigned variables: {names}")
        return self.expectation(lambda mono: math.prod((assign[v] for v in mono), start=1.0))


def _var_key(v):
    return (str(v[0]), -1 if v[1] is None else v[1])


def _var_name(v):
    return str(v[0]) if v[1] is None else f"{v[0]}@{v[1]}"


def _monomial_key(m):
    return (len(m), sorted(_var_key(v) for v in m))


# --------------------------------------------------------------------------
# topology
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Component:
    id: str
    kind: str = "edge"

    def __post_init__(self):
        if self.kind not in ("edge", "node"):
            raise ConfigError(f"component {self.id!r}: kind must be 'edge' or 'node', got {self.kind!r}")


@dataclass(frozen=True)
class Topology:
    """Two-terminal system given by its components and end-to-end paths.

    ``symmetries`` holds generators of a permutation group of component ids;
    ids absent from a mapping are fixed.  Every generator must map the path
    set onto itself.
    """

    label: str
    components: tuple[Component, ...]
    paths: tuple[frozenset, ...]
    terminals: tuple[str, str] | None = None
    symmetries: tuple[Mapping[str, str], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        object.__setattr__(self, "paths", tuple(frozenset(p) for p in self.paths))
        object.__setattr__(self, "symmetries", tuple(dict(s) for s in self.symmetries))
        ids = [c.id for c in self.components]
        if len(set(ids)) != len(ids):
            raise ConfigError(f"topology {self.label!r}: duplicate component ids")
        if not self.paths:
            raise ConfigError(f"topology {self.label!r}: at least one path is required")
        known = set(ids)
        for i, path in enumerate(self.paths):
            if not path:
                raise ConfigError(f"topology {self.label!r}: path {i} is empty")
            unknown = path - known
            if unknown:
                raise ConfigError(
                    f"topology {self.label!r}: path {i} uses undeclared components {sorted(unknown)}"
                )
        path_set = set(self.paths)
        for perm in self.symmetries:
            bad = (set(perm) | set(perm.values())) - known
            if bad:
                raise ConfigError(f"topology {self.label!r}: symmetry uses unknown ids {sorted(bad)}")
            if sorted(perm) != sorted(perm.values()):
                raise ConfigError(f"topology {self.label!r}: symmetry {perm} is not a permutation")
            kinds = self.kinds
            if any(kinds[a] != kinds[b] for a, b in perm.items()):
                raise ConfigError(f"topology {self.label!r}: symmetry {perm} mixes edges and nodes")
            if {_apply(perm, p) for p in self.paths} != path_set:
                raise ConfigError(f"topology {self.label!r}: symmetry {perm} does not preserve the paths")

    @property
    def ids(self) -> list[str]:
        return [c.id for c in self.components]

    @property
    def kinds(self) -> dict[str, str]:
        return {c.id: c.kind for c in self.components}

    @property
    def edges(self) -> list[str]:
        return [c.id for c in self.components if c.kind == "edge"]

    @property
    def nodes(self) -> list[str]:
        return [c.id for c in self.components if c.kind == "node"]

    def is_functional(self, working: Iterable[str]) -> bool:
        working = set(working)
        return any(p <= working for p in self.paths)

    def symmetry_group(self) -> list[dict[str, str]]:
        """All group elements generated by ``symmetries`` (identity first)."""
        ids = self.ids
        identity = tuple(ids)
        gens = [tuple(g.get(c, c) for c in ids) for g in self.symmetries]
        index = {c: i for i, c in enumerate(ids)}
        seen = {identity}
        order = [identity]
        frontier = [identity]
        while frontier:
            nxt = []
            for elem in frontier:
                for g in gens:
                    # composition: first elem, then g
                    comp = tuple(g[index[x]] for x in elem)
                    if comp not in seen:
                        seen.add(comp)
                        order.append(comp)
                        nxt.append(comp)
            frontier = nxt
        return [dict(zip(ids, img)) for img in order]


def _apply(perm: Mapping[str, str], ids: Iterable[str]) -> frozenset:
    return frozenset(perm.get(c, c) for c in ids)


def chain_topology(M: int, label: str | None = None) -> Topology:
    """Serial chain of ``M`` edges ``e1 .. eM`` (nodes are not modelled)."""
    if M < 1:
        raise ConfigError("a chain needs M >= 1 edges")
    edges = [f"e{i}" for i in range(1, M + 1)]
    return Topology(
        label or f"chain{M}",
        tuple(Component(e) for e in edges),
        (frozenset(edges),),
        terminals=("n0", f"n{M}"),
    )


def square_topology() -> Topology:
    """Square with one diagonal: edges a-e, relay nodes R and S."""
    comps = [Component(x) for x in "abcde"] + [Component("R", "node"), Component("S", "node")]
    paths = [{"a", "R", "d"}, {"a", "R", "c", "S", "e"}, {"b", "S", "e"}, {"b", "S", "c", "R", "d"}]
    return Topology(
        "square", tuple(comps), tuple(frozenset(p) for p in paths),
        terminals=("Delft", "T"),
        symmetries=({"a": "b", "b": "a", "d": "e", "e": "d", "R": "S", "S": "R"},),
    )


def netherlands_topology() -> Topology:
    """Square network, relay node ``T`` and final link ``f`` in series.

    Two symmetries are declared: the reflection exchanging the upper and
    lower branch, and the reversal of the square exchanging its input and
    output edges.  Both preserve the path set.
    """
    comps = [Component(x) for x in "abcdef"] + [Component(n, "node") for n in "RST"]
    paths = [
        {"a", "R", "d", "T", "f"},
        {"a", "R", "c", "S", "e", "T", "f"},
        {"b", "S", "e", "T", "f"},
        {"b", "S", "c", "R", "d", "T", "f"},
    ]
    return Topology(
        "netherlands", tuple(comps), tuple(frozenset(p) for p in paths),
        terminals=("Delft", "Groningen"),
        symmetries=(
            {"a": "b", "b": "a", "d": "e", "e": "d", "R": "S", "S": "R"},
            {"a": "d", "d": "a", "b": "e", "e": "b"},
        ),
    )


def discover_paths(
    links: Sequence[tuple[str, str, str]], source: str, target: str, include_nodes: bool = True,
) -> list[frozenset]:
    """All simple source-target paths of an undirected multigraph.

    ``links`` are ``(edge_id, u, v)`` triples.  Each path is returned as the
    set of its edge ids plus, if ``include_nodes``, its intermediate node
    ids.  The result is meant to be reviewed and pasted into a topology
    config, not used blindly.
    """
    adjacency: dict[str, list[tuple[str, str]]] = {}
    for edge_id, u, v in links:
        adjacency.setdefault(u, []).append((edge_id, v))
        adjacency.setdefault(v, []).append((edge_id, u))
    found: list[frozenset] = []

    def walk(node, visited, used):
        if node == target:
            inner = [n for n in visited if n not in (source, target)] if include_nodes else []
            found.append(frozenset(used) | frozenset(inner))
            return
        for edge_id, nxt in adjacency.get(node, ()):
            if nxt not in visited:
                walk(nxt, visited + [nxt], used + [edge_id])

    walk(source, [source], [])
    return found


# --------------------------------------------------------------------------
# polynomial construction and evaluation
# --------------------------------------------------------------------------


def build_indicator(topology: Topology) -> IndicatorPolynomial:
    """Expand ``1 - prod_paths (1 - prod_{c in path} x_c)``."""
    if len(topology.components) > MAX_COMPONENTS:
        raise ConfigError(
            f"topology {topology.label!r} has {len(topology.components)} components; "
            f"indicator expansion is limited to {MAX_COMPONENTS}"
        )
    miss = IndicatorPolynomial.constant(1)
    for path in topology.paths:
        miss = miss * (1 - IndicatorPolynomial.monomial((c, None) for c in path))
    return 1 - miss


def evaluate(poly: IndicatorPolynomial, assign: Mapping):
    """Probability that the indicator is 1 under independent variables.

    ``assign`` may be keyed by variable ``(id, time)`` or, for untimed
    polynomials, by bare component id.
    """
    if all(not isinstance(k, tuple) for k in assign):
        assign = {(k, None): v for k, v in assign.items()}
    return poly.evaluate(assign)


def uniform_assignment(topology: Topology, edge: float, node: float = 1.0) -> dict:
    kinds = topology.kinds
    return {c: (edge if kinds[c] == "edge" else node) for c in topology.ids}


def _component_values(topology: Topology, models: Mapping, t, attr: str):
    missing = set(topology.ids) - set(models)
    if missing:
        raise KeyError(f"no model for components {sorted(missing)}")
    out = {}
    for cid in topology.ids:
        m = models[cid]
        if isinstance(m, (int, float)):
            out[cid] = float(m) if attr == "survival" else 0.0
        else:
            out[cid] = getattr(m, attr)(t)
    return out


def network_survival(topology: Topology, models: Mapping, t, poly: IndicatorPolynomial | None = None):
    """End-to-end survival at time ``t``.

    ``models`` maps every component id either to a constant working
    probability (e.g. ``1.0`` for a node that never fails) or to an object
    with ``survival(t)`` and ``failure_rate(t)`` methods, such as a
    :class:`relnet.reliability.BlockModel`.
    """
    poly = poly or build_indicator(topology)
    surv = _component_values(topology, models, t, "survival")
    return evaluate(poly, surv)


def network_failure_rate(topology: Topology, models: Mapping, t, poly: IndicatorPolynomial | None = None):
    """``-(dS/dt)/S`` by the polynomial chain rule.

    Each monomial ``prod_c S_c`` has time derivative
    ``-(prod_c S_c) * sum_c mu_c``, so no numerical differentiation is needed.
    """
    poly = poly or build_indicator(topology)
    surv = _component_values(topology, models, t, "survival")
    rate = _component_values(topology, models, t, "failure_rate")
    num = 0.0
    den = 0.0
    for coeff, mono in poly.terms:
        ids = [v[0] for v in mono]
        prod = math.prod((surv[c] for c in ids), start=1.0)
        num = num + coeff * prod * sum((rate[c] for c in ids), start=0.0)
        den = den + coeff * prod
    return num / den


# --------------------------------------------------------------------------
# configurations
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Configuration:
    """A functional hardware configuration, representative of its symmetry class.

    ``key`` is the per-edge working multiplicity tuple (chains) or the
    frozenset of useful working edges (networks).  ``weight`` is the
    probability of one class member and ``count`` the class size, so
    ``weight * count`` is the probability of the whole class.
    """

    key: tuple | frozenset
    weight: float
    count: int
    paths: tuple[frozenset, ...] = ()

    @property
    def probability(self) -> float:
        return self.weight * self.count

    @property
    def label(self) -> str:
        if isinstance(self.key, frozenset):
            return "".join(sorted(self.key))
        return "-".join(str(n) for n in self.key)


def enumerate_chain_configurations(M: int, N: int, u: float) -> list[Configuration]:
    """Functional multiplicity profiles of an ``M``-edge chain up to permutation.

    Each connection works independently with probability ``u``.  Profiles
    with an edge at zero working connections are excluded.
    """
    if M < 1 or N < 1:
        raise ConfigError("need M >= 1 and N >= 1")
    per_edge = [math.comb(N, n) * u**n * (1 - u) ** (N - n) for n in range(N + 1)]
    configs = []
    for profile in itertools.combinations_with_replacement(range(1, N + 1), M):
        count = math.factorial(M)
        for n in set(profile):
            count //= math.factorial(profile.count(n))
        weight = math.prod(per_edge[n] for n in profile)
        configs.append(Configuration(profile, weight, count))
    return configs


def _edge_probabilities(topology: Topology, q) -> dict[str, float]:
    if isinstance(q, Mapping):
        missing = set(topology.edges) - set(q)
        if missing:
            raise KeyError(f"no working probability for edges {sorted(missing)}")
        return {e: float(q[e]) for e in topology.edges}
    return {e: float(q) for e in topology.edges}


def useful_edges(topology: Topology, working: Iterable[str]) -> tuple[frozenset, tuple[frozenset, ...]]:
    """Edges lying on some fully working path, and those paths.

    Nodes are taken to be functional.  Working edges that lie on no working
    path cannot take part in entanglement distribution and are dropped.
    """
    working = set(working) | set(topology.nodes)
    usable = tuple(p for p in topology.paths if p <= working)
    edges = set(topology.edges)
    useful = frozenset().union(*usable) & edges if usable else frozenset()
    return frozenset(useful), usable


def enumerate_network_configurations(topology: Topology, q=1.0) -> list[Configuration]:
    """Functional edge configurations of a network up to declared symmetries.

    Every subset of working edges (nodes functional) is reduced to its
    useful edges; the reduced sets are grouped into orbits of the symmetry
    group.  ``q`` is a per-edge working probability, scalar or per id.
    Classes are ordered by size of the useful edge set, then number of
    usable paths, then edge ids, so the complete network comes last.
    """
    edges = topology.edges
    if len(edges) > MAX_ENUMERATED_EDGES:
        raise ConfigError(f"configuration enumeration is limited to {MAX_ENUMERATED_EDGES} edges")
    prob = _edge_probabilities(topology, q)
    group = topology.symmetry_group()

    totals: dict[frozenset, float] = {}
    for bits in itertools.product((0, 1), repeat=len(edges)):
        working = [e for e, b in zip(edges, bits) if b]
        useful, _ = useful_edges(topology, working)
        if not useful:
            continue
        w = math.prod(prob[e] if b else 1.0 - prob[e] for e, b in zip(edges, bits))
        totals[useful] = totals.get(useful, 0.0) + w

    reps = sorted({min(tuple(sorted(_apply(g, useful))) for g in group) for useful in totals})
    configs = []
    for rep in reps:
        key = frozenset(rep)
        orbit = {_apply(g, key) for g in group}
        total = math.fsum(totals.get(m, 0.0) for m in orbit)
        _, usable = useful_edges(topology, key)
        configs.append(Configuration(key, total / len(orbit), len(orbit), usable))
    configs.sort(key=lambda c: (len(c.key), len(c.paths), sorted(c.key)))
    return configs
