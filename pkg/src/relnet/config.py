"""Experiment configuration files.

A configuration is one JSON document.  Topologies are declared once under
``"topologies"`` and referred to by name elsewhere::

    {
      "experiment": "repair-correlations",
      "seed": 7,
      "topologies": {
        "chain": {"kind": "chain", "M": 6},
        "nl": {"kind": "netherlands"},
        "custom": {"kind": "explicit",
                   "components": [{"id": "a"}, {"id": "R", "kind": "node"}, {"id": "b"}],
                   "paths": [["a", "R", "b"]]}
      },
      ...
    }

Validation errors name the offending field by its dotted path and, where
the key can be found in the source text, the line it sits on.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from .errors import ConfigError
from .reliability import BlockModel, ConnectionLaw, InitialDistribution
from .topology import Component, Topology, chain_topology, netherlands_topology, square_topology

EXPERIMENTS = ("reliability-curves", "match-multiplicity", "repair-correlations", "key-rates")
STOCHASTIC = ("key-rates",)
BUILTIN_TOPOLOGIES = {"netherlands": netherlands_topology, "square": square_topology}


@dataclass
class Config:
    """Parsed configuration with its source text for diagnostics."""

    data: dict
    text: str
    path: Path | None = None

    @property
    def sha256(self) -> str:
        return hashlib.sha256(self.text.encode()).hexdigest()

    @property
    def experiment(self) -> str | None:
        return self.data.get("experiment")

    def line_of(self, field: str) -> int | None:
        key = field.split(".")[-1].split("[")[0]
        m = re.search(r'"%s"\s*:' % re.escape(key), self.text)
        return self.text.count("\n", 0, m.start()) + 1 if m else None

    def error(self, field: str, message: str) -> ConfigError:
        line = self.line_of(field)
        where = f"{field} (line {line})" if line else field
        src = f"{self.path}: " if self.path else ""
        return ConfigError(f"{src}{where}: {message}")

    # typed access -----------------------------------------------------------

    def get(self, field: str, default: Any = ..., section: dict | None = None):
        node = self.data if section is None else section
        for part in field.split("."):
            if not isinstance(node, dict) or part not in node:
                if default is ...:
                    raise self.error(field, "required field is missing")
                return default
            node = node[part]
        return node

    def number(self, field: str, default: Any = ..., *, lo=None, hi=None, lo_open=False, integer=False):
        value = self.get(field, default)
        if value is None:
            return None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise self.error(field, f"expected a number, got {value!r}")
        if integer and int(value) != value:
            raise self.error(field, f"expected an integer, got {value!r}")
        if not math.isfinite(value):
            raise self.error(field, "must be finite")
        if lo is not None and (value <= lo if lo_open else value < lo):
            raise self.error(field, f"must be {'>' if lo_open else '>='} {lo}, got {value!r}")
        if hi is not None and value > hi:
            raise self.error(field, f"must be <= {hi}, got {value!r}")
        return int(value) if integer else float(value)

    def grid(self, field: str, default: Any = ..., *, integer=False, lo=None, hi=None) -> np.ndarray:
        """A nonempty sorted grid: a list, or ``{"start", "stop", "num"[, "spacing"]}``."""
        spec = self.get(field, default)
        if isinstance(spec, dict):
            for key in ("start", "stop", "num"):
                if key not in spec:
                    raise self.error(f"{field}.{key}", "required field is missing")
            num = spec["num"]
            if not isinstance(num, int) or num < 1:
                raise self.error(f"{field}.num", f"expected a positive integer, got {num!r}")
            spacing = spec.get("spacing", "linear")
            if spacing == "linear":
                values = np.linspace(spec["start"], spec["stop"], num)
            elif spacing == "log":
                if spec["start"] <= 0:
                    raise self.error(f"{field}.start", "log spacing needs a positive start")
                values = np.geomspace(spec["start"], spec["stop"], num)
            else:
                raise self.error(f"{field}.spacing", f"expected 'linear' or 'log', got {spacing!r}")
        elif isinstance(spec, list):
            if not spec:
                raise self.error(field, "grid must be nonempty")
            if any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in spec):
                raise self.error(field, "grid entries must be numbers")
            values = np.asarray(spec, dtype=float)
        else:
            raise self.error(field, f"expected a list or a start/stop/num object, got {spec!r}")
        if values.size > 1 and np.any(np.diff(values) <= 0):
            raise self.error(field, "grid must be strictly increasing")
        if lo is not None and values[0] < lo:
            raise self.error(field, f"grid values must be >= {lo}")
        if hi is not None and values[-1] > hi:
            raise self.error(field, f"grid values must be <= {hi}")
        if integer:
            if np.any(values != np.rint(values)):
                raise self.error(field, "grid values must be integers")
            values = values.astype(np.int64)
        return values

    # domain objects -------------------------------------------------------

    def topology(self, ref: str, field: str) -> Topology:
        """Resolve a named topology reference."""
        if not isinstance(ref, str):
            raise self.error(field, f"expected a topology name, got {ref!r}")
        table = self.data.get("topologies", {})
        if ref not in table:
            if ref in BUILTIN_TOPOLOGIES:
                return BUILTIN_TOPOLOGIES[ref]()
            known = sorted(set(table) | set(BUILTIN_TOPOLOGIES))
            raise self.error(field, f"unknown topology {ref!r}; known: {known}")
        return self._build_topology(ref, table[ref])

    def _build_topology(self, name: str, spec) -> Topology:
        base = f"topologies.{name}"
        if not isinstance(spec, dict):
            raise self.error(base, "topology must be an object")
        kind = spec.get("kind", "explicit")
        if kind == "chain":
            return chain_topology(self.number(f"{base}.M", integer=True, lo=1), label=name)
        if kind in BUILTIN_TOPOLOGIES:
            return BUILTIN_TOPOLOGIES[kind]()
        if kind != "explicit":
            raise self.error(f"{base}.kind", f"unknown kind {kind!r}")
        comps = self.get(f"{base}.components")
        paths = self.get(f"{base}.paths")
        if not isinstance(comps, list) or not comps:
            raise self.error(f"{base}.components", "expected a nonempty list")
        if not isinstance(paths, list) or not paths:
            raise self.error(f"{base}.paths", "expected a nonempty list of paths")
        components = []
        for i, c in enumerate(comps):
            if isinstance(c, str):
                components.append(Component(c))
            elif isinstance(c, dict) and "id" in c:
                components.append(Component(c["id"], c.get("kind", "edge")))
            else:
                raise self.error(f"{base}.components[{i}]", f"expected an id or {{'id', 'kind'}}, got {c!r}")
        for i, p in enumerate(paths):
            if not isinstance(p, list) or not all(isinstance(x, str) for x in p):
                raise self.error(f"{base}.paths[{i}]", "a path is a list of component ids")
        try:
            return Topology(
                name, tuple(components), tuple(frozenset(p) for p in paths),
                terminals=tuple(spec["terminals"]) if "terminals" in spec else None,
                symmetries=tuple(_involution(s) for s in spec.get("symmetries", [])),
            )
        except ConfigError as exc:
            raise self.error(base, str(exc)) from None

    def block_model(self, field: str) -> BlockModel:
        """``{"N", "flux"=1, "k", "initial": {"kind": "perfect"|"binomial"|"explicit", ...}}``."""
        spec = self.get(field)
        if not isinstance(spec, dict):
            raise self.error(field, "expected an object")
        N = self.number(f"{field}.N", integer=True, lo=1)
        flux = self.number(f"{field}.flux", 1, integer=True, lo=1, hi=N)
        k = self.number(f"{field}.k", lo=0)
        init = spec.get("initial", {"kind": "perfect"})
        kind = init.get("kind", "perfect") if isinstance(init, dict) else None
        if kind == "perfect":
            dist = InitialDistribution.perfect()
        elif kind == "binomial":
            dist = InitialDistribution.binomial(self.number(f"{field}.initial.p", lo=0, hi=1))
        elif kind == "explicit":
            q = init.get("q")
            if not isinstance(q, list) or len(q) != N + 1:
                raise self.error(f"{field}.initial.q", f"expected a list of N+1={N + 1} probabilities")
            try:
                dist = InitialDistribution.explicit(q)
            except ConfigError as exc:
                raise self.error(f"{field}.initial.q", str(exc)) from None
        else:
            raise self.error(f"{field}.initial.kind", f"expected perfect, binomial or explicit, got {kind!r}")
        return BlockModel(N, flux, ConnectionLaw(k), dist)


def _involution(mapping: dict) -> dict:
    """Complete a one-directional swap list such as ``{"a": "b"}`` to a permutation."""
    out = dict(mapping)
    for a, b in mapping.items():
        out.setdefault(b, a)
    return out


def load_config(path) -> Config:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
    return parse_config(text, path)


def parse_config(text: str, path: Path | None = None) -> Config:
    src = f"{path}: " if path else ""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{src}line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{src}top level must be a JSON object")
    cfg = Config(data, text, path)
    exp = data.get("experiment")
    if exp is not None and exp not in EXPERIMENTS:
        raise cfg.error("experiment", f"unknown experiment {exp!r}; expected one of {list(EXPERIMENTS)}")
    if "seed" in data:
        cfg.number("seed", integer=True, lo=0)
    if exp in STOCHASTIC and "seed" not in data:
        raise cfg.error("seed", "stochastic experiments need a seed")
    for name in data.get("topologies", {}) or {}:
        cfg.topology(name, f"topologies.{name}")
    return cfg
