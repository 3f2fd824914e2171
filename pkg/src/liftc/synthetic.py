"""Desk-scale synthetic datasets, encoded as example fact sets."""

from __future__ import annotations

import itertools

import numpy as np

from .errors import ConfigError
from .logic import Atom, Const, Example, Query, WeightedFact
from .zoo import GRAPH_MODELS, ZooSpec

MAX_DEGREE_FEATURE = 8


def _atom(name: str, *args: str) -> Atom:
    return Atom(name, tuple(Const(a) for a in args))


def graph_example(
    nodes: list[str],
    edges,
    *,
    features: dict[str, np.ndarray] | None = None,
    types: dict[str, str] | None = None,
    label: float | None = None,
    edge_pred: str = "edge",
    self_loops: bool = False,
    name: str | None = None,
) -> Example:
    """Undirected graph as facts: both edge directions, plus optional loops."""
    facts = []
    for v in nodes:
        if features is not None:
            facts.append(WeightedFact(_atom("features", v), tuple(float(x) for x in features[v])))
        if types is not None:
            facts.append(WeightedFact(_atom(types[v], v)))
    seen = set()
    for u, v in edges:
        for a, b in ((u, v), (v, u)):
            if (a, b) not in seen:
                seen.add((a, b))
                facts.append(WeightedFact(_atom(edge_pred, a, b)))
    if self_loops:
        for v in nodes:
            if (v, v) not in seen:
                facts.append(WeightedFact(_atom(edge_pred, v, v)))
    queries = () if label is None else (Query(_atom("q"), (float(label),)),)
    return Example(tuple(facts), queries, name)


def has_triangle(n: int, edges) -> bool:
    adj = [set() for _ in range(n)]
    for u, v in edges:
        adj[u].add(v)
        adj[v].add(u)
    return any(b in adj[a] and c in adj[a] and c in adj[b] for a, b, c in itertools.combinations(range(n), 3))


def _random_edges(rng: np.random.Generator, n: int, p: float) -> list[tuple[int, int]]:
    return [(u, v) for u, v in itertools.combinations(range(n), 2) if rng.random() < p]


def _degree_onehot(n: int, edges) -> list[np.ndarray]:
    deg = np.zeros(n, dtype=int)
    for u, v in edges:
        deg[u] += 1
        deg[v] += 1
    feats = np.zeros((n, MAX_DEGREE_FEATURE + 1))
    feats[np.arange(n), np.minimum(deg, MAX_DEGREE_FEATURE)] = 1.0
    return list(feats)


def triangle_task(
    n: int, seed: int, *, min_nodes: int = 5, max_nodes: int = 9, self_loops: bool = False
) -> list[Example]:
    """Random graphs labelled 1 iff they contain a triangle; exactly balanced.

    Node features are one-hot degrees (``MAX_DEGREE_FEATURE + 1`` wide).
    """
    if n < 2:
        raise ConfigError("need at least 2 examples")
    rng = np.random.default_rng(seed)
    want = [1] * (n // 2) + [0] * (n - n // 2)
    rng.shuffle(want)
    examples = []
    for i, label in enumerate(want):
        while True:
            size = int(rng.integers(min_nodes, max_nodes + 1))
            edges = _random_edges(rng, size, float(rng.uniform(0.15, 0.45)))
            if has_triangle(size, edges) == bool(label):
                break
        names = [f"n{i}_{v}" for v in range(size)]
        feats = dict(zip(names, _degree_onehot(size, edges)))
        named = [(names[u], names[v]) for u, v in edges]
        examples.append(
            graph_example(names, named, features=feats, label=label, self_loops=self_loops, name=f"g{i}")
        )
    return examples


def chain_length_task(n: int, seed: int, *, min_len: int = 2, max_len: int = 9) -> list[Example]:
    """Chains over next/2 with first/last markers, labelled by odd length."""
    if n < 2:
        raise ConfigError("need at least 2 examples")
    rng = np.random.default_rng(seed)
    examples = []
    for i in range(n):
        length = int(rng.integers(min_len, max_len + 1))
        pos = [f"c{i}_{j}" for j in range(length)]
        facts = [WeightedFact(_atom("f", p)) for p in pos]
        facts += [WeightedFact(_atom("next", a, b)) for a, b in zip(pos, pos[1:])]
        facts += [WeightedFact(_atom("first", pos[0])), WeightedFact(_atom("last", pos[-1]))]
        examples.append(Example(tuple(facts), (Query(_atom("q"), (float(length % 2),)),), f"chain{i}"))
    return examples


MOL_TYPES = ("a_c", "a_o", "a_h")


def mol_toy(n: int, seed: int, *, self_loops: bool = False) -> list[Example]:
    """Small molecule-like graphs over a_c/a_o/a_h atoms and symmetric b/2 bonds.

    A carbon tree carries oxygens and hydrogens; the label is 1 iff some
    oxygen is bonded to a hydrogen.  Classes are balanced.
    """
    if n < 2:
        raise ConfigError("need at least 2 examples")
    rng = np.random.default_rng(seed)
    want = [1] * (n // 2) + [0] * (n - n // 2)
    rng.shuffle(want)
    examples = []
    for i, label in enumerate(want):
        while True:
            types: list[str] = []
            bonds: list[tuple[int, int]] = []
            for c in range(int(rng.integers(1, 4))):
                types.append("a_c")
                if c:
                    bonds.append((int(rng.integers(0, c)), c))
            carbons = len(types)
            for _ in range(int(rng.integers(0, 3))):
                types.append("a_o")
                bonds.append((int(rng.integers(0, carbons)), len(types) - 1))
            oxygens = [k for k, t in enumerate(types) if t == "a_o"]
            for _ in range(int(rng.integers(1, 5))):
                heavy = int(rng.integers(0, len(types)))
                while types[heavy] == "a_h":
                    heavy = int(rng.integers(0, len(types)))
                types.append("a_h")
                bonds.append((heavy, len(types) - 1))
            positive = any(types[a] == "a_o" and types[b] == "a_h" for a, b in bonds if a in oxygens)
            if positive == bool(label):
                break
        names = [f"m{i}_{k}" for k in range(len(types))]
        examples.append(
            graph_example(
                names,
                [(names[a], names[b]) for a, b in bonds],
                types=dict(zip(names, types)),
                label=label,
                edge_pred="b",
                self_loops=self_loops,
                name=f"mol{i}",
            )
        )
    return examples


TASKS = {"triangleTask": triangle_task, "chainLengthTask": chain_length_task, "molToy": mol_toy}


def generate(kind: str, n: int, seed: int, **kw) -> list[Example]:
    if kind not in TASKS:
        raise ConfigError(f"unknown synthetic task {kind!r} (known: {', '.join(TASKS)})")
    return TASKS[kind](n, seed, **kw)


# -- random inputs matching a zoo template -----------------------------------


def example_for(spec: ZooSpec, rng: np.random.Generator, *, nodes: int = 5, label: float = 1.0) -> Example:
    """A random input of the shape the named template consumes."""
    s = spec.resolved()
    q = (Query(_atom("q"), (label,)),)
    if s.name in GRAPH_MODELS:
        names = [f"v{k}" for k in range(nodes)]
        # a spanning path keeps the graph connected, extra edges at random
        edges = {(k, k + 1) for k in range(nodes - 1)}
        edges |= {(u, v) for u, v in itertools.combinations(range(nodes), 2) if rng.random() < 0.4}
        if s.name == "graphlets" and nodes >= 3:
            edges |= {(0, 1), (1, 2), (0, 2)}
        types = s.extra.get("types")
        ex = graph_example(
            names,
            [(names[u], names[v]) for u, v in sorted(edges)],
            features=None if types else {v: rng.uniform(-1, 1, s.input_dim) for v in names},
            types={v: types[int(rng.integers(len(types)))] for v in names} if types else None,
            label=label,
            edge_pred=s.extra.get("edge", "edge"),
            self_loops=bool(s.extra.get("self_loops", False)),
        )
        return ex
    if s.name == "mlp":
        return Example((WeightedFact(_atom("features"), tuple(rng.uniform(-1, 1, s.input_dim))),), q)
    if s.name == "cnn1d":
        k = int(s.extra.get("kernel", 3))
        length = s.layers * (k - 1) + 3
        pos = [f"p{j}" for j in range(length)]
        facts = [WeightedFact(_atom("f", p), tuple(rng.uniform(-1, 1, s.input_dim))) for p in pos]
        facts += [WeightedFact(_atom("next", a, b)) for a, b in zip(pos, pos[1:])]
        return Example(tuple(facts), q)
    if s.name == "recurrent":
        pos = [f"t{j}" for j in range(nodes)]
        facts = [WeightedFact(_atom("f", p), tuple(rng.uniform(-1, 1, s.input_dim))) for p in pos]
        facts += [WeightedFact(_atom("next", a, b)) for a, b in zip(pos, pos[1:])]
        facts += [WeightedFact(_atom("first", pos[0])), WeightedFact(_atom("last", pos[-1]))]
        return Example(tuple(facts), q)
    # recursive: a complete tree of depth two
    k = int(s.extra.get("arity", 3))
    facts = []
    kids = [f"u{j}" for j in range(k)]
    facts.append(WeightedFact(_atom("parent", "root0", *kids)))
    for j, kid in enumerate(kids):
        leaves = [f"l{j}_{m}" for m in range(k)]
        facts.append(WeightedFact(_atom("parent", kid, *leaves)))
        facts += [WeightedFact(_atom("n", leaf), tuple(rng.uniform(-1, 1, s.dim))) for leaf in leaves]
    facts.append(WeightedFact(_atom("root", "root0")))
    return Example(tuple(facts), q)
