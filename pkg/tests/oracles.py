"""Independent reference implementations used to freeze expected values.

Nothing here calls the package's matching, joining or graph code; atoms are
plain ``(name, args)`` tuples and variables are strings starting uppercase.
"""

from __future__ import annotations

import itertools

import numpy as np


def is_var(t: str) -> bool:
    return t[:1].isupper() or t[:1] == "_"


def _matches(body, interp_by_pred, theta):
    """All extensions of theta satisfying every literal of body."""
    if not body:
        yield theta
        return
    (name, args), rest = body[0], body[1:]
    for ground in interp_by_pred.get((name, len(args)), ()):
        ext = dict(theta)
        ok = True
        for t, g in zip(args, ground):
            if is_var(t):
                if ext.setdefault(t, g) != g:
                    ok = False
                    break
            elif t != g:
                ok = False
                break
        if ok:
            yield from _matches(rest, interp_by_pred, ext)


def _index(interp):
    by = {}
    for name, args in interp:
        by.setdefault((name, len(args)), []).append(args)
    return by


def naive_fixpoint(rules, facts):
    """Iterate T_P from scratch on the whole interpretation until stable.

    ``rules`` are ``(head, body)`` with atoms as ``(name, args)``.
    """
    interp = set(facts)
    while True:
        by = _index(interp)
        new = set(interp)
        for head, body in rules:
            for theta in _matches(list(body), by, {}):
                new.add((head[0], tuple(theta.get(t, t) for t in head[1])))
        if new == interp:
            return interp
        interp = new


def ground_instances(rules, model):
    """Deduplicated (rule index, head, body) triples with body in the model."""
    by = _index(model)
    seen = {}
    for i, (head, body) in enumerate(rules):
        for theta in _matches(list(body), by, {}):
            h = (head[0], tuple(theta.get(t, t) for t in head[1]))
            b = tuple((n, tuple(theta.get(t, t) for t in a)) for n, a in body)
            seen.setdefault((i, h, tuple(sorted(b))), (i, h, b))
    return list(seen.values())


def table_counts(rules, facts, query):
    """Node counts per kind for the query's relevant ground program.

    Facts that are also derived contribute an extra fact node feeding the
    derived atom node (the default fact policy).
    """
    model = naive_fixpoint(rules, facts)
    if query not in model:
        return None
    insts = ground_instances(rules, model)
    by_head = {}
    for inst in insts:
        by_head.setdefault(inst[1], []).append(inst)
    reach, stack = set(), [query]
    while stack:
        a = stack.pop()
        if a in reach:
            continue
        reach.add(a)
        for _, _, body in by_head.get(a, ()):
            stack.extend(body)
    derived = {a for a in reach if a in by_head}
    fact_nodes = {a for a in reach if a not in by_head} | {a for a in derived if a in set(facts)}
    rule_nodes = [i for i in insts if i[1] in reach]
    agg_nodes = {(i[0], i[1]) for i in rule_nodes}
    return {"fact": len(fact_nodes), "rule": len(rule_nodes), "agg": len(agg_nodes), "atom": len(derived)}


# -- closed-form GNN layers on adjacency lists --------------------------------


def relu(x):
    return np.maximum(x, 0.0)


def gcn_oracle(feats, nbrs, convs, out):
    """h(v) = ReLU(W avg{h(u) | u in N(v)}); output = out . avg_v h_L(v).

    Self-loops, if any, are already part of ``nbrs``.
    """
    h = {v: np.asarray(x, float) for v, x in feats.items()}
    for w in convs:
        h = {
            v: relu(w @ np.mean([h[u] for u in nbrs[v] if u in h], axis=0))
            for v in nbrs
            if any(u in h for u in nbrs[v])
        }
    return float(out @ np.mean(list(h.values()), axis=0))


def gsage_oracle(feats, nbrs, layers, out):
    """h'(v) = max_u ReLU(Wn h(u)) + ReLU(Ws h(v)); ``layers`` = [(Wn, Ws)]."""
    h = {v: np.asarray(x, float) for v, x in feats.items()}
    for wn, ws in layers:
        new = {}
        for v in nbrs:
            parts = [relu(ws @ h[v])] if v in h else []
            around = [relu(wn @ h[u]) for u in nbrs[v] if u in h]
            if around:
                parts.append(np.max(around, axis=0))
            if parts:
                new[v] = np.sum(parts, axis=0)
        h = new
    return float(out @ np.mean(list(h.values()), axis=0))


def gin0_oracle(feats, nbrs, layers, outs):
    """Two-rule GIN-0 with jumping-knowledge readout.

    h'(v) = ReLU(No . sum_u ReLU(Ni h(u)) + So . ReLU(Si h(v))) for
    ``layers`` = [(Ni, No, Si, So)]; output = sum_i outs[i] . avg_v h_i(v).
    """
    h = {v: np.asarray(x, float) for v, x in feats.items()}
    total = 0.0
    for (ni, no, si, so), o in zip(layers, outs):
        new = {}
        for v in nbrs:
            parts = [so @ relu(si @ h[v])] if v in h else []
            around = [relu(ni @ h[u]) for u in nbrs[v] if u in h]
            if around:
                parts.append(no @ np.sum(around, axis=0))
            if parts:
                new[v] = relu(np.sum(parts, axis=0))
        h = new
        total += float(o @ np.mean(list(h.values()), axis=0))
    return total


def random_graph(rng, n, p=0.4, *, connected=True, self_loops=False):
    """Undirected graph as neighbour lists over 0..n-1."""
    edges = {(u, v) for u, v in itertools.combinations(range(n), 2) if rng.random() < p}
    if connected:
        order = rng.permutation(n)
        edges |= {tuple(sorted((int(a), int(b)))) for a, b in zip(order, order[1:])}
    nbrs = {v: [] for v in range(n)}
    for u, v in sorted(edges):
        nbrs[u].append(v)
        nbrs[v].append(u)
    if self_loops:
        for v in range(n):
            nbrs[v].append(v)
    return nbrs


# -- numerics ------------------------------------------------------------------


def central_differences(f, x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Gradient of scalar f at x by central differences (x is restored)."""
    g = np.zeros_like(x)
    for i in range(x.size):
        old = x.flat[i]
        x.flat[i] = old + eps
        hi = f()
        x.flat[i] = old - eps
        lo = f()
        x.flat[i] = old
        g.flat[i] = (hi - lo) / (2 * eps)
    return g


def gd_trace(x0: float, target: float, lr: float, steps: int) -> float:
    """Gradient descent on (x - target)^2 from x0."""
    x = x0
    for _ in range(steps):
        x -= lr * 2 * (x - target)
    return x
