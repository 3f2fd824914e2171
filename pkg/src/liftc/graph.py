"""Computation graphs unfolded from ground programs.

One node per ground fact, ground rule instance, (rule, ground head) pair and
derived ground atom.  Rule nodes compute ``g_rule(sum W_i x_i)``, aggregation
nodes ``g_agg`` over their rule nodes, atom nodes ``g_atom(sum W_head x_j)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, CyclicGroundingError, ShapeMismatch
from .functions import ACTIVATION_CODES, activate_codes
from .grounder import GroundProgram, GroundRuleInstance, NotEntailed
from .logic import Atom, Fixed, Learnable, Template, WeightSpec
from .params import ParameterStore

FACT, RULE, AGG, ATOM = "fact", "rule", "agg", "atom"


@dataclass
class Node:
    id: int
    kind: str
    inputs: tuple  # ((source id, WeightSpec), ...)
    fn: str | None
    origin: object  # Atom, or GroundRuleInstance for rule nodes
    dim: int
    value: tuple | None = None  # fixed fact value
    slot: Learnable | None = None  # trainable fact value
    post: str = "identity"  # applied after aggregation when order=aggregate_first


@dataclass
class ComputationGraph:
    nodes: list
    output: int
    query: Atom | None = None
    # False for the constant stand-in of a query outside the least model
    entailed: bool = True
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def output_node(self) -> Node:
        return self.nodes[self.output]

    @property
    def param_slots(self) -> frozenset:
        return frozenset(self.slot_shapes)

    @property
    def slot_shapes(self) -> dict:
        shapes = self._cache.get("slot_shapes")
        if shapes is None:
            shapes = {}
            for n in self.nodes:
                if n.slot is not None:
                    shapes.setdefault(n.slot.slot, n.slot.shape)
                for _, w in n.inputs:
                    if isinstance(w, Learnable):
                        shapes.setdefault(w.slot, w.shape)
            self._cache["slot_shapes"] = shapes
        return shapes

    @property
    def edge_count(self) -> int:
        return sum(len(n.inputs) for n in self.nodes)

    def levels(self) -> list[int]:
        lv = [0] * len(self.nodes)
        for n in self.nodes:
            if n.inputs:
                lv[n.id] = 1 + max(lv[s] for s, _ in n.inputs)
        return lv

    def counts(self) -> dict[str, int]:
        out = {FACT: 0, RULE: 0, AGG: 0, ATOM: 0}
        for n in self.nodes:
            out[n.kind] += 1
        return out

    def stats(self) -> str:
        depth = max(self.levels(), default=0)
        return f"nodes={len(self.nodes)} edges={self.edge_count} params={len(self.slot_shapes)} depth={depth}"


# -- construction ------------------------------------------------------------


def _contribution_dim(w: WeightSpec, n: int, where: str) -> int:
    if w is None or w.is_scalar:
        return n
    if isinstance(w, Fixed):
        if n != 1:
            raise ShapeMismatch(None, 1, n, f"{where} (fixed vector weight needs a scalar input)")
        return len(w.values)
    rows, cols = w.shape
    if cols != n:
        raise ShapeMismatch(w.slot, cols, n, where)
    return rows


def _sum_dim(dims: list[int], where: str) -> int:
    d = max(dims)
    for x in dims:
        if x != d and x != 1:
            raise ShapeMismatch(None, d, x, where)
    return d


def build_graph(
    program: GroundProgram | NotEntailed,
    query: Atom | None,
    template: Template,
    *,
    fact_policy: str = "derived",
    on_cycle: str = "error",
) -> ComputationGraph:
    """Unfold the relevant ground program of ``query`` into a graph.

    ``fact_policy`` decides what happens when an atom is both an example fact
    and derived: ``"derived"`` feeds the fact into the atom node as an extra
    unweighted input, ``"fact"`` ignores the derivations.  ``on_cycle`` is
    ``"error"`` or ``"stratify"`` (keep only derivations from strictly earlier
    fixpoint stages).
    """
    if fact_policy not in ("derived", "fact"):
        raise ConfigError(f"unknown fact policy {fact_policy!r}")
    if on_cycle not in ("error", "stratify"):
        raise ConfigError(f"unknown cycle policy {on_cycle!r}")
    if isinstance(program, NotEntailed):
        q = program.query
        return ComputationGraph([Node(0, FACT, (), None, q, 1, value=(program.default,))], 0, q, entailed=False)
    if query is None:
        query = program.query
    if query is None:
        raise ConfigError("no query atom given")

    instances = program.instances
    if on_cycle == "stratify":
        stage = program.model.stage
        instances = [i for i in instances if all(stage.get(b, 0) < stage.get(i.head, 0) for b in i.body)]
    by_head: dict[Atom, dict[int, list[GroundRuleInstance]]] = {}
    for inst in instances:
        if fact_policy == "fact" and inst.head in program.facts:
            continue
        by_head.setdefault(inst.head, {}).setdefault(inst.rule_index, []).append(inst)

    nodes: list[Node] = []
    atom_node: dict[Atom, int] = {}

    def add(kind, inputs, fn, origin, dim, **kw) -> int:
        nodes.append(Node(len(nodes), kind, tuple(inputs), fn, origin, dim, **kw))
        return len(nodes) - 1

    def fact_node(a: Atom) -> int:
        value = program.facts.get(a)
        if isinstance(value, Learnable):
            return add(FACT, (), None, a, value.shape[0] * value.shape[1], slot=value)
        if value is None:
            raise ConfigError(f"atom {a} is neither a fact nor derived")
        return add(FACT, (), None, a, len(value), value=tuple(value))

    def deps(a: Atom) -> list[Atom]:
        seen: dict[Atom, None] = {}
        for rule_index in sorted(by_head.get(a, {})):
            for inst in by_head[a][rule_index]:
                for b in inst.body:
                    seen.setdefault(b)
        return list(seen)

    def emit(a: Atom):
        groups = by_head.get(a)
        if not groups:
            atom_node[a] = fact_node(a)
            return
        atom_inputs = []
        for rule_index in sorted(groups):
            rule = template.rules[rule_index]
            fns = template.rule_functions(rule_index)
            weight_first = fns.order == "weight_first"
            rule_ids = []
            for inst in groups[rule_index]:
                where = f"{inst}"
                inputs = []
                dims = []
                for (w, _), b in zip(rule.body, inst.body):
                    src = atom_node[b]
                    inputs.append((src, w))
                    dims.append(_contribution_dim(w, nodes[src].dim, where))
                rule_ids.append(
                    add(RULE, inputs, fns.rule if weight_first else "identity", inst, _sum_dim(dims, where))
                )
            agg_dim = _sum_dim([nodes[r].dim for r in rule_ids], f"aggregation of {a}")
            if any(nodes[r].dim != agg_dim for r in rule_ids):
                raise ShapeMismatch(None, agg_dim, min(nodes[r].dim for r in rule_ids), f"aggregation of {a}")
            agg = add(
                AGG,
                [(r, None) for r in sorted(rule_ids)],
                fns.agg,
                a,
                agg_dim,
                post="identity" if weight_first else fns.rule,
            )
            atom_inputs.append((agg, rule.head_weight))
        if a in program.facts:
            atom_inputs.append((fact_node(a), None))
        where = f"atom {a}"
        dims = [_contribution_dim(w, nodes[s].dim, where) for s, w in atom_inputs]
        atom_node[a] = add(ATOM, atom_inputs, template.atom_function(a.predicate), a, _sum_dim(dims, where))

    # iterative post-order DFS so long chains do not hit the recursion limit
    state: dict[Atom, int] = {}
    stack: list[tuple[Atom, bool]] = [(query, False)]
    while stack:
        a, expanded = stack.pop()
        if expanded:
            emit(a)
            state[a] = 2
            continue
        st = state.get(a)
        if st == 2:
            continue
        if st == 1:
            raise CyclicGroundingError(f"cyclic derivation through {a}")
        state[a] = 1
        stack.append((a, True))
        for d in reversed(deps(a)):
            ds = state.get(d)
            if ds == 1:
                raise CyclicGroundingError(f"cyclic derivation through {d}")
            if ds is None:
                stack.append((d, False))
    return ComputationGraph(nodes, atom_node[query], query)


# -- pruning -----------------------------------------------------------------


def _is_identity(n: Node) -> bool:
    if n.kind == AGG:
        return n.post == "identity"
    return n.fn == "identity"


def prune(graph: ComputationGraph, *, exact: bool = False) -> ComputationGraph:
    """Splice out single-input unweighted nodes, keep the output's ancestors.

    By default any such node is removed whatever its function; ``exact=True``
    only removes nodes that compute the identity on a single input.
    """
    replace: dict[int, int] = {}

    def resolve(i: int) -> int:
        while i in replace:
            i = replace[i]
        return i

    for n in graph.nodes:
        if n.kind != FACT and len(n.inputs) == 1 and n.inputs[0][1] is None:
            if not exact or _is_identity(n):
                replace[n.id] = resolve(n.inputs[0][0])
    out = resolve(graph.output)
    keep = {out}
    for n in reversed(graph.nodes):
        if n.id in keep:
            for s, _ in n.inputs:
                keep.add(resolve(s))
    order = [n.id for n in graph.nodes if n.id in keep]
    renum = {old: new for new, old in enumerate(order)}
    nodes = []
    for old in order:
        n = graph.nodes[old]
        inputs = tuple((renum[resolve(s)], w) for s, w in n.inputs)
        nodes.append(Node(renum[old], n.kind, inputs, n.fn, n.origin, n.dim, n.value, n.slot, n.post))
    return ComputationGraph(nodes, renum[out], graph.query, graph.entailed)


# -- vectorization -----------------------------------------------------------


@dataclass
class Entry:
    """One block of a layer matrix: rows of a node, columns of one input."""

    row: int
    col: int
    rows: int  # node dimension
    width: int  # contribution dimension before broadcasting
    cols: int  # source dimension
    weight: WeightSpec
    scale: float = 1.0


@dataclass
class Layer:
    level: int
    size_in: int
    size_out: int
    members: list  # (node id or ("skip", source id), row offset, dim)
    entries: list
    act_codes: np.ndarray
    max_groups: list  # (row offset, dim, [column offsets])

    @property
    def skip_count(self) -> int:
        return sum(1 for m, _, _ in self.members if isinstance(m, tuple))


def _block(e: Entry, params: ParameterStore | None) -> np.ndarray:
    w = e.weight
    if w is None:
        k = np.eye(e.cols)
    elif isinstance(w, Fixed):
        k = w.values[0] * np.eye(e.cols) if w.is_scalar else np.asarray(w.values).reshape(-1, 1)
    elif w.is_scalar:
        k = params.view(w.slot)[0, 0] * np.eye(e.cols)
    else:
        k = params.view(w.slot)
    if e.width != e.rows:
        k = np.ones((e.rows, 1)) @ k
    return e.scale * k


@dataclass
class LayeredGraph:
    graph: ComputationGraph
    level_of: list
    facts: list  # (node id, offset, dim) at level 0
    size0: int
    layers: list
    out_level: int
    out_offset: int
    out_dim: int

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def skip_count(self) -> int:
        return sum(layer.skip_count for layer in self.layers)

    def matrices(self, params: ParameterStore | None) -> list[sp.csr_matrix]:
        mats = []
        for layer in self.layers:
            rows, cols, vals = [], [], []
            for e in layer.entries:
                b = _block(e, params)
                r, c = np.nonzero(b)
                rows.append(r + e.row)
                cols.append(c + e.col)
                vals.append(b[r, c])
            if rows:
                m = sp.coo_matrix(
                    (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                    shape=(layer.size_out, layer.size_in),
                ).tocsr()
            else:
                m = sp.csr_matrix((layer.size_out, layer.size_in))
            mats.append(m)
        return mats

    def input_vector(self, params: ParameterStore | None) -> np.ndarray:
        x = np.zeros(self.size0)
        for nid, off, dim in self.facts:
            n = self.graph.nodes[nid]
            x[off : off + dim] = params.view(n.slot.slot).ravel() if n.slot is not None else n.value
        return x

    def forward(self, params: ParameterStore | None = None) -> np.ndarray:
        """Layer-by-layer evaluation; returns the output node's value."""
        x = self.input_vector(params)
        values = [x]
        for layer, m in zip(self.layers, self.matrices(params)):
            z = m @ x
            for row, dim, col_offs in layer.max_groups:
                z[row : row + dim] = np.max([x[c : c + dim] for c in col_offs], axis=0)
            x = activate_codes(layer.act_codes, z)
            values.append(x)
        return values[self.out_level][self.out_offset : self.out_offset + self.out_dim].copy()


def vectorize(graph: ComputationGraph) -> LayeredGraph:
    """Group nodes into depth levels with one block matrix per level.

    Inputs more than one level below a node reach it through shared identity
    carriers ("skip" members), one per intermediate level.
    """
    nodes = graph.nodes
    level = graph.levels()
    depth = max(level, default=0)
    members: list[list] = [[] for _ in range(depth + 1)]
    for n in nodes:
        members[level[n.id]].append(n.id)
    carriers: list[dict[int, None]] = [dict() for _ in range(depth + 1)]
    for n in nodes:
        for s, _ in n.inputs:
            for lv in range(level[s] + 1, level[n.id]):
                carriers[lv].setdefault(s)

    offsets: list[dict] = []
    sizes = []
    for lv in range(depth + 1):
        off = {}
        pos = 0
        for nid in members[lv]:
            off[nid] = pos
            pos += nodes[nid].dim
        for s in carriers[lv]:
            off[("skip", s)] = pos
            pos += nodes[s].dim
        offsets.append(off)
        sizes.append(pos)

    def source_col(s: int, lv: int) -> int:
        # column of source s as seen from a node at level lv
        return offsets[lv - 1][s] if level[s] == lv - 1 else offsets[lv - 1][("skip", s)]

    layers = []
    for lv in range(1, depth + 1):
        entries = []
        max_groups = []
        acts = np.zeros(sizes[lv], dtype=np.int64)
        layer_members = []
        for nid in members[lv]:
            n = nodes[nid]
            row = offsets[lv][nid]
            layer_members.append((nid, row, n.dim))
            if n.kind == AGG:
                acts[row : row + n.dim] = ACTIVATION_CODES[n.post]
                if n.fn == "max":
                    max_groups.append((row, n.dim, [source_col(s, lv) for s, _ in n.inputs]))
                    continue
                scale = 1.0 / len(n.inputs) if n.fn == "avg" else 1.0
                for s, _ in n.inputs:
                    d = nodes[s].dim
                    entries.append(Entry(row, source_col(s, lv), n.dim, d, d, None, scale))
            else:
                acts[row : row + n.dim] = ACTIVATION_CODES[n.fn]
                for s, w in n.inputs:
                    d = nodes[s].dim
                    width = _contribution_dim(w, d, "")
                    entries.append(Entry(row, source_col(s, lv), n.dim, width, d, w))
        for s in carriers[lv]:
            row = offsets[lv][("skip", s)]
            d = nodes[s].dim
            layer_members.append((("skip", s), row, d))
            entries.append(Entry(row, source_col(s, lv), d, d, d, None))
        layers.append(Layer(lv, sizes[lv - 1], sizes[lv], layer_members, entries, acts, max_groups))

    facts = [(nid, offsets[0][nid], nodes[nid].dim) for nid in members[0]]
    out = graph.output
    return LayeredGraph(graph, level, facts, sizes[0], layers, level[out], offsets[level[out]][out], nodes[out].dim)


# -- export ------------------------------------------------------------------

_PREFIX = {FACT: "F", RULE: "R", AGG: "G", ATOM: "A"}
_SHAPE = {FACT: "box", RULE: "ellipse", AGG: "diamond", ATOM: "ellipse"}


def _dot_escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"')


def _weight_label(w: WeightSpec) -> str | None:
    if w is None:
        return None
    if isinstance(w, Learnable):
        return w.slot
    from .parser import format_values

    return format_values(w.values)


def node_label(n: Node) -> str:
    if n.kind == RULE:
        inst = n.origin
        base = f"R_{inst.head}<-{','.join(map(str, inst.body))}"
    else:
        base = f"{_PREFIX[n.kind]}_{n.origin}"
    if n.kind == FACT:
        return base
    tag = n.fn if n.post == "identity" else f"{n.fn}+{n.post}"
    return f"{base} [{tag}]"


def export_dot(graph: ComputationGraph, name: str = "G") -> str:
    lines = [f"digraph {name} {{", "  rankdir=BT;"]
    for n in graph.nodes:
        attrs = f'label="{_dot_escape(node_label(n))}", shape={_SHAPE[n.kind]}'
        if n.id == graph.output:
            attrs += ", peripheries=2"
        if n.slot is not None:
            attrs += f', xlabel="{_dot_escape(n.slot.slot)}"'
        lines.append(f"  n{n.id} [{attrs}];")
    for n in graph.nodes:
        for s, w in n.inputs:
            label = _weight_label(w)
            extra = f' [label="{_dot_escape(label)}"]' if label else ""
            lines.append(f"  n{s} -> n{n.id}{extra};")
    lines.append("}")
    return "\n".join(lines) + "\n"
