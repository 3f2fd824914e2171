"""Forward evaluation and reverse-mode gradients over computation graphs.

A graph is flattened once into integer/float arrays (:class:`CompiledGraph`)
and evaluated by numba kernels.  Every node owns a contiguous range of a value
buffer; ``z`` holds pre-activations and ``y`` outputs, which together form the
tape consumed by the backward pass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .errors import NonFinite, ShapeMismatch
from .functions import ACTIVATION_CODES, AGGREGATION_CODES
from .graph import AGG, ATOM, FACT, RULE, ComputationGraph
from .logic import Fixed, Learnable
from .params import GradientStore, ParameterStore

_KIND = {FACT: 0, RULE: 1, AGG: 2, ATOM: 3}

# weight kinds on edges
W_SCALE = 0  # absent (coef 1) or fixed scalar
W_PARAM_SCALAR = 1
W_PARAM_MATRIX = 2
W_CONST_VECTOR = 3


@numba.njit(cache=True, inline="always")
def _act(code, v):
    if code == 0:
        return v
    if code == 1:
        if v >= 0.0:
            return 1.0 / (1.0 + math.exp(-v))
        e = math.exp(v)
        return e / (1.0 + e)
    if code == 2:
        return math.tanh(v)
    return v if v > 0.0 else 0.0


@numba.njit(cache=True, inline="always")
def _dact(code, zv, yv):
    if code == 0:
        return 1.0
    if code == 1:
        return yv * (1.0 - yv)
    if code == 2:
        return 1.0 - yv * yv
    return 1.0 if zv > 0.0 else 0.0


@numba.njit(cache=True)
def _forward(ints, in_ptr, edges, wcoef, consts, params, z, y, amax):
    """Returns the id of the first node with a non-finite value, or -1."""
    n = ints.shape[0]
    for i in range(n):
        kind = ints[i, 0]
        code = ints[i, 1]
        d = ints[i, 3]
        o = ints[i, 4]
        e0 = in_ptr[i]
        e1 = in_ptr[i + 1]
        if kind == 0:
            src_buf = consts if ints[i, 5] == 0 else params
            base = ints[i, 6]
            for j in range(d):
                z[o + j] = src_buf[base + j]
        elif kind == 2:
            agg = ints[i, 2]
            cnt = e1 - e0
            for j in range(d):
                if agg == 1:
                    best = 0.0
                    arg = -1
                    for e in range(e0, e1):
                        s = edges[e, 0]
                        jj = j if ints[s, 3] == d else 0
                        v = y[ints[s, 4] + jj]
                        if arg < 0 or v > best:
                            best = v
                            arg = e
                    z[o + j] = best
                    amax[o + j] = arg
                else:
                    acc = 0.0
                    for e in range(e0, e1):
                        s = edges[e, 0]
                        jj = j if ints[s, 3] == d else 0
                        acc += y[ints[s, 4] + jj]
                    if agg == 0:
                        acc /= cnt
                    z[o + j] = acc
        else:
            for j in range(d):
                z[o + j] = 0.0
            for e in range(e0, e1):
                s = edges[e, 0]
                wk = edges[e, 1]
                so = ints[s, 4]
                ds = ints[s, 3]
                if wk == 2:
                    r = edges[e, 3]
                    c = edges[e, 4]
                    base = edges[e, 2]
                    if r == d:
                        for rr in range(r):
                            acc = 0.0
                            for cc in range(c):
                                acc += params[base + rr * c + cc] * y[so + cc]
                            z[o + rr] += acc
                    else:
                        acc = 0.0
                        for cc in range(c):
                            acc += params[base + cc] * y[so + cc]
                        for j in range(d):
                            z[o + j] += acc
                elif wk == 3:
                    base = edges[e, 2]
                    xv = y[so]
                    for j in range(d):
                        z[o + j] += consts[base + j] * xv
                else:
                    coef = wcoef[e] if wk == 0 else params[edges[e, 2]]
                    if ds == d:
                        for j in range(d):
                            z[o + j] += coef * y[so + j]
                    else:
                        for j in range(d):
                            z[o + j] += coef * y[so]
        bad = False
        for j in range(d):
            v = _act(code, z[o + j])
            y[o + j] = v
            if not (math.isfinite(v) and math.isfinite(z[o + j])):
                bad = True
        if bad:
            return i
    return -1


@numba.njit(cache=True)
def _backward(ints, in_ptr, edges, wcoef, consts, params, z, y, amax, gy, gz, gparams):
    """Accumulates into gparams; gy must hold the seed at the output range."""
    n = ints.shape[0]
    for i in range(n - 1, -1, -1):
        kind = ints[i, 0]
        code = ints[i, 1]
        d = ints[i, 3]
        o = ints[i, 4]
        any_grad = False
        for j in range(d):
            g = gy[o + j]
            if g != 0.0:
                any_grad = True
            gz[o + j] = g * _dact(code, z[o + j], y[o + j])
        if not any_grad:
            continue
        e0 = in_ptr[i]
        e1 = in_ptr[i + 1]
        if kind == 0:
            if ints[i, 5] == 1:
                base = ints[i, 6]
                for j in range(d):
                    gparams[base + j] += gz[o + j]
        elif kind == 2:
            agg = ints[i, 2]
            if agg == 1:
                for j in range(d):
                    e = amax[o + j]
                    s = edges[e, 0]
                    jj = j if ints[s, 3] == d else 0
                    gy[ints[s, 4] + jj] += gz[o + j]
            else:
                scale = 1.0 / (e1 - e0) if agg == 0 else 1.0
                for e in range(e0, e1):
                    s = edges[e, 0]
                    so = ints[s, 4]
                    same = ints[s, 3] == d
                    for j in range(d):
                        gy[so + (j if same else 0)] += gz[o + j] * scale
        else:
            for e in range(e0, e1):
                s = edges[e, 0]
                wk = edges[e, 1]
                so = ints[s, 4]
                ds = ints[s, 3]
                if wk == 2:
                    r = edges[e, 3]
                    c = edges[e, 4]
                    base = edges[e, 2]
                    for rr in range(r):
                        if r == d:
                            g = gz[o + rr]
                        else:
                            g = 0.0
                            for j in range(d):
                                g += gz[o + j]
                        if g == 0.0:
                            continue
                        for cc in range(c):
                            gparams[base + rr * c + cc] += g * y[so + cc]
                            gy[so + cc] += params[base + rr * c + cc] * g
                elif wk == 3:
                    base = edges[e, 2]
                    acc = 0.0
                    for j in range(d):
                        acc += consts[base + j] * gz[o + j]
                    gy[so] += acc
                else:
                    coef = wcoef[e] if wk == 0 else params[edges[e, 2]]
                    gw = 0.0
                    if ds == d:
                        for j in range(d):
                            gy[so + j] += coef * gz[o + j]
                            gw += gz[o + j] * y[so + j]
                    else:
                        acc = 0.0
                        for j in range(d):
                            acc += gz[o + j]
                        gy[so] += coef * acc
                        gw = acc * y[so]
                    if wk == 1:
                        gparams[edges[e, 2]] += gw


@numba.njit(cache=True)
def adam_update(data, grad, m, v, step, lr, b1, b2, eps):
    c1 = 1.0 - b1**step
    c2 = 1.0 - b2**step
    for k in range(data.shape[0]):
        g = grad[k]
        m[k] = b1 * m[k] + (1.0 - b1) * g
        v[k] = b2 * v[k] + (1.0 - b2) * g * g
        data[k] -= lr * (m[k] / c1) / (math.sqrt(v[k] / c2) + eps)


@numba.njit(cache=True)
def sgd_update(data, grad, lr):
    for k in range(data.shape[0]):
        data[k] -= lr * grad[k]


@dataclass
class Tape:
    z: np.ndarray
    y: np.ndarray
    amax: np.ndarray

    def value(self, compiled: "CompiledGraph", node: int) -> np.ndarray:
        o = compiled.ints[node, 4]
        return self.y[o : o + compiled.ints[node, 3]].copy()


class CompiledGraph:
    """Array form of a graph bound to one parameter layout."""

    def __init__(self, graph: ComputationGraph, layout: tuple):
        offsets = {}
        shapes = {}
        off = 0
        for slot, (r, c) in layout:
            offsets[slot] = off
            shapes[slot] = (r, c)
            off += r * c
        self.layout = layout
        self.graph = graph
        n = len(graph.nodes)
        ints = np.zeros((n, 7), dtype=np.int64)
        in_ptr = np.zeros(n + 1, dtype=np.int64)
        edge_rows = []
        coefs = []
        consts: list[float] = []
        pos = 0
        for node in graph.nodes:
            i = node.id
            ints[i, 0] = _KIND[node.kind]
            ints[i, 3] = node.dim
            ints[i, 4] = pos
            pos += node.dim
            if node.kind == FACT:
                if node.slot is not None:
                    slot = node.slot.slot
                    self._check_slot(slot, node.slot.shape, offsets, shapes, node)
                    ints[i, 5] = 1
                    ints[i, 6] = offsets[slot]
                else:
                    ints[i, 6] = len(consts)
                    consts.extend(node.value)
            elif node.kind == AGG:
                ints[i, 1] = ACTIVATION_CODES[node.post]
                ints[i, 2] = AGGREGATION_CODES[node.fn]
            else:
                ints[i, 1] = ACTIVATION_CODES[node.fn]
            for s, w in node.inputs:
                row = [s, W_SCALE, 0, 0, 0]
                coef = 1.0
                if isinstance(w, Fixed):
                    if w.is_scalar:
                        coef = w.values[0]
                    else:
                        row[1:4] = [W_CONST_VECTOR, len(consts), len(w.values)]
                        consts.extend(w.values)
                elif isinstance(w, Learnable):
                    self._check_slot(w.slot, w.shape, offsets, shapes, node)
                    if w.is_scalar:
                        row[1:3] = [W_PARAM_SCALAR, offsets[w.slot]]
                    else:
                        row = [s, W_PARAM_MATRIX, offsets[w.slot], w.shape[0], w.shape[1]]
                edge_rows.append(row)
                coefs.append(coef)
            in_ptr[i + 1] = len(edge_rows)
        self.ints = ints
        self.in_ptr = in_ptr
        self.edges = np.array(edge_rows, dtype=np.int64).reshape(-1, 5)
        self.wcoef = np.array(coefs, dtype=np.float64)
        self.consts = np.array(consts, dtype=np.float64)
        self.size = pos
        self.output = graph.output
        self.out_off = int(ints[graph.output, 4])
        self.out_dim = int(ints[graph.output, 3])
        self.slots = frozenset(graph.slot_shapes)

    @staticmethod
    def _check_slot(slot, shape, offsets, shapes, node):
        if slot not in offsets:
            raise ShapeMismatch(slot, shape, "missing slot", str(node.origin))
        if shapes[slot] != tuple(shape):
            raise ShapeMismatch(slot, shape, shapes[slot], str(node.origin))

    def run_forward(self, data: np.ndarray, example: int | None = None) -> Tape:
        z = np.empty(self.size)
        y = np.empty(self.size)
        amax = np.zeros(self.size, dtype=np.int64)
        bad = _forward(self.ints, self.in_ptr, self.edges, self.wcoef, self.consts, data, z, y, amax)
        if bad >= 0:
            raise NonFinite(int(bad), example)
        return Tape(z, y, amax)

    def output_value(self, tape: Tape) -> np.ndarray:
        return tape.y[self.out_off : self.out_off + self.out_dim].copy()

    def run_backward(self, data: np.ndarray, tape: Tape, seed, gparams: np.ndarray | None = None) -> np.ndarray:
        seed = np.atleast_1d(np.asarray(seed, dtype=np.float64)).ravel()
        if seed.size != self.out_dim:
            raise ShapeMismatch(None, self.out_dim, seed.size, "backward seed")
        gy = np.zeros(self.size)
        gz = np.zeros(self.size)
        gy[self.out_off : self.out_off + self.out_dim] = seed
        if gparams is None:
            gparams = np.zeros(data.shape[0])
        _backward(
            self.ints, self.in_ptr, self.edges, self.wcoef, self.consts, data,
            tape.z, tape.y, tape.amax, gy, gz, gparams,
        )
        return gparams


def compile_graph(graph: ComputationGraph, params: ParameterStore) -> CompiledGraph:
    """Compiled form of ``graph`` for the layout of ``params`` (cached on the graph)."""
    key = ("compiled", params.layout)
    cg = graph._cache.get(key)
    if cg is None:
        cg = graph._cache[key] = CompiledGraph(graph, params.layout)
    return cg


def forward(graph: ComputationGraph, params: ParameterStore) -> tuple[np.ndarray, Tape]:
    cg = compile_graph(graph, params)
    tape = cg.run_forward(params.data)
    return cg.output_value(tape), tape


def backward(graph: ComputationGraph, params: ParameterStore, tape: Tape, seed) -> GradientStore:
    """Gradients of ``seed . output`` for every slot the graph references."""
    cg = compile_graph(graph, params)
    flat = cg.run_backward(params.data, tape, seed)
    return GradientStore.from_flat(params, flat, cg.slots)


def node_values(graph: ComputationGraph, params: ParameterStore) -> list[np.ndarray]:
    """Every node's output, node by node."""
    cg = compile_graph(graph, params)
    tape = cg.run_forward(params.data)
    return [tape.value(cg, i) for i in range(len(graph.nodes))]
