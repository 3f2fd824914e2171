"""Initialisation, per-example optimisation, evaluation and cross-validation."""

from __future__ import annotations

import math
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .engine import CompiledGraph, adam_update, sgd_update
from .errors import ConfigError, NonFinite
from .functions import loss as loss_fn
from .functions import sigmoid
from .graph import ComputationGraph, build_graph, prune
from .grounder import DEFAULT_ATOM_CAP, ground_example, relevant_to
from .logic import Example, Query, Template
from .params import ParameterStore


@dataclass(frozen=True)
class TrainConfig:
    optimizer: str = "adam"
    lr: float = 1e-3
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    epochs: int = 200
    seed: int = 0
    loss: str = "bce"
    init: str = "glorot"  # glorot | uniform(a,b) | constant(c)

    def __post_init__(self):
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if not self.lr > 0:
            raise ConfigError("learning rate must be positive")
        if not all(0.0 <= b < 1.0 for b in self.betas):
            raise ConfigError("Adam betas must lie in [0, 1)")
        if self.epochs < 0:
            raise ConfigError("epochs must be non-negative")
        if self.loss not in ("bce", "mse"):
            raise ConfigError(f"unknown loss {self.loss!r}")
        _parse_init(self.init)


_INIT = re.compile(r"^\s*(glorot|uniform|constant)\s*(?:\(([^)]*)\))?\s*$")


def _parse_init(spec: str) -> tuple[str, tuple[float, ...]]:
    m = _INIT.match(spec)
    if m is None:
        raise ConfigError(f"unknown init scheme {spec!r}")
    name, args = m.group(1), m.group(2)
    try:
        values = tuple(float(a) for a in args.split(",")) if args else ()
    except ValueError:
        raise ConfigError(f"bad init arguments in {spec!r}") from None
    expected = {"glorot": (0,), "uniform": (0, 2), "constant": (1,)}[name]
    if len(values) not in expected:
        raise ConfigError(f"wrong number of arguments in {spec!r}")
    return name, values


def init_params(template: Template | dict, cfg: TrainConfig, seed: int | None = None) -> ParameterStore:
    """Glorot for matrix slots, uniform(-1, 1) for scalar and vector slots."""
    shapes = template.parameter_slots if isinstance(template, Template) else template
    store = ParameterStore(shapes)
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    name, args = _parse_init(cfg.init)
    for slot, (m, n) in store.shapes.items():
        view = store.view(slot)
        if name == "constant":
            view[...] = args[0]
        elif name == "uniform":
            lo, hi = args if args else (-1.0, 1.0)
            view[...] = rng.uniform(lo, hi, size=(m, n))
        elif m > 1 and n > 1:
            bound = math.sqrt(6.0 / (m + n))
            view[...] = rng.uniform(-bound, bound, size=(m, n))
        else:
            view[...] = rng.uniform(-1.0, 1.0, size=(m, n))
    store.touch()
    return store


# -- datasets ----------------------------------------------------------------


@dataclass
class DataItem:
    example_index: int
    query: Query
    graph: ComputationGraph
    squash: bool  # apply a sigmoid to the graph output before the loss
    _compiled: CompiledGraph | None = field(default=None, repr=False)

    @property
    def target(self) -> np.ndarray:
        return np.asarray(self.query.target)

    def compiled(self, params: ParameterStore) -> CompiledGraph:
        cg = self._compiled
        if cg is None or cg.layout != params.layout:
            cg = self._compiled = CompiledGraph(self.graph, params.layout)
        return cg


@dataclass
class Dataset:
    template: Template
    items: list
    folds: list | None = None
    loss: str = "bce"  # the output squash of each item was decided for this loss

    def __len__(self) -> int:
        return len(self.items)

    def subset(self, indices: Sequence[int]) -> "Dataset":
        return Dataset(self.template, [self.items[i] for i in indices], loss=self.loss)

    def check_loss(self, cfg: "TrainConfig") -> None:
        if cfg.loss != self.loss:
            raise ConfigError(f"dataset was built for {self.loss} loss but the config asks for {cfg.loss}")


@dataclass(frozen=True)
class BuildOptions:
    prune: bool = True
    # exact splicing never changes the function a template denotes
    exact_prune: bool = True
    fact_policy: str = "derived"
    on_cycle: str = "error"
    default: float = 0.0
    cap: int = DEFAULT_ATOM_CAP
    loss: str = "bce"


def _graphs_for_example(args) -> list[ComputationGraph]:
    template, example, opts = args
    program = ground_example(template, example, cap=opts.cap)
    graphs = []
    for q in example.queries:
        rel = relevant_to(program, q.atom, default=opts.default)
        g = build_graph(rel, q.atom, template, fact_policy=opts.fact_policy, on_cycle=opts.on_cycle)
        if opts.prune:
            g = prune(g, exact=opts.exact_prune)
        graphs.append(g)
    return graphs


def build_dataset(
    template: Template,
    examples: Sequence[Example],
    options: BuildOptions = BuildOptions(),
    *,
    jobs: int = 1,
) -> Dataset:
    """Ground and compile one graph per (example, query), preserving order."""
    work = [(template, ex, options) for ex in examples]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            per_example = list(pool.map(_graphs_for_example, work, chunksize=max(1, len(work) // (4 * jobs))))
    else:
        per_example = [_graphs_for_example(w) for w in work]
    items = []
    for i, (ex, graphs) in enumerate(zip(examples, per_example)):
        for q, g in zip(ex.queries, graphs):
            squash = options.loss == "bce" and template.atom_function(q.atom.predicate) == "identity" and g.entailed
            items.append(DataItem(i, q, g, squash))
    return Dataset(template, items, loss=options.loss)


# -- training ----------------------------------------------------------------


@dataclass
class OptState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def fresh(cls, params: ParameterStore) -> "OptState":
        return cls(np.zeros(params.size), np.zeros(params.size), 0)


def predict(item: DataItem, params: ParameterStore, example: int | None = None):
    cg = item.compiled(params)
    tape = cg.run_forward(params.data, example)
    out = cg.output_value(tape)
    return (sigmoid(out) if item.squash else out), out, tape, cg


def _item_loss_grad(item: DataItem, params: ParameterStore, cfg: TrainConfig, index: int):
    p, _, tape, cg = predict(item, params, index)
    value, dp = loss_fn(p, item.target, cfg.loss)
    dout = dp * p * (1.0 - p) if item.squash else dp
    return value, dout, tape, cg


def train_epoch(
    dataset: Dataset, params: ParameterStore, cfg: TrainConfig, state: OptState, epoch: int
) -> float:
    """One pass with batch size 1; returns the mean pre-update loss."""
    if not dataset.items:
        return float("nan")
    order = np.random.default_rng([cfg.seed, epoch]).permutation(len(dataset.items))
    grad = np.zeros(params.size)
    total = 0.0
    b1, b2 = cfg.betas
    for idx in order:
        item = dataset.items[idx]
        value, dout, tape, cg = _item_loss_grad(item, params, cfg, int(idx))
        total += value
        grad[:] = 0.0
        cg.run_backward(params.data, tape, dout, grad)
        state.step += 1
        if cfg.optimizer == "adam":
            adam_update(params.data, grad, state.m, state.v, state.step, cfg.lr, b1, b2, cfg.eps)
        else:
            sgd_update(params.data, grad, cfg.lr)
        params.touch()
        if not np.isfinite(params.data).all():
            raise NonFinite(cg.output, int(idx))
    return total / len(order)


@dataclass
class FoldResult:
    train_loss: float
    val_loss: float
    test_loss: float
    test_accuracy: float
    best_epoch: int


@dataclass
class Metrics:
    loss: float
    accuracy: float | None
    count: int
    per_fold: list = field(default_factory=list)

    def summary(self) -> str:
        acc = "undefined" if self.accuracy is None else repr(self.accuracy)
        lines = [f"loss={self.loss!r}", f"accuracy={acc}", f"count={self.count}"]
        for j, f in enumerate(self.per_fold):
            lines.append(
                f"fold{j}.trainLoss={f.train_loss!r} fold{j}.valLoss={f.val_loss!r} "
                f"fold{j}.testLoss={f.test_loss!r} fold{j}.testAccuracy={f.test_accuracy!r} "
                f"fold{j}.bestEpoch={f.best_epoch}"
            )
        return "\n".join(lines) + "\n"


def _correct(p: np.ndarray, t: np.ndarray) -> bool:
    return bool(np.all((p >= 0.5) == (t >= 0.5)))


def evaluate(dataset: Dataset, params: ParameterStore, cfg: TrainConfig) -> Metrics:
    """Mean loss and thresholded accuracy; never touches the parameters.

    An empty dataset yields a NaN loss and an undefined (None) accuracy.
    """
    dataset.check_loss(cfg)
    if not dataset.items:
        return Metrics(float("nan"), None, 0)
    total = 0.0
    hits = 0
    for i, item in enumerate(dataset.items):
        p, _, _, _ = predict(item, params, i)
        value, _ = loss_fn(p, item.target, cfg.loss)
        total += value
        hits += _correct(p, item.target)
    n = len(dataset.items)
    return Metrics(total / n, hits / n, n)


@dataclass
class TrainResult:
    params: ParameterStore
    history: list  # (epoch, trainLoss, valLoss)
    best: ParameterStore | None = None
    best_epoch: int = 0
    best_val: float = float("nan")


def format_log_line(epoch: int, train_loss: float, val_loss: float) -> str:
    return f"epoch={epoch} trainLoss={train_loss!r} valLoss={val_loss!r}"


def train(
    dataset: Dataset,
    cfg: TrainConfig,
    params: ParameterStore | None = None,
    *,
    val: Dataset | None = None,
    log: Callable[[str], None] | None = None,
) -> TrainResult:
    """Run ``cfg.epochs`` epochs; losses are logged from post-epoch snapshots.

    With a validation set the parameters at the lowest validation loss
    (epoch 0 included) are kept in ``best``.
    """
    dataset.check_loss(cfg)
    if params is None:
        params = init_params(dataset.template, cfg)
    state = OptState.fresh(params)
    history = []
    best = None
    best_epoch = 0
    best_val = float("nan")
    if val is not None and val.items:
        best_val = evaluate(val, params, cfg).loss
        best = params.copy()
    for epoch in range(1, cfg.epochs + 1):
        train_epoch(dataset, params, cfg, state, epoch)
        train_loss = evaluate(dataset, params, cfg).loss
        val_loss = evaluate(val, params, cfg).loss if val is not None else float("nan")
        history.append((epoch, train_loss, val_loss))
        if log is not None:
            log(format_log_line(epoch, train_loss, val_loss))
        if val is not None and val.items and val_loss < best_val:
            best_val = val_loss
            best = params.copy()
            best_epoch = epoch
    return TrainResult(params, history, best, best_epoch, best_val)


def assign_folds(n: int, k: int, seed: int) -> list[int]:
    order = np.random.default_rng(seed).permutation(n)
    folds = [0] * n
    for pos, i in enumerate(order):
        folds[int(i)] = pos % k
    return folds


def cross_validate(
    dataset: Dataset, cfg: TrainConfig, k: int, *, log: Callable[[str], None] | None = None
) -> Metrics:
    """Fold j tests, fold j+1 validates, the remaining k-2 folds train."""
    if k < 3:
        raise ConfigError("cross-validation needs k >= 3 (train, validation and test folds)")
    if len(dataset) < k:
        raise ConfigError(f"{len(dataset)} items cannot fill {k} folds")
    folds = dataset.folds or assign_folds(len(dataset), k, cfg.seed)
    results = []
    for j in range(k):
        vj = (j + 1) % k
        train_idx = [i for i, f in enumerate(folds) if f not in (j, vj)]
        val_idx = [i for i, f in enumerate(folds) if f == vj]
        test_idx = [i for i, f in enumerate(folds) if f == j]
        tr, va, te = dataset.subset(train_idx), dataset.subset(val_idx), dataset.subset(test_idx)
        params = init_params(dataset.template, cfg, seed=cfg.seed + j)
        if log is not None:
            log(f"fold={j}")
        res = train(tr, cfg, params, val=va, log=log)
        chosen = res.best if res.best is not None else res.params
        test = evaluate(te, chosen, cfg)
        results.append(
            FoldResult(evaluate(tr, chosen, cfg).loss, res.best_val, test.loss, test.accuracy, res.best_epoch)
        )
    return Metrics(
        float(np.mean([r.test_loss for r in results])),
        float(np.mean([r.test_accuracy for r in results])),
        len(dataset),
        results,
    )
