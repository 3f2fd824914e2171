"""Named template generators for common neural architectures.

Every generator writes the template in surface syntax and parses it, so the
text written by :func:`export_zoo` is exactly what :func:`instantiate` returns.

Graph templates read node features from ``features(X)`` vector facts (or from
one-hot type rules when ``extra["types"]`` lists unary type predicates) and
the graph from a binary edge predicate (``extra["edge"]``, default ``edge``).
Structural literals such as ``edge(V,U)`` carry the fixed weight ``0``: they
constrain the grounding without adding a constant to the weighted sum.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .logic import Template
from .parser import parse_template

ZOO_NAMES = ("mlp", "cnn1d", "recurrent", "recursive", "gcn", "gsage", "gin0", "ginStar", "graphlets", "latentBonds")
GRAPH_MODELS = ("gcn", "gsage", "gin0", "ginStar", "graphlets", "latentBonds")
_DEFAULT_LAYERS = {"gin0": 5, "ginStar": 5, "graphlets": 5, "latentBonds": 5}
_EXTRA_KEYS = {"edge", "types", "smooth", "eps", "kernel", "arity", "self_loops"}


@dataclass(frozen=True)
class ZooSpec:
    name: str
    layers: int | None = None
    dim: int = 10
    input_dim: int | None = None
    extra: dict = field(default_factory=dict, hash=False, compare=True)

    def resolved(self) -> "ZooSpec":
        """Fill per-model defaults and check invariants."""
        if self.name not in ZOO_NAMES:
            raise ConfigError(f"unknown zoo template {self.name!r} (known: {', '.join(ZOO_NAMES)})")
        unknown = set(self.extra) - _EXTRA_KEYS
        if unknown:
            raise ConfigError(f"unknown zoo options {sorted(unknown)}")
        layers = self.layers if self.layers is not None else _DEFAULT_LAYERS.get(self.name, 2 if self.name in GRAPH_MODELS else 1)
        if layers < 1 or self.dim < 1:
            raise ConfigError("layers and dim must be at least 1")
        types = self.extra.get("types")
        if types:
            if self.name not in GRAPH_MODELS:
                raise ConfigError("type predicates are only supported by graph templates")
            input_dim = len(types)
            if self.input_dim is not None and self.input_dim != input_dim:
                raise ConfigError(f"input_dim {self.input_dim} disagrees with {input_dim} type predicates")
        elif self.name == "recursive":
            input_dim = self.dim
            if self.input_dim is not None and self.input_dim != self.dim:
                raise ConfigError("recursive leaves must have the latent dimension")
        else:
            default_in = {"cnn1d": 1, "recurrent": 1, "mlp": 4}.get(self.name, 3)
            input_dim = self.input_dim if self.input_dim is not None else default_in
        if input_dim < 1:
            raise ConfigError("input_dim must be at least 1")
        if self.name == "recurrent" and layers != 1:
            raise ConfigError("the recurrent template has a single recurrent layer")
        if self.name == "recursive" and layers != 1:
            raise ConfigError("the recursive template has a single composition rule")
        if "eps" in self.extra and self.name != "gin0":
            raise ConfigError("eps only applies to gin0")
        return ZooSpec(self.name, layers, self.dim, input_dim, dict(self.extra))


class _Writer:
    def __init__(self, spec: ZooSpec):
        self.spec = spec
        self.lines: list[str] = []
        self.smooth = bool(spec.extra.get("smooth", False))

    def act(self, name: str) -> str:
        return "tanh" if self.smooth and name == "relu" else name

    def fn(self, target: str, **kw):
        self.lines.append(f"@fn {target} " + ", ".join(f"{k}={v}" for k, v in kw.items()) + ".")

    def rule(self, text: str):
        self.lines.append(text)

    def text(self) -> str:
        return "\n".join(self.lines) + "\n"


def _input_layer(w: _Writer) -> str:
    """Emit type one-hot rules if requested; return the layer-0 predicate."""
    types = w.spec.extra.get("types")
    if not types:
        return "features"
    w.fn("h0", rule="identity", agg="avg", atom="identity")
    for k, t in enumerate(types):
        onehot = ", ".join("1" if j == k else "0" for j in range(len(types)))
        w.rule(f"h0(X) :- [{onehot}] : {t}(X).")
    return "h0"


def _gcn(w: _Writer):
    s = w.spec
    e = s.extra.get("edge", "edge")
    w.fn("*", rule="identity", agg="avg", atom=w.act("relu"))
    w.fn("q", rule="identity", agg="avg", atom="identity")
    prev, prev_dim = _input_layer(w), s.input_dim
    for i in range(1, s.layers + 1):
        w.rule(f"conv{i} {{{s.dim},{prev_dim}}} :: h{i}(V) :- {prev}(U), 0 : {e}(V,U).")
        prev, prev_dim = f"h{i}", s.dim
    w.rule(f"out {{1,{s.dim}}} :: q :- {prev}(X).")


def _gsage(w: _Writer):
    s = w.spec
    e = s.extra.get("edge", "edge")
    w.fn("*", rule=w.act("relu"), agg="max", atom="identity")
    w.fn("q", rule="identity", agg="avg", atom="identity")
    prev, prev_dim = _input_layer(w), s.input_dim
    for i in range(1, s.layers + 1):
        w.rule(f"h{i}(V) :- nbr{i} {{{s.dim},{prev_dim}}} : {prev}(U), 0 : {e}(V,U).")
        w.rule(f"h{i}(V) :- self{i} {{{s.dim},{prev_dim}}} : {prev}(V).")
        prev, prev_dim = f"h{i}", s.dim
    w.rule(f"out {{1,{s.dim}}} :: q :- {prev}(X).")


def _gin_family(w: _Writer):
    s = w.spec
    e = s.extra.get("edge", "edge")
    relu = w.act("relu")
    w.fn("*", rule=relu, agg="sum", atom=relu)
    w.fn("q", rule="identity", agg="avg", atom="identity")
    star = s.name == "ginStar"
    bonds = s.name == "latentBonds"
    prev, prev_dim = _input_layer(w), s.input_dim
    d = s.dim
    if bonds:
        w.rule(f"he0(U,V) :- bond0 {{{d},1}} : {e}(U,V).")
    for i in range(1, s.layers + 1):
        if "eps" in s.extra:
            coef = 1.0 + float(s.extra["eps"])
            w.fn(f"mix{i}", rule="identity", agg="sum", atom="identity")
            w.rule(f"mix{i}(V) :- {prev}(U), 0 : {e}(V,U).")
            w.rule(f"mix{i}(V) :- {coef!r} : {prev}(V).")
            w.rule(f"mlp_out{i} {{{d},{d}}} :: h{i}(V) :- mlp_in{i} {{{d},{prev_dim}}} : mix{i}(V).")
        else:
            if star:
                link = f"edge{i} {{{d},1}} : {e}(V,U)"
            elif bonds:
                link = f"bond_mix{i} {{{d},{d}}} : he{i - 1}(V,U)"
            else:
                link = f"0 : {e}(V,U)"
            w.rule(f"nbr_out{i} {{{d},{d}}} :: h{i}(V) :- nbr_in{i} {{{d},{prev_dim}}} : {prev}(U), {link}.")
            w.rule(f"self_out{i} {{{d},{d}}} :: h{i}(V) :- self_in{i} {{{d},{prev_dim}}} : {prev}(V).")
        if bonds and i < s.layers:
            w.rule(
                f"bond_out{i} {{{d},{d}}} :: he{i}(U,V) :- bond_in{i} {{{d},{d}}} : he{i - 1}(V,W), 0 : {e}(U,V)."
            )
        prev, prev_dim = f"h{i}", d
    if s.name == "graphlets":
        L = s.layers
        w.rule(
            f"motif_out {{{d},{d}}} :: motif(U) :- motif_a {{{d},{d}}} : h{L}(U), motif_b {{{d},{d}}} : h{L}(V), "
            f"motif_c {{{d},{d}}} : h{L}(W), 0 : {e}(U,V), 0 : {e}(V,W), 0 : {e}(W,U)."
        )
    for i in range(1, s.layers + 1):
        if star:
            w.rule(f"out{i} {{1,{d}}} :: q :- read{i} {{{d},{d}}} : h{i}(X).")
        else:
            w.rule(f"out{i} {{1,{d}}} :: q :- h{i}(X).")
    if s.name == "graphlets":
        w.rule(f"out_motif {{1,{d}}} :: q :- motif(X).")


def _mlp(w: _Writer):
    s = w.spec
    w.fn("*", rule=w.act("relu"), agg="avg", atom=w.act("relu"))
    w.fn("q", rule=w.act("relu"), agg="avg", atom="identity")
    prev, prev_dim = "features", s.input_dim
    for i in range(1, s.layers):
        w.rule(f"hidden_out{i} {{{s.dim},{s.dim}}} :: h{i} :- hidden_in{i} {{{s.dim},{prev_dim}}} : {prev}.")
        prev, prev_dim = f"h{i}", s.dim
    w.rule(f"out {{1,{s.dim}}} :: q :- hidden {{{s.dim},{prev_dim}}} : {prev}.")


def _cnn1d(w: _Writer):
    s = w.spec
    k = int(s.extra.get("kernel", 3))
    if k < 1:
        raise ConfigError("kernel width must be at least 1")
    w.fn("*", rule=w.act("relu"), agg="avg", atom="identity")
    w.fn("q", rule="identity", agg="max", atom="identity")
    prev, prev_dim = "f", s.input_dim
    pos = [f"P{j}" for j in range(1, k + 1)]
    for i in range(1, s.layers + 1):
        lits = [f"k{i}_{j + 1} {{{s.dim},{prev_dim}}} : {prev}({p})" for j, p in enumerate(pos)]
        lits += [f"0 : next({a},{b})" for a, b in zip(pos, pos[1:])]
        w.rule(f"conv{i}(P1) :- {', '.join(lits)}.")
        prev, prev_dim = f"conv{i}", s.dim
    w.rule(f"out {{1,{s.dim}}} :: q :- {prev}(X).")


def _recurrent(w: _Writer):
    s = w.spec
    w.fn("*", rule="tanh", agg="avg", atom="identity")
    w.fn("q", rule="identity", agg="avg", atom="identity")
    d, i0 = s.dim, s.input_dim
    w.rule(f"h(Y) :- inp {{{d},{i0}}} : f(Y), 0 : first(Y).")
    w.rule(f"h(Y) :- inp : f(Y), rec {{{d},{d}}} : h(X), 0 : next(X,Y).")
    w.rule(f"out {{1,{d}}} :: q :- h(X), 0 : last(X).")


def _recursive(w: _Writer):
    s = w.spec
    k = int(s.extra.get("arity", 3))
    if k < 1:
        raise ConfigError("tree arity must be at least 1")
    w.fn("*", rule="tanh", agg="avg", atom="identity")
    w.fn("q", rule="identity", agg="avg", atom="identity")
    d = s.dim
    kids = [f"C{j}" for j in range(1, k + 1)]
    lits = [f"child{j} {{{d},{d}}} : n({c})" for j, c in enumerate(kids, start=1)]
    w.rule(f"n(P) :- {', '.join(lits)}, 0 : parent(P,{','.join(kids)}).")
    w.rule(f"out {{1,{d}}} :: q :- n(X), 0 : root(X).")


_BUILDERS = {
    "mlp": _mlp,
    "cnn1d": _cnn1d,
    "recurrent": _recurrent,
    "recursive": _recursive,
    "gcn": _gcn,
    "gsage": _gsage,
    "gin0": _gin_family,
    "ginStar": _gin_family,
    "graphlets": _gin_family,
    "latentBonds": _gin_family,
}


def template_text(spec: ZooSpec) -> str:
    spec = spec.resolved()
    w = _Writer(spec)
    _BUILDERS[spec.name](w)
    return w.text()


def instantiate(spec: ZooSpec | str, **kw) -> Template:
    if isinstance(spec, str):
        spec = ZooSpec(spec, **kw)
    return parse_template(template_text(spec), f"<zoo:{spec.name}>")


def expected_slot_count(spec: ZooSpec) -> int:
    """Closed-form number of parameter slots of an instantiated template."""
    s = spec.resolved()
    L = s.layers
    if s.name == "gcn":
        return L + 1
    if s.name == "gsage":
        return 2 * L + 1
    if s.name == "gin0":
        return (3 if "eps" in s.extra else 5) * L
    if s.name == "ginStar":
        return 7 * L
    if s.name == "graphlets":
        return 5 * L + 5
    if s.name == "latentBonds":
        return 5 * L + 1 + 2 * (L - 1) + L
    if s.name == "mlp":
        return 2 * L
    if s.name == "cnn1d":
        return L * int(s.extra.get("kernel", 3)) + 1
    if s.name == "recurrent":
        return 3
    return int(s.extra.get("arity", 3)) + 1


def export_zoo(directory: str | Path, specs=None) -> list[Path]:
    """Write ``<name>.tpl`` for each spec (default: every model at defaults)."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for spec in specs or [ZooSpec(n) for n in ZOO_NAMES]:
        path = out / f"{spec.name}.tpl"
        path.write_text(template_text(spec), encoding="utf-8")
        written.append(path)
    return written
