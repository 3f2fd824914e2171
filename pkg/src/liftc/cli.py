"""Command-line front end: validate, ground, build, train, evaluate, export, gen.

Every command reads an optional ``key = value`` manifest; command-line flags
override manifest entries.  Exit codes: 0 success, 1 validation or
configuration failure, 2 I/O failure, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import synthetic
from .errors import (
    ConfigError,
    CyclicGroundingError,
    DomainError,
    GroundingLimitError,
    NonFinite,
    ParseError,
    ShapeMismatch,
    ValidationError,
)
from .graph import export_dot
from .grounder import ground_example, relevant_to
from .logic import Template, check_example, validate_template
from .params import ParameterStore
from .parser import format_rule, load_examples, load_template, serialize_examples
from .train import (
    BuildOptions,
    TrainConfig,
    build_dataset,
    cross_validate,
    evaluate,
    init_params,
    train,
)
from .zoo import ZOO_NAMES, ZooSpec, export_zoo, instantiate

log = logging.getLogger("liftc")

EXIT_OK, EXIT_INVALID, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3

# manifest keys and how to convert them; paths are resolved against the manifest
_PATH_KEYS = {"template", "examples", "out", "params"}
_INT_KEYS = {"epochs", "seed", "dim", "layers", "input_dim", "folds", "jobs", "cap"}
_FLOAT_KEYS = {"lr", "eps", "default", "beta1", "beta2"}
_BOOL_KEYS = {"prune", "exact_prune", "self_loops", "smooth"}
_STR_KEYS = {"zoo", "optimizer", "loss", "init", "fact_policy", "on_cycle", "edge", "types"}
MANIFEST_KEYS = _PATH_KEYS | _INT_KEYS | _FLOAT_KEYS | _BOOL_KEYS | _STR_KEYS


def parse_manifest(text: str, base: Path | None = None, file: str | None = None) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = (s.strip() for s in line.partition("="))
        where = f"{file or '<manifest>'}:{lineno}"
        if not sep or not key:
            raise ConfigError(f"{where}: expected 'key = value'")
        if key not in MANIFEST_KEYS:
            raise ConfigError(f"{where}: unknown manifest key {key!r}")
        out[key] = _convert(key, value, where)
        if key in _PATH_KEYS and base is not None:
            out[key] = str(base / out[key])
    return out


def _convert(key: str, value: str, where: str):
    try:
        if key in _INT_KEYS:
            return int(value)
        if key in _FLOAT_KEYS:
            return float(value)
    except ValueError:
        raise ConfigError(f"{where}: {key} expects a number, got {value!r}") from None
    if key in _BOOL_KEYS:
        low = value.lower()
        if low not in ("true", "false", "1", "0", "yes", "no"):
            raise ConfigError(f"{where}: {key} expects true or false, got {value!r}")
        return low in ("true", "1", "yes")
    return value


@dataclass
class RunManifest:
    template: str | None = None
    zoo: ZooSpec | None = None
    examples: str | None = None
    out: str = "."
    params: str | None = None
    train: TrainConfig = field(default_factory=TrainConfig)
    build: BuildOptions = field(default_factory=BuildOptions)
    folds: int = 0
    jobs: int = 1

    @classmethod
    def from_settings(cls, s: dict) -> "RunManifest":
        if s.get("template") and s.get("zoo"):
            raise ConfigError("give either a template file or a zoo template, not both")
        zoo = None
        if s.get("zoo"):
            extra = {}
            for key in ("edge", "self_loops", "smooth"):
                if key in s:
                    extra[key] = s[key]
            if s.get("types"):
                extra["types"] = [t.strip() for t in s["types"].split(",") if t.strip()]
            zoo = ZooSpec(s["zoo"], s.get("layers"), s.get("dim", 10), s.get("input_dim"), extra).resolved()
        betas = (s.get("beta1", 0.9), s.get("beta2", 0.999))
        cfg = TrainConfig(
            optimizer=s.get("optimizer", "adam"),
            lr=s.get("lr", 1e-3),
            betas=betas,
            eps=s.get("eps", 1e-8),
            epochs=s.get("epochs", 200),
            seed=s.get("seed", 0),
            loss=s.get("loss", "bce"),
            init=s.get("init", "glorot"),
        )
        build = BuildOptions(
            prune=s.get("prune", True),
            exact_prune=s.get("exact_prune", True),
            fact_policy=s.get("fact_policy", "derived"),
            on_cycle=s.get("on_cycle", "error"),
            default=s.get("default", 0.0),
            loss=cfg.loss,
            **({"cap": s["cap"]} if "cap" in s else {}),
        )
        jobs = s.get("jobs") or os.cpu_count() or 1
        return cls(
            s.get("template"), zoo, s.get("examples"), s.get("out", "."), s.get("params"), cfg, build,
            s.get("folds", 0), jobs,
        )

    def load_template(self) -> Template:
        if self.zoo is not None:
            return instantiate(self.zoo)
        if self.template is None:
            raise ConfigError("no template given (use --template or --zoo)")
        return load_template(self.template)

    def load_examples(self) -> list:
        if self.examples is None:
            raise ConfigError("no examples file given (use --examples)")
        return load_examples(self.examples)


# -- commands ----------------------------------------------------------------


def _checked_template(m: RunManifest) -> Template:
    template = m.load_template()
    diags = validate_template(template)
    if diags:
        for d in diags:
            rule = f"  [{format_rule(template.rules[d.rule])}]" if d.rule is not None else ""
            print(f"{d}{rule}", file=sys.stderr)
        raise ValidationError(diags)
    return template


def cmd_validate(m: RunManifest, args) -> int:
    _checked_template(m)
    if m.examples is not None:
        problems = []
        for i, ex in enumerate(m.load_examples()):
            problems += [f"example {ex.name or i}: {p}" for p in check_example(ex)]
        if problems:
            for p in problems:
                print(p, file=sys.stderr)
            return EXIT_INVALID
    print("ok")
    return EXIT_OK


def cmd_ground(m: RunManifest, args) -> int:
    template = _checked_template(m)
    chunks = []
    for i, ex in enumerate(m.load_examples()):
        if not ex.queries:
            continue
        program = ground_example(template, ex, cap=m.build.cap)
        for q in ex.queries:
            rel = relevant_to(program, q.atom, default=m.build.default)
            chunks.append(f"% example {ex.name or i} query {q.atom}\n{rel.dump()}")
    sys.stdout.write("".join(c if c.endswith("\n") else c + "\n" for c in chunks))
    return EXIT_OK


def _dataset(m: RunManifest, template: Template, examples=None):
    examples = m.load_examples() if examples is None else examples
    return build_dataset(template, examples, m.build, jobs=m.jobs)


def cmd_build(m: RunManifest, args) -> int:
    template = _checked_template(m)
    ds = _dataset(m, template)
    examples = m.load_examples()
    for item in ds.items:
        ex = examples[item.example_index]
        print(f"{ex.name or item.example_index} {item.query.atom} {item.graph.stats()}")
    return EXIT_OK


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def cmd_train(m: RunManifest, args) -> int:
    template = _checked_template(m)
    ds = _dataset(m, template)
    out = Path(m.out)
    lines: list[str] = []

    def record(line: str):
        lines.append(line)
        log.info(line)

    if m.folds:
        metrics = cross_validate(ds, m.train, m.folds, log=record)
        params = None
    else:
        params = init_params(template, m.train)
        result = train(ds, m.train, params, log=record)
        params = result.params
        metrics = evaluate(ds, params, m.train)
    _write(out / "train.log", "".join(line + "\n" for line in lines))
    if params is not None:
        _write(out / "params.txt", params.dumps())
    _write(out / "metrics.txt", metrics.summary())
    sys.stdout.write(metrics.summary())
    return EXIT_OK


def cmd_evaluate(m: RunManifest, args) -> int:
    template = _checked_template(m)
    if m.params is None:
        raise ConfigError("evaluate needs --params")
    params = ParameterStore.load(m.params)
    missing = set(template.parameter_slots) - set(params)
    if missing:
        raise ConfigError(f"parameter file lacks slots {sorted(missing)}")
    metrics = evaluate(_dataset(m, template), params, m.train)
    sys.stdout.write(metrics.summary())
    return EXIT_OK


def cmd_export(m: RunManifest, args) -> int:
    out = Path(m.out)
    if args.what == "zoo":
        spec_kw = {"dim": m.zoo.dim} if m.zoo is not None else {}
        for path in export_zoo(out, [ZooSpec(n, **spec_kw) for n in ZOO_NAMES]):
            print(path)
        return EXIT_OK
    template = _checked_template(m)
    if args.what == "params":
        path = out / "params.txt"
        _write(path, init_params(template, m.train).dumps())
        print(path)
        return EXIT_OK
    examples = m.load_examples()
    ds = _dataset(m, template, [ex for ex in examples if ex.queries][:1])
    if not ds.items:
        raise ConfigError("no example with a query to export")
    path = out / "graph.dot"
    _write(path, export_dot(ds.items[0].graph))
    print(path)
    return EXIT_OK


def cmd_gen(m: RunManifest, args) -> int:
    kw = {"self_loops": True} if args.self_loops else {}
    examples = synthetic.generate(args.kind, args.n, m.train.seed, **kw)
    text = serialize_examples(examples)
    if args.output in (None, "-"):
        sys.stdout.write(text)
    else:
        _write(Path(args.output), text)
    return EXIT_OK


# -- argument handling -------------------------------------------------------


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("manifest", nargs="?", help="key = value manifest file")
    p.add_argument("--template", help="template file")
    p.add_argument("--zoo", choices=ZOO_NAMES, help="use a named template instead of a file")
    p.add_argument("--dim", type=int)
    p.add_argument("--layers", type=int)
    p.add_argument("--input-dim", dest="input_dim", type=int)
    p.add_argument("--types", help="comma-separated unary type predicates (zoo graph templates)")
    p.add_argument("--edge", help="edge predicate name (zoo graph templates)")
    p.add_argument("--examples", help="examples file")
    p.add_argument("--out", help="output directory")
    p.add_argument("--params", help="parameter file (evaluate)")
    p.add_argument("--lr", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--folds", type=int)
    p.add_argument("--jobs", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="liftc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("validate", "check a template and examples"),
        ("ground", "print the relevant ground program of every query"),
        ("build", "print computation graph statistics per query"),
        ("stats", "alias of build"),
        ("train", "train and write train.log, params.txt and metrics.txt"),
        ("evaluate", "evaluate saved parameters"),
    ):
        _add_common(sub.add_parser(name, help=helptext))
    p = sub.add_parser("export", help="write a graph (dot), initial parameters or the zoo")
    p.add_argument("what", choices=("dot", "params", "zoo"))
    _add_common(p)
    p = sub.add_parser("gen", help="generate a synthetic examples file")
    p.add_argument("kind", choices=sorted(synthetic.TASKS))
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--seed", type=int)
    p.add_argument("--self-loops", action="store_true")
    p.add_argument("-o", "--output", help="output file (default stdout)")
    return parser


_COMMANDS = {
    "validate": cmd_validate,
    "ground": cmd_ground,
    "build": cmd_build,
    "stats": cmd_build,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "export": cmd_export,
    "gen": cmd_gen,
}


def _settings(args) -> dict:
    settings: dict = {}
    manifest = getattr(args, "manifest", None)
    if manifest:
        path = Path(manifest)
        settings = parse_manifest(path.read_text(encoding="utf-8"), path.parent, str(path))
    for key in MANIFEST_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    # a template chosen on the command line replaces the manifest's choice
    if getattr(args, "template", None):
        settings.pop("zoo", None)
    if getattr(args, "zoo", None):
        settings.pop("template", None)
    return settings


def _setup_logging():
    level = os.environ.get("LIFTC_LOG", "error").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    if level not in levels:
        raise ConfigError(f"LIFTC_LOG must be one of {', '.join(levels)}, got {level!r}")
    log.setLevel(levels[level])
    if not log.handlers:
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter("%(levelname)s %(message)s"))
        log.addHandler(handler)
    log.propagate = False


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _setup_logging()
        manifest = RunManifest.from_settings(_settings(args))
        return _COMMANDS[args.command](manifest, args)
    except ValidationError:
        return EXIT_INVALID
    except (ParseError, ConfigError, ShapeMismatch, GroundingLimitError, CyclicGroundingError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_IO
    except (NonFinite, DomainError) as e:
        print(f"numeric error: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
