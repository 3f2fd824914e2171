"""Instantiate every zoo template on a random input and report graph sizes."""

import numpy as np

from liftc.engine import forward
from liftc.graph import build_graph, prune, vectorize
from liftc.grounder import ground_example, relevant_to
from liftc.logic import Atom
from liftc.synthetic import example_for
from liftc.train import TrainConfig, init_params
from liftc.zoo import ZOO_NAMES, ZooSpec, instantiate


def main(dim: int = 4, seed: int = 0) -> None:
    rng = np.random.default_rng(seed)
    query = Atom("q")
    print(f"{'template':<12} {'slots':>5} {'nodes':>6} {'pruned':>6} {'levels':>6}  output")
    for name in ZOO_NAMES:
        spec = ZooSpec(name, dim=dim)
        template = instantiate(spec)
        ex = example_for(spec, rng, nodes=6)
        graph = build_graph(relevant_to(ground_example(template, ex), query), query, template)
        small = prune(graph)
        params = init_params(template, TrainConfig(seed=seed))
        value = forward(small, params)[0][0]
        print(
            f"{name:<12} {len(template.parameter_slots):>5} {len(graph.nodes):>6} {len(small.nodes):>6} "
            f"{vectorize(small).depth:>6}  {value:+.4f}"
        )


if __name__ == "__main__":
    main()
