"""Ground the two-rule molecule template on H2 and H2O and evaluate it.

Prints the relevant ground program, the node counts of the computation graph
and the query value under random parameters, then writes graph.dot.
"""

import sys


from liftc import build_graph, export_dot, forward, ground_example, parse_examples, parse_template, prune, relevant_to
from liftc.logic import Atom
from liftc.train import TrainConfig, init_params

TEMPLATE = """
h_w {1,1} :: h(X) :- a_w {1,1} : a(Y), b_w {1,1} : b(X,Y).
q_w :: q :- hq_w : h(X).
"""

EXAMPLES = """
#example H2
a(h1). a(h2).
b(h1,h2). b(h2,h1).
q ?

#example H2O
a(h1). a(h2). a(o1).
b(h1,o1). b(o1,h1). b(h2,o1). b(o1,h2).
q ?
"""


def main(out_dot: str = "graph.dot") -> None:
    template = parse_template(TEMPLATE)
    params = init_params(template, TrainConfig(seed=1))
    query = Atom("q")
    for ex in parse_examples(EXAMPLES):
        program = relevant_to(ground_example(template, ex), query)
        graph = build_graph(program, query, template)
        print(f"== {ex.name}")
        print(program.dump())
        print("counts", graph.counts(), "|", graph.stats())
        print("pruned", prune(graph).stats())
        print("q =", forward(graph, params)[0].tolist())
    with open(out_dot, "w", encoding="utf-8") as fh:
        fh.write(export_dot(graph))
    print("wrote", out_dot)


if __name__ == "__main__":
    main(*sys.argv[1:])
