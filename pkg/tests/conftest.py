import random

import pytest

from privkg.graph import Triple, from_named_triples
from privkg.queries import Anchor, Intersection, Projection, Union
from privkg.synthetic import make_random_kg

TOY_SCHEMA = {"Collaborate": "rel", "WinAward": "rel", "LiveIn": "attr", "BornIn": "attr"}
TOY_TRIPLES = [
    ("Hinton", "LiveIn", "Toronto"),
    ("Hinton", "BornIn", "London"),
    ("Hinton", "WinAward", "Turing"),
    ("LeCun", "WinAward", "Turing"),
    ("LeCun", "Collaborate", "Hinton"),
    ("LeCun", "LiveIn", "NYC"),
    ("Bengio", "WinAward", "Turing"),
    ("Bengio", "LiveIn", "Montreal"),
]


@pytest.fixture
def toy_graph():
    """Small researcher graph; Hinton's LiveIn edge is the private one."""
    g = from_named_triples(TOY_TRIPLES, TOY_SCHEMA)
    private = Triple(g.vertex_id("Hinton"), g.relation_id("LiveIn"), g.vertex_id("Toronto"))
    return g.mark_private({private})


def random_graph(seed, n_vertices=40, n_relations=4, n_attributes=2, n_triples=120):
    return make_random_kg(n_vertices, n_relations, n_attributes, n_triples, seed)


def random_query(g, rng, max_depth=3):
    """Arbitrary well-formed query tree over g's vocabulary."""
    def build(depth):
        options = ["anchor"]
        if depth > 1:
            options += ["proj", "proj", "inter", "union"]
        kind = rng.choice(options)
        if kind == "anchor":
            return Anchor(rng.randrange(g.num_vertices()))
        if kind == "proj":
            return Projection(rng.randrange(len(g.relations)),
                              rng.choice(["forward", "backward"]),
                              build(depth - 1))
        children = tuple(build(depth - 1) for _ in range(rng.choice([2, 2, 3])))
        return (Intersection if kind == "inter" else Union)(children)

    return build(max_depth)


def mark_random_private(g, n, seed):
    attrs = sorted(g.attribute_triples())
    rng = random.Random(seed)
    return g.mark_private(rng.sample(attrs, min(n, len(attrs))))
