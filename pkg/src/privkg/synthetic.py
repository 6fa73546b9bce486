"""Seeded synthetic knowledge graphs with learnable structure, used by the
demo pipeline and the acceptance suite.

Entities live in communities; each entity relation maps a community to a fixed
partner community, and each attribute maps a community to a small pool of
value vertices, so embeddings can generalize beyond observed edges.
"""

from __future__ import annotations

import random

from .graph import ATTR, REL, KnowledgeGraph, from_named_triples


def make_synthetic_kg(n_entities: int = 240, n_communities: int = 6,
                      n_relations: int = 6, n_attributes: int = 3,
                      values_per_pool: int = 4, edges_per_relation: int = 1,
                      seed: int = 0) -> KnowledgeGraph:
    rng = random.Random(seed)
    entities = ["e%03d" % i for i in range(n_entities)]
    community = {e: i % n_communities for i, e in enumerate(entities)}
    schema = {}
    triples = []

    # entity relations follow per-relation community permutations
    for r in range(n_relations):
        name = "rel%d" % r
        schema[name] = REL
        perm = list(range(n_communities))
        rng.shuffle(perm)
        for e in entities:
            target_comm = perm[community[e]]
            pool = [x for x in entities if community[x] == target_comm and x != e]
            for x in rng.sample(pool, min(edges_per_relation, len(pool))):
                triples.append((e, name, x))

    # attribute values are pooled per (attribute, community)
    for a in range(n_attributes):
        name = "attr%d" % a
        schema[name] = ATTR
        for e in entities:
            pool = ["v%d_%d_%d" % (a, community[e], j) for j in range(values_per_pool)]
            triples.append((e, name, rng.choice(pool)))

    return from_named_triples(triples, schema)


def make_random_kg(n_vertices: int, n_relations: int, n_attributes: int,
                   n_triples: int, seed: int) -> KnowledgeGraph:
    """Unstructured random graph for oracle-style testing."""
    rng = random.Random(seed)
    names = ["n%d" % i for i in range(n_vertices)]
    schema = {}
    rel_names = []
    for r in range(n_relations):
        schema["r%d" % r] = REL
        rel_names.append("r%d" % r)
    for a in range(n_attributes):
        schema["a%d" % a] = ATTR
        rel_names.append("a%d" % a)
    triples = set()
    while len(triples) < n_triples:
        triples.add((rng.choice(names), rng.choice(rel_names), rng.choice(names)))
    return from_named_triples(sorted(triples), schema)
