"""Benchmark construction: private-edge sampling, the 8:1:1 cumulative edge
split, template-based query sampling by backward random walks, and flat-file
emission.

All sampling is seeded and deterministic; per-template samplers derive an
independent generator from (seed, template).
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .graph import ATTR, GraphSplit, KnowledgeGraph, Triple
from .queries import (QUERY_TYPES, Anchor, Intersection, Projection, QueryNode,
                      Union, classify_type, parse_query, serialize)
from .symbolic import RELAXED, TaggedAnswerSet, evaluate, evaluate_tagged

RETRY_BUDGET = 100


class BenchmarkError(Exception):
    pass


@dataclass(frozen=True)
class BenchmarkQuery:
    query: QueryNode
    qtype: str
    train_answers: frozenset[int]
    valid_answers: frozenset[int]
    test_answers: TaggedAnswerSet


def sample_private_edges(g: KnowledgeGraph, n: int, seed: int) -> frozenset[Triple]:
    """Uniform seeded sample of n attribute triples."""
    attrs = sorted(g.attribute_triples())
    if n > len(attrs):
        raise BenchmarkError("requested %d private edges but only %d attribute triples exist"
                             % (n, len(attrs)))
    rng = random.Random(seed)
    return frozenset(rng.sample(attrs, n))


def split_edges(g: KnowledgeGraph, private: frozenset[Triple], seed: int) -> GraphSplit:
    """8:1:1 split of the non-private edges into cumulative graphs.

    Private edges appear only in the test graph, flagged private."""
    for t in private:
        if t not in g.triples or g.relations[t.rel].kind != ATTR:
            raise BenchmarkError("private set must be attribute triples of the graph: %r" % (t,))
    remaining = sorted(g.triples - private)
    rng = random.Random(seed)
    rng.shuffle(remaining)
    n = len(remaining)
    n_train = round(n * 0.8)
    n_valid = round(n * 0.1)
    train_edges = frozenset(remaining[:n_train])
    valid_edges = train_edges | frozenset(remaining[n_train:n_train + n_valid])
    test_edges = frozenset(remaining) | private
    return GraphSplit(
        train=g.with_triples(train_edges),
        valid=g.with_triples(valid_edges),
        test=g.with_triples(test_edges, private=private),
        private=private,
    )


# -- query sampling -------------------------------------------------------


def _step_choices(g: KnowledgeGraph, v: int):
    """Edges incident to v, each expressed as a projection step landing on v.

    Incoming (u, r, v) -> forward projection from u; outgoing (v, r, x) ->
    backward projection from x."""
    choices = []
    for rel in g.relations:
        for u in g.neighbors(v, rel.id, "backward"):
            choices.append(("forward", rel.id, u))
        for x in g.neighbors(v, rel.id, "forward"):
            choices.append(("backward", rel.id, x))
    choices.sort()
    return choices


def _sample_chain(g, v, length, rng):
    """Projection chain of the given length whose answers include v."""
    node = None
    steps = []
    current = v
    for _ in range(length):
        choices = _step_choices(g, current)
        if not choices:
            return None
        direction, rel, source = rng.choice(choices)
        steps.append((direction, rel))
        current = source
    node = Anchor(current)
    for direction, rel in reversed(steps):
        node = Projection(rel, direction, node)
    return node


def _sample_branches(g, v, count, rng):
    """Distinct 1p branches all answering v."""
    choices = _step_choices(g, v)
    if len(choices) < count:
        return None
    picked = rng.sample(choices, count)
    return tuple(Projection(rel, direction, Anchor(u)) for direction, rel, u in picked)


def _sample_template(g, qtype, rng):
    vertices = sorted({v for t in g.triples for v in (t.head, t.tail)})
    if not vertices:
        return None
    v = rng.choice(vertices)
    if qtype == "1p":
        return _sample_chain(g, v, 1, rng)
    if qtype == "2p":
        return _sample_chain(g, v, 2, rng)
    if qtype in ("2i", "3i"):
        branches = _sample_branches(g, v, 2 if qtype == "2i" else 3, rng)
        return Intersection(branches) if branches else None
    if qtype == "pi":
        two = _sample_chain(g, v, 2, rng)
        one = _sample_branches(g, v, 1, rng)
        if two is None or one is None or two == one[0].child:
            return None
        return Intersection((two, one[0]))
    if qtype == "ip":
        choices = _step_choices(g, v)
        if not choices:
            return None
        direction, rel, mid = rng.choice(choices)
        branches = _sample_branches(g, mid, 2, rng)
        if branches is None:
            return None
        return Projection(rel, direction, Intersection(branches))
    if qtype == "2u":
        branches = _sample_branches(g, v, 2, rng)
        return Union(branches) if branches else None
    if qtype == "up":
        choices = _step_choices(g, v)
        if not choices:
            return None
        direction, rel, mid = rng.choice(choices)
        branches = _sample_branches(g, mid, 2, rng)
        if branches is None:
            return None
        return Projection(rel, direction, Union(branches))
    raise BenchmarkError("unknown query type %r" % qtype)


def sample_queries(split: GraphSplit, qtype: str, n: int, seed: int,
                   mode: str = RELAXED) -> list[BenchmarkQuery]:
    """Sample n distinct queries of one template.

    Structures come from backward walks on the test graph (private edges
    included), so every query has at least one test answer. Train and
    validation answers are searched on their own graphs.
    """
    if qtype not in QUERY_TYPES:
        raise BenchmarkError("unknown query type %r" % qtype)
    # string seeds hash via sha512, stable across interpreter runs
    rng = random.Random("%d:%s" % (seed, qtype))
    out: list[BenchmarkQuery] = []
    seen: set[QueryNode] = set()
    failures = 0
    while len(out) < n:
        q = _sample_template(split.test, qtype, rng)
        if q is None or q in seen or classify_type(q) != qtype:
            failures += 1
            if failures > RETRY_BUDGET:
                raise BenchmarkError("sampler exhausted retry budget for %s "
                                     "(graph too sparse after %d queries)" % (qtype, len(out)))
            continue
        failures = 0
        seen.add(q)
        out.append(BenchmarkQuery(
            query=q,
            qtype=qtype,
            train_answers=evaluate(split.train, q),
            valid_answers=evaluate(split.valid, q),
            test_answers=evaluate_tagged(split.test, q, mode),
        ))
    return out


# -- statistics -------------------------------------------------------------


@dataclass(frozen=True)
class BenchmarkStats:
    """Per query type: query count and public/private test answer totals."""
    queries: dict
    public_answers: dict
    private_answers: dict

    def row(self, counts: dict) -> list:
        return [counts.get(t, 0) for t in QUERY_TYPES] + [sum(counts.values())]


def stats(queries: list[BenchmarkQuery]) -> BenchmarkStats:
    q, pub, priv = {}, {}, {}
    for bq in queries:
        q[bq.qtype] = q.get(bq.qtype, 0) + 1
        pub[bq.qtype] = pub.get(bq.qtype, 0) + len(bq.test_answers.public_members)
        priv[bq.qtype] = priv.get(bq.qtype, 0) + len(bq.test_answers.private_members)
    return BenchmarkStats(q, pub, priv)


def format_stats(s: BenchmarkStats) -> str:
    lines = ["\t".join(["Answers"] + list(QUERY_TYPES) + ["All"])]
    for label, counts in (("Queries", s.queries), ("Public", s.public_answers),
                          ("Private", s.private_answers)):
        lines.append("\t".join([label] + [str(c) for c in s.row(counts)]))
    return "\n".join(lines) + "\n"


# -- flat files --------------------------------------------------------------
#
# One line per query: QUERY_SEXPR \t TRAIN \t VALID \t TEST_PUBLIC \t TEST_PRIVATE
# with comma-separated, sorted vertex names (empty field = empty set).


def _names(g, members) -> str:
    return ",".join(sorted(g.vertex_name(v) for v in members))


def query_line(bq: BenchmarkQuery, g: KnowledgeGraph) -> str:
    return "\t".join([
        serialize(bq.query, g),
        _names(g, bq.train_answers),
        _names(g, bq.valid_answers),
        _names(g, bq.test_answers.public_members),
        _names(g, bq.test_answers.private_members),
    ])


def parse_query_line(line: str, g: KnowledgeGraph) -> BenchmarkQuery:
    fields = line.rstrip("\n").split("\t")
    if len(fields) != 5:
        raise BenchmarkError("benchmark line needs 5 fields, got %d" % len(fields))

    def vset(field):
        return frozenset(g.vertex_id(n) for n in field.split(",") if n)

    q = parse_query(fields[0], g)
    return BenchmarkQuery(
        query=q,
        qtype=classify_type(q),
        train_answers=vset(fields[1]),
        valid_answers=vset(fields[2]),
        test_answers=TaggedAnswerSet(vset(fields[3]), vset(fields[4])),
    )


def write_benchmark(path, queries: list[BenchmarkQuery], g: KnowledgeGraph) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for bq in queries:
            f.write(query_line(bq, g) + "\n")


def read_benchmark(path, g: KnowledgeGraph) -> list[BenchmarkQuery]:
    out = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            if line.strip():
                out.append(parse_query_line(line, g))
    return out


def validation_subset(queries: list[BenchmarkQuery]) -> list[BenchmarkQuery]:
    """Queries with at least one validation answer beyond their train answers."""
    return [bq for bq in queries if bq.valid_answers - bq.train_answers]


def training_subset(queries: list[BenchmarkQuery]) -> list[BenchmarkQuery]:
    return [bq for bq in queries if bq.train_answers]
