"""In-memory knowledge graph: interned vertices/relations, indexed triples,
and a per-triple private flag on attribute edges.

Graphs are immutable after construction; ``mark_private`` and ``public_view``
return new views sharing the vertex and relation tables.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple

REL = "rel"
ATTR = "attr"


class GraphError(Exception):
    pass


@dataclass(frozen=True)
class Relation:
    id: int
    name: str
    kind: str  # REL or ATTR


class Triple(NamedTuple):
    head: int
    rel: int
    tail: int


class KnowledgeGraph:
    def __init__(self, vertex_names, relations, triples, private=frozenset()):
        self.vertex_names: tuple[str, ...] = tuple(vertex_names)
        self.relations: tuple[Relation, ...] = tuple(relations)
        self.triples: frozenset[Triple] = frozenset(triples)
        self.private: frozenset[Triple] = frozenset(private)
        self._vid = {name: i for i, name in enumerate(self.vertex_names)}
        self._rid = {r.name: r.id for r in self.relations}
        if len(self._vid) != len(self.vertex_names):
            raise GraphError("duplicate vertex name")
        if len(self._rid) != len(self.relations):
            raise GraphError("duplicate relation name")
        for t in self.triples:
            if not (0 <= t.head < len(self.vertex_names) and 0 <= t.tail < len(self.vertex_names)):
                raise GraphError("triple endpoint outside vertex table: %r" % (t,))
        for t in self.private:
            if t not in self.triples:
                raise GraphError("private triple not in graph: %r" % (t,))
            if self.relations[t.rel].kind != ATTR:
                raise GraphError("private flag on non-attribute triple: %r" % (t,))
        self._fwd: dict[tuple[int, int], frozenset[int]] = {}
        self._bwd: dict[tuple[int, int], frozenset[int]] = {}
        fwd: dict[tuple[int, int], set[int]] = {}
        bwd: dict[tuple[int, int], set[int]] = {}
        for h, r, t in self.triples:
            fwd.setdefault((h, r), set()).add(t)
            bwd.setdefault((t, r), set()).add(h)
        self._fwd = {k: frozenset(v) for k, v in fwd.items()}
        self._bwd = {k: frozenset(v) for k, v in bwd.items()}

    # -- lookups -----------------------------------------------------------

    def num_vertices(self) -> int:
        return len(self.vertex_names)

    def vertex_id(self, name: str) -> int:
        try:
            return self._vid[name]
        except KeyError:
            raise GraphError("unknown vertex %r" % name) from None

    def relation_id(self, name: str) -> int:
        try:
            return self._rid[name]
        except KeyError:
            raise GraphError("unknown relation %r" % name) from None

    def vertex_name(self, vid: int) -> str:
        return self.vertex_names[vid]

    def relation_name(self, rid: int) -> str:
        return self.relations[rid].name

    def neighbors(self, v: int, r: int, direction: str = "forward", view: str = "full") -> frozenset[int]:
        """Forward: tails of (v, r, *). Backward: heads of (*, r, v).

        ``view="public"`` excludes private triples.
        """
        if not 0 <= v < len(self.vertex_names):
            raise GraphError("unknown vertex id %d" % v)
        if not 0 <= r < len(self.relations):
            raise GraphError("unknown relation id %d" % r)
        if direction == "forward":
            result = self._fwd.get((v, r), frozenset())
            if view == "public" and self.private:
                result = frozenset(t for t in result if Triple(v, r, t) not in self.private)
        elif direction == "backward":
            result = self._bwd.get((v, r), frozenset())
            if view == "public" and self.private:
                result = frozenset(h for h in result if Triple(h, r, v) not in self.private)
        else:
            raise GraphError("direction must be forward or backward, got %r" % direction)
        return result

    def attribute_triples(self) -> frozenset[Triple]:
        return frozenset(t for t in self.triples if self.relations[t.rel].kind == ATTR)

    # -- derived views -----------------------------------------------------

    def mark_private(self, triples: Iterable[Triple]) -> "KnowledgeGraph":
        marked = frozenset(triples)
        for t in marked:
            if t not in self.triples:
                raise GraphError("cannot mark absent triple private: %r" % (t,))
            if self.relations[t.rel].kind != ATTR:
                raise GraphError("privacy applies only to attribute triples: %r" % (t,))
        return KnowledgeGraph(self.vertex_names, self.relations, self.triples, marked)

    def public_view(self) -> "KnowledgeGraph":
        """Drop private triples; vertex table unchanged (vertices may isolate)."""
        return KnowledgeGraph(self.vertex_names, self.relations, self.triples - self.private)

    def with_triples(self, triples: Iterable[Triple], private=frozenset()) -> "KnowledgeGraph":
        """New graph over the same vertex/relation tables with another edge set."""
        return KnowledgeGraph(self.vertex_names, self.relations, triples, private)


@dataclass(frozen=True)
class GraphSplit:
    """Cumulative train/valid/test graphs plus the held-out private edges.

    The test graph carries the private edges, flagged private."""
    train: KnowledgeGraph
    valid: KnowledgeGraph
    test: KnowledgeGraph
    private: frozenset[Triple]


# -- flat-file ingestion ----------------------------------------------------


def _read_tsv(path, n_fields, what):
    out = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) != n_fields:
                raise GraphError("%s: malformed line %d (expected %d tab-separated fields): %r"
                                 % (what, lineno, n_fields, line))
            out.append((lineno, fields))
    return out


def load_schema(path) -> dict[str, str]:
    """Schema file: ``relation<TAB>{rel|attr}`` per line."""
    schema = {}
    for lineno, (name, kind) in _read_tsv(path, 2, "schema"):
        if kind not in (REL, ATTR):
            raise GraphError("schema line %d: kind must be rel or attr, got %r" % (lineno, kind))
        schema[name] = kind
    return schema


def from_named_triples(named_triples, schema: dict[str, str]) -> KnowledgeGraph:
    """Build a graph from (head, relation, tail) name triples.

    Ids are assigned in first-appearance order, so loading is deterministic."""
    vnames: list[str] = []
    vid: dict[str, int] = {}
    relations: list[Relation] = []
    rid: dict[str, int] = {}

    def intern_vertex(name):
        if name not in vid:
            vid[name] = len(vnames)
            vnames.append(name)
        return vid[name]

    triples = set()
    for h, r, t in named_triples:
        if r not in schema:
            raise GraphError("relation %r missing from schema" % r)
        if r not in rid:
            rid[r] = len(relations)
            relations.append(Relation(len(relations), r, schema[r]))
        triples.add(Triple(intern_vertex(h), rid[r], intern_vertex(t)))
    return KnowledgeGraph(vnames, relations, triples)


def load_triples(path, schema: dict[str, str]) -> KnowledgeGraph:
    """Load a TSV triple file (``head<TAB>relation<TAB>tail``, '#' comments).

    Duplicate lines collapse to one triple (set semantics)."""
    rows = _read_tsv(path, 3, "triples")
    return from_named_triples([tuple(fields) for _, fields in rows], schema)


def load_triple_set(path, g: KnowledgeGraph) -> frozenset[Triple]:
    """Read a TSV triple file and resolve against an existing graph."""
    out = set()
    for lineno, (h, r, t) in _read_tsv(path, 3, "triples"):
        out.add(Triple(g.vertex_id(h), g.relation_id(r), g.vertex_id(t)))
    return frozenset(out)


def write_triples(path, g: KnowledgeGraph, triples: Iterable[Triple]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for h, r, t in sorted(triples):
            f.write("%s\t%s\t%s\n" % (g.vertex_name(h), g.relation_name(r), g.vertex_name(t)))
