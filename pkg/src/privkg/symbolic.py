"""Exact set-semantics query evaluation plus privacy-tagged evaluation.

``evaluate`` walks the query DAG bottom-up over the adjacency indices.
``evaluate_tagged`` additionally splits every answer into publicly-derivable
vs privacy-threatening members. ``brute_force_oracle`` re-derives answers by
enumerating variable assignments over the raw triple set and shares no code
with the traversal path.
"""

from __future__ import annotations

from dataclasses import dataclass

from .graph import KnowledgeGraph, Triple
from .queries import Anchor, Intersection, Projection, QueryNode, Union

RELAXED = "relaxed"
STRICT = "strict"

ORACLE_VERTEX_LIMIT = 1000


class EvalError(Exception):
    pass


@dataclass(frozen=True)
class TaggedAnswerSet:
    """Answers split into publicly-derivable and privacy-threatening members."""
    public_members: frozenset[int]
    private_members: frozenset[int]

    def all_members(self) -> frozenset[int]:
        return self.public_members | self.private_members


def _image(g: KnowledgeGraph, members, rel, direction, view) -> frozenset[int]:
    out = set()
    for v in members:
        out |= g.neighbors(v, rel, direction, view)
    return frozenset(out)


def evaluate(g: KnowledgeGraph, q: QueryNode, view: str = "full") -> frozenset[int]:
    """Answer set of ``q`` on ``g``; ``view="public"`` ignores private triples."""
    memo: dict[QueryNode, frozenset[int]] = {}

    def rec(node):
        if node in memo:
            return memo[node]
        if isinstance(node, Anchor):
            result = frozenset((node.vertex,))
        elif isinstance(node, Projection):
            result = _image(g, rec(node.child), node.rel, node.direction, view)
        elif isinstance(node, Intersection):
            sets = [rec(c) for c in node.children]
            result = frozenset.intersection(*sets)
        elif isinstance(node, Union):
            result = frozenset().union(*[rec(c) for c in node.children])
        else:
            raise EvalError("not a query node: %r" % (node,))
        memo[node] = result
        return result

    return rec(q)


def evaluate_tagged(g: KnowledgeGraph, q: QueryNode, mode: str = RELAXED) -> TaggedAnswerSet:
    """Evaluate with privacy tags.

    In both modes a projection result is public iff it is reachable from a
    public child member through at least one public triple. Strict mode
    additionally forces the whole image of the child's private members into
    the private side, even where publicly derivable.

    Intersection: public = intersection of children's public sets.
    Union: public = union of children's public sets. Private is always the
    rest of the full answer set.
    """
    if mode not in (RELAXED, STRICT):
        raise EvalError("mode must be relaxed or strict, got %r" % mode)
    memo: dict[QueryNode, tuple[frozenset[int], frozenset[int]]] = {}

    def rec(node):
        # returns (full, private); public = full - private
        if node in memo:
            return memo[node]
        if isinstance(node, Anchor):
            result = (frozenset((node.vertex,)), frozenset())
        elif isinstance(node, Projection):
            child_full, child_priv = rec(node.child)
            child_pub = child_full - child_priv
            full = _image(g, child_full, node.rel, node.direction, "full")
            pub = _image(g, child_pub, node.rel, node.direction, "public")
            priv = full - pub
            if mode == STRICT:
                priv = priv | _image(g, child_priv, node.rel, node.direction, "full")
            result = (full, priv)
        elif isinstance(node, Intersection):
            parts = [rec(c) for c in node.children]
            full = frozenset.intersection(*[f for f, _ in parts])
            pub = frozenset.intersection(*[f - p for f, p in parts])
            result = (full, full - pub)
        elif isinstance(node, Union):
            parts = [rec(c) for c in node.children]
            full = frozenset().union(*[f for f, _ in parts])
            pub = frozenset().union(*[f - p for f, p in parts])
            result = (full, full - pub)
        else:
            raise EvalError("not a query node: %r" % (node,))
        memo[node] = result
        return result

    full, priv = rec(q)
    return TaggedAnswerSet(public_members=full - priv, private_members=priv)


# -- independent oracle -------------------------------------------------------
#
# Queries compile to disjuncts of atoms over constants and numbered variables
# (variable 0 is the target); answers come from backtracking enumeration over
# the vertex table, checking membership in the raw triple set only.

CONST = "const"
VAR = "var"


def _compile(node, out_term, fresh):
    """Return a list of (atoms, equalities) pairs, one per disjunct.

    atom: (head_term, rel, tail_term); equality: (var_index, vertex)."""
    if isinstance(node, Anchor):
        if out_term[0] == VAR:
            return [([], [(out_term[1], node.vertex)])]
        return [([], [])] if out_term[1] == node.vertex else []
    if isinstance(node, Projection):
        if isinstance(node.child, Anchor):
            child_term = (CONST, node.child.vertex)
            child_disjuncts = [([], [])]
        else:
            child_term = (VAR, fresh[0])
            fresh[0] += 1
            child_disjuncts = _compile(node.child, child_term, fresh)
        if node.direction == "forward":
            atom = (child_term, node.rel, out_term)
        else:
            atom = (out_term, node.rel, child_term)
        return [(atoms + [atom], eqs) for atoms, eqs in child_disjuncts]
    if isinstance(node, Intersection):
        combos = [([], [])]
        for child in node.children:
            child_disjuncts = _compile(child, out_term, fresh)
            combos = [(a1 + a2, e1 + e2)
                      for a1, e1 in combos for a2, e2 in child_disjuncts]
        return combos
    if isinstance(node, Union):
        out = []
        for child in node.children:
            out.extend(_compile(child, out_term, fresh))
        return out
    raise EvalError("not a query node: %r" % (node,))


def brute_force_oracle(g: KnowledgeGraph, q: QueryNode) -> frozenset[int]:
    """Enumerate all assignments of the query's variables; collect targets."""
    if g.num_vertices() > ORACLE_VERTEX_LIMIT:
        raise EvalError("oracle guard: graph has %d vertices (limit %d)"
                        % (g.num_vertices(), ORACLE_VERTEX_LIMIT))
    fresh = [1]  # variable 0 is the target
    disjuncts = _compile(q, (VAR, 0), fresh)
    nvars = fresh[0]
    vertices = range(g.num_vertices())
    triples = g.triples
    answers: set[int] = set()

    def term_value(term, assignment):
        return term[1] if term[0] == CONST else assignment.get(term[1])

    for atoms, eqs in disjuncts:
        assignment: dict[int, int] = {}
        pinned = {}
        consistent = True
        for var, vertex in eqs:
            if pinned.get(var, vertex) != vertex:
                consistent = False
                break
            pinned[var] = vertex
        if not consistent:
            continue

        # an atom is checked once, at the level where its last variable binds
        def atom_level(atom):
            h, _, t = atom
            level = -1
            if h[0] == VAR:
                level = max(level, h[1])
            if t[0] == VAR:
                level = max(level, t[1])
            return level

        buckets: dict[int, list] = {}
        ground_ok = True
        for atom in atoms:
            level = atom_level(atom)
            if level < 0:
                h, r, t = atom
                if Triple(h[1], r, t[1]) not in triples:
                    ground_ok = False
                    break
            else:
                buckets.setdefault(level, []).append(atom)
        if not ground_ok:
            continue

        def check_level(i, assignment):
            for h, r, t in buckets.get(i, ()):
                if Triple(term_value(h, assignment), r, term_value(t, assignment)) not in triples:
                    return False
            return True

        def enumerate_var(i, assignment):
            if i == nvars:
                answers.add(assignment[0])
                return
            domain = (pinned[i],) if i in pinned else vertices
            for v in domain:
                assignment[i] = v
                if check_level(i, assignment):
                    enumerate_var(i + 1, assignment)
            del assignment[i]

        enumerate_var(0, assignment)
    return frozenset(answers)
