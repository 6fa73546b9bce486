"""Query encoders: a vector model (GQE-style), a box model (Q2B-style), and a
particle-set model (Q2P-style).

Every encoder maps a query tree to one embedding per DNF disjunct, scores all
vertices against an embedding, and exposes softmax probabilities over a
candidate set. Backward projections use a dedicated inverse-relation row, so
each relation owns two embedding rows.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ParameterStore, Tensor
from .graph import KnowledgeGraph
from .queries import Anchor, Intersection, Projection, QueryNode, Union, to_dnf

DEFAULT_DIM = 64
DEFAULT_PARTICLES = 3
DEFAULT_ALPHA = 0.02


class EncoderError(Exception):
    pass


@dataclass(frozen=True)
class VectorEmbedding:
    vec: Tensor


@dataclass(frozen=True)
class BoxEmbedding:
    center: Tensor
    offset: Tensor


@dataclass(frozen=True)
class ParticleEmbedding:
    particles: Tensor  # (m, d); m grows at intersections (particle merge)


def _uniform(rng, shape, limit):
    return rng.uniform(-limit, limit, size=shape)


def _xavier(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class Encoder:
    kind = "base"

    def __init__(self, graph: KnowledgeGraph, dim: int = DEFAULT_DIM, seed: int = 0,
                 n_particles: int = DEFAULT_PARTICLES, alpha: float = DEFAULT_ALPHA):
        self.graph = graph
        self.dim = dim
        self.n_particles = n_particles
        self.alpha = alpha
        self.store = ParameterStore()
        rng = np.random.default_rng(seed)
        self._build(rng)

    # -- subclass surface ---------------------------------------------------

    def _build(self, rng):
        raise NotImplementedError

    def anchor(self, v: int):
        raise NotImplementedError

    def project(self, emb, rel: int, direction: str):
        raise NotImplementedError

    def intersect(self, embs: list):
        raise NotImplementedError

    def scores_one(self, emb) -> Tensor:
        """Scores of all vertices against a single disjunct embedding, shape (nv,)."""
        raise NotImplementedError

    def perturb(self, emb, rng, sigma: float):
        """Embedding with seeded isotropic Gaussian noise added (inference only)."""
        raise NotImplementedError

    # -- shared machinery -----------------------------------------------------

    def _rel_row(self, rel: int, direction: str) -> int:
        return 2 * rel + (0 if direction == "forward" else 1)

    def encode(self, q: QueryNode) -> list:
        """One embedding per DNF disjunct."""
        return [self._encode_node(d) for d in to_dnf(q).disjuncts]

    def _encode_node(self, node):
        if isinstance(node, Anchor):
            return self.anchor(node.vertex)
        if isinstance(node, Projection):
            return self.project(self._encode_node(node.child), node.rel, node.direction)
        if isinstance(node, Intersection):
            if len(node.children) < 2:
                raise EncoderError("intersection arity must be >= 2")
            return self.intersect([self._encode_node(c) for c in node.children])
        if isinstance(node, Union):
            raise EncoderError("union must be removed by DNF before encoding")
        raise EncoderError("not a query node: %r" % (node,))

    def scores_all(self, disjuncts: list) -> Tensor:
        """Scores of all vertices; max over disjuncts."""
        if not disjuncts:
            raise EncoderError("empty disjunct list")
        if len(disjuncts) == 1:
            return self.scores_one(disjuncts[0])
        return ad.reduce_max(ad.stack([self.scores_one(d) for d in disjuncts], axis=0), axis=0)

    def score(self, disjuncts: list, v: int) -> Tensor:
        if not 0 <= v < self.graph.num_vertices():
            raise EncoderError("unknown vertex id %d" % v)
        return ad.rows(self.scores_all(disjuncts), v)

    def log_probabilities(self, disjuncts: list, candidates=None) -> tuple[Tensor, np.ndarray]:
        """Log-softmax over candidate scores; returns (log-probs, candidate ids)."""
        scores = self.scores_all(disjuncts)
        if candidates is None:
            cand = np.arange(self.graph.num_vertices())
            return ad.log_softmax(scores, axis=0), cand
        cand = np.asarray(sorted(candidates), dtype=np.intp)
        if cand.size == 0:
            raise EncoderError("empty candidate set")
        return ad.log_softmax(ad.rows(scores, cand), axis=0), cand

    def probability(self, disjuncts: list, v: int, candidates=None) -> Tensor:
        logp, cand = self.log_probabilities(disjuncts, candidates)
        where = np.nonzero(cand == v)[0]
        if where.size == 0:
            raise EncoderError("vertex %d not in candidate set" % v)
        return ad.exp(ad.rows(logp, int(where[0])))

    def post_step(self) -> None:
        """Hook applied after each optimizer step (constraint re-projection)."""

    # -- checkpointing ----------------------------------------------------------

    def manifest(self) -> dict:
        return {"kind": self.kind, "dim": self.dim, "n_particles": self.n_particles,
                "alpha": self.alpha, "n_vertices": self.graph.num_vertices(),
                "n_relations": len(self.graph.relations)}

    def save(self, path) -> None:
        self.store.save(path, header_extra=json.dumps(self.manifest(), sort_keys=True))


def load_encoder(path, graph: KnowledgeGraph) -> "Encoder":
    with open(path, encoding="utf-8") as f:
        header = f.readline()
    manifest = json.loads(header[len("# privkg-params v1"):])
    if manifest["n_vertices"] != graph.num_vertices() or \
            manifest["n_relations"] != len(graph.relations):
        raise EncoderError("checkpoint vocabulary does not match the graph")
    model = make_encoder(manifest["kind"], graph, dim=manifest["dim"],
                         n_particles=manifest["n_particles"], alpha=manifest["alpha"])
    model.store.load(path)
    return model


# -- vector model (translation projection, FFN-pooled intersection) ----------


class GQEEncoder(Encoder):
    kind = "gqe"

    def _build(self, rng):
        nv, nr, d = self.graph.num_vertices(), len(self.graph.relations), self.dim
        limit = 1.0 / np.sqrt(d)
        self.ent = self.store.add("ent", _uniform(rng, (nv, d), limit))
        self.rel = self.store.add("rel", _uniform(rng, (2 * nr, d), limit))
        self.ffn_w = self.store.add("int.ffn_w", _xavier(rng, d, d))
        self.ffn_b = self.store.add("int.ffn_b", np.zeros(d))
        self.post_w = self.store.add("int.post_w", _xavier(rng, d, d))

    def anchor(self, v):
        return VectorEmbedding(ad.rows(self.ent, v))

    def project(self, emb, rel, direction):
        return VectorEmbedding(emb.vec + ad.rows(self.rel, self._rel_row(rel, direction)))

    def intersect(self, embs):
        stacked = ad.stack([e.vec for e in embs], axis=0)
        hidden = ad.relu(ad.matmul(stacked, self.ffn_w) + self.ffn_b)
        pooled = ad.reduce_mean(hidden, axis=0)
        return VectorEmbedding(ad.matmul(pooled, self.post_w))

    def scores_one(self, emb):
        diff = ad.subtract(self.ent, emb.vec)
        return -ad.sqrt(ad.reduce_sum(diff * diff, axis=1))

    def perturb(self, emb, rng, sigma):
        noise = ad.Tensor(rng.normal(0.0, sigma, size=self.dim))
        return VectorEmbedding(emb.vec + noise)


# -- box model ----------------------------------------------------------------


class Q2BEncoder(Encoder):
    kind = "q2b"

    def _build(self, rng):
        nv, nr, d = self.graph.num_vertices(), len(self.graph.relations), self.dim
        limit = 1.0 / np.sqrt(d)
        self.ent = self.store.add("ent", _uniform(rng, (nv, d), limit))
        self.rel_c = self.store.add("rel_c", _uniform(rng, (2 * nr, d), limit))
        # offsets stay elementwise >= 0: |uniform| init plus post-step clamping
        self.rel_o = self.store.add("rel_o", np.abs(_uniform(rng, (2 * nr, d), limit)))
        self.att_w1 = self.store.add("int.att_w1", _xavier(rng, 2 * d, d))
        self.att_b1 = self.store.add("int.att_b1", np.zeros(d))
        self.att_w2 = self.store.add("int.att_w2", _xavier(rng, d, d))
        self.att_b2 = self.store.add("int.att_b2", np.zeros(d))
        self.ds_w1 = self.store.add("int.ds_w1", _xavier(rng, 2 * d, d))
        self.ds_b1 = self.store.add("int.ds_b1", np.zeros(d))
        self.ds_w2 = self.store.add("int.ds_w2", _xavier(rng, d, d))
        self.ds_b2 = self.store.add("int.ds_b2", np.zeros(d))

    def anchor(self, v):
        return BoxEmbedding(ad.rows(self.ent, v), ad.Tensor(np.zeros(self.dim)))

    def project(self, emb, rel, direction):
        row = self._rel_row(rel, direction)
        return BoxEmbedding(emb.center + ad.rows(self.rel_c, row),
                            emb.offset + ad.rows(self.rel_o, row))

    def intersect(self, embs):
        full = [ad.concat([e.center, e.offset], axis=0) for e in embs]
        # per-dimension attention over the input boxes
        logits = ad.stack([ad.matmul(ad.relu(ad.matmul(f, self.att_w1) + self.att_b1),
                                     self.att_w2) + self.att_b2 for f in full], axis=0)
        weights = ad.softmax(logits, axis=0)
        centers = ad.stack([e.center for e in embs], axis=0)
        new_center = ad.reduce_sum(weights * centers, axis=0)
        # DeepSets({q_k}) = MLP(mean_k MLP(q_k)); sigmoid keeps the shrink in (0, 1)
        inner = ad.reduce_mean(ad.stack(
            [ad.relu(ad.matmul(f, self.ds_w1) + self.ds_b1) for f in full], axis=0), axis=0)
        shrink = ad.sigmoid(ad.matmul(inner, self.ds_w2) + self.ds_b2)
        min_offset = ad.reduce_min(ad.stack([e.offset for e in embs], axis=0), axis=0)
        return BoxEmbedding(new_center, min_offset * shrink)

    def scores_one(self, emb):
        q_max = emb.center + emb.offset
        q_min = emb.center - emb.offset
        outside = ad.reduce_sum(ad.relu(ad.subtract(self.ent, q_max)) +
                                ad.relu(ad.subtract(q_min, self.ent)), axis=1)
        clipped = ad.minimum(q_max, ad.maximum(q_min, self.ent))
        inside = ad.reduce_sum(ad.absolute(ad.subtract(emb.center, clipped)), axis=1)
        return -(outside + self.alpha * inside)

    def perturb(self, emb, rng, sigma):
        center = emb.center + ad.Tensor(rng.normal(0.0, sigma, size=self.dim))
        offset = ad.relu(emb.offset + ad.Tensor(rng.normal(0.0, sigma, size=self.dim)))
        return BoxEmbedding(center, offset)

    def post_step(self):
        np.maximum(self.rel_o.data, 0.0, out=self.rel_o.data)


# -- particle model --------------------------------------------------------------


class Q2PEncoder(Encoder):
    kind = "q2p"

    def _build(self, rng):
        nv, nr, d, k = (self.graph.num_vertices(), len(self.graph.relations),
                        self.dim, self.n_particles)
        limit = 1.0 / np.sqrt(d)
        self.ent = self.store.add("ent", _uniform(rng, (nv, d), limit))
        self.rel = self.store.add("rel", _uniform(rng, (2 * nr, d), limit))
        # per-particle offsets break the symmetry of duplicated anchor particles
        self.part_init = self.store.add("part_init", _uniform(rng, (k, d), limit))
        for gate in ("z", "r", "h"):
            self.store.add("proj.w_%s" % gate, _xavier(rng, d, d))
            self.store.add("proj.u_%s" % gate, _xavier(rng, d, d))
            self.store.add("proj.b_%s" % gate, np.zeros(d))
        for name in ("proj.att_q", "proj.att_k", "proj.att_v",
                     "int.att_q", "int.att_k", "int.att_v"):
            self.store.add(name, _xavier(rng, d, d))
        self.store.add("int.mlp_w1", _xavier(rng, d, d))
        self.store.add("int.mlp_b1", np.zeros(d))
        self.store.add("int.mlp_w2", _xavier(rng, d, d))
        self.store.add("int.mlp_b2", np.zeros(d))

    def anchor(self, v):
        return ParticleEmbedding(self.part_init + ad.rows(self.ent, v))

    def project(self, emb, rel, direction):
        s = self.store
        p = emb.particles
        e = ad.rows(self.rel, self._rel_row(rel, direction))
        update = ad.sigmoid(ad.matmul(e, s["proj.w_z"]) + ad.matmul(p, s["proj.u_z"]) + s["proj.b_z"])
        reset = ad.sigmoid(ad.matmul(e, s["proj.w_r"]) + ad.matmul(p, s["proj.u_r"]) + s["proj.b_r"])
        cand = ad.tanh(ad.matmul(e, s["proj.w_h"]) + ad.matmul(reset * p, s["proj.u_h"]) + s["proj.b_h"])
        gated = (ad.subtract(1.0, update)) * p + update * cand
        moved = ad.attention(ad.matmul(gated, s["proj.att_q"]),
                             ad.matmul(gated, s["proj.att_k"]),
                             ad.matmul(gated, s["proj.att_v"]))
        return ParticleEmbedding(moved)

    def intersect(self, embs):
        s = self.store
        merged = ad.concat([e.particles for e in embs], axis=0)
        mixed = ad.attention(ad.matmul(merged, s["int.att_q"]),
                             ad.matmul(merged, s["int.att_k"]),
                             ad.matmul(merged, s["int.att_v"]))
        hidden = ad.relu(ad.matmul(mixed, s["int.mlp_w1"]) + s["int.mlp_b1"])
        return ParticleEmbedding(ad.matmul(hidden, s["int.mlp_w2"]) + s["int.mlp_b2"])

    def scores_one(self, emb):
        nv = self.graph.num_vertices()
        diff = ad.subtract(ad.reshape(self.ent, (nv, 1, self.dim)), emb.particles)
        dists = ad.sqrt(ad.reduce_sum(diff * diff, axis=2))  # (nv, m)
        return -ad.reduce_min(dists, axis=1)  # max over particles of -dist

    def perturb(self, emb, rng, sigma):
        noise = ad.Tensor(rng.normal(0.0, sigma, size=emb.particles.shape))
        return ParticleEmbedding(emb.particles + noise)


ENCODERS = {"gqe": GQEEncoder, "q2b": Q2BEncoder, "q2p": Q2PEncoder}


def make_encoder(kind: str, graph: KnowledgeGraph, dim: int = DEFAULT_DIM, seed: int = 0,
                 n_particles: int = DEFAULT_PARTICLES, alpha: float = DEFAULT_ALPHA) -> Encoder:
    try:
        cls = ENCODERS[kind]
    except KeyError:
        raise EncoderError("unknown encoder kind %r (expected gqe, q2b, or q2p)" % kind) from None
    return cls(graph, dim=dim, seed=seed, n_particles=n_particles, alpha=alpha)
