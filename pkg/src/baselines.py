"""
Baseline Tag Recommenders
-------------------------
Comparison points for the cognitive recommenders:

  mp / mp_u / mp_r / mp_u_r   most popular tags (global, user, resource, mixed)
  cf_user                     user-based CF over cosine similarity of tag profiles
  adapted_pagerank / apr      PageRank over the user-resource-tag co-occurrence graph
  folkrank                    differential APR personalized at (user, resource)
  girptm                      exponential recency-weighted frequency mixed with MPr
  bll_c                       base-level activation mixed with MPr

Every recommender returns a ranked list of (tag label, score) with the shared
tie rules from cognitive.rank_tags.
"""
from __future__ import annotations

import logging
import math
import threading
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Tuple

import networkx as nx
import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator
from scipy import sparse

from cognitive import (
    ColdUserError,
    MixParams,
    RankedTags,
    mix_components,
    rank_tags,
    recency_table,
    recency_weights,
)
from folksonomy import RESOURCE, TAG, USER, EntityId, Folksonomy

logger = logging.getLogger(__name__)


class CfConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="ignore")

    neighborhood_size: int = 20
    similarity: str = "cosine"

    @field_validator("neighborhood_size")
    @classmethod
    def validate_neighbors(cls, v: int) -> int:
        if v < 1:
            raise ValueError("neighborhood_size must be >= 1")
        return v

    @field_validator("similarity")
    @classmethod
    def validate_similarity(cls, v: str) -> str:
        if v != "cosine":
            raise ValueError(f"Unsupported similarity: {v}")
        return v


class FolkRankConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="ignore")

    damping: float = 0.7
    tol: float = 1e-8
    max_iter: int = 200

    @field_validator("damping")
    @classmethod
    def validate_damping(cls, v: float) -> float:
        if not 0.0 < v < 1.0:
            raise ValueError("damping must be in (0, 1)")
        return v

    @field_validator("tol")
    @classmethod
    def validate_tol(cls, v: float) -> float:
        if v <= 0:
            raise ValueError("tol must be > 0")
        return v

    @field_validator("max_iter")
    @classmethod
    def validate_max_iter(cls, v: int) -> int:
        if v < 1:
            raise ValueError("max_iter must be >= 1")
        return v


# -- popularity -------------------------------------------------------------

def _counts_to_scores(counts: Mapping[int, int]) -> Dict[int, float]:
    return {j: float(c) for j, c in counts.items() if c > 0}


def mp(train: Folksonomy, k: int) -> RankedTags:
    """Same globally most frequent tags for every query."""
    scores = {int(j): float(c) for j, c in enumerate(train.global_tag_counts) if c > 0}
    return rank_tags(scores, train.vocabulary.tags, k)


def mp_u(train: Folksonomy, u: EntityId, k: int) -> RankedTags:
    return rank_tags(_counts_to_scores(train.user_tags(u)), train.vocabulary.tags, k)


def mp_r(train: Folksonomy, r: EntityId, k: int) -> RankedTags:
    return rank_tags(_counts_to_scores(train.resource_tags(r)), train.vocabulary.tags, k)


def _mix_with_resource(train: Folksonomy, r: EntityId, user_scores: Mapping[int, float], p: MixParams) -> RankedTags:
    resource_counts = train.resource_tags(r)
    mixed = mix_components(user_scores, resource_counts, p.beta)
    return rank_tags(mixed, train.vocabulary.tags, p.k, tie_counts=resource_counts)


def mp_u_r(train: Folksonomy, u: EntityId, r: EntityId, p: MixParams = MixParams()) -> RankedTags:
    return _mix_with_resource(train, r, _counts_to_scores(train.user_tags(u)), p)


# -- collaborative filtering -----------------------------------------------

class CfIndex:
    """Row-normalized user x tag matrix; cosine similarity is a dot product."""

    def __init__(self, train: Folksonomy) -> None:
        counts = train.user_tag_counts.astype(np.float64)
        norms = np.sqrt(np.asarray(counts.multiply(counts).sum(axis=1)).ravel())
        inv = np.divide(1.0, norms, out=np.zeros_like(norms), where=norms > 0)
        self.normalized = sparse.csr_matrix(sparse.diags(inv) @ counts)

    def similarities(self, u: EntityId) -> np.ndarray:
        if u.kind != USER or not 0 <= u.index < self.normalized.shape[0]:
            return np.zeros(self.normalized.shape[0])
        row = self.normalized.getrow(u.index)
        return np.asarray((self.normalized @ row.T).todense()).ravel()

    def neighbors(self, u: EntityId, size: int) -> List[Tuple[int, float]]:
        """Top-`size` users by similarity > 0, excluding u; ties by user index."""
        sims = self.similarities(u)
        candidates = [(v, float(s)) for v, s in enumerate(sims) if v != u.index and s > 0]
        candidates.sort(key=lambda vs: (-vs[1], vs[0]))
        return candidates[:size]


def cf_user(
    train: Folksonomy,
    u: EntityId,
    r: EntityId,
    cfg: CfConfig = CfConfig(),
    k: int = 10,
    index: Optional[CfIndex] = None,
) -> RankedTags:
    """Tags the user's neighbors gave r, weighted by similarity.

    Falls back to the neighbors' whole tag profiles when none of them tagged r.
    """
    if not train.has_posts(u):
        return []
    idx = index if index is not None else CfIndex(train)
    neighbors = idx.neighbors(u, cfg.neighborhood_size)
    if not neighbors:
        return []

    tags_on_r: Dict[int, frozenset] = {}
    if r.kind == RESOURCE and 0 <= r.index < len(train.resource_posts):
        for pid in train.resource_posts[r.index]:
            post = train.posts[pid]
            tags_on_r[post.user.index] = frozenset(t.index for t in post.tags)

    scores: Dict[int, float] = {}
    for v, sim in neighbors:
        for j in tags_on_r.get(v, ()):
            scores[j] = scores.get(j, 0.0) + sim
    if not scores:
        logger.debug("No neighbor of %s tagged %s, using profile fallback", u.original, r.original)
        for v, sim in neighbors:
            for j, count in train.user_tags(train.vocabulary.users.entity(v)).items():
                scores[j] = scores.get(j, 0.0) + sim * count
    return rank_tags(scores, train.vocabulary.tags, k, tie_counts=train.resource_tags(r))


# -- graph ranking ---------------------------------------------------------

@dataclass
class GraphWeights:
    weights: Dict[EntityId, float]
    iterations: int
    residual: float
    converged: bool
    mass_history: List[float] = field(default_factory=list)

    def tag_weights(self) -> Dict[int, float]:
        return {n.index: w for n, w in self.weights.items() if n.kind == TAG}


class TripartiteGraph:
    """Undirected co-occurrence graph over the users, resources and tags of posts.

    Edge weights: user-tag and resource-tag edges count tag assignments, a
    user-resource edge counts the assignments of the post linking them.
    """

    def __init__(self, train: Folksonomy) -> None:
        graph = nx.Graph()
        for post in train.posts:
            n_tags = len(post.tags)
            _bump(graph, post.user, post.resource, n_tags)
            for tag in post.tags:
                _bump(graph, post.user, tag, 1)
                _bump(graph, post.resource, tag, 1)
        self.graph = graph
        self.nodes: List[EntityId] = sorted(graph.nodes)
        self.index: Dict[EntityId, int] = {n: i for i, n in enumerate(self.nodes)}
        adjacency = sparse.csr_matrix(nx.to_scipy_sparse_array(graph, nodelist=self.nodes, weight="weight", format="csr"))
        out_weight = np.asarray(adjacency.sum(axis=1)).ravel()
        inv = np.divide(1.0, out_weight, out=np.zeros_like(out_weight, dtype=np.float64), where=out_weight > 0)
        # row-stochastic T; propagation uses T^T
        self.transition_t = sparse.csr_matrix((sparse.diags(inv) @ adjacency).T)
        self.num_users = sum(1 for n in self.nodes if n.kind == USER)
        self.num_resources = sum(1 for n in self.nodes if n.kind == RESOURCE)
        self._lock = threading.Lock()
        self._baseline: Dict[FolkRankConfig, GraphWeights] = {}
        logger.debug("Built tripartite graph: %d nodes, %d edges", graph.number_of_nodes(), graph.number_of_edges())

    def __len__(self) -> int:
        return len(self.nodes)

    def preference_vector(self, preference: Optional[Mapping[EntityId, float]]) -> np.ndarray:
        """Normalized preference over graph nodes; None or all-zero means uniform."""
        p = np.zeros(len(self.nodes))
        for node, mass in (preference or {}).items():
            pos = self.index.get(node)
            if pos is not None:
                p[pos] += float(mass)
        total = p.sum()
        if total <= 0:
            return np.full(len(self.nodes), 1.0 / len(self.nodes))
        return p / total

    def folkrank_preference(self, u: EntityId, r: EntityId, boost: bool = True) -> Dict[EntityId, float]:
        """Base mass 1 on every node, plus |U| at u and |R| at r."""
        pref = {n: 1.0 for n in self.nodes}
        if boost:
            if u in self.index:
                pref[u] += self.num_users
            if r in self.index:
                pref[r] += self.num_resources
        return pref

    def baseline(self, cfg: FolkRankConfig) -> GraphWeights:
        """w0 (uniform preference), computed once per config."""
        with self._lock:
            cached = self._baseline.get(cfg)
        if cached is not None:
            return cached
        result = propagate(self, None, cfg)
        with self._lock:
            return self._baseline.setdefault(cfg, result)


def _bump(graph: nx.Graph, a: EntityId, b: EntityId, weight: int) -> None:
    if graph.has_edge(a, b):
        graph[a][b]["weight"] += weight
    else:
        graph.add_edge(a, b, weight=weight)


def propagate(
    graph: TripartiteGraph, preference: Optional[Mapping[EntityId, float]], cfg: FolkRankConfig
) -> GraphWeights:
    """Iterate w <- d * T^T w + (1 - d) * p from the uniform vector."""
    n = len(graph)
    p = graph.preference_vector(preference)
    w = np.full(n, 1.0 / n)
    history = [float(w.sum())]
    residual = math.inf
    iterations = 0
    while iterations < cfg.max_iter:
        nxt = cfg.damping * (graph.transition_t @ w) + (1.0 - cfg.damping) * p
        residual = float(np.abs(nxt - w).sum())
        w = nxt
        iterations += 1
        history.append(float(w.sum()))
        if residual < cfg.tol:
            break
    converged = residual < cfg.tol
    if not converged:
        logger.warning("Adapted PageRank did not converge after %d iterations (residual %.3e)", iterations, residual)
    else:
        logger.debug("Adapted PageRank converged in %d iterations (residual %.3e)", iterations, residual)
    return GraphWeights(
        weights={node: float(w[i]) for i, node in enumerate(graph.nodes)},
        iterations=iterations,
        residual=residual,
        converged=converged,
        mass_history=history,
    )


def adapted_pagerank(
    train: Folksonomy,
    preference: Optional[Mapping[EntityId, float]] = None,
    damping: float = 0.7,
    tol: float = 1e-8,
    max_iter: int = 200,
    graph: Optional[TripartiteGraph] = None,
) -> GraphWeights:
    g = graph if graph is not None else TripartiteGraph(train)
    return propagate(g, preference, FolkRankConfig(damping=damping, tol=tol, max_iter=max_iter))


def apr(
    train: Folksonomy,
    u: EntityId,
    r: EntityId,
    k: int = 10,
    cfg: FolkRankConfig = FolkRankConfig(),
    graph: Optional[TripartiteGraph] = None,
) -> RankedTags:
    """Tag weights of the (u, r)-personalized run, without the differential."""
    g = graph if graph is not None else TripartiteGraph(train)
    weights = propagate(g, g.folkrank_preference(u, r), cfg).tag_weights()
    return rank_tags(weights, train.vocabulary.tags, k, tie_counts=train.resource_tags(r))


def folkrank_differential(
    graph: TripartiteGraph, u: EntityId, r: EntityId, cfg: FolkRankConfig = FolkRankConfig(), boost: bool = True
) -> Dict[int, float]:
    """w1 - w0 over tag nodes."""
    w0 = graph.baseline(cfg).tag_weights()
    w1 = propagate(graph, graph.folkrank_preference(u, r, boost=boost), cfg).tag_weights()
    return {j: w1[j] - w0[j] for j in w1}


def folkrank(
    train: Folksonomy,
    u: EntityId,
    r: EntityId,
    k: int = 10,
    cfg: FolkRankConfig = FolkRankConfig(),
    graph: Optional[TripartiteGraph] = None,
) -> RankedTags:
    """All tag nodes ranked by differential weight, highest first.

    With neither u nor r in the graph there is no boost and the result is empty.
    """
    g = graph if graph is not None else TripartiteGraph(train)
    if u not in g.index and r not in g.index:
        return []
    diff = folkrank_differential(g, u, r, cfg)
    return rank_tags(diff, train.vocabulary.tags, k, tie_counts=train.resource_tags(r))


# -- time-aware ------------------------------------------------------------

def girptm(
    train: Folksonomy, u: EntityId, r: EntityId, p: MixParams = MixParams(), mu: float = 1e-6
) -> RankedTags:
    """Exponentially decayed tag frequency of the user, mixed with MPr.

    g(j) = sum over the user's uses of j of exp(-mu * (t_ref - t_use)).
    """
    if mu < 0:
        raise ValueError("mu must be >= 0")
    posts = train.posts_of(u)
    user_scores: Dict[int, float] = {}
    if posts:
        t_ref = max(post.timestamp for post in posts)
        for post in posts:
            weight = math.exp(-mu * (t_ref - post.timestamp))
            for tag in post.tags:
                user_scores[tag.index] = user_scores.get(tag.index, 0.0) + weight
    return _mix_with_resource(train, r, user_scores, p)


def bll_c(
    train: Folksonomy, u: EntityId, r: EntityId, p: MixParams = MixParams(), d: float = 0.5
) -> RankedTags:
    """Softmax of last-use base-level activation, mixed with MPr."""
    try:
        user_scores = recency_weights(recency_table(u, train, decay=d))
    except ColdUserError:
        user_scores = {}
    return _mix_with_resource(train, r, user_scores, p)


if __name__ == "__main__":
    from folksonomy import Vocabulary, build_folksonomy, make_post

    vocab = Vocabulary()
    demo = [
        make_post(vocab, "u1", "r1", ["python", "web"], 100),
        make_post(vocab, "u1", "r2", ["python", "numpy"], 200),
        make_post(vocab, "u2", "r2", ["numpy", "science"], 250),
        make_post(vocab, "u3", "r1", ["web", "css"], 300),
    ]
    train = build_folksonomy(demo)
    user = train.vocabulary.users.get("u1")
    res = train.vocabulary.resources.get("r2")
    print("mp     ", mp(train, 3))
    print("mp_u_r ", mp_u_r(train, user, res))
    print("cf     ", cf_user(train, user, res))
    print("folkrank", folkrank(train, user, res))
    print("girptm ", girptm(train, user, res))
    print("bll_c  ", bll_c(train, user, res))
