"""
Shared builders for the test suite: small hand-made folksonomies, random
folksonomies and memories, a synthetic corpus with recency and imitation bias,
and naive reference implementations of the ranking metrics.
"""
from __future__ import annotations

import math
from typing import Dict, Iterable, List, Sequence, Set, Tuple

import numpy as np

from folksonomy import Folksonomy, Post, Vocabulary, build_folksonomy, make_post
from topic_model import LdaConfig, TopicModel

DAY = 86400
T0 = 1_300_000_000

Row = Tuple[str, str, Sequence[str], int]


def make_posts(rows: Iterable[Row], vocabulary: Vocabulary | None = None) -> List[Post]:
    vocab = vocabulary if vocabulary is not None else Vocabulary()
    return [make_post(vocab, u, r, tags, ts) for u, r, tags, ts in rows]


def make_folksonomy(rows: Iterable[Row]) -> Folksonomy:
    return build_folksonomy(make_posts(rows))


def constant_model(f: Folksonomy, num_topics: int = 4) -> TopicModel:
    """Every resource gets the same topic vector."""
    vec = np.full(num_topics, 1.0 / num_topics)
    topics = {label: vec.copy() for label in f.vocabulary.resources.labels()}
    return TopicModel(config=LdaConfig(num_topics=num_topics), resource_topics=topics)


def explicit_model(topics: Dict[str, Sequence[float]]) -> TopicModel:
    vectors = {label: np.asarray(w, dtype=np.float64) for label, w in topics.items()}
    num_topics = len(next(iter(vectors.values())))
    return TopicModel(config=LdaConfig(num_topics=num_topics), resource_topics=vectors)


def random_model(f: Folksonomy, rng: np.random.Generator, num_topics: int) -> TopicModel:
    topics = {}
    for label in f.vocabulary.resources.labels():
        w = rng.dirichlet(np.full(num_topics, 0.5))
        topics[label] = w / w.sum()
    return TopicModel(config=LdaConfig(num_topics=num_topics), resource_topics=topics)


def random_folksonomy(
    rng: np.random.Generator,
    n_posts: int = 40,
    n_users: int = 5,
    n_resources: int = 8,
    n_tags: int = 10,
    max_tags: int = 4,
) -> Folksonomy:
    rows: List[Row] = []
    for _ in range(n_posts):
        size = int(rng.integers(1, max_tags + 1))
        tags = [f"t{int(j)}" for j in rng.choice(n_tags, size=size, replace=False)]
        rows.append((f"u{int(rng.integers(n_users))}", f"r{int(rng.integers(n_resources))}", tags,
                     T0 + int(rng.integers(0, 100 * DAY))))
    return make_folksonomy(rows)


def random_user_history(
    rng: np.random.Generator, max_posts: int = 10, max_topics: int = 8, max_tags: int = 12
) -> Tuple[Folksonomy, TopicModel]:
    """One user "u" with l <= max_posts posts over m <= max_tags tags, and an n-topic model."""
    n_posts = int(rng.integers(1, max_posts + 1))
    n_topics = int(rng.integers(1, max_topics + 1))
    n_tags = int(rng.integers(1, max_tags + 1))
    rows: List[Row] = []
    for i in range(n_posts):
        size = int(rng.integers(1, n_tags + 1))
        tags = [f"t{int(j)}" for j in rng.choice(n_tags, size=size, replace=False)]
        rows.append(("u", f"r{i}", tags, T0 + int(rng.integers(0, 50)) * DAY))
    f = make_folksonomy(rows)
    return f, random_model(f, rng, n_topics)


def synthetic_folksonomy(
    seed: int = 7,
    n_users: int = 200,
    n_clusters: int = 15,
    resources_per_cluster: int = 40,
    cluster_vocab: int = 40,
) -> Folksonomy:
    """Clustered bookmarking corpus with recency and imitation bias.

    Each user follows two clusters. Within a cluster the user's personal tags
    move through four phases of four tags over the user's history, so recent
    tags predict the next post (recency). Every post also copies two of the
    resource's three canonical tags (imitation). Posts are about one day apart
    and no user bookmarks a resource twice.
    """
    rng = np.random.default_rng(seed)
    vocab = Vocabulary()
    names = [[f"c{c:02d}t{i:02d}" for i in range(cluster_vocab)] for c in range(n_clusters)]
    canonical = {
        (c, i): rng.choice(cluster_vocab, size=3, replace=False)
        for c in range(n_clusters)
        for i in range(resources_per_cluster)
    }
    posts: List[Post] = []
    for u in range(n_users):
        clusters = rng.choice(n_clusters, size=2, replace=False)
        phases = {int(c): rng.choice(cluster_vocab, size=16, replace=False).reshape(4, 4) for c in clusters}
        n_posts = int(rng.integers(20, 31))
        seen: Set[Tuple[int, int]] = set()
        t = T0 + int(rng.integers(0, 30)) * DAY
        for p in range(n_posts):
            c = int(clusters[int(rng.integers(2))])
            phase = min(p * 4 // n_posts, 3)
            i = int(rng.integers(resources_per_cluster))
            while (c, i) in seen:
                i = int(rng.integers(resources_per_cluster))
            seen.add((c, i))
            personal = rng.choice(phases[c][phase], size=2, replace=False)
            imitated = rng.choice(canonical[(c, i)], size=2, replace=False)
            tags = sorted({names[c][int(j)] for j in personal} | {names[c][int(j)] for j in imitated})
            t += DAY + int(rng.integers(-3600, 3600))
            posts.append(make_post(vocab, f"u{u:03d}", f"r{c:02d}_{i:02d}", tags, t))
    return build_folksonomy(posts)


# -- naive reference metrics -----------------------------------------------

def naive_precision(rec: Sequence[str], rel: Set[str], k: int) -> float:
    top = list(rec)[:k]
    if not top:
        return 0.0
    hits = 0
    for tag in top:
        if tag in rel:
            hits += 1
    return hits / len(top)


def naive_recall(rec: Sequence[str], rel: Set[str], k: int) -> float:
    if not rel:
        return 0.0
    hits = 0
    for tag in list(rec)[:k]:
        if tag in rel:
            hits += 1
    return hits / len(rel)


def naive_f1(rec: Sequence[str], rel: Set[str], k: int) -> float:
    p = naive_precision(rec, rel, k)
    r = naive_recall(rec, rel, k)
    return 0.0 if p + r == 0 else 2 * p * r / (p + r)


def naive_mrr(rec: Sequence[str], rel: Set[str]) -> float:
    ranks = [i + 1 for i, tag in enumerate(rec) if tag in rel]
    return 1.0 / ranks[0] if ranks else 0.0


def naive_map(rec: Sequence[str], rel: Set[str]) -> float:
    if not rel:
        return 0.0
    precisions = []
    for i, tag in enumerate(rec):
        if tag in rel:
            precisions.append(naive_precision(rec, rel, i + 1))
    return sum(precisions) / len(rel)


def naive_ndcg(rec: Sequence[str], rel: Set[str], k: int) -> float:
    if not rel:
        return 0.0
    gains = [1.0 if tag in rel else 0.0 for tag in list(rec)[:k]]
    dcg = sum(g / math.log2(i + 2) for i, g in enumerate(gains))
    ideal_hits = min(len(rel), k)
    idcg = sum(1.0 / math.log2(i + 2) for i in range(ideal_hits))
    return dcg / idcg


def random_ranking(rng: np.random.Generator, universe: int = 15, max_rec: int = 10, max_rel: int = 6) -> Tuple[List[str], Set[str]]:
    labels = [f"t{i}" for i in range(universe)]
    n_rec = int(rng.integers(0, max_rec + 1))
    n_rel = int(rng.integers(1, max_rel + 1))
    rec = [labels[int(i)] for i in rng.choice(universe, size=n_rec, replace=False)]
    rel = {labels[int(i)] for i in rng.choice(universe, size=n_rel, replace=False)}
    return rec, rel
