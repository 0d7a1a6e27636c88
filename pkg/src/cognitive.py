"""
Cognitive Tag Recommenders
--------------------------
Categorization (3L), temporal decay (3LT) and imitation (3LT+MPr).

- A user's past posts form two associated matrices: semantic rows (topic vector
  of the post's resource) and lexical rows (binary tag indicators).
- The topic vector of the target resource is the cue. Each post is activated by
  the cubed cosine similarity between cue and semantic row, and activation flows
  to the tags of that post (3L).
- 3LT scales each tag by a softmax over base-level activations
  BLL(j) = ln(dt^-d), dt being the seconds since the tag was last used.
- 3LT+MPr mixes the sum-normalized 3LT scores with the sum-normalized tag counts
  of the target resource.

sum_normalize, mix_components and rank_tags are shared by every mixed recommender.
"""
from __future__ import annotations

import logging
import math
import threading
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator
from scipy import sparse

from folksonomy import EntityId, Folksonomy, Interner
from topic_model import TopicModel, TopicVector, topic_vector

logger = logging.getLogger(__name__)

RankedTags = List[Tuple[str, float]]

PROVENANCE_3L = "3L"
PROVENANCE_3LT = "3LT"
PROVENANCE_3LT_MPR = "3LT+MPr"


class CognitiveError(ValueError):
    pass


class ColdUserError(CognitiveError):
    def __init__(self, message: str = "cold user") -> None:
        super().__init__(message)


class UnknownTagError(CognitiveError):
    def __init__(self, message: str = "tag never used by user") -> None:
        super().__init__(message)


class DimensionMismatchError(CognitiveError):
    pass


class MixParams(BaseModel):
    model_config = ConfigDict(frozen=True, extra="ignore")

    beta: float = 0.5
    k: int = 10

    @field_validator("beta")
    @classmethod
    def validate_beta(cls, v: float) -> float:
        if not 0.0 <= v <= 1.0:
            raise ValueError("beta must be in [0, 1]")
        return v

    @field_validator("k")
    @classmethod
    def validate_k(cls, v: int) -> int:
        if v < 1:
            raise ValueError("k must be >= 1")
        return v


@dataclass(frozen=True, eq=False)
class RecencyTable:
    user: EntityId
    t_ref: int
    last_use: Dict[int, int]
    decay: float = 0.5

    def __post_init__(self) -> None:
        if self.decay <= 0:
            raise ValueError("decay must be > 0")
        if any(t > self.t_ref for t in self.last_use.values()):
            raise ValueError("last use after reference time")


@dataclass(frozen=True, eq=False)
class UserMemory:
    user: EntityId
    semantic: np.ndarray  # l x n
    lexical: sparse.csr_matrix  # l x m, columns follow tag_universe
    post_timestamps: np.ndarray
    tag_universe: Tuple[int, ...]

    @property
    def num_posts(self) -> int:
        return int(self.semantic.shape[0])

    def recency_table(self, decay: float = 0.5) -> RecencyTable:
        last_use: Dict[int, int] = {}
        lex = self.lexical
        for i in range(lex.shape[0]):
            ts = int(self.post_timestamps[i])
            for col in lex.indices[lex.indptr[i]:lex.indptr[i + 1]]:
                j = self.tag_universe[col]
                if ts > last_use.get(j, -1):
                    last_use[j] = ts
        return RecencyTable(user=self.user, t_ref=int(self.post_timestamps.max()), last_use=last_use, decay=decay)


@dataclass(frozen=True, eq=False)
class ScoredTags:
    scores: Dict[int, float]
    provenance: str

    def __post_init__(self) -> None:
        if not all(math.isfinite(v) for v in self.scores.values()):
            raise ValueError(f"non-finite score in {self.provenance} output")


class MemoryCache:
    """Write-once per-user memo; the first built memory for a user wins.

    Memories are keyed by user index only, so a cache serves one train
    folksonomy and one topic model. The scoring functions bind it on first use
    and reject any other pair.
    """

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._memories: Dict[int, Optional[UserMemory]] = {}
        self._scope: Optional[Tuple[Folksonomy, TopicModel]] = None

    def bind(self, train: Folksonomy, model: TopicModel) -> None:
        with self._lock:
            if self._scope is None:
                self._scope = (train, model)
            elif self._scope[0] is not train or self._scope[1] is not model:
                raise ValueError("MemoryCache already holds memories of another train set or topic model")

    def get_or_build(self, user: EntityId, build: Callable[[], UserMemory]) -> UserMemory:
        with self._lock:
            if user.index in self._memories:
                cached = self._memories[user.index]
                if cached is None:
                    raise ColdUserError()
                return cached
        try:
            memory: Optional[UserMemory] = build()
        except ColdUserError:
            memory = None
        with self._lock:
            memory = self._memories.setdefault(user.index, memory)
        if memory is None:
            raise ColdUserError()
        return memory

    def __len__(self) -> int:
        return len(self._memories)


def build_user_memory(u: EntityId, train: Folksonomy, model: TopicModel) -> UserMemory:
    posts = train.posts_of(u)
    if not posts:
        raise ColdUserError()
    universe = tuple(sorted({t.index for p in posts for t in p.tags}))
    column = {j: c for c, j in enumerate(universe)}
    rows: List[int] = []
    cols: List[int] = []
    for i, post in enumerate(posts):
        for tag in post.tags:
            rows.append(i)
            cols.append(column[tag.index])
    lexical = sparse.csr_matrix(
        (np.ones(len(rows), dtype=np.float64), (rows, cols)), shape=(len(posts), len(universe))
    )
    semantic = np.vstack([topic_vector(model, p.resource).weights for p in posts])
    timestamps = np.array([p.timestamp for p in posts], dtype=np.int64)
    return UserMemory(user=u, semantic=semantic, lexical=lexical, post_timestamps=timestamps, tag_universe=universe)


def _memory(u: EntityId, train: Folksonomy, model: TopicModel, cache: Optional[MemoryCache]) -> UserMemory:
    if cache is None:
        return build_user_memory(u, train, model)
    cache.bind(train, model)
    return cache.get_or_build(u, lambda: build_user_memory(u, train, model))


def activate(cue: Union[TopicVector, np.ndarray], memory: UserMemory) -> np.ndarray:
    """A_i = cos(cue, semantic row i) ** 3, zero for zero-norm pairs."""
    vec = np.asarray(cue.weights if isinstance(cue, TopicVector) else cue, dtype=np.float64)
    if vec.ndim != 1 or vec.size != memory.semantic.shape[1]:
        raise DimensionMismatchError(
            f"cue has {vec.size} features, memory has {memory.semantic.shape[1]}"
        )
    row_norms = np.linalg.norm(memory.semantic, axis=1)
    denom = row_norms * np.linalg.norm(vec)
    dots = memory.semantic @ vec
    sims = np.divide(dots, denom, out=np.zeros_like(dots), where=denom > 0)
    return np.clip(sims, -1.0, 1.0) ** 3


def _categorization_scores(memory: UserMemory, cue: TopicVector) -> Dict[int, float]:
    activation = activate(cue, memory)
    out = memory.lexical.T @ activation
    return {j: float(out[c]) for c, j in enumerate(memory.tag_universe)}


def score_3l(
    u: EntityId, r: EntityId, train: Folksonomy, model: TopicModel, cache: Optional[MemoryCache] = None
) -> ScoredTags:
    """o_j = sum_i L_ij * A_i over the user's training posts."""
    memory = _memory(u, train, model, cache)
    return ScoredTags(_categorization_scores(memory, topic_vector(model, r)), PROVENANCE_3L)


def bll_weight(rt: RecencyTable, j: Union[int, EntityId]) -> float:
    """ln(dt ** -d) with dt = max(t_ref - t_j, 1) seconds."""
    key = j.index if isinstance(j, EntityId) else int(j)
    if key not in rt.last_use:
        raise UnknownTagError()
    delta = max(rt.t_ref - rt.last_use[key], 1)
    return -rt.decay * math.log(delta)


def recency_weights(rt: RecencyTable) -> Dict[int, float]:
    """Softmax of BLL over the user's tags, i.e. dt^-d normalized to sum 1."""
    if not rt.last_use:
        return {}
    tags = sorted(rt.last_use)
    bll = np.array([bll_weight(rt, j) for j in tags])
    weights = np.exp(bll - bll.max())
    weights /= weights.sum()
    return {j: float(w) for j, w in zip(tags, weights)}


def recency_table(u: EntityId, train: Folksonomy, decay: float = 0.5) -> RecencyTable:
    """RecencyTable straight from the user's posts, no topic model needed."""
    posts = train.posts_of(u)
    if not posts:
        raise ColdUserError()
    last_use: Dict[int, int] = {}
    for post in posts:
        for tag in post.tags:
            if post.timestamp > last_use.get(tag.index, -1):
                last_use[tag.index] = post.timestamp
    return RecencyTable(user=u, t_ref=max(p.timestamp for p in posts), last_use=last_use, decay=decay)


def score_3lt(
    u: EntityId,
    r: EntityId,
    train: Folksonomy,
    model: TopicModel,
    decay: float = 0.5,
    cache: Optional[MemoryCache] = None,
) -> ScoredTags:
    """o^T_j = nBLL(j) * o_j; BLL is constant per tag so it factors out of the sum."""
    memory = _memory(u, train, model, cache)
    base = _categorization_scores(memory, topic_vector(model, r))
    recency = recency_weights(memory.recency_table(decay))
    return ScoredTags({j: recency[j] * o for j, o in base.items()}, PROVENANCE_3LT)


def sum_normalize(values: Mapping[int, float], candidates: Optional[Iterable[int]] = None) -> Dict[int, float]:
    """x_j / sum(x) over the candidate set; an all-zero vector stays all zeros."""
    keys = list(values) if candidates is None else list(candidates)
    total = float(sum(values.get(j, 0.0) for j in keys))
    if total <= 0.0:
        return {j: 0.0 for j in keys}
    return {j: values.get(j, 0.0) / total for j in keys}


def mix_components(
    user_scores: Mapping[int, float], resource_counts: Mapping[int, float], beta: float
) -> Dict[int, float]:
    """beta * ||user|| + (1 - beta) * ||resource|| over user tags and resource tags."""
    candidates = sorted(set(user_scores) | {j for j, c in resource_counts.items() if c > 0})
    user_n = sum_normalize(user_scores, candidates)
    res_n = sum_normalize(resource_counts, candidates)
    return {j: beta * user_n[j] + (1.0 - beta) * res_n[j] for j in candidates}


def rank_tags(
    scores: Mapping[int, float],
    tags: Interner,
    k: int,
    tie_counts: Optional[Mapping[int, float]] = None,
) -> RankedTags:
    """Top-k by score, then higher tie count (raw |Y_{j,r}|), then tag label."""
    ties = tie_counts or {}
    ordered = sorted(scores.items(), key=lambda kv: (-kv[1], -ties.get(kv[0], 0), tags.label(kv[0])))
    return [(tags.label(j), float(s)) for j, s in ordered[:k]]


def recommend_3lt_mpr(
    u: EntityId,
    r: EntityId,
    train: Folksonomy,
    model: TopicModel,
    p: MixParams = MixParams(),
    decay: float = 0.5,
    cache: Optional[MemoryCache] = None,
) -> RankedTags:
    """Mix 3LT with MPr; cold users and unseen resources contribute zero components."""
    try:
        user_scores = score_3lt(u, r, train, model, decay=decay, cache=cache).scores
    except ColdUserError:
        logger.debug("Cold user %s, falling back to resource tags", u.original)
        user_scores = {}
    resource_counts = train.resource_tags(r)
    mixed = ScoredTags(mix_components(user_scores, resource_counts, p.beta), PROVENANCE_3LT_MPR)
    return rank_tags(mixed.scores, train.vocabulary.tags, p.k, tie_counts=resource_counts)


def rank_scored(scored: ScoredTags, train: Folksonomy, r: EntityId, k: int) -> RankedTags:
    """Rank a single-component output with the standard tie rules."""
    return rank_tags(scored.scores, train.vocabulary.tags, k, tie_counts=train.resource_tags(r))


if __name__ == "__main__":
    from folksonomy import Vocabulary, build_folksonomy, make_post
    from topic_model import LdaConfig, build_documents, train_lda

    vocab = Vocabulary()
    demo = [
        make_post(vocab, "u1", "r1", ["python", "web"], 100),
        make_post(vocab, "u1", "r2", ["python", "numpy"], 200),
        make_post(vocab, "u2", "r3", ["web", "css"], 150),
        make_post(vocab, "u2", "r2", ["numpy", "science"], 250),
    ]
    train = build_folksonomy(demo)
    model = train_lda(build_documents(train), LdaConfig(num_topics=2, alpha=0.1, iterations=20, seed=7))
    user = train.vocabulary.users.get("u1")
    res = train.vocabulary.resources.get("r2")
    print(recommend_3lt_mpr(user, res, train, model))
