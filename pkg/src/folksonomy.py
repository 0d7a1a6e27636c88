"""
Folksonomy Data Model
---------------------
Interned users, resources and tags, the post list, and the count indices every
recommender reads.

Layout:
  Vocabulary      one Interner per kind (label <-> dense index)
  Post            one (user, resource, tag-set, timestamp) bookmark event
  Folksonomy      posts + per-user chronological post lists + CSR count matrices

A Folksonomy is immutable after construction; readers may share it across threads.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse

logger = logging.getLogger(__name__)

USER = "user"
RESOURCE = "resource"
TAG = "tag"
KINDS = (USER, RESOURCE, TAG)


class FolksonomyError(ValueError):
    pass


class EmptyFolksonomyError(FolksonomyError):
    def __init__(self, message: str = "empty folksonomy") -> None:
        super().__init__(message)


class UnknownEntityError(FolksonomyError):
    def __init__(self, message: str = "unknown entity") -> None:
        super().__init__(message)


class InvalidPostError(FolksonomyError):
    pass


@dataclass(frozen=True, order=True)
class EntityId:
    kind: str
    index: int
    original: str


class Interner:
    """Bijective label <-> index map for one entity kind."""

    def __init__(self, kind: str, labels: Iterable[str] = ()) -> None:
        if kind not in KINDS:
            raise ValueError(f"unknown entity kind {kind!r}")
        self.kind = kind
        self._index: Dict[str, int] = {}
        self._labels: List[str] = []
        for label in labels:
            self.intern(label)

    def intern(self, label: str) -> EntityId:
        idx = self._index.get(label)
        if idx is None:
            idx = len(self._labels)
            self._index[label] = idx
            self._labels.append(label)
        return EntityId(self.kind, idx, label)

    def get(self, label: str) -> Optional[EntityId]:
        idx = self._index.get(label)
        return None if idx is None else EntityId(self.kind, idx, label)

    def entity(self, index: int) -> EntityId:
        return EntityId(self.kind, index, self._labels[index])

    def label(self, index: int) -> str:
        return self._labels[index]

    def labels(self) -> List[str]:
        return list(self._labels)

    def __len__(self) -> int:
        return len(self._labels)

    def __contains__(self, entity: object) -> bool:
        if not isinstance(entity, EntityId) or entity.kind != self.kind:
            return False
        return 0 <= entity.index < len(self._labels) and self._labels[entity.index] == entity.original


@dataclass
class Vocabulary:
    users: Interner = field(default_factory=lambda: Interner(USER))
    resources: Interner = field(default_factory=lambda: Interner(RESOURCE))
    tags: Interner = field(default_factory=lambda: Interner(TAG))

    def interner(self, kind: str) -> Interner:
        if kind == USER:
            return self.users
        if kind == RESOURCE:
            return self.resources
        if kind == TAG:
            return self.tags
        raise UnknownEntityError()

    def check(self, entity: EntityId, kind: Optional[str] = None) -> EntityId:
        """Raise UnknownEntityError unless entity belongs to this vocabulary."""
        if kind is not None and entity.kind != kind:
            raise UnknownEntityError()
        if entity.kind not in KINDS or entity not in self.interner(entity.kind):
            raise UnknownEntityError()
        return entity

    def resolve(self, entity: EntityId) -> Optional[EntityId]:
        """Look up an entity from another vocabulary by its label."""
        if entity.kind not in KINDS:
            return None
        return self.interner(entity.kind).get(entity.original)


@dataclass(frozen=True)
class Post:
    user: EntityId
    resource: EntityId
    tags: FrozenSet[EntityId]
    timestamp: int

    def __post_init__(self) -> None:
        if not self.tags:
            raise InvalidPostError("post with empty tag set")
        if self.timestamp < 0:
            raise InvalidPostError(f"negative timestamp {self.timestamp}")
        if self.user.kind != USER or self.resource.kind != RESOURCE:
            raise InvalidPostError("post user/resource have wrong entity kinds")
        if any(t.kind != TAG for t in self.tags):
            raise InvalidPostError("post tags must be tag entities")

    @property
    def tag_labels(self) -> List[str]:
        return sorted(t.original for t in self.tags)


def make_post(vocabulary: Vocabulary, user: str, resource: str, tags: Iterable[str], timestamp: int) -> Post:
    """Intern labels into vocabulary and build a Post."""
    return Post(
        user=vocabulary.users.intern(user),
        resource=vocabulary.resources.intern(resource),
        tags=frozenset(vocabulary.tags.intern(t) for t in tags),
        timestamp=int(timestamp),
    )


@dataclass(frozen=True)
class FolksonomyStats:
    posts: int
    users: int
    resources: int
    tags: int
    tas: int

    def as_tuple(self) -> Tuple[int, int, int, int, int]:
        return (self.posts, self.users, self.resources, self.tags, self.tas)

    def as_dict(self) -> Dict[str, int]:
        return {"|P|": self.posts, "|U|": self.users, "|R|": self.resources, "|T|": self.tags, "|TAS|": self.tas}


@dataclass(frozen=True, eq=False)
class Folksonomy:
    vocabulary: Vocabulary
    posts: Tuple[Post, ...]
    user_posts: Tuple[Tuple[int, ...], ...]
    resource_posts: Tuple[Tuple[int, ...], ...]
    resource_tag_counts: sparse.csr_matrix
    user_tag_counts: sparse.csr_matrix
    global_tag_counts: np.ndarray
    stats: FolksonomyStats

    @property
    def num_users(self) -> int:
        return len(self.vocabulary.users)

    @property
    def num_resources(self) -> int:
        return len(self.vocabulary.resources)

    @property
    def num_tags(self) -> int:
        return len(self.vocabulary.tags)

    def posts_of(self, user: EntityId) -> List[Post]:
        """Chronological posts of a user; empty for users without posts here."""
        if user.kind != USER or not 0 <= user.index < len(self.user_posts):
            return []
        return [self.posts[i] for i in self.user_posts[user.index]]

    def has_posts(self, user: EntityId) -> bool:
        return user.kind == USER and 0 <= user.index < len(self.user_posts) and bool(self.user_posts[user.index])

    def user_tags(self, user: EntityId) -> Dict[int, int]:
        if user.kind != USER or not 0 <= user.index < self.user_tag_counts.shape[0]:
            return {}
        return _row_dict(self.user_tag_counts, user.index)

    def resource_tags(self, resource: EntityId) -> Dict[int, int]:
        """tag index -> |Y_{j,r}| for every tag assigned to resource."""
        if resource.kind != RESOURCE or not 0 <= resource.index < self.resource_tag_counts.shape[0]:
            return {}
        return _row_dict(self.resource_tag_counts, resource.index)

    def tag_label(self, index: int) -> str:
        return self.vocabulary.tags.label(index)


def _row_dict(matrix: sparse.csr_matrix, row: int) -> Dict[int, int]:
    start, end = matrix.indptr[row], matrix.indptr[row + 1]
    return {int(j): int(c) for j, c in zip(matrix.indices[start:end], matrix.data[start:end])}


def merge_duplicate_posts(posts: Sequence[Post]) -> List[Post]:
    """Keep one post per (user, resource): latest timestamp wins, later input on ties.

    Survivors keep their relative input order.
    """
    winner: Dict[Tuple[str, str], Tuple[int, int]] = {}
    for pos, post in enumerate(posts):
        key = (post.user.original, post.resource.original)
        current = winner.get(key)
        if current is None or post.timestamp >= current[0]:
            winner[key] = (post.timestamp, pos)
    kept = sorted(pos for _, pos in winner.values())
    dropped = len(posts) - len(kept)
    if dropped:
        logger.info("Merged %d duplicate (user, resource) posts", dropped)
    return [posts[pos] for pos in kept]


def _canonical_vocabulary(posts: Sequence[Post]) -> Vocabulary:
    return Vocabulary(
        users=Interner(USER, sorted({p.user.original for p in posts})),
        resources=Interner(RESOURCE, sorted({p.resource.original for p in posts})),
        tags=Interner(TAG, sorted({t.original for p in posts for t in p.tags})),
    )


def build_folksonomy(posts: Sequence[Post], vocabulary: Optional[Vocabulary] = None) -> Folksonomy:
    """Materialize the training graph and its count indices.

    Without a vocabulary, labels are interned in sorted order so any permutation of
    the same posts yields identical indices and counts. With one (e.g. the full
    dataset's vocabulary when building a train split), indices are shared.
    """
    if not posts:
        raise EmptyFolksonomyError()
    merged = merge_duplicate_posts(posts)
    vocab = vocabulary if vocabulary is not None else _canonical_vocabulary(merged)

    remapped: List[Post] = []
    for post in merged:
        remapped.append(
            Post(
                user=vocab.users.intern(post.user.original),
                resource=vocab.resources.intern(post.resource.original),
                tags=frozenset(vocab.tags.intern(t.original) for t in post.tags),
                timestamp=post.timestamp,
            )
        )

    n_users, n_resources, n_tags = len(vocab.users), len(vocab.resources), len(vocab.tags)
    by_user: List[List[int]] = [[] for _ in range(n_users)]
    by_resource: List[List[int]] = [[] for _ in range(n_resources)]
    rows_r: List[int] = []
    rows_u: List[int] = []
    cols: List[int] = []
    for pos, post in enumerate(remapped):
        by_user[post.user.index].append(pos)
        by_resource[post.resource.index].append(pos)
        for tag in post.tags:
            rows_r.append(post.resource.index)
            rows_u.append(post.user.index)
            cols.append(tag.index)

    # stable sort keeps input order among equal timestamps
    user_posts = tuple(tuple(sorted(ids, key=lambda i: remapped[i].timestamp)) for ids in by_user)
    ones = np.ones(len(cols), dtype=np.int64)
    resource_tag_counts = sparse.coo_matrix((ones, (rows_r, cols)), shape=(n_resources, n_tags)).tocsr()
    user_tag_counts = sparse.coo_matrix((ones, (rows_u, cols)), shape=(n_users, n_tags)).tocsr()
    resource_tag_counts.sort_indices()
    user_tag_counts.sort_indices()
    global_tag_counts = np.asarray(resource_tag_counts.sum(axis=0)).ravel().astype(np.int64)

    stats = FolksonomyStats(
        posts=len(remapped),
        users=sum(1 for ids in by_user if ids),
        resources=sum(1 for ids in by_resource if ids),
        tags=int(np.count_nonzero(global_tag_counts)),
        tas=len(cols),
    )
    logger.debug("Built folksonomy %s", stats.as_dict())
    return Folksonomy(
        vocabulary=vocab,
        posts=tuple(remapped),
        user_posts=user_posts,
        resource_posts=tuple(tuple(ids) for ids in by_resource),
        resource_tag_counts=resource_tag_counts,
        user_tag_counts=user_tag_counts,
        global_tag_counts=global_tag_counts,
        stats=stats,
    )


def resource_tag_count(f: Folksonomy, tag: EntityId, resource: EntityId) -> int:
    """|Y_{j,r}|: number of posts on resource whose tag set contains tag."""
    f.vocabulary.check(tag, TAG)
    f.vocabulary.check(resource, RESOURCE)
    return int(f.resource_tag_counts[resource.index, tag.index])


if __name__ == "__main__":
    vocab = Vocabulary()
    demo = [
        make_post(vocab, "u1", "r1", ["web", "search"], 1357000000),
        make_post(vocab, "u1", "r2", ["web", "python"], 1357000100),
    ]
    f = build_folksonomy(demo)
    print(f.stats.as_dict())
    print(resource_tag_count(f, f.vocabulary.tags.get("web"), f.vocabulary.resources.get("r1")))
