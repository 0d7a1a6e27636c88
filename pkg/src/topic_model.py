"""
Resource Topic Model (LDA, collapsed Gibbs sampling)
-----------------------------------------------------
Each resource is a document whose tokens are the tag assignments it received in
the training folksonomy. The smoothed document-topic proportions become the cue
vectors for the categorization recommenders.

Persistence format (UTF-8 text):
  # cogtag-topics num_topics=<Z> alpha=<a> eta=<e> iterations=<n> seed=<s>
  resource<TAB>w1,w2,...,wZ
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator

from folksonomy import EntityId, Folksonomy

logger = logging.getLogger(__name__)

HEADER_PREFIX = "# cogtag-topics"
NORMALIZATION_TOL = 1e-9


class EmptyCorpusError(ValueError):
    def __init__(self, message: str = "no documents") -> None:
        super().__init__(message)


class LdaConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="ignore")

    num_topics: int = 1000
    alpha: Optional[float] = None  # None means 50 / num_topics
    eta: float = 0.01
    iterations: int = 500
    seed: int = 42

    @field_validator("num_topics", "iterations")
    @classmethod
    def validate_positive_int(cls, v: int) -> int:
        if v < 1:
            raise ValueError("must be >= 1")
        return v

    @field_validator("alpha", "eta")
    @classmethod
    def validate_positive_real(cls, v: Optional[float]) -> Optional[float]:
        if v is not None and v <= 0:
            raise ValueError("must be > 0")
        return v

    @property
    def resolved_alpha(self) -> float:
        return self.alpha if self.alpha is not None else 50.0 / self.num_topics


@dataclass(frozen=True, eq=False)
class TopicVector:
    resource: EntityId
    weights: np.ndarray

    def __post_init__(self) -> None:
        w = self.weights
        if w.ndim != 1 or w.size == 0:
            raise ValueError("topic vector must be a non-empty 1-d array")
        if np.any(w < 0) or abs(float(w.sum()) - 1.0) > NORMALIZATION_TOL:
            raise ValueError("topic vector is not a probability distribution")

    def __len__(self) -> int:
        return int(self.weights.size)


@dataclass(eq=False)
class TopicModel:
    config: LdaConfig
    resource_topics: Dict[str, np.ndarray]
    topic_tag_counts: Optional[np.ndarray] = None
    tag_labels: List[str] = field(default_factory=list)

    @property
    def num_topics(self) -> int:
        return self.config.num_topics

    def top_tags(self, topic: int, n: int = 10) -> List[str]:
        """Most frequent tags of a topic; needs the in-memory counts."""
        if self.topic_tag_counts is None:
            return []
        order = np.argsort(-self.topic_tag_counts[topic], kind="stable")[:n]
        return [self.tag_labels[i] for i in order if self.topic_tag_counts[topic, i] > 0]


def build_documents(train: Folksonomy) -> Dict[EntityId, List[EntityId]]:
    """resource -> multiset of tag assignments (sorted by tag index)."""
    docs: Dict[EntityId, List[EntityId]] = {}
    counts = train.resource_tag_counts
    tags = train.vocabulary.tags
    for r in range(counts.shape[0]):
        start, end = counts.indptr[r], counts.indptr[r + 1]
        if start == end:
            continue
        bag: List[EntityId] = []
        for j, c in zip(counts.indices[start:end], counts.data[start:end]):
            bag.extend([tags.entity(int(j))] * int(c))
        docs[train.vocabulary.resources.entity(r)] = bag
    return docs


def _check_counts(ndk: np.ndarray, nwk: np.ndarray, nk: np.ndarray, doc_len: np.ndarray) -> None:
    assert np.array_equal(ndk.sum(axis=1), doc_len), "doc-topic counts drifted from document lengths"
    assert np.array_equal(nwk.sum(axis=0), nk), "topic-word counts drifted from topic totals"


def train_lda(docs: Mapping[EntityId, Sequence[EntityId]], cfg: LdaConfig) -> TopicModel:
    """Collapsed Gibbs sampling; deterministic for identical (docs, cfg)."""
    items = sorted(((r.original, [t.original for t in bag]) for r, bag in docs.items() if bag), key=lambda x: x[0])
    if not items:
        raise EmptyCorpusError()

    vocab = sorted({t for _, bag in items for t in bag})
    word_index = {t: i for i, t in enumerate(vocab)}
    n_docs, n_words, n_topics = len(items), len(vocab), cfg.num_topics
    alpha, eta = cfg.resolved_alpha, cfg.eta

    doc_ids = np.concatenate([np.full(len(bag), d, dtype=np.int64) for d, (_, bag) in enumerate(items)])
    word_ids = np.array([word_index[t] for _, bag in items for t in bag], dtype=np.int64)
    doc_len = np.bincount(doc_ids, minlength=n_docs).astype(np.int64)
    n_tokens = word_ids.size

    rng = np.random.default_rng(cfg.seed)
    z = rng.integers(0, n_topics, size=n_tokens)
    ndk = np.zeros((n_docs, n_topics), dtype=np.int64)
    nwk = np.zeros((n_words, n_topics), dtype=np.int64)
    np.add.at(ndk, (doc_ids, z), 1)
    np.add.at(nwk, (word_ids, z), 1)
    nk = nwk.sum(axis=0)

    logger.info("Training LDA: %d documents, %d tags, %d tokens, Z=%d, %d sweeps, seed=%d",
                n_docs, n_words, n_tokens, n_topics, cfg.iterations, cfg.seed)
    check = logger.isEnabledFor(logging.DEBUG)
    v_eta = n_words * eta
    report_every = max(1, cfg.iterations // 10)
    docs_l, words_l, z_l = doc_ids.tolist(), word_ids.tolist(), z.tolist()
    for sweep in range(cfg.iterations):
        draws = rng.random(n_tokens).tolist()
        for i in range(n_tokens):
            d, w, k = docs_l[i], words_l[i], z_l[i]
            ndk[d, k] -= 1
            nwk[w, k] -= 1
            nk[k] -= 1
            p = (ndk[d] + alpha) * (nwk[w] + eta) / (nk + v_eta)
            cdf = np.cumsum(p)
            k = min(int(np.searchsorted(cdf, draws[i] * cdf[-1], side="right")), n_topics - 1)
            z_l[i] = k
            ndk[d, k] += 1
            nwk[w, k] += 1
            nk[k] += 1
        if check:
            _check_counts(ndk, nwk, nk, doc_len)
        if (sweep + 1) % report_every == 0:
            logger.info("LDA sweep %d/%d", sweep + 1, cfg.iterations)

    theta = (ndk + alpha) / (doc_len[:, None] + n_topics * alpha)
    resource_topics = {label: theta[d] for d, (label, _) in enumerate(items)}
    return TopicModel(config=cfg, resource_topics=resource_topics, topic_tag_counts=nwk.T.copy(), tag_labels=vocab)


def topic_vector(model: TopicModel, r: EntityId) -> TopicVector:
    """Stored distribution for r, or the uniform vector for unseen resources."""
    weights = model.resource_topics.get(r.original)
    if weights is None:
        weights = np.full(model.num_topics, 1.0 / model.num_topics)
    return TopicVector(resource=r, weights=weights)


def save_model(model: TopicModel, path: Union[str, Path]) -> None:
    cfg = model.config
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{HEADER_PREFIX} num_topics={cfg.num_topics} alpha={cfg.resolved_alpha!r} "
                 f"eta={cfg.eta!r} iterations={cfg.iterations} seed={cfg.seed}\n")
        for label in sorted(model.resource_topics):
            weights = ",".join(repr(float(w)) for w in model.resource_topics[label])
            fh.write(f"{label}\t{weights}\n")
    logger.info("Saved topic model (%d resources, Z=%d) to %s", len(model.resource_topics), cfg.num_topics, out)


def load_model(path: Union[str, Path]) -> TopicModel:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if not header.startswith(HEADER_PREFIX):
            raise ValueError(f"{path} is not a cogtag topic model")
        fields = dict(part.split("=", 1) for part in header[len(HEADER_PREFIX):].split())
        cfg = LdaConfig(
            num_topics=int(fields["num_topics"]),
            alpha=float(fields["alpha"]),
            eta=float(fields["eta"]),
            iterations=int(fields["iterations"]),
            seed=int(fields["seed"]),
        )
        topics: Dict[str, np.ndarray] = {}
        for line_num, line in enumerate(fh, 2):
            line = line.rstrip("\n")
            if not line:
                continue
            label, _, raw = line.partition("\t")
            weights = np.array([float(x) for x in raw.split(",")])
            if weights.size != cfg.num_topics:
                raise ValueError(f"{path}:{line_num}: expected {cfg.num_topics} weights, got {weights.size}")
            topics[label] = weights
    return TopicModel(config=cfg, resource_topics=topics)


if __name__ == "__main__":
    from folksonomy import Vocabulary, build_folksonomy, make_post

    vocab = Vocabulary()
    posts = [make_post(vocab, f"u{i}", f"r{i}", ["a", "b"] if i % 2 else ["x", "y"], i) for i in range(20)]
    model = train_lda(build_documents(build_folksonomy(posts)), LdaConfig(num_topics=2, alpha=0.1, iterations=50, seed=1))
    for t in range(2):
        print(t, model.top_tags(t))
