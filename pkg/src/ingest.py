"""
Dataset Ingestion
-----------------
Reads canonical post dumps, applies tag cleaning and user sampling, and performs
the chronological leave-most-recent-post-out split.

Canonical TSV (UTF-8, no header, one row per post):
  user<TAB>resource<TAB>unix_timestamp<TAB>tag1,tag2,...

Malformed rows (wrong column count, non-integer or negative timestamp, empty tag
list, invalid UTF-8) are skipped and counted in the ParseReport.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import FrozenSet, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator

from folksonomy import (
    EntityId,
    Folksonomy,
    Post,
    Vocabulary,
    build_folksonomy,
    make_post,
    merge_duplicate_posts,
)

logger = logging.getLogger(__name__)

DEFAULT_BLACKLIST: FrozenSet[str] = frozenset({"no-tag", "bibtex-import"})
SUPPORTED_FORMATS = ("tsv",)
MAX_REPORTED_LINES = 20


class NoPostsParsedError(ValueError):
    def __init__(self, message: str = "no posts parsed") -> None:
        super().__init__(message)


class PreprocessConfig(BaseModel):
    """Tag cleaning, user sampling and evaluation filter settings."""

    model_config = ConfigDict(frozen=True, extra="ignore")

    blacklist: FrozenSet[str] = DEFAULT_BLACKLIST
    lowercase: bool = True
    user_sample_fraction: float = 1.0
    sample_seed: int = 42
    min_user_posts_for_eval: int = 20

    @field_validator("user_sample_fraction")
    @classmethod
    def validate_fraction(cls, v: float) -> float:
        if not 0.0 < v <= 1.0:
            raise ValueError("user_sample_fraction must be in (0, 1]")
        return v

    @field_validator("min_user_posts_for_eval")
    @classmethod
    def validate_min_posts(cls, v: int) -> int:
        if v < 1:
            raise ValueError("min_user_posts_for_eval must be >= 1")
        return v


@dataclass
class ParseReport:
    path: str
    rows: int = 0
    parsed: int = 0
    skipped: int = 0
    skipped_lines: List[int] = field(default_factory=list)

    def skip(self, line_num: int, reason: str) -> None:
        self.skipped += 1
        if len(self.skipped_lines) < MAX_REPORTED_LINES:
            self.skipped_lines.append(line_num)
            logger.warning("Skipping malformed row %d in %s: %s", line_num, self.path, reason)


@dataclass
class SplitResult:
    train: Folksonomy
    test: List[Post]
    eval_users: FrozenSet[EntityId]

    def eval_queries(self) -> List[Post]:
        """Test posts of evaluation users, in user-index order."""
        return [p for p in self.test if p.user in self.eval_users]


def _is_valid_utf8(line: str) -> bool:
    try:
        line.encode("utf-8")
    except UnicodeEncodeError:
        return False
    return True


def _parse_row(line: str) -> Tuple[Optional[Tuple[str, str, int, List[str]]], str]:
    cols = line.split("\t")
    if len(cols) != 4:
        return None, f"expected 4 columns, got {len(cols)}"
    user, resource, ts_raw, tag_field = (c.strip() for c in cols)
    if not user or not resource:
        return None, "empty user or resource"
    try:
        ts = int(ts_raw)
    except ValueError:
        return None, f"non-integer timestamp {ts_raw!r}"
    if ts < 0:
        return None, f"negative timestamp {ts}"
    tags = [t.strip() for t in tag_field.split(",")]
    tags = [t for t in tags if t]
    if not tags:
        return None, "empty tag list"
    return (user, resource, ts, tags), ""


def parse_dump(
    path: Union[str, Path], fmt: str = "tsv", vocabulary: Optional[Vocabulary] = None
) -> Tuple[List[Post], ParseReport]:
    """Parse a canonical dump into posts (one per user-resource pair) plus a report."""
    if fmt not in SUPPORTED_FORMATS:
        raise ValueError(f"Unsupported format: {fmt}")
    vocab = vocabulary if vocabulary is not None else Vocabulary()
    report = ParseReport(path=str(path))
    posts: List[Post] = []
    # undecodable bytes become lone surrogates and fail that row only
    with open(path, "r", encoding="utf-8", errors="surrogateescape") as fh:
        for line_num, raw in enumerate(fh, 1):
            line = raw.rstrip("\r\n")
            if not line.strip():
                continue
            report.rows += 1
            if not _is_valid_utf8(line):
                report.skip(line_num, "invalid UTF-8")
                continue
            row, reason = _parse_row(line)
            if row is None:
                report.skip(line_num, reason)
                continue
            user, resource, ts, tags = row
            posts.append(make_post(vocab, user, resource, tags, ts))
    if not posts:
        raise NoPostsParsedError()
    posts = merge_duplicate_posts(posts)
    report.parsed = len(posts)
    logger.info("Parsed %d posts from %s (%d rows, %d skipped)", report.parsed, path, report.rows, report.skipped)
    return posts, report


def write_dump(posts: Iterable[Post], path: Union[str, Path]) -> int:
    """Write posts in the canonical TSV format; returns rows written."""
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        for post in posts:
            fh.write(f"{post.user.original}\t{post.resource.original}\t{post.timestamp}\t{','.join(post.tag_labels)}\n")
            count += 1
    return count


def load_blacklist(path: Optional[Union[str, Path]]) -> FrozenSet[str]:
    """One tag per line, '#' starts a comment. No path means the default list."""
    if path is None:
        return DEFAULT_BLACKLIST
    entries = set()
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            tag = line.split("#", 1)[0].strip()
            if tag:
                entries.add(tag)
    return frozenset(entries)


def _sample_users(users: Sequence[str], fraction: float, seed: int) -> FrozenSet[str]:
    ordered = sorted(users)
    n_keep = max(1, int(round(fraction * len(ordered)))) if ordered else 0
    rng = np.random.default_rng(seed)
    chosen = rng.choice(len(ordered), size=n_keep, replace=False)
    return frozenset(ordered[i] for i in chosen)


def preprocess(posts: Sequence[Post], cfg: PreprocessConfig) -> List[Post]:
    """Lowercase and blacklist-filter tags, drop emptied posts, then sample users.

    Tag cleaning is idempotent. User sampling is a one-shot stage: applying a
    fraction < 1 twice samples twice.
    """
    blacklist = frozenset(t.lower() for t in cfg.blacklist) if cfg.lowercase else cfg.blacklist
    vocab = Vocabulary()
    cleaned: List[Post] = []
    dropped = 0
    for post in posts:
        tags = set()
        for tag in post.tags:
            label = tag.original.lower() if cfg.lowercase else tag.original
            if label not in blacklist:
                tags.add(label)
        if not tags:
            dropped += 1
            continue
        cleaned.append(make_post(vocab, post.user.original, post.resource.original, sorted(tags), post.timestamp))
    if dropped:
        logger.info("Dropped %d posts whose tags were all blacklisted", dropped)

    if cfg.user_sample_fraction < 1.0 and cleaned:
        users = sorted({p.user.original for p in cleaned})
        keep = _sample_users(users, cfg.user_sample_fraction, cfg.sample_seed)
        cleaned = [p for p in cleaned if p.user.original in keep]
        logger.info("Sampled %d of %d users (fraction=%s, seed=%d)", len(keep), len(users), cfg.user_sample_fraction, cfg.sample_seed)
    return cleaned


def split_train_test(f: Folksonomy, cfg: PreprocessConfig) -> SplitResult:
    """Move each multi-post user's most recent post to the test set.

    Single-post users keep their post in train. Evaluation users are test users
    whose pre-split post count reaches cfg.min_user_posts_for_eval.
    """
    train_posts: List[Post] = []
    test: List[Post] = []
    eval_users = set()
    for u, ids in enumerate(f.user_posts):
        if not ids:
            continue
        if len(ids) == 1:
            train_posts.append(f.posts[ids[0]])
            continue
        # user_posts is sorted stably, so the last entry is the latest (input order on ties)
        test_post = f.posts[ids[-1]]
        test.append(test_post)
        train_posts.extend(f.posts[i] for i in ids[:-1])
        if len(ids) >= cfg.min_user_posts_for_eval:
            eval_users.add(test_post.user)
    # keep train posts in original post order for a stable build
    order = {id(p): i for i, p in enumerate(f.posts)}
    train_posts.sort(key=lambda p: order[id(p)])
    train = build_folksonomy(train_posts, vocabulary=f.vocabulary)
    logger.info(
        "Split: %d train posts, %d test posts, %d evaluation users (min posts %d)",
        len(train_posts), len(test), len(eval_users), cfg.min_user_posts_for_eval,
    )
    return SplitResult(train=train, test=test, eval_users=frozenset(eval_users))


if __name__ == "__main__":
    import sys

    if len(sys.argv) < 2:
        print("Usage: python ingest.py <posts.tsv>")
        sys.exit(1)
    parsed, rep = parse_dump(sys.argv[1])
    cleaned_posts = preprocess(parsed, PreprocessConfig())
    folk = build_folksonomy(cleaned_posts)
    print(rep)
    print(folk.stats.as_dict())
