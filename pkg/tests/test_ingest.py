"""
Tests for dump parsing, preprocessing and the chronological train/test split.
"""
import numpy as np
import pytest
from pydantic import ValidationError

from folksonomy import build_folksonomy
from ingest import (
    DEFAULT_BLACKLIST,
    NoPostsParsedError,
    PreprocessConfig,
    load_blacklist,
    parse_dump,
    preprocess,
    split_train_test,
    write_dump,
)
from helpers import DAY, T0, make_folksonomy, make_posts


def _write(tmp_path, text, name="posts.tsv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


class TestParseDump:
    """Canonical TSV parsing."""

    def test_single_row(self, tmp_path):
        path = _write(tmp_path, "u1\tr1\t1357000000\tweb,search\n")
        posts, report = parse_dump(path)
        assert len(posts) == 1
        post = posts[0]
        assert (post.user.original, post.resource.original, post.timestamp) == ("u1", "r1", 1357000000)
        assert post.tag_labels == ["search", "web"]
        assert report.parsed == 1 and report.skipped == 0

    def test_malformed_rows_skipped_and_counted(self, tmp_path):
        text = (
            "u1\tr1\t100\ta,b\n"
            "u1\tr2\t200\t\n"
            "u2\tr1\t300\tc\n"
            "u3\tr3\t400\td , e\n"
        )
        posts, report = parse_dump(_write(tmp_path, text))
        assert len(posts) == 3
        assert report.rows == 4
        assert report.skipped == 1
        assert report.skipped_lines == [2]

    @pytest.mark.parametrize("row", [
        "u1\tr1\tabc\ta",
        "u1\tr1\t-5\ta",
        "u1\tr1\t100",
        "u1\tr1\t100\ta\textra",
        "u1\tr1\t100\t , ,",
    ])
    def test_each_malformed_kind(self, tmp_path, row):
        path = _write(tmp_path, f"{row}\nu9\tr9\t1\tok\n")
        posts, report = parse_dump(path)
        assert report.skipped == 1
        assert [p.user.original for p in posts] == ["u9"]

    def test_invalid_utf8_row_skipped(self, tmp_path):
        path = tmp_path / "posts.tsv"
        path.write_bytes(b"u1\tr1\t1\ta\nu1\tr2\t2\t\xff\xfe\nu2\tr3\t3\tb\n")
        posts, report = parse_dump(path)
        assert len(posts) == 2
        assert report.skipped == 1
        assert report.skipped_lines == [2]

    def test_no_valid_rows(self, tmp_path):
        with pytest.raises(NoPostsParsedError, match="no posts parsed"):
            parse_dump(_write(tmp_path, "garbage\n\n"))

    def test_missing_file_is_os_error(self, tmp_path):
        with pytest.raises(OSError):
            parse_dump(tmp_path / "absent.tsv")

    def test_unsupported_format(self, tmp_path):
        with pytest.raises(ValueError):
            parse_dump(_write(tmp_path, "u1\tr1\t1\ta\n"), fmt="json")

    def test_duplicate_rows_merged(self, tmp_path):
        path = _write(tmp_path, "u1\tr1\t200\tnew\nu1\tr1\t100\told\n")
        posts, report = parse_dump(path)
        assert report.parsed == 1
        assert posts[0].tag_labels == ["new"]

    def test_write_then_parse_preserves_posts(self, tmp_path):
        posts = make_posts([("u1", "r1", ["b", "a"], T0), ("u2", "r1", ["c"], T0 + 1)])
        out = tmp_path / "nested" / "dump.tsv"
        assert write_dump(posts, out) == 2
        assert out.read_text(encoding="utf-8").splitlines()[0] == f"u1\tr1\t{T0}\ta,b"
        parsed, _ = parse_dump(out)
        assert [(p.user.original, p.tag_labels, p.timestamp) for p in parsed] == [
            ("u1", ["a", "b"], T0),
            ("u2", ["c"], T0 + 1),
        ]


class TestPreprocess:
    """Tag cleaning and user sampling."""

    def test_blacklist_and_lowercase(self):
        posts = make_posts([("u1", "r1", ["No-Tag", "Web"], T0)])
        out = preprocess(posts, PreprocessConfig(blacklist=frozenset({"no-tag"}), lowercase=True))
        assert out[0].tag_labels == ["web"]

    def test_identity_without_cleaning(self):
        posts = make_posts([("u1", "r1", ["No-Tag", "Web"], T0)])
        out = preprocess(posts, PreprocessConfig(blacklist=frozenset(), lowercase=False))
        assert out[0].tag_labels == ["No-Tag", "Web"]

    def test_fully_blacklisted_post_dropped(self):
        posts = make_posts([("u1", "r1", ["bibtex-import"], T0), ("u1", "r2", ["web"], T0 + 1)])
        out = preprocess(posts, PreprocessConfig())
        assert [p.resource.original for p in out] == ["r2"]

    def test_idempotent(self):
        posts = make_posts([
            ("u1", "r1", ["A", "no-tag"], T0),
            ("u2", "r2", ["B", "b"], T0 + 1),
        ])
        cfg = PreprocessConfig()
        once = preprocess(posts, cfg)
        twice = preprocess(once, cfg)
        assert [(p.user.original, p.tag_labels) for p in once] == [(p.user.original, p.tag_labels) for p in twice]

    def test_sampling_keeps_exact_fraction_reproducibly(self):
        rows = [(f"u{i:03d}", f"r{i}", ["t"], T0 + i) for i in range(100)]
        cfg = PreprocessConfig(user_sample_fraction=0.10, sample_seed=11)
        first = {p.user.original for p in preprocess(make_posts(rows), cfg)}
        second = {p.user.original for p in preprocess(make_posts(rows), cfg)}
        assert len(first) == 10
        assert first == second

    def test_sampling_drops_all_posts_of_unsampled_users(self):
        rows = [(f"u{i}", f"r{j}", ["t"], T0 + j) for i in range(20) for j in range(3)]
        out = preprocess(make_posts(rows), PreprocessConfig(user_sample_fraction=0.5, sample_seed=1))
        users = {p.user.original for p in out}
        assert len(users) == 10
        assert len(out) == 30

    @pytest.mark.parametrize("fraction", [0.0, 1.5])
    def test_invalid_fraction(self, fraction):
        with pytest.raises(ValidationError):
            PreprocessConfig(user_sample_fraction=fraction)


def test_load_blacklist(tmp_path):
    path = _write(tmp_path, "# auto tags\nno-tag\n\nimported  # from bibtex\n", name="blacklist.txt")
    assert load_blacklist(path) == frozenset({"no-tag", "imported"})
    assert load_blacklist(None) == DEFAULT_BLACKLIST


class TestSplit:
    """Leave-most-recent-post-out split and the evaluation filter."""

    def test_latest_post_goes_to_test(self):
        f = make_folksonomy([("u1", f"r{t}", ["a"], T0 + t) for t in (1, 2, 3)])
        split = split_train_test(f, PreprocessConfig(min_user_posts_for_eval=1))
        assert [p.timestamp for p in split.test] == [T0 + 3]
        assert sorted(p.timestamp for p in split.train.posts) == [T0 + 1, T0 + 2]

    def test_single_post_user_stays_in_train(self):
        f = make_folksonomy([("u1", "r1", ["a"], T0), ("u2", "r1", ["b"], T0), ("u2", "r2", ["c"], T0 + 1)])
        split = split_train_test(f, PreprocessConfig(min_user_posts_for_eval=1))
        assert [p.user.original for p in split.test] == ["u2"]
        assert split.train.has_posts(f.vocabulary.users.get("u1"))

    @pytest.mark.parametrize("n_posts,expected", [(19, False), (20, True), (21, True)])
    def test_eval_threshold(self, n_posts, expected):
        f = make_folksonomy([("u1", f"r{i}", ["a"], T0 + i) for i in range(n_posts)])
        split = split_train_test(f, PreprocessConfig())
        assert len(split.test) == 1
        assert (f.vocabulary.users.get("u1") in split.eval_users) is expected
        assert len(split.eval_queries()) == int(expected)

    def test_timestamp_tie_broken_by_input_order(self):
        f = make_folksonomy([("u1", "r1", ["a"], T0), ("u1", "r2", ["b"], T0), ("u1", "r3", ["c"], T0)])
        split = split_train_test(f, PreprocessConfig(min_user_posts_for_eval=1))
        assert split.test[0].resource.original == "r3"

    def test_train_shares_vocabulary(self):
        f = make_folksonomy([("u1", "r1", ["a"], T0), ("u1", "r2", ["only-in-test"], T0 + 1)])
        split = split_train_test(f, PreprocessConfig(min_user_posts_for_eval=1))
        assert split.train.vocabulary is f.vocabulary
        assert split.test[0].user == split.train.vocabulary.users.get("u1")
        assert split.train.stats.tags == 1


@pytest.mark.parametrize("seed", range(500))
def test_split_protocol_on_random_folksonomies(seed):
    """No leak, one test post per multi-post user, eval threshold at exactly 20."""
    rng = np.random.default_rng(seed)
    rows = []
    for u in range(int(rng.integers(1, 6))):
        n = int(rng.integers(1, 26))
        for i in range(n):
            rows.append((f"u{u}", f"r{u}_{i}", [f"t{int(rng.integers(8))}"], T0 + int(rng.integers(0, 40)) * DAY))
    f = build_folksonomy(make_posts(rows))
    split = split_train_test(f, PreprocessConfig())

    test_by_user = {}
    for post in split.test:
        assert post.user not in test_by_user
        test_by_user[post.user] = post
    for u in range(f.num_users):
        user = f.vocabulary.users.entity(u)
        total = len(f.posts_of(user))
        train_posts = split.train.posts_of(user)
        if total >= 2:
            test_post = test_by_user[user]
            assert len(train_posts) == total - 1
            assert all(p.timestamp <= test_post.timestamp for p in train_posts)
            assert test_post.resource not in {p.resource for p in train_posts}
        else:
            assert user not in test_by_user
        assert (user in split.eval_users) == (total >= 20)
