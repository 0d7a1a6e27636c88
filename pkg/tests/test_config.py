"""
Tests for experiment configuration loading and the config validator.
"""
import json
from pathlib import Path

import pytest

from config import DEFAULT_ALGORITHMS, ConfigError, env_overrides, load_config, normalize_key, read_config_file
from config_validator import SLOW_LDA_HINT, check_blacklist, check_dataset, check_topic_model, print_report, run_validation
from topic_model import HEADER_PREFIX

REPO_ROOT = Path(__file__).resolve().parents[1]


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


class TestNormalizeKey:
    @pytest.mark.parametrize("raw,expected", [
        ("sample_fraction", "sample_fraction"),
        ("sampleFraction", "sample_fraction"),
        ("sample-fraction", "sample_fraction"),
        ("SAMPLE_FRACTION", "sample_fraction"),
        ("ldaOnFull", "lda_on_full"),
        (" beta ", "beta"),
    ])
    def test_spellings(self, raw, expected):
        assert normalize_key(raw) == expected


class TestReadConfigFile:
    """Flat key=value files."""

    def test_with_section(self, tmp_path):
        path = _write(tmp_path / "a.ini", "[experiment]\nbeta = 0.3\nlda_topics = 50  # inline\n")
        assert read_config_file(path) == {"beta": "0.3", "lda_topics": "50"}

    def test_without_section(self, tmp_path):
        path = _write(tmp_path / "a.ini", "decay = 0.7\noutputDir = \"out\"\n")
        assert read_config_file(path) == {"decay": "0.7", "output_dir": "out"}

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            read_config_file(tmp_path / "nope.ini")

    def test_malformed_file(self, tmp_path):
        path = _write(tmp_path / "bad.ini", "[experiment]\nthis line has no separator\n")
        with pytest.raises(ConfigError, match="Malformed"):
            read_config_file(path)

    def test_foreign_section_only(self, tmp_path):
        path = _write(tmp_path / "other.ini", "[models]\nname = x\n")
        with pytest.raises(ConfigError, match="no \\[experiment\\] section"):
            read_config_file(path)


class TestLoadConfig:
    """defaults < file < environment < overrides."""

    def test_defaults(self):
        cfg = load_config(environ={})
        assert cfg.lda_topics == 1000
        assert cfg.lda_iterations == 500
        assert cfg.beta == 0.5 and cfg.decay == 0.5
        assert cfg.cf_neighbors == 20 and cfg.damping == 0.7
        assert cfg.min_posts == 20
        assert cfg.algorithms == list(DEFAULT_ALGORITHMS)
        assert cfg.dataset_path is None

    def test_shipped_experiment_file(self):
        cfg = load_config(REPO_ROOT / "experiment.ini", environ={})
        assert cfg.dataset_path == "data/posts_raw.tsv"
        assert cfg.blacklist_path is None
        assert cfg.workers == 4
        assert cfg.lda_alpha is None

    def test_precedence(self, tmp_path):
        path = _write(tmp_path / "a.ini", "beta = 0.1\ndecay = 0.9\nworkers = 2\n")
        environ = {"COGTAG_BETA": "0.2", "COGTAG_DECAY": "0.8", "OTHER_BETA": "0.0"}
        cfg = load_config(path, overrides={"beta": 0.3, "workers": None}, environ=environ)
        assert cfg.beta == 0.3
        assert cfg.decay == 0.8
        assert cfg.workers == 2

    def test_env_key_spellings(self):
        assert env_overrides({"COGTAG_LDA_TOPICS": "10", "COGTAG_": "x", "PATH": "/bin"}) == {"lda_topics": "10"}

    def test_empty_values_are_unset(self, tmp_path):
        path = _write(tmp_path / "a.ini", "model_path =\nlda_alpha =\n")
        cfg = load_config(path, environ={})
        assert cfg.model_path is None
        assert cfg.lda_alpha is None
        assert cfg.resolved_model_path == Path("results") / "topic_model.tsv"

    def test_algorithm_list(self):
        cfg = load_config(overrides={"algorithms": "mp, cf,mp"}, environ={})
        assert cfg.algorithms == ["mp", "cf"]
        assert not cfg.needs_topic_model
        assert load_config(overrides={"algorithms": "3lt"}, environ={}).needs_topic_model

    @pytest.mark.parametrize("key,value", [
        ("algorithms", "mp,pitf"),
        ("algorithms", ""),
        ("beta", 1.5),
        ("damping", 1.0),
        ("decay", 0),
        ("sample_fraction", 0),
        ("format", "xml"),
        ("workers", 0),
        ("girptm_mu", -1),
        ("log_level", "LOUD"),
    ])
    def test_invalid_values(self, key, value):
        with pytest.raises(ConfigError):
            load_config(overrides={key: value}, environ={})

    def test_log_level_is_uppercased(self):
        assert load_config(overrides={"log_level": "debug"}, environ={}).log_level == "DEBUG"

    def test_unknown_keys_warn(self, tmp_path, caplog):
        path = _write(tmp_path / "a.ini", "colour = blue\n")
        with caplog.at_level("WARNING", logger="config"):
            load_config(path, environ={})
        assert "colour" in caplog.text

    def test_derived_configs(self):
        cfg = load_config(overrides={
            "lda_topics": 10, "lda_seed": 3, "min_posts": 5, "lowercase": False,
            "beta": 0.25, "pagerank_tol": 1e-6, "strict_precision": True,
        }, environ={})
        lda = cfg.to_lda_config()
        assert lda.num_topics == 10 and lda.seed == 3 and lda.resolved_alpha == 5.0
        pre = cfg.to_preprocess_config()
        assert pre.min_user_posts_for_eval == 5 and not pre.lowercase
        assert "no-tag" in pre.blacklist
        params = cfg.to_benchmark_params()
        assert params.beta == 0.25 and params.tol == 1e-6 and params.strict_precision


class TestValidator:
    """Environment checks before a run."""

    def test_dataset_checks(self, tmp_path):
        missing = load_config(overrides={"output_dir": str(tmp_path / "out")}, environ={})
        assert check_dataset(missing).status == "FAIL"

        dump = _write(tmp_path / "posts.tsv", "u\tr\t1\ta\n")
        assert check_dataset(load_config(overrides={"dataset_path": str(dump)}, environ={})).status == "PASS"

        out = tmp_path / "ingested"
        out.mkdir()
        _write(out / "posts.tsv", "u\tr\t1\ta\n")
        assert check_dataset(load_config(overrides={"output_dir": str(out)}, environ={})).status == "INFO"

    def test_blacklist_checks(self, tmp_path):
        assert check_blacklist(load_config(environ={})).status == "INFO"
        empty = _write(tmp_path / "empty.txt", "\n")
        assert check_blacklist(load_config(overrides={"blacklist_path": str(empty)}, environ={})).status == "WARN"
        listed = _write(tmp_path / "bl.txt", "spam\n")
        assert check_blacklist(load_config(overrides={"blacklist_path": str(listed)}, environ={})).status == "PASS"

    def test_topic_model_checks(self, tmp_path):
        overrides = {"output_dir": str(tmp_path)}
        assert check_topic_model(load_config(overrides={**overrides, "algorithms": "mp"}, environ={})).status == "INFO"
        cfg = load_config(overrides=overrides, environ={})
        assert check_topic_model(cfg).status == "WARN"
        _write(tmp_path / "topic_model.tsv", "r1\t1.0\n")
        assert check_topic_model(cfg).status == "FAIL"
        _write(tmp_path / "topic_model.tsv",
               f"{HEADER_PREFIX} num_topics=1 alpha=50 eta=0.01 iterations=1 seed=0\nr1\t1.0\n")
        assert check_topic_model(cfg).status == "PASS"

    def test_cost_and_leak_warnings(self, tmp_path):
        cfg = load_config(overrides={"lda_on_full": True, "output_dir": str(tmp_path)}, environ={})
        report = run_validation(cfg, root=tmp_path)
        names = {ch.name: ch.status for ch in report.checks}
        assert cfg.lda_topics > SLOW_LDA_HINT
        assert names["lda cost"] == "WARN"
        assert names["lda split"] == "WARN"

        quick = load_config(overrides={"lda_topics": 50, "output_dir": str(tmp_path)}, environ={})
        assert "lda cost" not in {ch.name for ch in run_validation(quick, root=tmp_path).checks}

    def test_json_report(self, tmp_path, capsys):
        cfg = load_config(overrides={"output_dir": str(tmp_path / "out")}, environ={})
        report = run_validation(cfg, root=tmp_path)
        assert report.has_failures
        print_report(report, as_json=True)
        data = json.loads(capsys.readouterr().out)
        assert data["passed"] is False
        assert any(ch["name"] == "dataset" and ch["status"] == "FAIL" for ch in data["checks"])

    def test_text_report(self, tmp_path, capsys):
        dump = _write(tmp_path / "posts.tsv", "u\tr\t1\ta\n")
        cfg = load_config(overrides={"dataset_path": str(dump), "algorithms": "mp", "output_dir": str(tmp_path)},
                          environ={})
        report = run_validation(cfg, root=tmp_path)
        assert report.passed
        print_report(report)
        assert "All critical checks passed." in capsys.readouterr().out
