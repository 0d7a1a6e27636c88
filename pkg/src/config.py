"""
Experiment Configuration
Flat key=value files (optionally under [experiment]), COGTAG_* environment
variables and CLI flags, merged in that order over the model defaults.
"""
from __future__ import annotations

import configparser
import logging
import os
import re
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Union

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, ValidationError, field_validator

from evaluation import ALGORITHM_NAMES, BenchmarkParams
from ingest import SUPPORTED_FORMATS, PreprocessConfig, load_blacklist
from topic_model import LdaConfig

logger = logging.getLogger(__name__)

SECTION = "experiment"
ENV_PREFIX = "COGTAG_"
SECTION_HEADER = re.compile(r"^\s*\[[^\]]+\]\s*$", re.MULTILINE)
TOPIC_ALGORITHMS = ("3l", "3lt", "3lt_mpr")
DEFAULT_ALGORITHMS = ("mp", "mp_u_r", "cf", "folkrank", "girptm", "bll_c", "3l", "3lt", "3lt_mpr")
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


class ConfigError(ValueError):
    pass


class ExperimentConfig(BaseModel):
    """Every knob of an ingest / topics / evaluate run."""

    model_config = ConfigDict(extra="ignore", protected_namespaces=())

    # dataset
    dataset_path: Optional[str] = None
    format: str = "tsv"
    blacklist_path: Optional[str] = None
    lowercase: bool = True
    sample_fraction: float = 1.0
    sample_seed: int = 42
    min_posts: int = 20

    # topics
    lda_topics: int = 1000
    lda_alpha: Optional[float] = None
    lda_eta: float = 0.01
    lda_seed: int = 42
    lda_iterations: int = 500
    lda_on_full: bool = False
    model_path: Optional[str] = None

    # recommenders
    beta: float = 0.5
    decay: float = 0.5
    cf_neighbors: int = 20
    damping: float = 0.7
    pagerank_tol: float = 1e-8
    pagerank_max_iter: int = 200
    girptm_mu: float = 1e-6
    algorithms: List[str] = list(DEFAULT_ALGORITHMS)

    # evaluation / output
    strict_precision: bool = False
    workers: int = 1
    output_dir: str = "results"
    log_level: str = "INFO"

    @field_validator("dataset_path", "blacklist_path", "model_path", "lda_alpha", mode="before")
    @classmethod
    def empty_is_unset(cls, v: Any) -> Any:
        if isinstance(v, str) and not v.strip():
            return None
        return v

    @field_validator("format")
    @classmethod
    def validate_format(cls, v: str) -> str:
        if v not in SUPPORTED_FORMATS:
            raise ValueError(f"format must be one of {', '.join(SUPPORTED_FORMATS)}")
        return v

    @field_validator("sample_fraction")
    @classmethod
    def validate_fraction(cls, v: float) -> float:
        if not 0.0 < v <= 1.0:
            raise ValueError("sample_fraction must be in (0, 1]")
        return v

    @field_validator("min_posts", "lda_topics", "lda_iterations", "cf_neighbors", "pagerank_max_iter", "workers")
    @classmethod
    def validate_at_least_one(cls, v: int) -> int:
        if v < 1:
            raise ValueError("must be >= 1")
        return v

    @field_validator("lda_alpha", "lda_eta", "decay", "pagerank_tol")
    @classmethod
    def validate_positive(cls, v: Optional[float]) -> Optional[float]:
        if v is not None and v <= 0:
            raise ValueError("must be > 0")
        return v

    @field_validator("girptm_mu")
    @classmethod
    def validate_mu(cls, v: float) -> float:
        if v < 0:
            raise ValueError("must be >= 0")
        return v

    @field_validator("beta")
    @classmethod
    def validate_beta(cls, v: float) -> float:
        if not 0.0 <= v <= 1.0:
            raise ValueError("beta must be in [0, 1]")
        return v

    @field_validator("damping")
    @classmethod
    def validate_damping(cls, v: float) -> float:
        if not 0.0 < v < 1.0:
            raise ValueError("damping must be in (0, 1)")
        return v

    @field_validator("algorithms", mode="before")
    @classmethod
    def split_algorithms(cls, v: Any) -> Any:
        if isinstance(v, str):
            return [a.strip() for a in v.split(",") if a.strip()]
        return v

    @field_validator("algorithms")
    @classmethod
    def validate_algorithms(cls, v: List[str]) -> List[str]:
        if not v:
            raise ValueError("at least one algorithm is required")
        unknown = [a for a in v if a not in ALGORITHM_NAMES]
        if unknown:
            raise ValueError(f"unknown algorithm(s): {', '.join(unknown)}; choose from {', '.join(ALGORITHM_NAMES)}")
        return list(dict.fromkeys(v))

    @field_validator("log_level")
    @classmethod
    def validate_log_level(cls, v: str) -> str:
        level = v.upper()
        if level not in LOG_LEVELS:
            raise ValueError(f"log_level must be one of {', '.join(LOG_LEVELS)}")
        return level

    @property
    def posts_path(self) -> Path:
        """Canonical post dump written by ingest."""
        return Path(self.output_dir) / "posts.tsv"

    @property
    def stats_path(self) -> Path:
        return Path(self.output_dir) / "stats.tsv"

    @property
    def resolved_model_path(self) -> Path:
        return Path(self.model_path) if self.model_path else Path(self.output_dir) / "topic_model.tsv"

    @property
    def needs_topic_model(self) -> bool:
        return any(a in TOPIC_ALGORITHMS for a in self.algorithms)

    def to_preprocess_config(self) -> PreprocessConfig:
        return PreprocessConfig(
            blacklist=load_blacklist(self.blacklist_path),
            lowercase=self.lowercase,
            user_sample_fraction=self.sample_fraction,
            sample_seed=self.sample_seed,
            min_user_posts_for_eval=self.min_posts,
        )

    def to_lda_config(self) -> LdaConfig:
        return LdaConfig(
            num_topics=self.lda_topics,
            alpha=self.lda_alpha,
            eta=self.lda_eta,
            iterations=self.lda_iterations,
            seed=self.lda_seed,
        )

    def to_benchmark_params(self) -> BenchmarkParams:
        return BenchmarkParams(
            beta=self.beta,
            decay=self.decay,
            cf_neighbors=self.cf_neighbors,
            damping=self.damping,
            tol=self.pagerank_tol,
            max_iter=self.pagerank_max_iter,
            mu=self.girptm_mu,
            strict_precision=self.strict_precision,
            workers=self.workers,
        )


def normalize_key(key: str) -> str:
    """sampleFraction / sample-fraction / SAMPLE_FRACTION -> sample_fraction."""
    key = key.strip().replace("-", "_")
    if not key.isupper():
        key = re.sub(r"(?<=[a-z0-9])(?=[A-Z])", "_", key)
    return key.lower()


def read_config_file(path: Union[str, Path]) -> Dict[str, str]:
    """Read a flat key=value file; a missing section header means [experiment]."""
    config_path = Path(path)
    if not config_path.exists():
        raise ConfigError(f"Config file not found: {config_path}")
    text = config_path.read_text(encoding="utf-8")
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str  # keep camelCase for normalize_key
    try:
        if not SECTION_HEADER.search(text):
            text = f"[{SECTION}]\n{text}"
        parser.read_string(text, source=str(config_path))
    except configparser.Error as e:
        raise ConfigError(f"Malformed config file {config_path}: {e}") from e
    if not parser.has_section(SECTION):
        raise ConfigError(f"{config_path} has no [{SECTION}] section")
    return {normalize_key(k): v.strip().strip('"') for k, v in parser.items(SECTION)}


def env_overrides(environ: Optional[Mapping[str, str]] = None) -> Dict[str, str]:
    """COGTAG_* variables (after loading .env) as config keys."""
    if environ is None:
        load_dotenv()
        environ = os.environ
    return {
        normalize_key(name[len(ENV_PREFIX):]): value
        for name, value in environ.items()
        if name.startswith(ENV_PREFIX) and len(name) > len(ENV_PREFIX)
    }


def load_config(
    path: Optional[Union[str, Path]] = None,
    overrides: Optional[Mapping[str, Any]] = None,
    environ: Optional[Mapping[str, str]] = None,
) -> ExperimentConfig:
    """defaults < file < environment < overrides (CLI flags); None overrides are ignored."""
    merged: Dict[str, Any] = {}
    if path is not None:
        merged.update(read_config_file(path))
    merged.update(env_overrides(environ))
    merged.update({normalize_key(k): v for k, v in (overrides or {}).items() if v is not None})

    unknown = sorted(k for k in merged if k not in ExperimentConfig.model_fields)
    if unknown:
        logger.warning("Ignoring unknown config keys: %s", ", ".join(unknown))
    try:
        return ExperimentConfig(**merged)
    except ValidationError as e:
        raise ConfigError(str(e)) from e


if __name__ == "__main__":
    import sys

    cfg = load_config(sys.argv[1] if len(sys.argv) > 1 else None)
    for key, value in cfg.model_dump().items():
        print(f"{key} = {value}")
