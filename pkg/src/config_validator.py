"""Configuration validation for cogtag experiments."""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

from config import TOPIC_ALGORITHMS, ExperimentConfig
from ingest import DEFAULT_BLACKLIST, load_blacklist
from topic_model import HEADER_PREFIX

SLOW_LDA_HINT = 200


@dataclass
class CheckResult:
    name: str
    status: str
    details: str
    suggestion: Optional[str] = None


@dataclass
class ValidationReport:
    root: str
    checks: List[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.has_failures

    @property
    def has_failures(self) -> bool:
        return any(ch.status == "FAIL" for ch in self.checks)

    def as_dict(self) -> Dict[str, object]:
        return {
            "root": self.root,
            "passed": self.passed,
            "checks": [
                {
                    "name": ch.name,
                    "status": ch.status,
                    "details": ch.details,
                    "suggestion": ch.suggestion,
                }
                for ch in self.checks
            ],
        }


def check_dataset(cfg: ExperimentConfig) -> CheckResult:
    if not cfg.dataset_path:
        if cfg.posts_path.exists():
            return CheckResult("dataset", "INFO", f"No dataset_path; using ingested posts at {cfg.posts_path}")
        return CheckResult(
            "dataset",
            "FAIL",
            "No dataset_path configured and no ingested posts found",
            "Set dataset_path in the config file or pass --dataset.",
        )
    path = Path(cfg.dataset_path)
    if not path.is_file():
        return CheckResult("dataset", "FAIL", f"Dataset not found at {path}", "Check dataset_path.")
    return CheckResult("dataset", "PASS", f"{path} ({path.stat().st_size} bytes)")


def check_blacklist(cfg: ExperimentConfig) -> CheckResult:
    if not cfg.blacklist_path:
        return CheckResult("blacklist", "INFO", f"Using default blacklist: {', '.join(sorted(DEFAULT_BLACKLIST))}")
    path = Path(cfg.blacklist_path)
    if not path.is_file():
        return CheckResult("blacklist", "FAIL", f"Blacklist not found at {path}", "Fix blacklist_path or remove it.")
    entries = load_blacklist(path)
    if not entries:
        return CheckResult("blacklist", "WARN", f"{path} lists no tags", "Add one tag per line or drop the setting.")
    return CheckResult("blacklist", "PASS", f"{len(entries)} blacklisted tags from {path}")


def check_topic_model(cfg: ExperimentConfig) -> CheckResult:
    selected = [a for a in cfg.algorithms if a in TOPIC_ALGORITHMS]
    if not selected:
        return CheckResult("topic model", "INFO", "No topic-based algorithm selected")
    path = cfg.resolved_model_path
    if not path.is_file():
        return CheckResult(
            "topic model",
            "WARN",
            f"{', '.join(selected)} need a topic model; none at {path}",
            "Run 'cogtag topics' before 'cogtag evaluate'.",
        )
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline()
    if not header.startswith(HEADER_PREFIX):
        return CheckResult("topic model", "FAIL", f"{path} is not a cogtag topic model", "Retrain with 'cogtag topics'.")
    return CheckResult("topic model", "PASS", f"{path}: {header[len(HEADER_PREFIX):].strip()}")


def check_topic_settings(cfg: ExperimentConfig) -> List[CheckResult]:
    checks = [CheckResult(
        "lda", "PASS", f"Z={cfg.lda_topics}, iterations={cfg.lda_iterations}, seed={cfg.lda_seed}"
    )]
    if cfg.lda_topics > SLOW_LDA_HINT and cfg.lda_iterations > SLOW_LDA_HINT:
        checks.append(CheckResult(
            "lda cost",
            "WARN",
            f"{cfg.lda_topics} topics x {cfg.lda_iterations} sweeps can take hours on large dumps",
            "Lower lda_iterations or lda_topics for desk-scale runs.",
        ))
    if cfg.lda_on_full:
        checks.append(CheckResult(
            "lda split",
            "WARN",
            "Topics are trained on the full folksonomy; test tags influence the cue vectors",
            "Unset lda_on_full for a leak-free protocol.",
        ))
    return checks


def check_output_dir(cfg: ExperimentConfig) -> CheckResult:
    out = Path(cfg.output_dir)
    target = out if out.exists() else out.parent if str(out.parent) else Path(".")
    if target.exists() and not os.access(target, os.W_OK):
        return CheckResult("output dir", "FAIL", f"{target} is not writable", "Choose another output_dir.")
    return CheckResult("output dir", "PASS", f"Writing results to {out}")


def run_validation(cfg: ExperimentConfig, root: Path = Path(".")) -> ValidationReport:
    report = ValidationReport(root=str(root.resolve()))
    report.checks.append(check_dataset(cfg))
    report.checks.append(check_blacklist(cfg))
    report.checks.extend(check_topic_settings(cfg))
    report.checks.append(check_topic_model(cfg))
    report.checks.append(CheckResult("algorithms", "PASS", ", ".join(cfg.algorithms)))
    if cfg.sample_fraction < 1.0:
        report.checks.append(CheckResult(
            "sampling", "INFO", f"Keeping {cfg.sample_fraction:.0%} of users (seed {cfg.sample_seed})"
        ))
    report.checks.append(check_output_dir(cfg))
    return report


def print_report(report: ValidationReport, as_json: bool = False) -> None:
    if as_json:
        print(json.dumps(report.as_dict(), indent=2))
        return
    print(f"Configuration validation for {report.root}\n")
    icon_map = {"PASS": "[PASS]", "WARN": "[WARN]", "FAIL": "[FAIL]", "INFO": "[INFO]"}
    suggestions: List[str] = []
    for check in report.checks:
        icon = icon_map.get(check.status, "•")
        print(f"{icon} {check.name}: {check.details}")
        if check.suggestion:
            print(f"    Suggestion: {check.suggestion}")
            if check.status != "PASS" and check.suggestion not in suggestions:
                suggestions.append(check.suggestion)

    if report.passed:
        print("\nAll critical checks passed.")
    else:
        print("\nSome checks need attention.")
        for tip in suggestions[:5]:
            print(f"  - {tip}")
