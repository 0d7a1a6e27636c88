"""
Benchmark Driver and Ranking Metrics
------------------------------------
Scores every evaluation user's test post against the top-k tags an algorithm
recommends for its (user, resource) pair on the TRAIN folksonomy, and reports
Precision/Recall/F1 for k = 1..10 plus F1@5, MRR, MAP and nDCG@10.

Outputs:
  summary.csv           algorithm,k,precision,recall,f1   (k = 1..10)
  summary_metrics.csv   algorithm,metric,value            (F1@5, MRR, MAP, nDCG@10)
  summary_combined.csv  algorithm,k,precision,recall rows, then algorithm,metric,value rows
  queries_<alg>.tsv     user, resource, relevant_tags, recommended_tags (pipe-joined)
"""
from __future__ import annotations

import concurrent.futures as cf
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import AbstractSet, Callable, Dict, FrozenSet, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, field_validator
from rich.console import Console
from rich.table import Table

from baselines import (
    CfConfig,
    CfIndex,
    FolkRankConfig,
    TripartiteGraph,
    apr,
    bll_c,
    cf_user,
    folkrank,
    girptm,
    mp,
    mp_r,
    mp_u,
    mp_u_r,
)
from cognitive import (
    ColdUserError,
    MemoryCache,
    MixParams,
    RankedTags,
    rank_scored,
    recommend_3lt_mpr,
    score_3l,
    score_3lt,
)
from folksonomy import EntityId, Folksonomy, FolksonomyStats
from ingest import SplitResult
from topic_model import TopicModel

logger = logging.getLogger(__name__)

MAX_K = 10
F1_CUTOFF = 5
NDCG_CUTOFF = 10
SCALAR_METRICS = ("F1@5", "MRR", "MAP", "nDCG@10")


# -- metrics ---------------------------------------------------------------

def _hits(rec: Sequence[str], rel: AbstractSet[str], k: int) -> int:
    return sum(1 for t in rec[:k] if t in rel)


def precision_at_k(rec: Sequence[str], rel: AbstractSet[str], k: int, strict: bool = False) -> float:
    """Hits in top-k over min(k, |rec|), or over k when strict."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not rec:
        return 0.0
    denom = k if strict else min(k, len(rec))
    return _hits(rec, rel, k) / denom


def recall_at_k(rec: Sequence[str], rel: AbstractSet[str], k: int) -> float:
    if k < 1:
        raise ValueError("k must be >= 1")
    if not rel:
        return 0.0
    return _hits(rec, rel, k) / len(rel)


def f1_at_k(rec: Sequence[str], rel: AbstractSet[str], k: int, strict: bool = False) -> float:
    p = precision_at_k(rec, rel, k, strict=strict)
    r = recall_at_k(rec, rel, k)
    if p + r == 0:
        return 0.0
    return 2 * p * r / (p + r)


def mrr(rec: Sequence[str], rel: AbstractSet[str]) -> float:
    for rank, tag in enumerate(rec, 1):
        if tag in rel:
            return 1.0 / rank
    return 0.0


def map_metric(rec: Sequence[str], rel: AbstractSet[str]) -> float:
    """Precision at each relevant hit, summed and divided by |rel|."""
    if not rel:
        return 0.0
    hits = 0
    total = 0.0
    for rank, tag in enumerate(rec, 1):
        if tag in rel:
            hits += 1
            total += hits / rank
    return total / len(rel)


def ndcg_at_k(rec: Sequence[str], rel: AbstractSet[str], k: int) -> float:
    """Binary-gain nDCG; ideal DCG covers min(|rel|, k) hits."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not rel:
        return 0.0
    dcg = sum(1.0 / math.log2(rank + 1) for rank, tag in enumerate(rec[:k], 1) if tag in rel)
    ideal = sum(1.0 / math.log2(rank + 1) for rank in range(1, min(len(rel), k) + 1))
    return dcg / ideal


# -- records ---------------------------------------------------------------

@dataclass(frozen=True)
class QueryResult:
    user: str
    resource: str
    recommended: Tuple[str, ...]
    relevant: FrozenSet[str]
    failed: bool = False

    def __post_init__(self) -> None:
        if not self.relevant:
            raise ValueError("query without relevant tags")
        if len(set(self.recommended)) != len(self.recommended):
            raise ValueError("duplicate tags in recommendation")


@dataclass
class EvalReport:
    algorithm: str
    precision: List[float]
    recall: List[float]
    f1: List[float]
    metrics: Dict[str, float]
    user_count: int
    failures: int = 0
    queries: List[QueryResult] = field(default_factory=list)

    def summary_rows(self) -> List[Dict[str, object]]:
        return [
            {"algorithm": self.algorithm, "k": k, "precision": p, "recall": r, "f1": f}
            for k, (p, r, f) in enumerate(zip(self.precision, self.recall, self.f1), 1)
        ]

    def metric_rows(self) -> List[Dict[str, object]]:
        return [{"algorithm": self.algorithm, "metric": name, "value": self.metrics[name]} for name in SCALAR_METRICS]


def summarize(algorithm: str, queries: Sequence[QueryResult], failures: int = 0, strict: bool = False) -> EvalReport:
    """Macro-average over queries, in the given (fixed) order."""
    n = len(queries)
    ks = range(1, MAX_K + 1)
    if n == 0:
        zeros = [0.0] * MAX_K
        return EvalReport(algorithm, list(zeros), list(zeros), list(zeros),
                          {name: 0.0 for name in SCALAR_METRICS}, 0, failures, [])
    prec = np.array([[precision_at_k(q.recommended, q.relevant, k, strict) for k in ks] for q in queries])
    rec = np.array([[recall_at_k(q.recommended, q.relevant, k) for k in ks] for q in queries])
    f1 = np.array([[f1_at_k(q.recommended, q.relevant, k, strict) for k in ks] for q in queries])
    metrics = {
        "F1@5": float(f1[:, F1_CUTOFF - 1].mean()),
        "MRR": float(np.mean([mrr(q.recommended, q.relevant) for q in queries])),
        "MAP": float(np.mean([map_metric(q.recommended, q.relevant) for q in queries])),
        "nDCG@10": float(np.mean([ndcg_at_k(q.recommended, q.relevant, NDCG_CUTOFF) for q in queries])),
    }
    return EvalReport(
        algorithm=algorithm,
        precision=[float(x) for x in prec.mean(axis=0)],
        recall=[float(x) for x in rec.mean(axis=0)],
        f1=[float(x) for x in f1.mean(axis=0)],
        metrics=metrics,
        user_count=n,
        failures=failures,
        queries=list(queries),
    )


# -- algorithms ------------------------------------------------------------

class UnknownAlgorithmError(ValueError):
    pass


class TopicModelRequiredError(ValueError):
    def __init__(self, message: str = "topic model required") -> None:
        super().__init__(message)


class BenchmarkParams(BaseModel):
    model_config = ConfigDict(frozen=True, extra="ignore")

    k: int = MAX_K
    beta: float = 0.5
    decay: float = 0.5
    cf_neighbors: int = 20
    damping: float = 0.7
    tol: float = 1e-8
    max_iter: int = 200
    mu: float = 1e-6
    strict_precision: bool = False
    workers: int = 1

    @field_validator("k")
    @classmethod
    def validate_k(cls, v: int) -> int:
        if not 1 <= v <= MAX_K:
            raise ValueError(f"k must be in [1, {MAX_K}]")
        return v

    @field_validator("workers")
    @classmethod
    def validate_workers(cls, v: int) -> int:
        if v < 1:
            raise ValueError("workers must be >= 1")
        return v

    @property
    def mix_params(self) -> MixParams:
        return MixParams(beta=self.beta, k=self.k)

    @property
    def cf_config(self) -> CfConfig:
        return CfConfig(neighborhood_size=self.cf_neighbors)

    @property
    def folkrank_config(self) -> FolkRankConfig:
        return FolkRankConfig(damping=self.damping, tol=self.tol, max_iter=self.max_iter)


Recommender = Callable[[EntityId, EntityId], RankedTags]


class RecommenderContext:
    """Train data, topic model and the lazily built shared indices."""

    def __init__(self, train: Folksonomy, model: Optional[TopicModel], params: BenchmarkParams) -> None:
        self.train = train
        self.model = model
        self.params = params

    @cached_property
    def graph(self) -> TripartiteGraph:
        return TripartiteGraph(self.train)

    @cached_property
    def cf_index(self) -> CfIndex:
        return CfIndex(self.train)

    @cached_property
    def memories(self) -> MemoryCache:
        return MemoryCache()

    def require_model(self) -> TopicModel:
        if self.model is None:
            raise TopicModelRequiredError()
        return self.model


def _scored_or_empty(fn: Callable[[], RankedTags]) -> RankedTags:
    try:
        return fn()
    except ColdUserError:
        return []


def _build_3l(ctx: RecommenderContext) -> Recommender:
    model, memories, k = ctx.require_model(), ctx.memories, ctx.params.k
    return lambda u, r: _scored_or_empty(
        lambda: rank_scored(score_3l(u, r, ctx.train, model, cache=memories), ctx.train, r, k)
    )


def _build_3lt(ctx: RecommenderContext) -> Recommender:
    model, memories, p = ctx.require_model(), ctx.memories, ctx.params
    return lambda u, r: _scored_or_empty(
        lambda: rank_scored(score_3lt(u, r, ctx.train, model, decay=p.decay, cache=memories), ctx.train, r, p.k)
    )


def _build_3lt_mpr(ctx: RecommenderContext) -> Recommender:
    model, memories, p = ctx.require_model(), ctx.memories, ctx.params
    return lambda u, r: recommend_3lt_mpr(u, r, ctx.train, model, p.mix_params, decay=p.decay, cache=memories)


def _build_cf(ctx: RecommenderContext) -> Recommender:
    index, p = ctx.cf_index, ctx.params
    return lambda u, r: cf_user(ctx.train, u, r, p.cf_config, p.k, index=index)


def _build_apr(ctx: RecommenderContext) -> Recommender:
    graph, p = ctx.graph, ctx.params
    return lambda u, r: apr(ctx.train, u, r, p.k, p.folkrank_config, graph=graph)


def _build_folkrank(ctx: RecommenderContext) -> Recommender:
    graph, p = ctx.graph, ctx.params
    graph.baseline(p.folkrank_config)
    return lambda u, r: folkrank(ctx.train, u, r, p.k, p.folkrank_config, graph=graph)


@dataclass(frozen=True)
class AlgorithmSpec:
    name: str
    description: str
    build: Callable[[RecommenderContext], Recommender]
    requires_topic_model: bool = False


class AlgorithmRegistry:
    """Registry of the benchmarkable recommenders."""

    def __init__(self) -> None:
        self._specs: Dict[str, AlgorithmSpec] = {}
        for spec in _default_specs():
            self.register(spec)

    def register(self, spec: AlgorithmSpec) -> None:
        self._specs[spec.name] = spec

    def names(self) -> List[str]:
        return list(self._specs)

    def get(self, name: str) -> AlgorithmSpec:
        spec = self._specs.get(name)
        if spec is None:
            raise UnknownAlgorithmError(f"Unknown algorithm: {name}")
        return spec

    def needs_topic_model(self, names: Sequence[str]) -> bool:
        return any(self.get(n).requires_topic_model for n in names)

    def build(self, name: str, ctx: RecommenderContext) -> Recommender:
        return self.get(name).build(ctx)


def _default_specs() -> List[AlgorithmSpec]:
    return [
        AlgorithmSpec("mp", "globally most popular tags", lambda ctx: lambda u, r: mp(ctx.train, ctx.params.k)),
        AlgorithmSpec("mp_u", "user's most popular tags", lambda ctx: lambda u, r: mp_u(ctx.train, u, ctx.params.k)),
        AlgorithmSpec("mp_r", "resource's most popular tags", lambda ctx: lambda u, r: mp_r(ctx.train, r, ctx.params.k)),
        AlgorithmSpec("mp_u_r", "mix of MPu and MPr", lambda ctx: lambda u, r: mp_u_r(ctx.train, u, r, ctx.params.mix_params)),
        AlgorithmSpec("cf", "user-based collaborative filtering", _build_cf),
        AlgorithmSpec("apr", "adapted PageRank", _build_apr),
        AlgorithmSpec("folkrank", "FolkRank differential", _build_folkrank),
        AlgorithmSpec(
            "girptm", "GIRPTM-style exponential recency mixed with MPr",
            lambda ctx: lambda u, r: girptm(ctx.train, u, r, ctx.params.mix_params, ctx.params.mu),
        ),
        AlgorithmSpec(
            "bll_c", "base-level activation mixed with MPr",
            lambda ctx: lambda u, r: bll_c(ctx.train, u, r, ctx.params.mix_params, ctx.params.decay),
        ),
        AlgorithmSpec("3l", "categorization", _build_3l, requires_topic_model=True),
        AlgorithmSpec("3lt", "categorization with temporal decay", _build_3lt, requires_topic_model=True),
        AlgorithmSpec("3lt_mpr", "3LT mixed with MPr", _build_3lt_mpr, requires_topic_model=True),
    ]


ALGORITHM_NAMES: Tuple[str, ...] = tuple(spec.name for spec in _default_specs())


# -- driver ----------------------------------------------------------------

def _score_query(recommender: Recommender, u: EntityId, r: EntityId, k: int) -> Tuple[Tuple[str, ...], bool]:
    try:
        ranked = recommender(u, r)
    except Exception as e:
        logger.warning("Recommendation failed for (%s, %s): %s", u.original, r.original, e)
        return (), True
    return tuple(tag for tag, _ in ranked[:k]), False


def evaluate_algorithm(
    name: str, recommender: Recommender, split: SplitResult, params: BenchmarkParams
) -> EvalReport:
    queries = split.eval_queries()
    # only (user, resource) reaches the recommender; test tags are read afterwards
    pairs = [(post.user, post.resource) for post in queries]
    if params.workers > 1 and len(pairs) > 1:
        with cf.ThreadPoolExecutor(max_workers=params.workers) as pool:
            futures = [pool.submit(_score_query, recommender, u, r, params.k) for u, r in pairs]
            outcomes = [f.result() for f in futures]
    else:
        outcomes = [_score_query(recommender, u, r, params.k) for u, r in pairs]

    results: List[QueryResult] = []
    failures = 0
    for post, (recommended, failed) in zip(queries, outcomes):
        failures += int(failed)
        results.append(QueryResult(
            user=post.user.original,
            resource=post.resource.original,
            recommended=recommended,
            relevant=frozenset(post.tag_labels),
            failed=failed,
        ))
    report = summarize(name, results, failures=failures, strict=params.strict_precision)
    logger.info("%s: %d users, P@1=%.4f R@10=%.4f MRR=%.4f (%d failures)",
                name, report.user_count, report.precision[0], report.recall[-1], report.metrics["MRR"], failures)
    return report


def run_benchmark(
    split: SplitResult,
    algorithms: Sequence[str],
    model: Optional[TopicModel],
    params: BenchmarkParams = BenchmarkParams(),
    registry: Optional[AlgorithmRegistry] = None,
) -> List[EvalReport]:
    """Evaluate each algorithm on the split's evaluation queries, in the given order."""
    reg = registry if registry is not None else AlgorithmRegistry()
    for name in algorithms:
        reg.get(name)
    if model is None and reg.needs_topic_model(algorithms):
        raise TopicModelRequiredError()
    ctx = RecommenderContext(split.train, model, params)
    reports = []
    for name in algorithms:
        recommender = reg.build(name, ctx)
        reports.append(evaluate_algorithm(name, recommender, split, params))
    return reports


# -- reporting -------------------------------------------------------------

def summary_frame(reports: Sequence[EvalReport]) -> pd.DataFrame:
    rows = [row for rep in reports for row in rep.summary_rows()]
    return pd.DataFrame(rows, columns=["algorithm", "k", "precision", "recall", "f1"])


def metrics_frame(reports: Sequence[EvalReport]) -> pd.DataFrame:
    rows = [row for rep in reports for row in rep.metric_rows()]
    return pd.DataFrame(rows, columns=["algorithm", "metric", "value"])


def write_summary(reports: Sequence[EvalReport], output_dir: Union[str, Path]) -> Tuple[Path, Path]:
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary_path = out / "summary.csv"
    metrics_path = out / "summary_metrics.csv"
    summary_frame(reports).to_csv(summary_path, index=False, float_format="%.6f", lineterminator="\n")
    metrics_frame(reports).to_csv(metrics_path, index=False, float_format="%.6f", lineterminator="\n")
    return summary_path, metrics_path


def write_combined_summary(reports: Sequence[EvalReport], output_dir: Union[str, Path]) -> Path:
    """Both tables in one file: the per-k block, then the scalar-metric block, each with its header."""
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "summary_combined.csv"
    per_k = summary_frame(reports).drop(columns=["f1"])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        per_k.to_csv(fh, index=False, float_format="%.6f", lineterminator="\n")
        metrics_frame(reports).to_csv(fh, index=False, float_format="%.6f", lineterminator="\n")
    return path


def write_query_log(report: EvalReport, output_dir: Union[str, Path]) -> Path:
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"queries_{report.algorithm}.tsv"
    frame = pd.DataFrame(
        [
            {
                "user": q.user,
                "resource": q.resource,
                "relevant_tags": "|".join(sorted(q.relevant)),
                "recommended_tags": "|".join(q.recommended),
            }
            for q in report.queries
        ],
        columns=["user", "resource", "relevant_tags", "recommended_tags"],
    )
    frame.to_csv(path, sep="\t", index=False, lineterminator="\n")
    return path


def write_stats(stats: FolksonomyStats, path: Union[str, Path], eval_users: Optional[int] = None) -> Path:
    row = dict(stats.as_dict())
    if eval_users is not None:
        row["eval_users"] = eval_users
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame([row]).to_csv(out, sep="\t", index=False, lineterminator="\n")
    return out


def stats_table(stats: FolksonomyStats, title: str = "Dataset Statistics", eval_users: Optional[int] = None) -> Table:
    table = Table(title=title)
    for name in stats.as_dict():
        table.add_column(name, justify="right", style="cyan")
    if eval_users is not None:
        table.add_column("eval users", justify="right", style="cyan")
    values = [str(v) for v in stats.as_dict().values()]
    if eval_users is not None:
        values.append(str(eval_users))
    table.add_row(*values)
    return table


def precision_recall_table(reports: Sequence[EvalReport]) -> Table:
    """Per-k precision/recall per algorithm, one row per k."""
    table = Table(title="Precision / Recall @ k")
    table.add_column("k", justify="right", style="cyan")
    for rep in reports:
        table.add_column(f"{rep.algorithm} P", justify="right")
        table.add_column(f"{rep.algorithm} R", justify="right")
    for k in range(MAX_K):
        cells = [str(k + 1)]
        for rep in reports:
            cells += [f"{rep.precision[k]:.4f}", f"{rep.recall[k]:.4f}"]
        table.add_row(*cells)
    return table


def metrics_table(reports: Sequence[EvalReport]) -> Table:
    table = Table(title="Ranking Metrics")
    table.add_column("Algorithm", style="cyan")
    for name in SCALAR_METRICS:
        table.add_column(name, justify="right")
    table.add_column("Users", justify="right")
    table.add_column("Failures", justify="right")
    for rep in reports:
        table.add_row(rep.algorithm, *[f"{rep.metrics[n]:.4f}" for n in SCALAR_METRICS],
                      str(rep.user_count), str(rep.failures))
    return table


def print_reports(reports: Sequence[EvalReport], console: Optional[Console] = None) -> None:
    con = console or Console()
    con.print(precision_recall_table(reports))
    con.print(metrics_table(reports))


if __name__ == "__main__":
    rec = ["x", "a", "b"]
    rel = {"a", "b"}
    print("P@3", precision_at_k(rec, rel, 3), "R@3", recall_at_k(rec, rel, 3))
    print("MRR", mrr(rec, rel), "MAP", map_metric(rec, rel), "nDCG@2", ndcg_at_k(rec, rel, 2))
