"""Latency benchmark comparing rankers on a fixed query set.

Times the pipeline call only (no network, no I/O): a warmup pass, then at
least 1000 timed queries per ranker, reporting p50/p95/p99 microseconds,
throughput, mean stage breakdown, the analytic multiply counts, and the
measured constrained-vs-unconstrained sampling-stage speedup (the dot
product against pruned candidates is the stage the pruning exists to
shrink, so that is what the speedup isolates).
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractError
from .inference import PipelineConfig, SuggestEngine, count_multiplications, suggest_mcvae

MIN_WARMUP = 100
MIN_QUERIES = 1000

BENCH_RANKERS = ("matching", "mmr", "mcvae", "mcvae-unconstrained")


@dataclass
class BenchConfig:
    warmup: int = MIN_WARMUP
    queries: int = MIN_QUERIES
    rankers: tuple = BENCH_RANKERS
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)

    def __post_init__(self) -> None:
        if self.warmup < MIN_WARMUP:
            raise ContractError(f"warmup must be >= {MIN_WARMUP}, got {self.warmup}")
        if self.queries < MIN_QUERIES:
            raise ContractError(f"queries must be >= {MIN_QUERIES}, got {self.queries}")


@dataclass
class RankerTiming:
    p50_us: float
    p95_us: float
    p99_us: float
    mean_us: float
    throughput_qps: float
    stage_means_us: dict[str, float]

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class BenchReport:
    rankers: dict[str, RankerTiming]
    sampling_comparison: dict
    multiply_counts: dict
    queries: int
    warmup: int

    def to_dict(self) -> dict:
        return {
            "rankers": {name: r.to_dict() for name, r in self.rankers.items()},
            "sampling_comparison": self.sampling_comparison,
            "multiply_counts": self.multiply_counts,
            "queries": self.queries,
            "warmup": self.warmup,
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True), encoding="utf-8")


def _run_one(engine: SuggestEngine, message: str, ranker: str, config: PipelineConfig):
    if ranker == "mcvae-unconstrained":
        return suggest_mcvae(
            message, engine.model, engine.artifact, engine.cvae, config,
            candidate_override=engine.artifact.size,
        )
    return engine.suggest(message, ranker)


def bench(engine: SuggestEngine, messages: list[str], config: BenchConfig | None = None) -> BenchReport:
    config = config or BenchConfig()
    if not messages:
        raise ContractError("bench needs a nonempty query set")
    if "mcvae" in config.rankers and engine.cvae is None:
        raise ContractError("mcvae rankers need CVAE parameters loaded")
    pipeline = config.pipeline

    rankers: dict[str, RankerTiming] = {}
    vote_stage_samples: dict[str, list[float]] = {}
    for ranker in config.rankers:
        for i in range(config.warmup):
            _run_one(engine, messages[i % len(messages)], ranker, pipeline)
        totals: list[float] = []
        stages: dict[str, list[float]] = {}
        for i in range(config.queries):
            message = messages[i % len(messages)]
            t0 = time.perf_counter_ns()
            result = _run_one(engine, message, ranker, pipeline)
            totals.append((time.perf_counter_ns() - t0) / 1000.0)
            for stage, value in result.timings_us.items():
                stages.setdefault(stage, []).append(value)
        arr = np.asarray(totals)
        rankers[ranker] = RankerTiming(
            p50_us=float(np.percentile(arr, 50)),
            p95_us=float(np.percentile(arr, 95)),
            p99_us=float(np.percentile(arr, 99)),
            mean_us=float(arr.mean()),
            throughput_qps=float(1e6 / arr.mean()),
            stage_means_us={k: float(np.mean(v)) for k, v in sorted(stages.items())},
        )
        if "vote_score_us" in stages:
            vote_stage_samples[ranker] = stages["vote_score_us"]

    artifact = engine.artifact
    hidden = engine.cvae.hidden if engine.cvae is not None else 0
    z_dim = engine.cvae.z_dim if engine.cvae is not None else 0
    multiply_counts = count_multiplications(
        R=artifact.size, d=artifact.dim, k=min(pipeline.k, artifact.size),
        samples=pipeline.samples, z_dim=z_dim, hidden=hidden,
    )

    comparison: dict = {"analytic_scoring_ratio": multiply_counts["scoring_ratio"]}
    if "mcvae" in vote_stage_samples and "mcvae-unconstrained" in vote_stage_samples:
        constrained = float(np.percentile(vote_stage_samples["mcvae"], 50))
        unconstrained = float(np.percentile(vote_stage_samples["mcvae-unconstrained"], 50))
        comparison.update(
            constrained_vote_score_p50_us=constrained,
            unconstrained_vote_score_p50_us=unconstrained,
            measured_speedup=unconstrained / constrained if constrained > 0 else float("inf"),
        )
    return BenchReport(
        rankers=rankers,
        sampling_comparison=comparison,
        multiply_counts=multiply_counts,
        queries=config.queries,
        warmup=config.warmup,
    )
