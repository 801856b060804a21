"""Accuracy-versus-cost benchmarking over recorded, synthetic, or live streams.

Every strategy row is produced by the same controller loop on a per-problem
stream; replay/synthetic sources make those streams identical across
strategies, so comparisons are paired.
"""
from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Union

from .aggregate import AggregationStrategy
from .answers import AnswerKey, Modality, answers_equal
from .controller import RunConfig, RunRecord, StoppingStrategy, dumps_record, run_problem
from .samplers import ProblemSpec, SampleSource
from .stoptests import AgreementParams

StrategyName = Union[StoppingStrategy, AggregationStrategy]

ALL_STOPPING = [s.value for s in StoppingStrategy]
ALL_AGGREGATION = [s.value for s in AggregationStrategy]


def parse_strategy(name: str) -> StrategyName:
    try:
        return StoppingStrategy(name)
    except ValueError:
        pass
    try:
        return AggregationStrategy(name)
    except ValueError:
        known = ", ".join(ALL_STOPPING + ALL_AGGREGATION)
        raise ValueError(f"unknown strategy {name!r} (known: {known})")


def config_for(strategy: StrategyName, *, params: Optional[AgreementParams] = None,
               rho: float = 0.975, budget: int = 40, esc_window_size: int = 5,
               beta_rho: Optional[float] = None) -> RunConfig:
    """Build the controller config for either kind of strategy row.

    Aggregation strategies run as fixed-consumption rows: sc-cot/sc-pot read
    `budget` samples of their own modality, cot/pot read the single
    temperature-0 sample, and the cp-* rules read the alternating budget.
    """
    if isinstance(strategy, StoppingStrategy):
        return RunConfig(strategy=strategy, params=params, rho=rho, budget=budget,
                         esc_window_size=esc_window_size, beta_rho=beta_rho)
    single: Optional[Modality] = None
    row_budget = budget
    if strategy in (AggregationStrategy.SC_COT, AggregationStrategy.COT_SINGLE):
        single = Modality.COT
    elif strategy in (AggregationStrategy.SC_POT, AggregationStrategy.POT_SINGLE):
        single = Modality.POT
    if strategy in (AggregationStrategy.COT_SINGLE, AggregationStrategy.POT_SINGLE):
        row_budget = 1
    return RunConfig(strategy=StoppingStrategy.FULL, params=params, rho=rho,
                     budget=row_budget, fallback=strategy, single_modality=single,
                     label=strategy.value)


def score(record: RunRecord, gold: AnswerKey) -> bool:
    """Abstain (no answer) counts as incorrect."""
    return answers_equal(record.verdict.answer, gold)


@dataclass
class StrategyMetrics:
    strategy: str
    n: int
    accuracy: float          # percent
    avg_samples: float
    two_sample_rate: float   # percent
    reduction_factor: float  # reference budget / avg_samples

    def to_json(self) -> dict:
        return {
            "strategy": self.strategy,
            "n": self.n,
            "accuracy": self.accuracy,
            "avg_samples": self.avg_samples,
            "two_sample_rate": self.two_sample_rate,
            "reduction_factor": self.reduction_factor,
        }


def metrics_from_records(name: str, records: Sequence[RunRecord],
                         golds: Dict[str, AnswerKey],
                         reference_budget: int) -> StrategyMetrics:
    n = len(records)
    if n == 0:
        return StrategyMetrics(name, 0, 0.0, 0.0, 0.0, 0.0)
    correct = sum(1 for r in records if score(r, golds[r.problem_id]))
    total_samples = sum(r.samples_used for r in records)
    two = sum(1 for r in records if r.stopped_at_two)
    avg = total_samples / n
    return StrategyMetrics(
        strategy=name,
        n=n,
        accuracy=100.0 * correct / n,
        avg_samples=avg,
        two_sample_rate=100.0 * two / n,
        reduction_factor=(reference_budget / avg) if avg > 0 else float("nan"),
    )


@dataclass
class EvalReport:
    dataset: str
    model: str
    budget: int
    rows: List[StrategyMetrics]
    records: Dict[str, List[RunRecord]] = field(default_factory=dict)

    def row(self, strategy: str) -> StrategyMetrics:
        for r in self.rows:
            if r.strategy == strategy:
                return r
        raise KeyError(strategy)

    def render_table(self) -> str:
        title = f"dataset={self.dataset or '-'} model={self.model or '-'} budget={self.budget}"
        header = (f"{'strategy':<10} {'n':>6} {'accuracy%':>10} "
                  f"{'avg_samples':>12} {'two_sample%':>12} {'reduction':>10}")
        lines = [title, header, "-" * len(header)]
        for r in self.rows:
            lines.append(
                f"{r.strategy:<10} {r.n:>6d} {r.accuracy:>10.2f} "
                f"{r.avg_samples:>12.2f} {r.two_sample_rate:>12.2f} "
                f"{r.reduction_factor:>9.2f}x")
        return "\n".join(lines)

    def to_json(self) -> dict:
        return {
            "dataset": self.dataset,
            "model": self.model,
            "budget": self.budget,
            "rows": [r.to_json() for r in self.rows],
        }


def _run_strategy(problems: Sequence[ProblemSpec],
                  source_factory: Callable[[], SampleSource],
                  config: RunConfig, workers: int) -> List[RunRecord]:
    if workers <= 1:
        source = source_factory()
        return [run_problem(config, source, p) for p in problems]

    def run_chunk(chunk: Sequence[ProblemSpec]) -> List[RunRecord]:
        source = source_factory()
        return [run_problem(config, source, p) for p in chunk]

    chunks = [problems[i::workers] for i in range(workers)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(run_chunk, chunks))
    by_id = {r.problem_id: r for part in results for r in part}
    return [by_id[p.id] for p in problems]


def records_filename(strategy: str) -> str:
    return f"records_{strategy.replace('/', '_')}.jsonl"


def write_records(records: Sequence[RunRecord], path: str) -> None:
    with open(path, "w") as fh:
        for r in records:
            fh.write(dumps_record(r) + "\n")


def read_records(path: str) -> List[RunRecord]:
    with open(path) as fh:
        return [RunRecord.from_json(json.loads(line)) for line in fh if line.strip()]


def run_eval(problems: Sequence[ProblemSpec],
             source_factory: Callable[[], SampleSource],
             strategies: Sequence[StrategyName], *,
             params: Optional[AgreementParams] = None,
             rho: float = 0.975,
             budget: int = 40,
             esc_window_size: int = 5,
             beta_rho: Optional[float] = None,
             workers: int = 1,
             out_dir: Optional[str] = None,
             dataset_name: str = "",
             model: str = "") -> EvalReport:
    """Evaluate each strategy on every problem and report paired metrics."""
    golds = {p.id: p.gold for p in problems}
    report = EvalReport(dataset=dataset_name, model=model, budget=budget, rows=[])
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
    # validate every row's config up front: a bad row should fail the whole
    # eval before any sampling money is spent, not halfway through
    configs = [config_for(strategy, params=params, rho=rho, budget=budget,
                          esc_window_size=esc_window_size, beta_rho=beta_rho)
               for strategy in strategies]
    for config in configs:
        name = config.label or config.strategy.value
        records = _run_strategy(problems, source_factory, config, workers)
        if out_dir:
            write_records(records, os.path.join(out_dir, records_filename(name)))
        report.rows.append(metrics_from_records(name, records, golds, budget))
        report.records[name] = records
    return report


def recompute_metrics(records_path: str, golds: Dict[str, AnswerKey],
                      reference_budget: Optional[int] = None) -> StrategyMetrics:
    """Rebuild one report row from a RunRecord JSONL file."""
    records = read_records(records_path)
    if not records:
        raise ValueError(f"no records in {records_path}")
    name = records[0].strategy
    if reference_budget is None:
        reference_budget = int(records[0].telemetry.get("budget", 0)) or 1
    return metrics_from_records(name, records, golds, reference_budget)


def budget_sweep(problems: Sequence[ProblemSpec],
                 source_factory: Callable[[], SampleSource],
                 strategies: Sequence[StrategyName],
                 budgets: Sequence[int], **kwargs) -> List[EvalReport]:
    """One EvalReport per budget; budgets must be ascending."""
    if list(budgets) != sorted(set(budgets)):
        raise ValueError(f"budgets must be ascending and unique, got {list(budgets)}")
    return [run_eval(problems, source_factory, strategies, budget=b, **kwargs)
            for b in budgets]


def sweep_to_csv(reports: Sequence[EvalReport], path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["budget", "strategy", "n", "accuracy",
                         "avg_samples", "two_sample_rate", "reduction_factor"])
        for report in reports:
            for r in report.rows:
                writer.writerow([report.budget, r.strategy, r.n,
                                 f"{r.accuracy:.4f}", f"{r.avg_samples:.4f}",
                                 f"{r.two_sample_rate:.4f}",
                                 f"{r.reduction_factor:.4f}"])
