"""Cross-modal self-consistency for step-by-step and program samples.

Two decoding modalities answer the same problem; agreement between them is
evidence the answer is trustworthy. This package aggregates full sample sets,
stops sampling early once a Bayesian agreement test or a Beta majority test
clears a confidence threshold, calibrates the agreement model from recorded
traces, and benchmarks the accuracy/cost trade-off of every stopping policy.
"""
from .aggregate import AggregationStrategy, Verdict, aggregate
from .answers import (
    AnswerKey,
    ExecutionResult,
    FrequencyTable,
    Invalid,
    Modality,
    Sample,
    answers_equal,
    extract_boxed,
    extract_cot_answer,
    extract_pot_answer,
    make_sample,
    normalize_answer,
    numeric_key,
    text_key,
)
from .calibrate import (
    CalibrationError,
    CalibrationEstimate,
    CalibrationEvent,
    InsufficientData,
    build_events,
    estimate,
    infer_params,
)
from .controller import (
    RunConfig,
    RunRecord,
    StopReason,
    StoppingStrategy,
    default_fallback,
    dumps_record,
    run_problem,
)
from .harness import (
    EvalReport,
    StrategyMetrics,
    budget_sweep,
    config_for,
    metrics_from_records,
    parse_strategy,
    read_records,
    recompute_metrics,
    run_eval,
    score,
    sweep_to_csv,
    write_records,
)
from .live import (
    ChatClient,
    LiveSource,
    PotExecutorClient,
    PromptTemplates,
    TransportFailure,
    extract_program,
)
from .samplers import (
    ProblemSpec,
    RecordingSource,
    ReplaySource,
    SampleSource,
    SamplerExhausted,
    SyntheticProblem,
    SyntheticSource,
    SyntheticWorld,
    TraceMismatch,
    generate_trace,
    index_trace,
    load_problems,
    load_trace,
    load_world,
    record_trace,
)
from .stoptests import (
    DATA_INDEPENDENT,
    AgreementParams,
    BetaMajorityState,
    TrackerState,
    beta_majority_tail,
    esc_window_check,
    posterior_safe,
    tracker_backfill,
)

__version__ = "0.1.0"

__all__ = [
    "AggregationStrategy", "Verdict", "aggregate",
    "AnswerKey", "ExecutionResult", "FrequencyTable", "Invalid", "Modality",
    "Sample", "answers_equal", "extract_boxed", "extract_cot_answer",
    "extract_pot_answer", "make_sample", "normalize_answer", "numeric_key",
    "text_key",
    "CalibrationError", "CalibrationEstimate", "CalibrationEvent",
    "InsufficientData", "build_events", "estimate", "infer_params",
    "RunConfig", "RunRecord", "StopReason", "StoppingStrategy",
    "default_fallback", "dumps_record", "run_problem",
    "EvalReport", "StrategyMetrics", "budget_sweep", "config_for",
    "metrics_from_records", "parse_strategy", "read_records",
    "recompute_metrics", "run_eval", "score", "sweep_to_csv", "write_records",
    "ChatClient", "LiveSource", "PotExecutorClient", "PromptTemplates",
    "TransportFailure", "extract_program",
    "ProblemSpec", "RecordingSource", "ReplaySource", "SampleSource",
    "SamplerExhausted", "SyntheticProblem", "SyntheticSource",
    "SyntheticWorld", "TraceMismatch", "generate_trace", "index_trace",
    "load_problems", "load_trace", "load_world", "record_trace",
    "DATA_INDEPENDENT", "AgreementParams", "BetaMajorityState",
    "TrackerState", "beta_majority_tail", "esc_window_check",
    "posterior_safe", "tracker_backfill",
]
