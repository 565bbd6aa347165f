"""bufsgd: a deterministic simulator and library for buffered asynchronous
SGD with Byzantine-robust gradient aggregation.

The server banks incoming gradients into B running-mean buffers keyed by
sender id and only steps once every buffer has contributed, which turns the
one-gradient-at-a-time asynchronous setting back into one where robust
aggregation rules (coordinate-wise median, trimmed mean) can do their job.
The discrete-event engine makes every run a pure function of config and
seed.
"""

from ._kernels import available_backends, backend_name
from .aggregation import (
    BoundInputs,
    CandidateSet,
    QbrReport,
    QbrViolation,
    RobustnessParams,
    aggregate_bias_bound,
    aggregate_second_moment_bound,
    aggregator_by_name,
    check_qbr,
    mean_aggregate,
    median_aggregate,
    robustness_order,
    second_moment_constant,
    second_moment_constant_bound,
    second_moment_constant_exact,
    trimmed_mean_aggregate,
)
from .buffers import BufferBank, BufferSlot, assign_buffer
from .config import RunConfig, load_config, parse_config, with_overrides
from .engine import (
    DelayModel,
    RunResult,
    StepRecord,
    TauHistogram,
    build_objective,
    run,
    sample_worker_delay,
    tau_histogram,
)
from .errors import (
    ConfigError,
    InvalidCandidatesError,
    InvalidParameterError,
    PairingError,
    StarvationError,
)
from .harness import compare_suite, load_suite, run_experiment, summarize
from .server import (
    Reply,
    Server,
    StepEvent,
    constant_eta,
    horizon_eta,
    run_asgd_reference,
    step_decay_eta,
)
from .tasks import (
    Logistic,
    Quadratic,
    dump_csv,
    load_csv,
    make_logistic,
    make_quadratic,
    partition_uniform,
)
from .workers import (
    GradientMessage,
    Schedule,
    WorkerBehavior,
    apply_attack,
    classify_message,
    compute_loyal_gradient,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
