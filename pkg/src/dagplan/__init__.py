"""dagplan: parse, validate, score, curate, and execute DAG tool plans."""

from .catalog import (
    DuplicateToolIdError,
    MalformedCatalogError,
    ToolLibrary,
    ToolParam,
    ToolSpec,
    load_library,
    save_library,
    serialize_library,
    synth_library,
)
from .clients import (
    ClientError,
    CompletionClient,
    EmptyResponseError,
    FixtureClient,
    HttpCompletionClient,
    RecordingClient,
    ScriptedClient,
    fixture_key,
    save_cassette,
)
from .curation import (
    CurationStats,
    RolloutProfile,
    curate,
    profile_task,
    split_train_test,
)
from .executor import (
    ExecutionTrace,
    HttpRegistry,
    MockRegistry,
    NodeResult,
    PlanRejectedError,
    PreflightError,
    ToolError,
    ToolRegistry,
    count_waves,
    execute,
    leaf_outputs,
    run_end_to_end,
    trace_to_dot,
)
from .metrics import (
    MetricsSummary,
    PlanMetrics,
    evaluate_set,
    score_pair,
    set_prf,
    summarize,
)
from .pipeline import (
    Band,
    BandUnsatisfiableError,
    AuthorExhaustedError,
    BuildStats,
    DatasetRecord,
    DifficultyConfig,
    DIFFICULTIES,
    Provenance,
    ReplanOutcome,
    build_dataset,
    generate_workflow,
    iter_records,
    load_records,
    replan_and_filter,
    reverse_engineer_query,
    save_records,
)
from .plan import (
    CycleError,
    PlanEdge,
    PlanGraph,
    PlanNode,
    PlanSyntaxError,
    ValidationReport,
    check_connectivity,
    detect_cycle,
    parse_plan,
    serialize_plan,
    to_dot,
    topo_order,
    validate_graph,
    validate_text,
)
from .reward import (
    CONNECTIVITY_PENALTY,
    CYCLE_PENALTY,
    EDGE_F1_SCALE,
    PERFECT_MATCH_BONUS,
    REWARD_MAX,
    REWARD_MIN,
    SYNTAX_PENALTY,
    GroupAdvantages,
    InvalidGoldError,
    RewardBranch,
    RewardBreakdown,
    edge_f1,
    group_advantages,
    score_plan,
)

__version__ = "0.1.0"
