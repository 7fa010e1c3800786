"""State-aware fuzzing of a simulated dual-layer flight stack.

The pipeline: parse a fuzz spec and mission, enumerate combinations into
seeded test cases, execute them deterministically against the simulated
vehicle, judge each run with a decision-tree oracle, cluster the failures,
re-fuzz representative contexts into truth tables, and minimize those into
cut sets rendered as fault trees.
"""

from .analysis import (
    AnalysisResult,
    analyze_failures,
    encode_failures,
    kmeans,
    select_k,
    select_representatives,
    sweep_k,
)
from .cutset import (
    CutSet,
    FaultTree,
    SoundnessResult,
    TableRow,
    TruthTable,
    build_fault_tree,
    build_truth_table,
    cut_sets_for_table,
    merge_cut_sets,
    minimize,
    soundness_check,
    table_from_results,
)
from .executor import ExecutionProfile, Executor, InjectionRecord, run_campaign
from .fuzzspec import (
    CoverageReport,
    DelayBand,
    EnvironmentSpace,
    FuzzSpecification,
    MissionPlan,
    StateTarget,
    load_fuzz_spec,
    load_mission,
    parse_fuzz_spec,
    parse_mission,
    validate_coverage,
    validate_sut_config,
)
from .oracle import (
    FAILURE,
    INVALID,
    SUCCESS,
    Verdict,
    classify,
    default_tree,
    parse_tree,
    serialize_tree,
)
from .storage import Campaign, load_campaign
from .sutmodel import (
    AppState,
    AutopilotMode,
    Decision,
    FaultId,
    InjectionRequest,
    RcAction,
    SutConfig,
    SutSnapshot,
    Vehicle,
    check_failsafes,
    inject_fault_behavior,
    step,
)
from .testgen import (
    GeneratorConfig,
    TestCase,
    derive_seed,
    enumerate_combinations,
    focused_generate,
    generate,
)

__version__ = "0.1.0"

__all__ = [
    "AnalysisResult",
    "AppState",
    "AutopilotMode",
    "Campaign",
    "CoverageReport",
    "CutSet",
    "Decision",
    "DelayBand",
    "EnvironmentSpace",
    "ExecutionProfile",
    "Executor",
    "FAILURE",
    "FaultId",
    "FaultTree",
    "FuzzSpecification",
    "GeneratorConfig",
    "INVALID",
    "InjectionRecord",
    "InjectionRequest",
    "MissionPlan",
    "RcAction",
    "SoundnessResult",
    "StateTarget",
    "SUCCESS",
    "SutConfig",
    "SutSnapshot",
    "TableRow",
    "TestCase",
    "TruthTable",
    "Vehicle",
    "Verdict",
    "analyze_failures",
    "build_fault_tree",
    "build_truth_table",
    "check_failsafes",
    "classify",
    "cut_sets_for_table",
    "default_tree",
    "derive_seed",
    "encode_failures",
    "enumerate_combinations",
    "focused_generate",
    "generate",
    "inject_fault_behavior",
    "kmeans",
    "load_campaign",
    "load_fuzz_spec",
    "load_mission",
    "merge_cut_sets",
    "minimize",
    "parse_fuzz_spec",
    "parse_mission",
    "parse_tree",
    "run_campaign",
    "select_k",
    "select_representatives",
    "serialize_tree",
    "soundness_check",
    "step",
    "sweep_k",
    "table_from_results",
    "validate_coverage",
    "validate_sut_config",
]
