"""Pre-execution safety verification for multi-robot task plans.

Plans are precedence DAGs of resource-bound tasks; safety rules are LTLf
formulas over structured start/done/executing propositions.  The verifier
compiles both sides to finite automata, exhausts the product state space,
and feeds counterexample traces back into a bounded repair loop.
"""

from .errors import (
    AlphabetTooLarge,
    CapabilityMismatch,
    CyclicPlan,
    DanglingPredecessor,
    EventNotEnabled,
    InfeasibleSpec,
    LtlfSyntaxError,
    MalformedAp,
    PlanError,
    PlanVerifyError,
    PlannerError,
    SchemaError,
    StateBudgetExceeded,
    TooLargeForOracle,
    TransportError,
    TranslationError,
    UnknownProposition,
    UnknownResource,
    UnrecognizedRequirement,
    Unrepairable,
    UnresolvableProposition,
)
from .ap_model import AtomicProposition, GroundEvent, matches, matches_level, parse_ap, valuation
from .ltlf import (
    Formula,
    SafetyAutomaton,
    StructuredConstraint,
    compile_safety_automaton,
    evaluate_trace,
    load_constraints,
    normalize,
    parse_constraints,
    parse_ltlf,
    pretty,
    progress,
    to_dot,
    translate_structured,
)
from .plan_model import (
    PlanAutomaton,
    PlanState,
    Resource,
    ResourceSet,
    Task,
    TaskPlan,
    build_plan,
    load_plan,
    load_resources,
    parse_plan,
    parse_resources,
    state_count,
)
from .verifier import (
    SAFE,
    UNSAFE,
    VerificationReport,
    Violation,
    brute_force_check,
    check_plan,
    replay_witness,
    validate_safety,
)
from .feedback import (
    DeterministicPlanner,
    FeedbackPrompt,
    LlmPlanner,
    LlmTranslator,
    RepairOutcome,
    RuleBasedTranslator,
    build_feedback,
    repair_loop,
)
from .scenarios import (
    BenchmarkRecord,
    ScenarioSpec,
    canonical_specs,
    generate_scenario,
    run_benchmark,
)

__version__ = "0.1.0"

__all__ = [
    "AlphabetTooLarge",
    "AtomicProposition",
    "BenchmarkRecord",
    "CapabilityMismatch",
    "CyclicPlan",
    "DanglingPredecessor",
    "DeterministicPlanner",
    "EventNotEnabled",
    "FeedbackPrompt",
    "Formula",
    "GroundEvent",
    "InfeasibleSpec",
    "LlmPlanner",
    "LlmTranslator",
    "LtlfSyntaxError",
    "MalformedAp",
    "PlanAutomaton",
    "PlanError",
    "PlanState",
    "PlanVerifyError",
    "PlannerError",
    "RepairOutcome",
    "Resource",
    "ResourceSet",
    "RuleBasedTranslator",
    "SAFE",
    "SafetyAutomaton",
    "SchemaError",
    "ScenarioSpec",
    "StateBudgetExceeded",
    "StructuredConstraint",
    "Task",
    "TaskPlan",
    "TooLargeForOracle",
    "TransportError",
    "TranslationError",
    "UNSAFE",
    "UnknownProposition",
    "UnknownResource",
    "UnrecognizedRequirement",
    "Unrepairable",
    "UnresolvableProposition",
    "VerificationReport",
    "Violation",
    "brute_force_check",
    "build_feedback",
    "build_plan",
    "canonical_specs",
    "check_plan",
    "compile_safety_automaton",
    "evaluate_trace",
    "generate_scenario",
    "load_constraints",
    "load_plan",
    "load_resources",
    "matches",
    "matches_level",
    "normalize",
    "parse_ap",
    "parse_constraints",
    "parse_ltlf",
    "parse_plan",
    "parse_resources",
    "pretty",
    "progress",
    "repair_loop",
    "replay_witness",
    "run_benchmark",
    "state_count",
    "to_dot",
    "translate_structured",
    "valuation",
    "validate_safety",
]
