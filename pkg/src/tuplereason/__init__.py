"""Relation-tuple reasoning with program verification, dynamic feedback,
and majority voting over pooled answers."""

from .answers import Answer, answers_equal, extract_answer, grade
from .client import (
    ChatClient,
    GenParams,
    HttpChatClient,
    RecordingClient,
    ReplayClient,
    Transcript,
)
from .harness import (
    DatasetExample,
    QuestionOutcome,
    RunReport,
    evaluate,
    load_dataset,
    run_examples,
)
from .orchestrator import (
    AttemptRecord,
    LoopConfig,
    QuestionRun,
    ReasoningTrace,
    majority_vote,
    parse_trace,
    run_question,
    run_self_consistency,
)
from .prompts import (
    ChatMessage,
    FewShotExample,
    PromptConfig,
    build_feedback_prompt,
    build_step1_prompt,
    build_step2_prompt,
    default_prompt_config,
)
from .sandbox import (
    CodeSandbox,
    ErrorKind,
    ExecStatus,
    ExecutionResult,
    SandboxLimits,
    VerificationProgram,
    strip_code_fences,
)
from .tuples import (
    Arithmetic,
    Label,
    Quantity,
    RelationTuple,
    TupleVerdict,
    Verdict,
    check_trace_consistency,
    eval_expr,
    extract_tuples,
    parse_tuple,
    render_tuple,
)

__version__ = "0.1.0"
