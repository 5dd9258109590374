"""Command-line entry point for benchmark runs.

Exit codes: 0 on completion, 1 on configuration errors (bad flags, bad
dataset, bad mode combinations), 2 on infrastructure failures (transport,
replay miss, sandbox unavailable); partial results are flushed with a
marker before exiting with 2.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .client import (
    ChatClient,
    EndpointError,
    GenParams,
    HttpChatClient,
    RecordingClient,
    ReplayClient,
    ReplayMiss,
    Transcript,
    TransportError,
)
from .harness import (
    FormatError,
    RunLog,
    RunReport,
    evaluate,
    load_dataset,
    run_examples,
)
from .orchestrator import LoopConfig
from .prompts import default_prompt_config
from .sandbox import CodeSandbox, SandboxLimits, SandboxUnavailable

logger = logging.getLogger(__name__)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad flags; the CLI contract wants 1.
    def error(self, message):
        raise _UsageError(message)


def build_parser() -> _Parser:
    parser = _Parser(prog="tuplereason", description=__doc__.splitlines()[0])
    parser.add_argument("--dataset", required=True, help="path to the dataset file")
    parser.add_argument("--format", default="gsm8k", help="dataset format name")
    parser.add_argument("--endpoint", default="http://localhost:8000/v1",
                        help="OpenAI-compatible base URL (live/record modes)")
    parser.add_argument("--model", default="default", help="model name sent to the endpoint")
    parser.add_argument("--shots-profile", choices=("eight", "five"), default="eight")
    parser.add_argument("--temperature", type=float, default=0.0)
    parser.add_argument("--temperature-step2", type=float, default=None,
                        help="verification-step temperature (defaults to --temperature)")
    parser.add_argument("--max-attempts", type=int, default=3)
    parser.add_argument("--sc", type=int, default=1, help="self-consistency path count")
    parser.add_argument("--mode", choices=("live", "record", "replay"), default="live")
    parser.add_argument("--transcript", default=None, help="transcript file to write/read")
    parser.add_argument("--out", default=None, help="report file (stdout when omitted)")
    parser.add_argument("--workers", type=int, default=4)
    parser.add_argument("--timeout-s", type=float, default=10.0, help="sandbox timeout per program")
    parser.add_argument("--seed", type=int, default=None, help="seed hint forwarded to the endpoint")
    return parser


def _make_client(args) -> ChatClient:
    if args.mode == "replay":
        if not args.transcript:
            raise _UsageError("--mode replay requires --transcript")
        return ReplayClient(Transcript.load(args.transcript))
    live = HttpChatClient(args.endpoint)
    if args.mode == "record":
        if not args.transcript:
            raise _UsageError("--mode record requires --transcript")
        return RecordingClient(live)
    return live


def _config_snapshot(args) -> dict:
    keys = (
        "dataset", "format", "model", "shots_profile", "temperature",
        "temperature_step2", "max_attempts", "sc", "mode", "workers",
        "timeout_s", "seed",
    )
    return {k: getattr(args, k) for k in keys}


def run_cli(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.sc < 1:
            raise _UsageError("--sc must be at least 1")
        if args.sc > 1 and args.temperature <= 0.0:
            raise _UsageError("--sc above 1 needs --temperature above 0")
        examples = load_dataset(args.dataset, args.format)
        client = _make_client(args)
    except _UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    step2_temp = args.temperature_step2 if args.temperature_step2 is not None else args.temperature
    config = LoopConfig(
        prompts=default_prompt_config(args.shots_profile),
        step1_params=GenParams(args.model, temperature=args.temperature, seed_hint=args.seed),
        step2_params=GenParams(args.model, temperature=step2_temp, seed_hint=args.seed),
        max_attempts=args.max_attempts,
    )
    executor = CodeSandbox(limits=SandboxLimits(timeout_s=args.timeout_s))
    run_log = RunLog(Path(args.out).with_suffix(".runs.jsonl")) if args.out else None

    failure: str | None = None
    outcomes = []
    try:
        outcomes = run_examples(
            examples,
            client=client,
            executor=executor,
            config=config,
            sc_paths=args.sc,
            workers=args.workers,
            run_log=run_log,
        )
    except (TransportError, EndpointError, ReplayMiss, SandboxUnavailable) as exc:
        failure = f"{type(exc).__name__}: {exc}"
        logger.error("run aborted: %s", failure)

    if args.mode == "record" and args.transcript and isinstance(client, RecordingClient):
        client.transcript.save(args.transcript)

    if failure is not None:
        # Flush whatever completed, marked as partial, and signal infra
        # failure. Completed questions live in the run log, written as each
        # one finished; the in-memory list is gone once the pool raised.
        if run_log is not None:
            completed = sum(1 for line in run_log.path.read_text().splitlines() if line.strip())
        else:
            completed = len(outcomes)
        partial = {
            "partial": True,
            "failure": failure,
            "n_completed": completed,
            "config_snapshot": _config_snapshot(args),
        }
        payload = (json.dumps(partial, sort_keys=True, indent=2) + "\n").encode("utf-8")
        _emit(payload, args.out)
        return 2

    done = {o.question_id for o in outcomes}
    report: RunReport = evaluate(
        outcomes,
        [g for g in examples if g.id in done],
        dataset_name=Path(args.dataset).stem,
        call_tally=client.call_tally(),
        config_snapshot=_config_snapshot(args),
    )
    _emit(report.to_json_bytes(), args.out)
    logger.info(
        "%s: %d/%d correct (%.1f%%)",
        report.dataset_name, report.n_correct, report.n_total, 100.0 * report.accuracy,
    )
    return 0


def _emit(payload: bytes, out: str | None) -> None:
    if out:
        Path(out).write_bytes(payload)
    else:
        sys.stdout.buffer.write(payload)


def main() -> None:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
