"""Patch application, test execution, and verdict classification.

Patches are applied in an isolated copy of the project; the subject's test
command communicates results through a JSON-lines file named by the
RESULTS_PATH environment variable. Verdicts follow the positive criterion:
PassAll beats Promising beats NoProgress, where Promising needs a newly
passing test or stack-trace progress.
"""

from __future__ import annotations

import json
import logging
import os
import shutil
import subprocess
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

from .llm import Patch
from .source_index import SourceIndex, StaleRefError

logger = logging.getLogger(__name__)


class PatchApplicationError(Exception):
    """Patch edit cannot be resolved against the index."""


class HarnessProtocolError(Exception):
    """The results file violates the harness protocol."""


@dataclass(frozen=True)
class StackFrame:
    unit: str
    method: str
    file: str
    line: int  # 0 = unknown

    def __post_init__(self):
        if self.line < 0:
            raise ValueError("frame line must be >= 0")


@dataclass
class TestResult:
    test: str
    status: str  # pass | fail | error | timeout
    message: str = ""
    frames: list[StackFrame] = field(default_factory=list)


@dataclass
class TestReport:
    results: list[TestResult]
    wall_time: float = 0.0
    harness_exit: int = 0

    def by_id(self) -> dict[str, TestResult]:
        return {r.test: r for r in self.results}

    @property
    def failing(self) -> list[TestResult]:
        return [r for r in self.results if r.status != "pass"]


@dataclass
class TraceProgress:
    test: str
    divergence_index: int
    before: StackFrame
    after: StackFrame


@dataclass
class PatchVerdict:
    kind: str  # PassAll | Promising | NoProgress
    newly_passing: list[str] = field(default_factory=list)
    trace_progress: TraceProgress | None = None
    regressions: list[str] = field(default_factory=list)


@dataclass
class HarnessConfig:
    command: str
    timeout: float = 300.0
    expected_tests: list[str] = field(default_factory=list)


def apply_patch(project_root: str | Path, patch: Patch, index: SourceIndex,
                workspace_root: str | Path | None = None) -> Path:
    """Copy the project into a fresh workspace and replace edited spans."""
    project_root = Path(project_root)
    spans: dict[str, list[tuple[int, int, str]]] = {}
    for edit in patch.edits:
        if edit.file not in index.files:
            raise PatchApplicationError(f"file not indexed: {edit.file}")
        matches = index.methods_named(edit.file, edit.method)
        if not matches:
            raise PatchApplicationError(
                f"method not found: {edit.file}:{edit.method}")
        if len(matches) > 1:
            raise PatchApplicationError(
                f"ambiguous method (overloads): {edit.file}:{edit.method}")
        ref = matches[0]
        try:
            index.method_body(ref)
        except StaleRefError as exc:
            raise PatchApplicationError(str(exc)) from exc
        spans.setdefault(edit.file, []).append(
            (ref.body_start, ref.body_end, edit.body))
    workspace = Path(tempfile.mkdtemp(prefix="repair-ws-",
                                      dir=workspace_root))
    shutil.copytree(project_root, workspace, dirs_exist_ok=True)
    for rel, edits in spans.items():
        path = workspace / rel
        text = path.read_text(encoding="utf-8")
        had_final_newline = text.endswith("\n")
        lines = text.split("\n")
        if had_final_newline:
            lines = lines[:-1]
        # Apply bottom-up so earlier spans stay valid.
        for start, end, body in sorted(edits, reverse=True):
            lines[start - 1:end] = body.split("\n")
        out = "\n".join(lines) + ("\n" if had_final_newline else "")
        path.write_text(out, encoding="utf-8")
    return workspace


def run_tests(workspace: str | Path, harness: HarnessConfig) -> TestReport:
    """Run the harness command; its RESULTS_PATH file is authoritative."""
    workspace = Path(workspace)
    results_path = workspace / ".repair-results.jsonl"
    if results_path.exists():
        results_path.unlink()
    start = time.monotonic()
    env = dict(os.environ, RESULTS_PATH=str(results_path))
    try:
        proc = subprocess.run(harness.command, shell=True, cwd=workspace,
                              env=env, capture_output=True,
                              timeout=harness.timeout)
        exit_code = proc.returncode
        timed_out = False
    except subprocess.TimeoutExpired:
        exit_code = -1
        timed_out = True
    wall = time.monotonic() - start
    if timed_out:
        results = [TestResult(t, "timeout", "harness timeout")
                   for t in harness.expected_tests]
        return TestReport(results=results, wall_time=wall, harness_exit=exit_code)
    if not results_path.exists():
        logger.warning("harness produced no results file (exit %d)", exit_code)
        results = [TestResult(t, "error", "harness produced no results")
                   for t in harness.expected_tests]
        return TestReport(results=results, wall_time=wall, harness_exit=exit_code)
    results = []
    seen = set()
    for lineno, raw in enumerate(
            results_path.read_text(encoding="utf-8").splitlines(), 1):
        if not raw.strip():
            continue
        try:
            rec = json.loads(raw)
            frames = [StackFrame(f["unit"], f["method"], f["file"], int(f["line"]))
                      for f in rec.get("frames", [])]
            result = TestResult(rec["test"], rec["status"],
                                rec.get("message", ""), frames)
            if result.status not in ("pass", "fail", "error"):
                raise ValueError(f"bad status {result.status!r}")
        except (KeyError, ValueError, TypeError) as exc:
            raise HarnessProtocolError(
                f"{results_path}:{lineno}: {exc}") from exc
        if result.test in seen:
            raise HarnessProtocolError(
                f"{results_path}:{lineno}: duplicate test id {result.test!r}")
        seen.add(result.test)
        results.append(result)
    return TestReport(results=results, wall_time=wall, harness_exit=exit_code)


def _frames_equal(a: StackFrame, b: StackFrame) -> bool:
    if (a.unit, a.method, a.file) != (b.unit, b.method, b.file):
        return False
    # Unknown line (0) compares equal to anything.
    return a.line == b.line or a.line == 0 or b.line == 0


def align_traces(before: list[StackFrame], after: list[StackFrame]) -> str:
    """'identical', 'progressed', or 'other' per the frame-walk rules."""
    if not before:
        return "other"
    d = 0
    while d < len(before) and d < len(after) and _frames_equal(before[d], after[d]):
        d += 1
    if d == len(before) and d == len(after):
        return "identical"
    if d >= len(before) or d >= len(after):
        return "other"  # one trace is a strict prefix of the other
    b, a = before[d], after[d]
    if (b.unit, b.method, b.file) == (a.unit, a.method, a.file):
        if a.line > b.line and b.line != 0 and a.line != 0:
            return "progressed"
        return "other"
    if b.method != a.method and d >= 1:
        return "progressed"  # cross-method divergence with identical prefix
    return "other"


def classify(baseline: TestReport, patched: TestReport) -> PatchVerdict:
    """PassAll, Promising (newly passing test or trace progress), or NoProgress."""
    base = baseline.by_id()
    after = patched.by_id()
    all_pass = (bool(patched.results)
                and all(r.status == "pass" for r in patched.results)
                and all(t in after for t in base))
    newly_passing = sorted(
        t for t, r in base.items()
        if r.status != "pass" and t in after and after[t].status == "pass")
    regressions = sorted(
        t for t, r in base.items()
        if r.status == "pass" and t in after and after[t].status != "pass")
    if all_pass:
        return PatchVerdict(kind="PassAll", newly_passing=newly_passing,
                            regressions=regressions)
    if newly_passing:
        return PatchVerdict(kind="Promising", newly_passing=newly_passing,
                            regressions=regressions)
    for test, r in base.items():
        if r.status == "pass" or test not in after:
            continue
        patched_result = after[test]
        if patched_result.status == "pass":
            continue
        if align_traces(r.frames, patched_result.frames) == "progressed":
            d = 0
            while (d < len(r.frames) and d < len(patched_result.frames)
                   and _frames_equal(r.frames[d], patched_result.frames[d])):
                d += 1
            progress = TraceProgress(test=test, divergence_index=d,
                                     before=r.frames[d],
                                     after=patched_result.frames[d])
            return PatchVerdict(kind="Promising", trace_progress=progress,
                                regressions=regressions)
    return PatchVerdict(kind="NoProgress", regressions=regressions)
