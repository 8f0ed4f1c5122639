"""Repair prompt construction.

The rendered prompt always carries eight sections in a fixed order, each
introduced by a recoverable marker line. Sibling lines inside the rendered
method bodies are annotated with a `// SIBLING` marker comment.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .ingredients import FixIngredient
from .llm import OUTPUT_FORMAT_SPEC, Patch, render_patch
from .matching import MethodGroup
from .source_index import SourceIndex

SECTION_ORDER = ("role", "task", "reasoning-steps", "patch-definitions",
                 "buggy-methods", "test-results", "feedback", "ingredients")

_MARKER = "### SECTION: {name}"
_MARKER_RE = re.compile(r"^### SECTION: ([a-z-]+)$", re.MULTILINE)

SIBLING_MARKER = "// SIBLING"

ROLE_TEXT = "You are an Automated Program Repair Tool."

TASK_TEXT = """\
Your task is to:
(a) analyze the buggy methods below together with their labeled sibling statements,
(b) evaluate previous patching attempts,
(c) learn from previous patching results, and
(d) generate consistent patches across the sibling locations."""

REASONING_TEXT = f"""\
Follow these steps:
1. Examine bug-related information and identify failure-relevant siblings.
2. Analyze previous patches and infer repair rationales.
3. Map fixing ingredients to the inferred repair rationales.
4. Design consistent repair strategies.
5. Define the required output format.

{OUTPUT_FORMAT_SPEC}"""

DEFINITIONS_TEXT = """\
A plausible patch is a patch that makes all tests pass.
A promising patch partially addresses the root cause and leads to repair
progress in terms of test outcomes and execution."""


class PromptBudgetError(Exception):
    """Prompt exceeds the token budget even after all truncation stages."""


@dataclass
class StackFrameInfo:
    unit: str
    method: str
    file: str
    line: int


@dataclass
class FailingTest:
    test_id: str
    message: str
    frames: list[StackFrameInfo] = field(default_factory=list)


@dataclass
class BugEvidence:
    failing_tests: list[FailingTest]
    originally_failing_count: int

    def __post_init__(self):
        if not self.failing_tests:
            raise ValueError("bug evidence requires at least one failing test")


@dataclass
class FeedbackEntry:
    patch: Patch | None
    report: "object | None" = None  # validation.TestReport when present
    note: str | None = None


@dataclass
class PromptBundle:
    text: str
    sections: list[tuple[str, str]]

    @property
    def sibling_marker_count(self) -> int:
        return self.text.count(SIBLING_MARKER)


def parse_sections(text: str) -> list[tuple[str, str]]:
    """Recover (name, body) pairs from a rendered prompt."""
    markers = list(_MARKER_RE.finditer(text))
    out = []
    for i, m in enumerate(markers):
        end = markers[i + 1].start() if i + 1 < len(markers) else len(text)
        out.append((m.group(1), text[m.end():end].strip("\n")))
    return out


def _render_group(group: MethodGroup, index: SourceIndex) -> str:
    if group.method is not None:
        body = index.method_body(group.method)
        start = group.method.body_start
        header = f"// file: {group.file}  method: {group.method.name}"
    else:
        body = index.files[group.file].text
        start = 1
        header = f"// file: {group.file}  (top-level)"
    lines = body.split("\n")
    rendered = []
    for offset, line in enumerate(lines):
        if start + offset in group.sibling_lines:
            rendered.append(f"{line}  {SIBLING_MARKER}")
        else:
            rendered.append(line)
    return header + "\n" + "\n".join(rendered)


def _render_evidence(evidence: BugEvidence, max_frames: int) -> str:
    parts = [f"Originally failing tests: {evidence.originally_failing_count}"]
    for t in evidence.failing_tests:
        parts.append(f"FAILING TEST {t.test_id}: {t.message}")
        for f in t.frames[:max_frames]:
            parts.append(f"    at {f.unit}.{f.method} ({f.file}:{f.line})")
    return "\n".join(parts)


def _render_feedback(feedback: list[FeedbackEntry], include_frames: bool) -> str:
    if not feedback:
        return "(no previous attempts)"
    parts = []
    for entry in feedback:
        if entry.patch is not None:
            parts.append("PREVIOUS PATCH:")
            parts.append(render_patch(entry.patch))
        if entry.note:
            parts.append(f"ATTEMPT OUTCOME: {entry.note}")
        report = entry.report
        if report is None:
            if entry.patch is not None and not entry.note:
                parts.append("OUTCOME: passed all tests (plausible)")
            continue
        for r in report.results:
            parts.append(f"TEST {r.test}: {r.status}"
                         + (f" - {r.message}" if r.message else ""))
            if include_frames:
                for f in r.frames:
                    parts.append(f"    at {f.unit}.{f.method} ({f.file}:{f.line})")
    return "\n".join(parts)


def _render_ingredients(ingredients: list[FixIngredient]) -> str:
    if not ingredients:
        return "(none)"
    return "\n".join(
        f"{i.kind} in {i.declaring_class or i.source_file}: {i.signature_text}"
        for i in ingredients)


def _assemble(groups, evidence, feedback, ingredients, index,
              max_frames: int, feedback_frames: bool) -> PromptBundle:
    sections = [
        ("role", ROLE_TEXT),
        ("task", TASK_TEXT),
        ("reasoning-steps", REASONING_TEXT),
        ("patch-definitions", DEFINITIONS_TEXT),
        ("buggy-methods", "\n\n".join(_render_group(g, index) for g in groups)),
        ("test-results", _render_evidence(evidence, max_frames)),
        ("feedback", _render_feedback(feedback, feedback_frames)),
        ("ingredients", _render_ingredients(ingredients)),
    ]
    text = "\n\n".join(_MARKER.format(name=name) + "\n" + body
                       for name, body in sections)
    return PromptBundle(text=text, sections=sections)


def estimate_tokens(text: str) -> int:
    return len(text) // 4


def build_prompt(groups: list[MethodGroup], evidence: BugEvidence,
                 feedback: list[FeedbackEntry], ingredients: list[FixIngredient],
                 index: SourceIndex, token_budget: int = 24000,
                 group_jaccard: dict[tuple[str, int], float] | None = None
                 ) -> PromptBundle:
    """Render the eight-section repair prompt within the token budget.

    Over budget, truncation order: ingredients (lowest score first), then
    feedback stack traces, then whole groups lowest-Jaccard-first.

    group_jaccard maps (file, lowest sibling line) to the group's best
    Jaccard similarity; missing entries are kept longest.
    """
    if not groups:
        raise ValueError("build_prompt requires at least one method group")
    groups = list(groups)
    ingredients = sorted(ingredients, key=lambda i: -i.rank_score)
    feedback_frames = True
    bundle = _assemble(groups, evidence, feedback, ingredients, index,
                       max_frames=5, feedback_frames=feedback_frames)
    while estimate_tokens(bundle.text) > token_budget and ingredients:
        ingredients = ingredients[:-1]
        bundle = _assemble(groups, evidence, feedback, ingredients, index,
                           5, feedback_frames)
    if estimate_tokens(bundle.text) > token_budget and feedback_frames:
        feedback_frames = False
        bundle = _assemble(groups, evidence, feedback, ingredients, index,
                           5, feedback_frames)
    while estimate_tokens(bundle.text) > token_budget and len(groups) > 1:
        jac = group_jaccard or {}
        drop = min(range(len(groups)),
                   key=lambda i: jac.get(
                       (groups[i].file, min(groups[i].sibling_lines)),
                       float("inf")))
        groups.pop(drop)
        bundle = _assemble(groups, evidence, feedback, ingredients, index,
                           5, feedback_frames)
    if estimate_tokens(bundle.text) > token_budget:
        raise PromptBudgetError(
            f"prompt needs ~{estimate_tokens(bundle.text)} tokens, "
            f"budget is {token_budget}")
    return bundle
