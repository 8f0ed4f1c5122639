"""Run orchestration: descriptor loading, run directory, machine-readable
report, and wiring of backends/providers/cache into the engine.

The run directory holds prompts/, responses/, patches/, and report.json.
The attempt log inside report.json is free of timestamps and absolute
paths so scripted runs replay byte-identically.
"""

from __future__ import annotations

import dataclasses
import difflib
import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path

from .embeddings import EmbeddingCache, LocalHashProvider, RemoteEmbeddingProvider
from .engine import RepairConfig, RepairEngine, RepairState
from .llm import Patch, RemoteChatBackend, ScriptedBackend
from .localization import (CoverageError, SuspiciousLocation, apply_spfl,
                           load_coverage, ochiai_rank)
from .source_index import SourceIndex, index_source
from .validation import apply_patch

logger = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = 1


class DescriptorError(Exception):
    """Invalid project descriptor or unusable referenced inputs."""


@dataclass
class ProjectDescriptor:
    project_root: Path
    include: list[str]
    coverage_path: Path
    harness_command: str
    backend_spec: dict
    provider_spec: dict
    mode: str  # sbfl | spfl | pfl
    spfl_location: tuple[str, int] | None
    pfl_locations: list[tuple[str, int]]
    config: RepairConfig
    cache_path: Path | None


def _resolve(base: Path, value: str) -> Path:
    p = Path(value)
    return p if p.is_absolute() else (base / p)


def load_descriptor(path: str | Path, overrides: dict | None = None
                    ) -> ProjectDescriptor:
    """Parse and validate the JSON descriptor; CLI overrides win."""
    path = Path(path)
    if not path.is_file():
        raise DescriptorError(f"descriptor not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except ValueError as exc:
        raise DescriptorError(f"descriptor is not valid JSON: {exc}") from exc
    base = path.parent
    try:
        root = _resolve(base, data["project_root"])
        include = list(data.get("include", ["**/*"]))
        coverage = _resolve(base, data["coverage"])
        harness = data["harness"]
        command = harness["command"]
        backend_spec = dict(data["backend"])
        provider_spec = dict(data.get("provider", {"type": "local-hash"}))
    except (KeyError, TypeError) as exc:
        raise DescriptorError(f"descriptor missing required key: {exc}") from exc
    if not root.is_dir():
        raise DescriptorError(f"project root missing: {root}")
    if not coverage.is_file():
        raise DescriptorError(f"coverage file missing: {coverage}")
    if backend_spec.get("type") == "scripted":
        backend_spec["directory"] = str(_resolve(base, backend_spec["directory"]))

    cfg = dict(data.get("config", {}))
    if "timeout" in harness:
        cfg.setdefault("test_timeout", float(harness["timeout"]))
    overrides = overrides or {}
    mode = overrides.get("mode") or data.get("mode", "sbfl")
    for key, value in overrides.items():
        if key != "mode" and value is not None:
            cfg[key] = value
    try:
        config = RepairConfig(**cfg)
    except (TypeError, ValueError) as exc:
        raise DescriptorError(f"bad config value: {exc}") from exc

    spfl_location = None
    pfl_locations: list[tuple[str, int]] = []
    if mode == "spfl":
        loc = data.get("spfl") or {}
        if "file" not in loc or "line" not in loc:
            raise DescriptorError("spfl mode requires {'file', 'line'}")
        spfl_location = (loc["file"], int(loc["line"]))
    elif mode == "pfl":
        locs = data.get("pfl") or []
        if not locs:
            raise DescriptorError("pfl mode requires a non-empty location list")
        pfl_locations = [(l["file"], int(l["line"])) for l in locs]
    elif mode != "sbfl":
        raise DescriptorError(f"unknown mode: {mode}")

    cache_path = data.get("cache")
    return ProjectDescriptor(
        project_root=root, include=include, coverage_path=coverage,
        harness_command=command, backend_spec=backend_spec,
        provider_spec=provider_spec, mode=mode, spfl_location=spfl_location,
        pfl_locations=pfl_locations, config=config,
        cache_path=_resolve(base, cache_path) if cache_path else None)


def make_backend(spec: dict):
    kind = spec.get("type")
    if kind == "scripted":
        return ScriptedBackend(spec["directory"],
                               on_missing=spec.get("on_missing", "error"))
    if kind == "remote":
        return RemoteChatBackend(url=spec["url"], model=spec["model"],
                                 api_key_env=spec.get("api_key_env", "LLM_API_KEY"))
    raise DescriptorError(f"unknown backend type: {kind!r}")


def make_provider(spec: dict):
    kind = spec.get("type", "local-hash")
    if kind == "local-hash":
        return LocalHashProvider(dimension=int(spec.get("dimension", 512)))
    if kind == "remote":
        return RemoteEmbeddingProvider(
            url=spec["url"], model=spec["model"],
            api_key_env=spec.get("api_key_env", "EMBED_API_KEY"))
    raise DescriptorError(f"unknown provider type: {kind!r}")


class RunRecorder:
    """Persists every prompt and raw response under the run directory."""

    def __init__(self, run_dir: Path):
        self.prompts = run_dir / "prompts"
        self.responses = run_dir / "responses"
        self.prompts.mkdir(parents=True, exist_ok=True)
        self.responses.mkdir(parents=True, exist_ok=True)

    def prompt(self, location_id: str, attempt: int, text: str) -> None:
        (self.prompts / f"{location_id}_attempt{attempt}.txt").write_text(
            text, encoding="utf-8")

    def response(self, location_id: str, attempt: int, text: str) -> None:
        (self.responses / f"{location_id}_attempt{attempt}.txt").write_text(
            text, encoding="utf-8")


def patch_to_diff(project_root: Path, patch: Patch, index: SourceIndex) -> str:
    """Unified diff of the patch against the pristine project."""
    import shutil
    workspace = apply_patch(project_root, patch, index)
    try:
        chunks = []
        for rel in sorted({e.file for e in patch.edits}):
            before = (project_root / rel).read_text(encoding="utf-8")
            after = (workspace / rel).read_text(encoding="utf-8")
            diff = difflib.unified_diff(
                before.splitlines(keepends=True), after.splitlines(keepends=True),
                fromfile=f"a/{rel}", tofile=f"b/{rel}")
            chunks.append("".join(diff))
        return "".join(chunks)
    finally:
        shutil.rmtree(workspace, ignore_errors=True)


def _make_run_dir(out_dir: Path) -> Path:
    stamp = time.strftime("%Y%m%d-%H%M%S")
    run_dir = out_dir / stamp
    n = 1
    while run_dir.exists():
        run_dir = out_dir / f"{stamp}-{n}"
        n += 1
    run_dir.mkdir(parents=True)
    return run_dir


def _suspicious_list(desc: ProjectDescriptor, coverage) -> list[SuspiciousLocation]:
    if desc.mode == "pfl":
        return [SuspiciousLocation(file=f, line=l, score=1.0, rank=i)
                for i, (f, l) in enumerate(desc.pfl_locations, 1)]
    ranked = ochiai_rank(coverage)
    if desc.mode == "spfl":
        ranked = apply_spfl(ranked, desc.spfl_location)
    return ranked


def build_report(desc: ProjectDescriptor, config: RepairConfig,
                 suspicious: list[SuspiciousLocation], state: RepairState,
                 diffs: list[str], elapsed: float, requests: int,
                 prompt_tokens: int) -> dict:
    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "mode": desc.mode,
        "config": dataclasses.asdict(config),
        "suspicious": [dataclasses.asdict(s) for s in suspicious[:config.cap]],
        "candidate_counts": state.candidate_counts,
        "attempt_log": [dataclasses.asdict(a) for a in state.attempt_log],
        "plausible": [{"id": p.id, "provenance": p.provenance,
                       "parent_id": p.parent_id, "diff": d}
                      for p, d in zip(state.plausible, diffs)],
        "promising": [{"id": p.id, "provenance": p.provenance,
                       "parent_id": p.parent_id,
                       "edits": [[e.file, e.method] for e in p.edits]}
                      for p in state.promising],
        "stopped": state.stopped,
        "error": state.error,
        "timings": {"elapsed_seconds": round(elapsed, 3)},
        "counts": {"llm_requests": requests,
                   "prompt_tokens_estimate": prompt_tokens // 4},
    }


def run(descriptor_path: str | Path, overrides: dict | None = None,
        out_dir: str | Path = "runs") -> tuple[int, dict, Path | None]:
    """Execute a repair run. Returns (exit status, report, run directory)."""
    try:
        desc = load_descriptor(descriptor_path, overrides)
        index = index_source(desc.project_root, desc.include)
        coverage = load_coverage(desc.coverage_path)
        suspicious = _suspicious_list(desc, coverage)
        backend = make_backend(desc.backend_spec)
        provider = make_provider(desc.provider_spec)
    except (DescriptorError, CoverageError, FileNotFoundError) as exc:
        logger.error("invalid descriptor: %s", exc)
        print(f"error: {exc}")
        return 2, {"error": str(exc)}, None

    run_dir = _make_run_dir(Path(out_dir))
    recorder = RunRecorder(run_dir)
    cache = EmbeddingCache(desc.cache_path) if desc.cache_path else EmbeddingCache()
    start = time.monotonic()
    engine = RepairEngine(
        project_root=str(desc.project_root), index=index, coverage=coverage,
        backend=backend, provider=provider,
        harness_command=desc.harness_command, config=desc.config,
        cache=cache, recorder=recorder)
    state = engine.repair_bug(suspicious)
    elapsed = time.monotonic() - start
    cache.flush()

    diffs = [patch_to_diff(desc.project_root, p, index) for p in state.plausible]
    patches_dir = run_dir / "patches"
    patches_dir.mkdir(exist_ok=True)
    for i, diff in enumerate(diffs, 1):
        (patches_dir / f"plausible_{i}.diff").write_text(diff, encoding="utf-8")
    report = build_report(desc, desc.config, suspicious, state, diffs,
                          elapsed, engine.requests, engine.prompt_chars)
    (run_dir / "report.json").write_text(
        json.dumps(report, indent=2) + "\n", encoding="utf-8")
    if state.plausible:
        exit_code = 0
    elif state.stopped == "backend-error":
        exit_code = 3
    else:
        exit_code = 1
    return exit_code, report, run_dir
