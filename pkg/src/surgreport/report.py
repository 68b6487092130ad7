"""Surgical report assembly: timeline merging, prompting, and rendering.

Clip captions overlap by half a clip, so naively summing their segment
durations would inflate every report by roughly 50%. ``merge_timeline``
re-expands segments to frame indices, deduplicates overlapping frames, and
merges maximal same-phase runs, so every reported duration counts unique
seconds of video.

Reports can be produced offline by a deterministic renderer or remotely by
a chat-completion endpoint fed the standard prompt.
"""

from __future__ import annotations

import json
import logging
import os
import time
from dataclasses import dataclass
from pathlib import Path

import requests

from .captions import ClipCaption, verb_forms
from .dataset import Triplet
from .errors import EndpointStatusError, MissingCredentialError, TransportError
from .vocab import Vocabulary

log = logging.getLogger(__name__)

PROMPT_TEMPLATE_ID = "surgery-report-v1"

KEY_INSTRUCTION_DURATIONS = (
    "The clips form a continuous video. If multiple clips describe the same "
    "activity, combine their durations to reflect the total time spent on that activity."
)
KEY_INSTRUCTION_NARRATIVE = (
    "Write the report in a narrative format, explaining each phase step-by-step "
    "in a flowing text."
)

PROMPT_TEMPLATE = (
    "Generate a concise and textual surgery report from the following sequential "
    "clip captions of a video.\n"
    "Each clip describes a phase of the surgery, including the activity, tools "
    "used, and duration.\n"
    "\n"
    "Key Instructions:\n"
    "\n"
    f"1. {KEY_INSTRUCTION_DURATIONS}\n"
    "\n"
    f"2. {KEY_INSTRUCTION_NARRATIVE}\n"
    "\n"
    "Clip captions: {clip_captions}\n"
)

# HTTP statuses worth retrying; everything else non-2xx fails immediately.
_TRANSIENT_STATUSES = {429, 500, 502, 503, 504}


@dataclass(frozen=True)
class MergedEntry:
    """One merged phase with its unique-frame duration and action summary."""

    phase: int
    total_seconds: int
    actions: tuple[Triplet, ...]
    clip_range: tuple[int, int]  # start_frame of first/last contributing clip


@dataclass(frozen=True)
class MergedTimeline:
    video_id: str
    entries: tuple[MergedEntry, ...]

    @property
    def total_seconds(self) -> int:
        return sum(entry.total_seconds for entry in self.entries)


@dataclass(frozen=True)
class PromptRequest:
    template_id: str
    clip_captions: tuple[str, ...]
    prompt: str
    clips: tuple[ClipCaption, ...]


@dataclass(frozen=True)
class SurgicalReport:
    video_id: str
    narrative: str
    timeline: MergedTimeline
    provenance: str  # "offline" or "llm:<model id>"


@dataclass(frozen=True)
class EndpointConfig:
    """Generic chat-completion wire contract; no vendor lock-in."""

    base_url: str
    model: str
    temperature: float = 0.2
    max_tokens: int = 1024
    credential_env: str = "SURGREPORT_API_KEY"
    timeout: float = 60.0
    max_attempts: int = 3
    backoff_seconds: float = 0.5
    parallelism: int = 2


def merge_timeline(clips: list[ClipCaption]) -> MergedTimeline:
    """Merge overlapping clip timelines into unique-frame phase entries.

    Overlapping frames are deduplicated by index (first clip wins), then
    maximal same-phase runs are merged; each entry's duration is its count
    of unique frames (seconds at 1 fps). Per-entry actions are the union of
    the contributing segments' actions in order of first appearance.
    """
    if not clips:
        raise ValueError("cannot merge an empty clip list")
    video_ids = {clip.video_id for clip in clips}
    if len(video_ids) > 1:
        raise ValueError(f"clips come from multiple videos: {sorted(video_ids)}")
    ordered = sorted(clips, key=lambda c: c.start_frame)

    frame_phase: dict[int, int] = {}
    frame_actions: dict[int, tuple[Triplet, ...]] = {}
    frame_clip: dict[int, int] = {}
    for clip in ordered:
        index = clip.start_frame
        for segment in clip.segments:
            for offset in range(segment.duration_seconds):
                frame = index + offset
                if frame not in frame_phase:
                    frame_phase[frame] = segment.phase
                    frame_actions[frame] = segment.actions
                    frame_clip[frame] = clip.start_frame
            index += segment.duration_seconds

    entries: list[MergedEntry] = []
    run_frames: list[int] = []
    run_phase: int | None = None
    run_actions: dict[Triplet, None] = {}

    def close_run() -> None:
        if run_phase is None:
            return
        entries.append(
            MergedEntry(
                phase=run_phase,
                total_seconds=len(run_frames),
                actions=tuple(run_actions),
                clip_range=(
                    min(frame_clip[f] for f in run_frames),
                    max(frame_clip[f] for f in run_frames),
                ),
            )
        )

    for frame in sorted(frame_phase):
        phase = frame_phase[frame]
        if phase != run_phase:
            close_run()
            run_phase = phase
            run_frames = []
            run_actions = {}
        run_frames.append(frame)
        for action in frame_actions[frame]:
            run_actions.setdefault(action)
    close_run()
    return MergedTimeline(video_id=next(iter(video_ids)), entries=tuple(entries))


def render_prompt(clips: list[ClipCaption]) -> PromptRequest:
    """Fill the report prompt with the numbered clip captions, in order."""
    if not clips:
        raise ValueError("cannot render a prompt for an empty clip list")
    numbered = "\n".join(f"{i}. {clip.text}" for i, clip in enumerate(clips, start=1))
    prompt = PROMPT_TEMPLATE.replace("{clip_captions}", numbered)
    return PromptRequest(
        template_id=PROMPT_TEMPLATE_ID,
        clip_captions=tuple(clip.text for clip in clips),
        prompt=prompt,
        clips=tuple(clips),
    )


def _past_clause(action: Triplet, vocab: Vocabulary) -> str:
    instrument = vocab.instruments[action.instrument]
    clause = f"the {instrument} {verb_forms(action.verb, vocab).past}"
    if action.target is not None:
        clause += f" the {vocab.targets[action.target]}"
    return clause


def _join_clauses(clauses: list[str]) -> str:
    if len(clauses) <= 1:
        return clauses[0]
    return ", ".join(clauses[:-1]) + " and " + clauses[-1]


def offline_report(timeline: MergedTimeline, vocab: Vocabulary) -> SurgicalReport:
    """Deterministic narrative: one paragraph per timeline entry."""
    if not timeline.entries:
        raise ValueError("cannot render a report for an empty timeline")
    paragraphs = []
    for entry in timeline.entries:
        phase = vocab.phases[entry.phase]
        if entry.actions:
            summary = _join_clauses([_past_clause(a, vocab) for a in entry.actions])
        else:
            summary = "no instrument was active"
        paragraphs.append(
            f"The {phase} phase lasted {entry.total_seconds} seconds, during which {summary}."
        )
    return SurgicalReport(
        video_id=timeline.video_id,
        narrative="\n".join(paragraphs),
        timeline=timeline,
        provenance="offline",
    )


def llm_generate(request: PromptRequest, endpoint: EndpointConfig) -> SurgicalReport:
    """Generate the narrative with a remote chat-completion endpoint.

    Transient failures (network errors, 429, 5xx) are retried with
    exponential backoff for up to max_attempts total attempts. The
    credential is read from the configured environment variable and never
    logged.
    """
    credential = os.environ.get(endpoint.credential_env)
    if not credential:
        raise MissingCredentialError(
            f"environment variable {endpoint.credential_env} is not set"
        )
    payload = {
        "model": endpoint.model,
        "messages": [{"role": "user", "content": request.prompt}],
        "temperature": endpoint.temperature,
        "max_tokens": endpoint.max_tokens,
    }
    url = endpoint.base_url.rstrip("/") + "/chat/completions"
    last_error: Exception | None = None
    response = None
    for attempt in range(1, endpoint.max_attempts + 1):
        log.info(
            "report request %s attempt %d/%d (auth: Bearer ***, %d clip captions)",
            url,
            attempt,
            endpoint.max_attempts,
            len(request.clip_captions),
        )
        try:
            response = requests.post(
                url,
                json=payload,
                headers={"Authorization": f"Bearer {credential}"},
                timeout=endpoint.timeout,
            )
        except requests.RequestException as exc:
            last_error = exc
            log.warning("transport failure on attempt %d: %s", attempt, type(exc).__name__)
            response = None
        else:
            if response.status_code == 200:
                break
            log.warning("endpoint status %d on attempt %d", response.status_code, attempt)
            if response.status_code not in _TRANSIENT_STATUSES:
                raise EndpointStatusError(
                    f"endpoint answered status {response.status_code}", response.status_code
                )
            last_error = EndpointStatusError(
                f"endpoint answered status {response.status_code}", response.status_code
            )
            response = None
        if attempt < endpoint.max_attempts:
            time.sleep(endpoint.backoff_seconds * 2 ** (attempt - 1))
    if response is None:
        if isinstance(last_error, EndpointStatusError):
            raise last_error
        raise TransportError(
            f"request failed after {endpoint.max_attempts} attempts: {last_error}"
        )

    try:
        narrative = response.json()["choices"][0]["message"]["content"]
    except (ValueError, KeyError, IndexError) as exc:
        raise EndpointStatusError(f"malformed endpoint response: {exc}", response.status_code)
    log.info("report response: %d characters", len(narrative))
    return SurgicalReport(
        video_id=request.clips[0].video_id,
        narrative=narrative,
        timeline=merge_timeline(list(request.clips)),
        provenance=f"llm:{endpoint.model}",
    )


def timeline_record(timeline: MergedTimeline, vocab: Vocabulary) -> dict:
    return {
        "video_id": timeline.video_id,
        "total_seconds": timeline.total_seconds,
        "entries": [
            {
                "phase": vocab.phases[e.phase],
                "total_seconds": e.total_seconds,
                "actions": [
                    [
                        vocab.instruments[a.instrument],
                        None if a.verb is None else vocab.verbs[a.verb],
                        None if a.target is None else vocab.targets[a.target],
                    ]
                    for a in e.actions
                ],
                "clip_range": list(e.clip_range),
            }
            for e in timeline.entries
        ],
    }


def write_report(directory: str | Path, report: SurgicalReport, vocab: Vocabulary, suffix: str = "") -> Path:
    """Write the narrative text plus a structured timeline sidecar."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    text_path = directory / f"{report.video_id}{suffix}.txt"
    text_path.write_text(report.narrative + "\n", encoding="utf-8")
    sidecar = {
        "provenance": report.provenance,
        "timeline": timeline_record(report.timeline, vocab),
    }
    sidecar_path = directory / f"{report.video_id}{suffix}.timeline.json"
    sidecar_path.write_text(json.dumps(sidecar, indent=2) + "\n", encoding="utf-8")
    return text_path
