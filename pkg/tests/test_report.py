from __future__ import annotations

import json
import logging
import random

import pytest

from surgreport.captions import ClipCaption, PhaseSegment, render_clip_text
from surgreport.errors import MissingCredentialError, TransportError, EndpointStatusError
from surgreport.report import (
    EndpointConfig,
    KEY_INSTRUCTION_DURATIONS,
    KEY_INSTRUCTION_NARRATIVE,
    llm_generate,
    merge_timeline,
    offline_report,
    render_prompt,
    write_report,
)

from conftest import DroppingListener, StubChatServer, triplet


def make_clip(vocab, start, segments, video_id="VID01"):
    return ClipCaption(video_id, start, tuple(segments), render_clip_text(segments, vocab))


def full_phase_clip(vocab, start, phase="preparation", video_id="VID01", actions=None):
    actions = actions if actions is not None else (triplet(vocab, "grasper", "grasp", "gallbladder"),)
    segment = PhaseSegment(vocab.index_of("phases", phase), 32, actions)
    return make_clip(vocab, start, [segment], video_id)


def test_merge_disjoint_clips_add(vocab):
    timeline = merge_timeline([full_phase_clip(vocab, 0), full_phase_clip(vocab, 32)])
    assert [(e.phase, e.total_seconds) for e in timeline.entries] == [(0, 64)]


def test_merge_overlapping_clips_counts_unique_frames(vocab):
    timeline = merge_timeline([full_phase_clip(vocab, 0), full_phase_clip(vocab, 16)])
    assert [(e.phase, e.total_seconds) for e in timeline.entries] == [(0, 48)]
    assert timeline.total_seconds == 48


def test_merge_two_phase_clip_alone(vocab):
    actions = (triplet(vocab, "grasper", "grasp", "gallbladder"), triplet(vocab, "hook"))
    segments = [
        PhaseSegment(vocab.index_of("phases", "preparation"), 22, actions),
        PhaseSegment(vocab.index_of("phases", "calot-triangle-dissection"), 10, actions),
    ]
    timeline = merge_timeline([make_clip(vocab, 0, segments)])
    assert [(vocab.phases[e.phase], e.total_seconds) for e in timeline.entries] == [
        ("preparation", 22),
        ("calot-triangle-dissection", 10),
    ]


def test_merge_rejects_mixed_videos(vocab):
    with pytest.raises(ValueError, match="multiple videos"):
        merge_timeline([full_phase_clip(vocab, 0), full_phase_clip(vocab, 0, video_id="VID02")])


def test_merge_unique_frame_total_over_random_clip_sets(vocab):
    rng = random.Random(99)
    for _ in range(200):
        clips = []
        covered = set()
        for _ in range(rng.randint(1, 6)):
            start = rng.randrange(0, 200, 16)
            segments = []
            remaining = 32
            while remaining > 0:
                duration = rng.randint(1, remaining)
                segments.append(PhaseSegment(rng.randrange(7), duration, ()))
                remaining -= duration
            clips.append(make_clip(vocab, start, segments))
            covered |= set(range(start, start + 32))
        timeline = merge_timeline(clips)
        assert timeline.total_seconds == len(covered)
        for a, b in zip(timeline.entries, timeline.entries[1:]):
            assert a.phase != b.phase


def test_merge_actions_union_in_first_appearance_order(vocab):
    a1 = triplet(vocab, "grasper", "retract", "gallbladder")
    a2 = triplet(vocab, "hook", "dissect", "gallbladder")
    clip1 = full_phase_clip(vocab, 0, actions=(a1,))
    clip2 = full_phase_clip(vocab, 16, actions=(a2, a1))
    timeline = merge_timeline([clip1, clip2])
    assert timeline.entries[0].actions == (a1, a2)
    assert timeline.entries[0].clip_range == (0, 16)


def test_render_prompt_contains_captions_and_instructions(vocab):
    clips = [full_phase_clip(vocab, 0), full_phase_clip(vocab, 16, phase="gallbladder-dissection")]
    request = render_prompt(clips)
    assert KEY_INSTRUCTION_DURATIONS in request.prompt
    assert KEY_INSTRUCTION_NARRATIVE in request.prompt
    positions = []
    for i, clip in enumerate(clips, start=1):
        assert f"{i}. {clip.text}" in request.prompt
        assert request.prompt.count(clip.text) == 1
        positions.append(request.prompt.index(clip.text))
    assert positions == sorted(positions)
    assert request.template_id == "surgery-report-v1"


def test_render_prompt_mentions_durations(vocab):
    actions = (triplet(vocab, "grasper", "grasp", "gallbladder"), triplet(vocab, "hook"))
    segments = [
        PhaseSegment(vocab.index_of("phases", "preparation"), 22, actions),
        PhaseSegment(vocab.index_of("phases", "calot-triangle-dissection"), 10, actions),
    ]
    request = render_prompt([make_clip(vocab, 0, segments)])
    assert "22-second preparation phase" in request.prompt


def test_render_prompt_deterministic(vocab):
    clips = [full_phase_clip(vocab, 0)]
    assert render_prompt(clips).prompt == render_prompt(clips).prompt


def test_offline_report_single_entry(vocab):
    timeline = merge_timeline(
        [
            make_clip(
                vocab,
                0,
                [
                    PhaseSegment(
                        vocab.index_of("phases", "preparation"),
                        32,
                        (triplet(vocab, "grasper", "retract", "gallbladder"),),
                    )
                ],
            ),
            full_phase_clip(vocab, 16, actions=(triplet(vocab, "grasper", "retract", "gallbladder"),)),
        ]
    )
    report = offline_report(timeline, vocab)
    assert report.narrative == (
        "The preparation phase lasted 48 seconds, during which the grasper "
        "retracted the gallbladder."
    )
    assert report.provenance == "offline"


def test_offline_report_two_phases_and_determinism(vocab):
    actions = (triplet(vocab, "grasper", "grasp", "gallbladder"), triplet(vocab, "hook"))
    segments = [
        PhaseSegment(vocab.index_of("phases", "preparation"), 22, actions),
        PhaseSegment(vocab.index_of("phases", "calot-triangle-dissection"), 10, actions),
    ]
    timeline = merge_timeline([make_clip(vocab, 0, segments)])
    report = offline_report(timeline, vocab)
    lines = report.narrative.splitlines()
    assert len(lines) == 2
    assert "lasted 22 seconds" in lines[0]
    assert "lasted 10 seconds" in lines[1]
    assert "the grasper held the gallbladder and the hook was present" in lines[0]
    again = offline_report(merge_timeline([make_clip(vocab, 0, segments)]), vocab)
    assert again.narrative == report.narrative


def test_llm_generate_against_stub(vocab, monkeypatch):
    monkeypatch.setenv("SURGREPORT_API_KEY", "secret-token")
    clips = [full_phase_clip(vocab, 0)]
    request = render_prompt(clips)
    with StubChatServer(completion="A fine procedure.") as stub:
        endpoint = EndpointConfig(base_url=stub.url, model="test-model", backoff_seconds=0.01)
        report = llm_generate(request, endpoint)
    assert report.narrative == "A fine procedure."
    assert report.provenance == "llm:test-model"
    assert report.timeline.total_seconds == 32
    body = stub.requests[0]
    assert body["model"] == "test-model"
    content = body["messages"][0]["content"]
    assert KEY_INSTRUCTION_DURATIONS in content
    assert KEY_INSTRUCTION_NARRATIVE in content
    assert stub.auth_headers[0] == "Bearer secret-token"


def test_llm_generate_retries_then_raises_transport_error(vocab, monkeypatch):
    monkeypatch.setenv("SURGREPORT_API_KEY", "secret-token")
    request = render_prompt([full_phase_clip(vocab, 0)])
    with DroppingListener() as listener:
        endpoint = EndpointConfig(base_url=listener.url, model="m", backoff_seconds=0.01, timeout=2)
        with pytest.raises(TransportError, match="after 3 attempts"):
            llm_generate(request, endpoint)
    assert listener.accepts == 3


def test_llm_generate_missing_credential(vocab, monkeypatch):
    monkeypatch.delenv("SURGREPORT_API_KEY", raising=False)
    request = render_prompt([full_phase_clip(vocab, 0)])
    endpoint = EndpointConfig(base_url="http://127.0.0.1:1", model="m")
    with pytest.raises(MissingCredentialError, match="SURGREPORT_API_KEY"):
        llm_generate(request, endpoint)


def test_llm_generate_non_success_status(vocab, monkeypatch):
    monkeypatch.setenv("SURGREPORT_API_KEY", "secret-token")
    request = render_prompt([full_phase_clip(vocab, 0)])
    with StubChatServer(status=403) as stub:
        endpoint = EndpointConfig(base_url=stub.url, model="m", backoff_seconds=0.01)
        with pytest.raises(EndpointStatusError, match="403"):
            llm_generate(request, endpoint)
    assert len(stub.requests) == 1  # 4xx is not transient; no retry


def test_llm_generate_never_logs_credential(vocab, monkeypatch, caplog):
    monkeypatch.setenv("SURGREPORT_API_KEY", "super-secret-credential")
    request = render_prompt([full_phase_clip(vocab, 0)])
    with caplog.at_level(logging.DEBUG):
        with StubChatServer() as stub:
            endpoint = EndpointConfig(base_url=stub.url, model="m", backoff_seconds=0.01)
            llm_generate(request, endpoint)
        with DroppingListener() as listener:
            failing = EndpointConfig(base_url=listener.url, model="m", backoff_seconds=0.01, timeout=2)
            with pytest.raises(TransportError):
                llm_generate(request, failing)
    assert "super-secret-credential" not in caplog.text


def test_write_report_text_and_sidecar(tmp_path, vocab):
    timeline = merge_timeline([full_phase_clip(vocab, 0)])
    report = offline_report(timeline, vocab)
    path = write_report(tmp_path, report, vocab)
    assert path.read_text(encoding="utf-8").startswith("The preparation phase lasted 32 seconds")
    sidecar = json.loads((tmp_path / "VID01.timeline.json").read_text(encoding="utf-8"))
    assert sidecar["provenance"] == "offline"
    assert sidecar["timeline"]["total_seconds"] == 32
    assert sidecar["timeline"]["entries"][0]["phase"] == "preparation"
