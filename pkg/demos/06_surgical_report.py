"""Walkthrough: from overlapping clip captions to a surgical report.

Clips overlap by 16 frames, so naive duration sums would overcount; the
merged timeline counts each second of video once. The offline renderer
then turns the timeline into a deterministic narrative, and the prompt
builder shows exactly what a chat-completion endpoint would receive.
"""

from surgreport import (
    FrameAnnotation,
    Triplet,
    VideoRecord,
    default_vocabulary,
    merge_timeline,
    offline_report,
    render_prompt,
    synthesize_clip_caption,
    window_video,
)

vocab = default_vocabulary()


def phase_index(name):
    return vocab.index_of("phases", name)


# A 96-second procedure prefix: preparation, then Calot-triangle
# dissection, then clipping-and-cutting.
grasper = Triplet(0, vocab.index_of("verbs", "retract"), vocab.index_of("targets", "gallbladder"))
hook = Triplet(2, vocab.index_of("verbs", "dissect"), vocab.index_of("targets", "gallbladder"))
clipper = Triplet(4, vocab.index_of("verbs", "clip"), vocab.index_of("targets", "cystic_duct"))

frames = []
for i in range(96):
    if i < 30:
        phase, triplets = "preparation", (grasper,)
    elif i < 70:
        phase, triplets = "calot-triangle-dissection", (grasper, hook)
    else:
        phase, triplets = "clipping-and-cutting", (grasper, clipper)
    frames.append(FrameAnnotation("VID07", i, triplets, phase_index(phase)))
record = VideoRecord("VID07", tuple(frames))

clips = window_video(record)
captions = [
    synthesize_clip_caption(clip, [record.frames[i] for i in clip.frame_indices], vocab)
    for clip in clips
]
print(f"{len(record)} frames -> {len(captions)} overlapping clips\n")
for caption in captions[:2]:
    print(f"clip @{caption.start_frame:3d}: {caption.text}")
print("...\n")

# Naive sum vs deduplicated merge.
naive = sum(seg.duration_seconds for cap in captions for seg in cap.segments)
timeline = merge_timeline(captions)
print(f"naive duration sum over clips: {naive} s")
print(f"merged unique-frame duration:  {timeline.total_seconds} s\n")

print("Merged timeline:")
for entry in timeline.entries:
    print(f"  {vocab.phases[entry.phase]:28s} {entry.total_seconds:3d} s  "
          f"(clips {entry.clip_range[0]}..{entry.clip_range[1]})")

report = offline_report(timeline, vocab)
print("\nOffline report:")
print(report.narrative)

request = render_prompt(captions)
print("\nPrompt sent to a chat-completion endpoint (truncated):")
print(request.prompt[:400] + " ...")
