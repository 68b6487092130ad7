"""Walkthrough: overlapping clip windows and timeline captions.

Shows the 32-frame / 16-stride windowing rule, synthesizes a clip caption
with two phase segments, and parses the caption text back into segments.
"""

from surgreport import (
    FrameAnnotation,
    Triplet,
    VideoRecord,
    default_vocabulary,
    parse_clip_caption,
    synthesize_clip_caption,
    window_video,
)

vocab = default_vocabulary()

# Windowing arithmetic: count = floor((N - 32) / 16) + 1 for N >= 32.
for n in (31, 32, 64, 95, 96):
    record = VideoRecord("V", tuple(FrameAnnotation("V", i, (), 0) for i in range(n)))
    clips = window_video(record)
    print(f"{n:3d} frames -> {len(clips)} clips, starts {[c.start_frame for c in clips]}")

# A clip that spans a phase transition: 22 s of preparation, 10 s of
# Calot-triangle dissection, same two instruments active throughout.
grasper = vocab.index_of("instruments", "grasper")
hook = vocab.index_of("instruments", "hook")
actions = (Triplet(grasper, vocab.index_of("verbs", "grasp"), vocab.index_of("targets", "gallbladder")),
           Triplet(hook))
frames = []
for i in range(32):
    phase = "preparation" if i < 22 else "calot-triangle-dissection"
    frames.append(FrameAnnotation("VID01", i, actions, vocab.index_of("phases", phase)))
record = VideoRecord("VID01", tuple(frames))

clip = window_video(record)[0]
caption = synthesize_clip_caption(clip, list(record.frames), vocab)
print("\nClip caption:")
print(" ", caption.text)
print("\nSegments:")
for segment in caption.segments:
    print(f"  {vocab.phases[segment.phase]:28s} {segment.duration_seconds:2d} s, "
          f"{len(segment.actions)} actions")

# The caption grammar is invertible: parsing recovers the segments exactly.
parsed = parse_clip_caption(caption.text, vocab)
assert tuple(parsed) == caption.segments
print("\nparse_clip_caption(text) == synthesized segments:", tuple(parsed) == caption.segments)
