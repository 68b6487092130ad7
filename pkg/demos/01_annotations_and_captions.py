"""Walkthrough: annotation files, frame captions, durations, and splits.

Builds a miniature annotated video, writes it in the line-delimited
annotation format, parses it back, and derives frame captions plus the
phase-duration table.
"""

import tempfile
from pathlib import Path

from surgreport import (
    FrameAnnotation,
    Triplet,
    VideoRecord,
    default_vocabulary,
    parse_annotations,
    phase_duration_table,
    serialize_annotations,
    split_dataset,
    synthesize_frame_caption,
)

vocab = default_vocabulary()
print("Label space:")
print("  instruments:", ", ".join(vocab.instruments))
print("  phases:     ", ", ".join(vocab.phases))
print("  detection classes:", len(vocab.detection_classes))

# A 90-second video: 40 s of preparation, then 50 s of Calot-triangle
# dissection. The grasper retracts the gallbladder throughout; the hook
# joins for the dissection.
grasper = vocab.index_of("instruments", "grasper")
hook = vocab.index_of("instruments", "hook")
retract = vocab.index_of("verbs", "retract")
dissect = vocab.index_of("verbs", "dissect")
gallbladder = vocab.index_of("targets", "gallbladder")

frames = []
for i in range(90):
    if i < 40:
        phase = vocab.index_of("phases", "preparation")
        triplets = (Triplet(grasper, retract, gallbladder),)
    else:
        phase = vocab.index_of("phases", "calot-triangle-dissection")
        triplets = (Triplet(grasper, retract, gallbladder), Triplet(hook, dissect, gallbladder))
    frames.append(FrameAnnotation("VID01", i, triplets, phase))
video = VideoRecord("VID01", tuple(frames))

# Round-trip through the on-disk format.
with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "annotations.jsonl"
    path.write_text(serialize_annotations([video], vocab), encoding="utf-8")
    print("\nFirst annotation line:")
    print(" ", path.read_text().splitlines()[0])
    reparsed = parse_annotations(path.read_bytes(), vocab)
    assert reparsed == [video]

print("\nFrame captions at the phase boundary:")
for i in (39, 40):
    print(f"  frame {i}: {synthesize_frame_caption(video.frames[i], vocab).text}")

print("\nPhase durations (frames at 1 fps, minutes rounded half-up):")
for phase, count, minutes in phase_duration_table([video], vocab):
    print(f"  {phase:28s} {count:5d} frames  {minutes:8.1f} min")

split = split_dataset([video], ratios=(0.8, 0.1, 0.1), seed=7)
print("\n80/10/10 split sizes:", split.sizes())
