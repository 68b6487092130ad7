"""Detection-side numerics: patch grids, logit squashing, thresholds, loss.

The detection class space has 21 entries: the 6 instruments followed by the
15 targets. Logits come from an external trained model; this module maps
them to probabilities, applies thresholded multi-label detection, and
evaluates the class-weighted binary cross-entropy.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import FrameAnnotation
from .jsonl import read_jsonl, write_jsonl
from .vocab import Vocabulary

N_DETECTION_CLASSES = 21

# Keeps log() finite in the cross-entropy and likelihood computations.
PROBABILITY_FLOOR = 1e-12


@dataclass(frozen=True)
class PatchSequence:
    """Row-major patch grid of one image, each patch flattened.

    Patches are enumerated row-major over the patch grid and flattened
    row-major within the patch with channels interleaved last. Position
    indices are 1-based, 1..N with no gaps.
    """

    patch_size: int
    height: int
    width: int
    channels: int
    vectors: np.ndarray  # shape (N, patch_size * patch_size * channels)

    @property
    def positions(self) -> tuple[int, ...]:
        return tuple(range(1, len(self.vectors) + 1))

    def __len__(self) -> int:
        return len(self.vectors)

    def __iter__(self):
        return ((pos, vec) for pos, vec in zip(self.positions, self.vectors))


@dataclass(frozen=True)
class LogitsRecord:
    """Raw per-frame scores over the 21 detection classes."""

    video_id: str
    frame_index: int
    logits: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.logits) != N_DETECTION_CLASSES:
            raise ValueError(f"expected {N_DETECTION_CLASSES} logits, got {len(self.logits)}")
        if not np.all(np.isfinite(self.logits)):
            raise ValueError(f"non-finite logit for {self.video_id}@{self.frame_index}")


@dataclass(frozen=True)
class DetectionSet:
    """Classes whose probability strictly exceeds the threshold."""

    detected: frozenset[int]
    probabilities: tuple[float, ...]
    frame: tuple[str, int] | None = None


@dataclass(frozen=True)
class ClassWeights:
    """Inverse-frequency class weights, normalized to sum to one."""

    weights: tuple[float, ...]
    epsilon: float

    def __post_init__(self) -> None:
        if any(w < 0 for w in self.weights):
            raise ValueError("class weights must be nonnegative")
        if abs(sum(self.weights) - 1.0) > 1e-9:
            raise ValueError(f"class weights must sum to 1, got {sum(self.weights)!r}")


def patch_count(height: int, width: int, patch_size: int) -> int:
    """Number of non-overlapping patches tiling an image: H*W / p^2."""
    if patch_size <= 0:
        raise ValueError(f"patch size must be positive, got {patch_size}")
    if height % patch_size or width % patch_size:
        raise ValueError(
            f"patch size {patch_size} must divide image dimensions {height}x{width}"
        )
    return (height * width) // (patch_size * patch_size)


def patchify(image: np.ndarray, patch_size: int) -> PatchSequence:
    """Split an (H, W) or (H, W, C) image into flattened patches."""
    arr = np.asarray(image)
    if arr.ndim == 2:
        arr = arr[:, :, np.newaxis]
    if arr.ndim != 3:
        raise ValueError(f"image must be 2-D or 3-D, got shape {arr.shape}")
    height, width, channels = arr.shape
    n = patch_count(height, width, patch_size)
    grid = arr.reshape(
        height // patch_size, patch_size, width // patch_size, patch_size, channels
    )
    vectors = grid.transpose(0, 2, 1, 3, 4).reshape(n, patch_size * patch_size * channels)
    return PatchSequence(patch_size, height, width, channels, vectors)


def unpatchify(patches: PatchSequence) -> np.ndarray:
    """Reassemble the original image; exact inverse of patchify."""
    p, h, w, c = patches.patch_size, patches.height, patches.width, patches.channels
    grid = patches.vectors.reshape(h // p, w // p, p, p, c)
    image = grid.transpose(0, 2, 1, 3, 4).reshape(h, w, c)
    return image[:, :, 0] if c == 1 else image


def sigmoid(z: np.ndarray) -> np.ndarray:
    # exp overflow for very negative z rounds to p = 0.0, which downstream
    # clamping handles; silencing the warning keeps the canonical form.
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-np.asarray(z, dtype=float)))


def softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    shifted = z - z.max(axis=axis, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=axis, keepdims=True)


def probabilities_from_logits(
    logits: np.ndarray, mode: str = "sigmoid", temperature: float = 1.0
) -> np.ndarray:
    """Map raw scores to [0, 1] after dividing by the temperature.

    Sigmoid yields independent per-class probabilities (the multi-label
    default); softmax yields a distribution summing to one.
    """
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    if mode not in ("sigmoid", "softmax"):
        raise ValueError(f"mode must be 'sigmoid' or 'softmax', got {mode!r}")
    scaled = np.asarray(logits, dtype=float) / temperature
    return sigmoid(scaled) if mode == "sigmoid" else softmax(scaled)


def threshold_detect(
    probabilities: np.ndarray,
    threshold: float | np.ndarray = 0.5,
    frame: tuple[str, int] | None = None,
) -> DetectionSet:
    """Select classes with probability strictly above the threshold.

    Ties at the threshold are excluded. A per-class threshold vector is
    accepted; the default is a single 0.5.
    """
    probs = np.asarray(probabilities, dtype=float)
    if probs.min(initial=0.0) < 0.0 or probs.max(initial=0.0) > 1.0:
        raise ValueError("probabilities must lie in [0, 1]")
    thr = np.broadcast_to(np.asarray(threshold, dtype=float), probs.shape)
    detected = frozenset(int(i) for i in np.nonzero(probs > thr)[0])
    return DetectionSet(detected=detected, probabilities=tuple(float(p) for p in probs), frame=frame)


def class_weights(frequencies: np.ndarray, epsilon: float = 1e-6) -> ClassWeights:
    """Weights proportional to 1 / (frequency + epsilon), normalized to sum 1.

    epsilon guards zero counts; it may be zero when every count is positive.
    """
    freq = np.asarray(frequencies, dtype=float)
    if freq.min(initial=0.0) < 0:
        raise ValueError("frequencies must be nonnegative")
    if epsilon < 0:
        raise ValueError(f"epsilon must be nonnegative, got {epsilon}")
    if epsilon == 0 and np.any(freq == 0):
        raise ValueError("epsilon must be positive when a frequency is zero")
    raw = 1.0 / (freq + epsilon)
    normalized = raw / raw.sum()
    return ClassWeights(weights=tuple(float(w) for w in normalized), epsilon=epsilon)


def weighted_bce(
    labels: np.ndarray, logits: np.ndarray, weights: ClassWeights | np.ndarray
) -> float:
    """Class-weighted binary cross-entropy of logits against 0/1 labels.

    -sum_i w_i * (y_i * log sigmoid(z_i) + (1 - y_i) * log(1 - sigmoid(z_i)))
    with probabilities clamped away from 0 and 1 to keep the logs finite.
    """
    y = np.asarray(labels, dtype=float)
    z = np.asarray(logits, dtype=float)
    w = np.asarray(weights.weights if isinstance(weights, ClassWeights) else weights, dtype=float)
    if not (y.shape == z.shape == w.shape):
        raise ValueError(f"shape mismatch: labels {y.shape}, logits {z.shape}, weights {w.shape}")
    p = np.clip(sigmoid(z), PROBABILITY_FLOOR, 1.0 - PROBABILITY_FLOOR)
    terms = y * np.log(p) + (1.0 - y) * np.log(1.0 - p)
    return float(-(w * terms).sum())


def truth_bits(frame: FrameAnnotation, vocab: Vocabulary) -> np.ndarray:
    """Ground-truth 0/1 vector over the detection class space for one frame.

    An instrument class is positive when any triplet uses the instrument; a
    target class is positive when any triplet acts on the target.
    """
    bits = np.zeros(len(vocab.detection_classes))
    for triplet in frame.triplets:
        bits[triplet.instrument] = 1.0
        if triplet.target is not None:
            bits[len(vocab.instruments) + triplet.target] = 1.0
    return bits


def read_logits(path: str | Path) -> list[LogitsRecord]:
    """Load a line-delimited logits file (video_id, frame, 21 floats per record)."""
    return [
        LogitsRecord(obj["video_id"], obj["frame"], tuple(float(x) for x in obj["logits"]))
        for obj in read_jsonl(path)
    ]


def write_logits(path: str | Path, records: list[LogitsRecord]) -> int:
    return write_jsonl(
        path,
        (
            {"video_id": r.video_id, "frame": r.frame_index, "logits": list(r.logits)}
            for r in records
        ),
    )


def detection_record(detection: DetectionSet, vocab: Vocabulary) -> dict:
    """Export shape: the logits schema plus probabilities and class names."""
    names = vocab.detection_classes
    video_id, frame_index = detection.frame if detection.frame else ("", -1)
    return {
        "video_id": video_id,
        "frame": frame_index,
        "probabilities": list(detection.probabilities),
        "detected": [names[i] for i in sorted(detection.detected)],
    }


def write_detections(path: str | Path, detections: list[DetectionSet], vocab: Vocabulary) -> int:
    return write_jsonl(path, (detection_record(d, vocab) for d in detections))
