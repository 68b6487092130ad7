"""Command-line pipeline orchestration.

Subcommands: preprocess, detect, calibrate, evaluate, report. Each reads
one YAML configuration file; selected fields can be overridden with flags
(flag > config > default). Outputs are deterministic: rerunning a command
on unchanged inputs produces byte-identical files.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .calibration import bins_csv, calibration_record, fit_temperature
from .captions import (
    read_clip_captions,
    read_frame_captions,
    synthesize_clip_caption,
    synthesize_frame_caption,
    write_clip_captions,
    write_frame_captions,
)
from .config import PipelineConfig, config_hash, load_config, validate_paths
from .dataset import load_annotations, phase_duration_table, split_dataset
from .detection import (
    probabilities_from_logits,
    read_logits,
    threshold_detect,
    truth_bits,
    write_detections,
)
from .embeddings import EmbeddingTable
from .errors import ConfigError, EndpointError, SurgReportError
from .jsonl import write_jsonl
from .metrics import (
    MetricReport,
    aggregate_caption_metrics,
    average_precision,
    classification_metrics,
)
from .report import llm_generate, merge_timeline, offline_report, render_prompt, write_report
from .windowing import window_video, write_clip_manifest

log = logging.getLogger(__name__)


def _write_manifest(config: PipelineConfig, command: str, outputs: list[Path]) -> None:
    manifest = {
        "artifact_version": __version__,
        "config_sha256": config_hash(config),
        "command": command,
        "outputs": sorted(p.name for p in outputs),
    }
    path = config.output_dir() / f"{command}.manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _load_records(config: PipelineConfig, videos: list[str] | None):
    validate_paths(config, ("annotations",))
    vocab = config.vocabulary()
    records = load_annotations(config.paths.annotations, vocab)
    if videos:
        known = {r.video_id for r in records}
        missing = [v for v in videos if v not in known]
        if missing:
            raise ConfigError(f"unknown video ids: {missing}")
        records = [r for r in records if r.video_id in videos]
    if not records:
        raise ConfigError("no annotated videos to process")
    return records, vocab


def cmd_preprocess(config: PipelineConfig, videos: list[str] | None = None) -> list[Path]:
    """Write frame captions, clip captions, the clip manifest, and durations."""
    records, vocab = _load_records(config, videos)
    out = config.output_dir()
    out.mkdir(parents=True, exist_ok=True)

    frame_captions = [
        synthesize_frame_caption(frame, vocab) for rec in records for frame in rec.frames
    ]
    clips = [
        clip
        for rec in records
        for clip in window_video(rec, config.windowing.size, config.windowing.stride)
    ]
    frames_by_video = {rec.video_id: rec.frames for rec in records}
    clip_captions = [
        synthesize_clip_caption(
            clip, [frames_by_video[clip.video_id][i] for i in clip.frame_indices], vocab
        )
        for clip in clips
    ]
    durations = phase_duration_table(records, vocab)

    outputs = [
        out / "frame_captions.jsonl",
        out / "clip_captions.jsonl",
        out / "clip_manifest.jsonl",
        out / "phase_durations.csv",
    ]
    write_frame_captions(outputs[0], frame_captions)
    write_clip_captions(outputs[1], clip_captions)
    write_clip_manifest(outputs[2], clips)
    lines = ["phase,frames,minutes"]
    lines += [f"{phase},{count},{minutes:.1f}" for phase, count, minutes in durations]
    outputs[3].write_text("\n".join(lines) + "\n", encoding="utf-8")
    _write_manifest(config, "preprocess", outputs)
    log.info("preprocess: %d frames, %d clips", len(frame_captions), len(clips))
    return outputs


def cmd_detect(config: PipelineConfig, videos: list[str] | None = None) -> list[Path]:
    """Map logits to probabilities and thresholded detections."""
    validate_paths(config, ("logits",))
    vocab = config.vocabulary()
    logits_records = read_logits(config.paths.logits)
    if videos:
        logits_records = [r for r in logits_records if r.video_id in videos]
    if not logits_records:
        raise ConfigError("no logits records to process")
    detections = []
    for record in logits_records:
        probs = probabilities_from_logits(record.logits, config.detection.mode)
        detections.append(
            threshold_detect(probs, config.detection.threshold, (record.video_id, record.frame_index))
        )
    out = config.output_dir()
    out.mkdir(parents=True, exist_ok=True)
    path = out / "detections.jsonl"
    write_detections(path, detections, vocab)
    _write_manifest(config, "detect", [path])
    return [path]


def cmd_calibrate(config: PipelineConfig) -> list[Path]:
    """Fit the temperature on the validation split and export the results."""
    validate_paths(config, ("annotations", "logits"))
    records, vocab = _load_records(config, None)
    split = split_dataset(
        records, config.split.ratios, config.split.seed, config.split.granularity
    )
    frames = {
        (rec.video_id, f.frame_index): f for rec in records for f in rec.frames
    }
    logits_by_ref = {
        (r.video_id, r.frame_index): r.logits for r in read_logits(config.paths.logits)
    }
    validation = sorted(split.validation)
    missing = [ref for ref in validation if ref not in logits_by_ref]
    if missing:
        raise ConfigError(
            f"missing logits rows for {len(missing)} validation frames, e.g. {missing[:3]}"
        )
    z = np.asarray([logits_by_ref[ref] for ref in validation])
    y = np.asarray([truth_bits(frames[ref], vocab) for ref in validation])
    result = fit_temperature(
        z,
        y,
        mode=config.detection.mode,
        search_range=(config.calibration.t_lo, config.calibration.t_hi),
        bin_count=config.calibration.bins,
    )
    out = config.output_dir()
    out.mkdir(parents=True, exist_ok=True)
    outputs = [
        out / "calibration.json",
        out / "reliability_bins_before.csv",
        out / "reliability_bins_after.csv",
    ]
    outputs[0].write_text(
        json.dumps(calibration_record(result), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    outputs[1].write_text(bins_csv(result.bins_before), encoding="utf-8")
    outputs[2].write_text(bins_csv(result.bins_after), encoding="utf-8")
    _write_manifest(config, "calibrate", outputs)
    log.info("calibrate: T=%.4f ece %.4f -> %.4f", result.temperature, result.ece_before, result.ece_after)
    return outputs


def _caption_pairs(generated_path: str, reference_path: str, kind: str) -> list[tuple[str, str]]:
    if kind == "frame":
        gen = {(c.video_id, c.frame_index): c.text for c in read_frame_captions(generated_path)}
        ref = {(c.video_id, c.frame_index): c.text for c in read_frame_captions(reference_path)}
    else:
        gen = {(c.video_id, c.start_frame): c.text for c in read_clip_captions(generated_path)}
        ref = {(c.video_id, c.start_frame): c.text for c in read_clip_captions(reference_path)}
    if set(gen) != set(ref):
        only_gen = sorted(set(gen) - set(ref))[:3]
        only_ref = sorted(set(ref) - set(gen))[:3]
        raise ConfigError(
            f"{kind} caption keys do not align: generated-only {only_gen}, reference-only {only_ref}"
        )
    return [(gen[key], ref[key]) for key in sorted(gen)]


def _detection_report(config: PipelineConfig, vocab) -> dict | None:
    if not config.paths.logits or not Path(config.paths.logits).exists():
        return None
    records, _ = _load_records(config, None)
    frames = {(rec.video_id, f.frame_index): f for rec in records for f in rec.frames}
    logits_records = read_logits(config.paths.logits)
    missing = [
        (r.video_id, r.frame_index)
        for r in logits_records
        if (r.video_id, r.frame_index) not in frames
    ]
    if missing:
        raise ConfigError(f"logits rows without annotations, e.g. {missing[:3]}")
    truths = []
    predictions = []
    n_classes = len(vocab.detection_classes)
    probs_matrix = []
    for record in logits_records:
        probs = probabilities_from_logits(record.logits, config.detection.mode)
        probs_matrix.append(probs)
        predictions.append(threshold_detect(probs, config.detection.threshold))
        truths.append(truth_bits(frames[(record.video_id, record.frame_index)], vocab))
    cls = classification_metrics(predictions, truths)
    truth_matrix = np.asarray(truths)
    prob_matrix = np.asarray(probs_matrix)
    ranked = [
        list(zip(prob_matrix[:, i].tolist(), truth_matrix[:, i].astype(int).tolist()))
        for i in range(n_classes)
    ]
    ap = average_precision(ranked, n_instruments=len(vocab.instruments))
    row = MetricReport(
        precision=cls.precision, recall=cls.recall, f1=cls.f1, accuracy=cls.accuracy
    ).to_record()
    row["ap_instruments"] = ap.instruments
    row["ap_targets"] = ap.targets
    row["ap_excluded_classes"] = [vocab.detection_classes[i] for i in ap.excluded]
    return row


def cmd_evaluate(config: PipelineConfig) -> list[Path]:
    """Score generated captions against references; add detection metrics."""
    vocab = config.vocabulary()
    out = config.output_dir()
    evaluate = config.evaluate
    table = None
    if config.paths.embeddings:
        validate_paths(config, ("embeddings",))
        table = EmbeddingTable.load(config.paths.embeddings)

    rows: list[dict] = []
    frame_ref = evaluate.reference_frame_captions or str(out / "frame_captions.jsonl")
    clip_ref = evaluate.reference_clip_captions or str(out / "clip_captions.jsonl")
    scopes = [
        ("frame_captions", evaluate.generated_frame_captions, frame_ref, "frame"),
        ("clip_captions", evaluate.generated_clip_captions, clip_ref, "clip"),
    ]
    for scope, generated, reference, kind in scopes:
        if generated is None:
            continue
        for label, path in (("generated", generated), ("reference", reference)):
            if not Path(path).exists():
                raise ConfigError(f"{scope} {label} captions not found: {path}")
        report = aggregate_caption_metrics(_caption_pairs(generated, reference, kind), table)
        rows.append({"scope": scope, **report.to_record()})
    detection_row = _detection_report(config, vocab)
    if detection_row is not None:
        rows.append({"scope": "detection", **detection_row})
    if not rows:
        raise ConfigError("nothing to evaluate: no generated captions or logits configured")

    out.mkdir(parents=True, exist_ok=True)
    outputs = [out / "metrics.jsonl", out / "metrics.csv"]
    write_jsonl(outputs[0], rows)
    columns = ["scope"] + sorted({key for row in rows for key in row} - {"scope"})
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(_csv_cell(row.get(col)) for col in columns))
    outputs[1].write_text("\n".join(lines) + "\n", encoding="utf-8")
    _write_manifest(config, "evaluate", outputs)
    return outputs


def _csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.10g}"
    if isinstance(value, list):
        return '"' + ";".join(str(v) for v in value) + '"'
    return str(value)


def cmd_report(config: PipelineConfig, videos: list[str] | None = None) -> list[Path]:
    """Write the offline report per video, plus the endpoint report if enabled."""
    vocab = config.vocabulary()
    clip_path = Path(config.paths.output_dir) / "clip_captions.jsonl"
    if not clip_path.exists():
        raise ConfigError(f"clip captions not found: {clip_path} (run preprocess first)")
    captions = read_clip_captions(clip_path, vocab)
    by_video: dict[str, list] = {}
    for caption in captions:
        by_video.setdefault(caption.video_id, []).append(caption)
    if videos:
        missing = [v for v in videos if v not in by_video]
        if missing:
            raise ConfigError(f"unknown video ids: {missing}")
        selected = {v: by_video[v] for v in videos}
    else:
        selected = by_video

    report_dir = config.output_dir() / "reports"
    outputs: list[Path] = []
    timelines = {}
    for video_id, clips in sorted(selected.items()):
        timeline = merge_timeline(clips)
        timelines[video_id] = timeline
        outputs.append(write_report(report_dir, offline_report(timeline, vocab), vocab))

    endpoint = config.report.endpoint
    if endpoint is not None and not config.report.offline:
        def generate(item):
            video_id, clips = item
            report = llm_generate(render_prompt(clips), endpoint)
            return write_report(report_dir, report, vocab, suffix=".llm")

        with ThreadPoolExecutor(max_workers=max(1, endpoint.parallelism)) as pool:
            try:
                outputs.extend(pool.map(generate, sorted(selected.items())))
            except EndpointError as exc:
                # The offline artifacts above are already on disk.
                raise EndpointError(f"endpoint report failed: {exc}") from exc
    _write_manifest(config, "report", outputs)
    return outputs


def _apply_overrides(config: PipelineConfig, args: argparse.Namespace) -> PipelineConfig:
    if getattr(args, "seed", None) is not None:
        config = dataclasses.replace(
            config, split=dataclasses.replace(config.split, seed=args.seed)
        )
    if getattr(args, "threshold", None) is not None:
        config = dataclasses.replace(
            config, detection=dataclasses.replace(config.detection, threshold=args.threshold)
        )
    if getattr(args, "mode", None) is not None:
        config = dataclasses.replace(
            config, detection=dataclasses.replace(config.detection, mode=args.mode)
        )
    if getattr(args, "offline", False):
        config = dataclasses.replace(
            config, report=dataclasses.replace(config.report, offline=True)
        )
    return config


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="surgreport",
        description="Surgical video annotation pipeline: captions, detections, metrics, reports.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("preprocess", "synthesize captions, clip manifest, and phase durations"),
        ("detect", "threshold external logits into detections"),
        ("calibrate", "fit the temperature on the validation split"),
        ("evaluate", "score captions and detections"),
        ("report", "assemble surgical reports"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True, help="pipeline YAML configuration")
        cmd.add_argument("--videos", help="comma-separated video ids to restrict to")
        cmd.add_argument("--seed", type=int, help="override split.seed")
        cmd.add_argument("--threshold", type=float, help="override detection.threshold")
        cmd.add_argument("--mode", choices=("sigmoid", "softmax"), help="override detection.mode")
        cmd.add_argument("--offline", action="store_true", help="skip the endpoint report")
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    videos = args.videos.split(",") if args.videos else None
    try:
        config = _apply_overrides(load_config(args.config), args)
        runner = {
            "preprocess": lambda: cmd_preprocess(config, videos),
            "detect": lambda: cmd_detect(config, videos),
            "calibrate": lambda: cmd_calibrate(config),
            "evaluate": lambda: cmd_evaluate(config),
            "report": lambda: cmd_report(config, videos),
        }[args.command]
        outputs = runner()
    except SurgReportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for path in outputs:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
