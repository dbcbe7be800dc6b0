"""Command-line pipeline driver.

Subcommands: synth, ingest, train-stage1, fit-thresholds, train-stage2,
train-unseen, prune, finetune, quantize, evaluate, detect, bench, profile.
Each command reads and writes fixed artifact names under the output
directory; reruns with the same config and seed overwrite artifacts with
bit-identical content (timing reports aside).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import artifacts
from .bench import bench
from .compress.pipeline import sample_calibration
from .compress.profiler import FULL_SCALE_REFERENCE, ProfileReport, profile
from .compress.prune import prune_filters
from .compress.quant import calibrate, quantize_model
from .config import PipelineConfig, load_config
from .data.records import apply_labels, load_label_map, parse_records
from .data.synth import synth_generate, serialize_synth_labels
from .data.windows import NormStats, make_windows, window_labels, \
    window_senders, windows_to_array
from .detect import DetectionPipeline, detect_windows
from .errors import VidsError
from .reporting import write_report
from .stage1.scoring import (MahalanobisStats, classify_stage1, fit_thresholds,
                             score_windows, stage1_metrics)
from .stage1.training import train_stage1
from .stage2.metrics import evaluate as evaluate_stage2
from .stage2.model import Stage2Model
from .stage2.training import finetune_stage2, train_stage2
from .stage2.unseen import train_unseen

COMMANDS = ("synth", "ingest", "train-stage1", "fit-thresholds",
            "train-stage2", "train-unseen", "prune", "finetune", "quantize",
            "evaluate", "detect", "bench", "profile")


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        config = _load(args)
        out = Path(config.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        handler = globals()[f"cmd_{args.command.replace('-', '_')}"]
        handler(config, out, args)
        return 0
    except VidsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vids",
        description="two-stage vehicular intrusion detection pipeline")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", default=None, help="INI config file")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--mode", choices=("band_llul", "band_q1q3"),
                        default=None, help="stage-1 deployment decision rule")
    parser.add_argument("--variant", default=None,
                        help="stage-1 architecture/loss variant (M1..M7)")
    parser.add_argument("--loss", choices=("ce", "lsmooth", "focal"),
                        default=None, help="stage-2 classification loss")
    parser.add_argument("--prune-ratio", type=float, default=None)
    parser.add_argument("--bits", type=int, default=None)
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--input", default=None,
                        help="windows container for detect/bench")
    parser.add_argument("--repetitions", type=int, default=5)
    return parser


def _load(args) -> PipelineConfig:
    overrides = {}
    if args.seed is not None:
        overrides["run.seed"] = args.seed
    if args.mode is not None:
        overrides["run.mode"] = args.mode
    if args.out is not None:
        overrides["run.out"] = args.out
    if args.variant is not None:
        overrides["stage1.variant"] = args.variant
    if args.loss is not None:
        overrides["stage2.loss"] = args.loss
    if args.prune_ratio is not None:
        overrides["compress.prune_ratio"] = args.prune_ratio
    if args.bits is not None:
        overrides["compress.bits"] = args.bits
    return load_config(args.config, overrides)


def _require(path: Path, what: str) -> Path:
    if not path.exists():
        raise VidsError(f"{what} not found at {path}; run the producing "
                        "command first")
    return path


# ---------------------------------------------------------------------------
# data commands


def cmd_synth(config: PipelineConfig, out: Path, args) -> None:
    from .data.records import serialize_records
    for split, seed in (("train", config.seed), ("test", config.seed + 1000)):
        records = synth_generate(config.synth, seed=seed)
        suffix = "" if split == "train" else "_test"
        (out / f"synth{suffix}.jsonl").write_text(serialize_records(records),
                                                  encoding="utf-8")
        (out / f"synth{suffix}.labels.json").write_text(
            serialize_synth_labels(records), encoding="utf-8")
        print(f"synth[{split}]: {len(records)} records from "
              f"{len(set(r.sender_id for r in records))} vehicles -> {out}")


def cmd_ingest(config: PipelineConfig, out: Path, args) -> None:
    for split in ("train", "test"):
        suffix = "" if split == "train" else "_test"
        path = getattr(config.data, split) or str(out / f"synth{suffix}.jsonl")
        _require(Path(path), f"{split} data")
        result = parse_records(path)
        labels_path = (config.data.labels
                       or str(out / f"synth{suffix}.labels.json"))
        if Path(labels_path).exists():
            apply_labels(result.records, load_label_map(labels_path))
        windows = make_windows(result.records, config.data.window,
                               config.data.stride)
        artifacts.save_windows(
            out / f"windows_{split}.fids", windows_to_array(windows),
            window_labels(windows), window_senders(windows),
            {"window": config.data.window, "stride": config.data.stride,
             "skipped_lines": result.skipped})
        print(f"ingest[{split}]: {len(result.records)} records "
              f"({result.skipped} skipped) -> {len(windows)} windows")


def _load_split(out: Path, split: str) -> dict:
    return artifacts.load_windows(
        _require(out / f"windows_{split}.fids", f"{split} window cache"))


# ---------------------------------------------------------------------------
# stage 1


def cmd_train_stage1(config: PipelineConfig, out: Path, args) -> None:
    cache = _load_split(out, "train")
    normal = cache["values"][cache["labels"] == 0]
    if normal.shape[0] == 0:
        raise VidsError("no ground-truth (label 0) windows to train on")
    norm = NormStats.fit(normal)
    model, history = train_stage1(config.stage1, norm.apply(normal),
                                  log=lambda e: print(f"  stage1 {e}"))
    artifacts.save_stage1(out / "stage1.fids", model, norm=norm)
    (out / "stage1_history.json").write_text(
        json.dumps(history, sort_keys=True), encoding="utf-8")
    print(f"train-stage1: {config.stage1.variant} on {normal.shape[0]} windows")


def cmd_fit_thresholds(config: PipelineConfig, out: Path, args) -> None:
    bundle = artifacts.load_stage1(_require(out / "stage1.fids", "stage1 model"))
    cache = _load_split(out, "train")
    normal = cache["values"][cache["labels"] == 0]
    norm = bundle["norm"]
    x = norm.apply(normal)
    stats = MahalanobisStats.fit(x)
    scores = score_windows(bundle["model"], x, stats, config.stage1.alpha)
    thresholds = fit_thresholds(scores["combined"], alpha=config.stage1.alpha)
    artifacts.save_stage1(out / "stage1.fids", bundle["model"], stats=stats,
                          thresholds=thresholds, norm=norm)
    print(f"fit-thresholds: q1={thresholds.q1:.6g} q3={thresholds.q3:.6g} "
          f"ll={thresholds.ll:.6g} ul={thresholds.ul:.6g}")


# ---------------------------------------------------------------------------
# stage 2


def _anomalous_training_set(config: PipelineConfig, out: Path) -> tuple:
    cache = _load_split(out, "train")
    mask = cache["labels"] > 0
    if not mask.any():
        raise VidsError("no anomalous (label > 0) windows to train on")
    values, labels = cache["values"][mask], cache["labels"][mask]
    norm = NormStats.fit(values)
    return norm.apply(values), labels, norm


def cmd_train_stage2(config: PipelineConfig, out: Path, args) -> None:
    x, labels, norm = _anomalous_training_set(config, out)
    model, history = train_stage2(config.stage2, x, labels,
                                  log=lambda e: print(f"  stage2 {e}"))
    artifacts.save_stage2(out / "stage2.fids", model, norm=norm)
    (out / "stage2_history.json").write_text(
        json.dumps(history, sort_keys=True), encoding="utf-8")
    print(f"train-stage2: {len(model.classes)} classes on {x.shape[0]} windows")


def cmd_train_unseen(config: PipelineConfig, out: Path, args) -> None:
    x, labels, norm = _anomalous_training_set(config, out)
    umodel, _ = train_unseen(config.stage2, config.unseen, x, labels,
                             log=lambda e: print(f"  unseen {e}"))
    artifacts.save_stage2(out / "unseen.fids", umodel.base, norm=norm,
                          unseen_threshold=umodel.threshold,
                          unseen_percentile=umodel.percentile)
    print(f"train-unseen: known={sorted(config.unseen.known_classes)} "
          f"threshold={umodel.threshold:.6g}")


# ---------------------------------------------------------------------------
# compression


def cmd_prune(config: PipelineConfig, out: Path, args) -> None:
    bundle = artifacts.load_stage2(_require(out / "stage2.fids", "stage2 model"))
    model = bundle["model"]
    graph, params = prune_filters(model.graph, model.params, config.prune)
    pruned = Stage2Model(model.config, graph, params, model.classes)
    artifacts.save_stage2(out / "stage2_pruned.fids", pruned,
                          norm=bundle["norm"])
    widths = [l.out_ch for l in graph.layers if hasattr(l, "out_ch")]
    print(f"prune: ratio={config.prune.ratio} -> conv widths {widths}")


def cmd_finetune(config: PipelineConfig, out: Path, args) -> None:
    bundle = artifacts.load_stage2(
        _require(out / "stage2_pruned.fids", "pruned stage2 model"))
    model = bundle["model"]
    x, labels, _ = _anomalous_training_set(config, out)
    finetune_stage2(model, x, labels, config.prune.finetune_epochs,
                    log=lambda e: print(f"  finetune {e}"))
    artifacts.save_stage2(out / "stage2_pruned.fids", model,
                          norm=bundle["norm"])
    print(f"finetune: {config.prune.finetune_epochs} epochs")


def cmd_quantize(config: PipelineConfig, out: Path, args) -> None:
    source = out / "stage2_pruned.fids"
    if not source.exists():
        source = _require(out / "stage2.fids", "stage2 model")
    bundle = artifacts.load_stage2(source)
    model, norm = bundle["model"], bundle["norm"]
    x, _, _ = _anomalous_training_set(config, out)
    calib = sample_calibration(x, config.calibration, config.seed)
    act_obs, weight_obs = calibrate(model.graph, model.params, calib)
    qmodel = quantize_model(model.graph, model.params, act_obs, weight_obs,
                            bits=config.bits)
    artifacts.save_quantized(out / "stage2_quant.fids", qmodel, model.classes,
                             model.config, norm=norm)

    base = artifacts.load_stage2(_require(out / "stage2.fids", "stage2 model"))
    report = ProfileReport(
        before=profile(base["model"].graph,
                       (out / "stage2.fids").stat().st_size),
        after=profile(model.graph,
                      (out / "stage2_quant.fids").stat().st_size))
    write_report(out / "profile_compress", report.to_kv())
    print(f"quantize: bits={config.bits} from {source.name}; "
          f"size {report.reduction_pct('serialized_bytes'):.2f}% smaller")


def cmd_profile(config: PipelineConfig, out: Path, args) -> None:
    kv = {}
    combined_macs = 0
    stage1_path = out / "stage1.fids"
    if stage1_path.exists():
        bundle = artifacts.load_stage1(stage1_path)
        model = bundle["model"]
        for part, graph in (("encoder", model.encoder),
                            ("generator", model.generator),
                            ("discriminator", model.discriminator)):
            prof = profile(graph)
            for key, val in prof.to_dict().items():
                kv[f"stage1.{part}.{key}"] = val
            combined_macs += prof.macs
    stage2_path = out / "stage2.fids"
    if stage2_path.exists():
        bundle = artifacts.load_stage2(stage2_path)
        prof = profile(bundle["model"].graph, stage2_path.stat().st_size)
        for key, val in prof.to_dict().items():
            kv[f"stage2.{key}"] = val
        combined_macs += prof.macs
    if not kv:
        raise VidsError("no model artifacts to profile")
    kv["combined.macs"] = combined_macs
    kv["combined.flops"] = 2 * combined_macs
    kv["convention"] = "flops=2*macs; bias adds excluded; per-window"
    for key, val in FULL_SCALE_REFERENCE.items():
        kv[f"reference.{key}"] = val
    write_report(out / "profile", kv)
    print(f"profile: combined {combined_macs} MACs -> {out / 'profile.txt'}")


# ---------------------------------------------------------------------------
# evaluation / detection / benchmark


def _build_pipeline(config: PipelineConfig, out: Path,
                    quantized: bool = False) -> DetectionPipeline:
    s1 = artifacts.load_stage1(_require(out / "stage1.fids", "stage1 model"))
    if s1["thresholds"] is None or s1["stats"] is None:
        raise VidsError("stage1 thresholds missing; run fit-thresholds")
    pipe = DetectionPipeline(
        stage1=s1["model"], stage1_stats=s1["stats"],
        thresholds=s1["thresholds"], stage1_norm=s1["norm"], mode=config.mode)
    if quantized and (out / "stage2_quant.fids").exists():
        q = artifacts.load_quantized(out / "stage2_quant.fids")
        pipe.stage2_quant = q["qmodel"]
        pipe.quant_classes = q["classes"]
        pipe.stage2_norm = q["norm"]
        return pipe
    unseen_path = out / "unseen.fids"
    stage2_path = unseen_path if unseen_path.exists() else out / "stage2.fids"
    if stage2_path.exists():
        s2 = artifacts.load_stage2(stage2_path)
        pipe.stage2 = s2["model"]
        pipe.stage2_norm = s2["norm"]
        pipe.unseen_threshold = s2["unseen_threshold"]
    return pipe


def cmd_evaluate(config: PipelineConfig, out: Path, args) -> None:
    cache = _load_split(out, "test")
    s1 = artifacts.load_stage1(_require(out / "stage1.fids", "stage1 model"))
    if s1["thresholds"] is None:
        raise VidsError("stage1 thresholds missing; run fit-thresholds")
    x1 = s1["norm"].apply(cache["values"])
    scores = score_windows(s1["model"], x1, s1["stats"],
                           s1["thresholds"].alpha)["combined"]
    is_anom = cache["labels"] > 0
    decisions = [classify_stage1(s, s1["thresholds"], config.mode)
                 for s in scores]
    metrics = stage1_metrics(decisions, is_anom)
    kv = {"normal_recall": _opt(metrics.normal_recall),
          "anomaly_recall": _opt(metrics.anomaly_recall)}
    for mode in ("band_llul", "band_q1q3"):
        deployed = np.array(
            [classify_stage1(s, s1["thresholds"], mode).deployed_label
             == "anomalous" for s in scores])
        if is_anom.any():
            kv[f"{mode}.deployed_anomaly_recall"] = round(
                float(deployed[is_anom].mean()), 6)
        if (~is_anom).any():
            kv[f"{mode}.deployed_normal_recall"] = round(
                float((~deployed[~is_anom]).mean()), 6)
    kv["reference.normal_recall_M1"] = 0.9967
    kv["reference.anomaly_recall_M1"] = 0.859
    write_report(out / "stage1_metrics", kv)
    print(f"evaluate[stage1]: {kv}")

    if (out / "stage2.fids").exists():
        s2 = artifacts.load_stage2(out / "stage2.fids")
        mask = cache["labels"] > 0
        known = np.isin(cache["labels"], s2["model"].classes)
        use = mask & known
        if use.any():
            x2 = s2["norm"].apply(cache["values"][use])
            cm = evaluate_stage2(s2["model"], x2, cache["labels"][use])
            (out / "confusion.csv").write_text(cm.to_csv(), encoding="utf-8")
            summary = {k: round(v, 6) for k, v in cm.summary().items()}
            for label, recall in zip(cm.classes, cm.per_class_recall):
                summary[f"recall.class_{label}"] = round(float(recall), 6)
            write_report(out / "stage2_metrics", summary)
            print(f"evaluate[stage2]: accuracy={summary['accuracy']}")


def _opt(value):
    return "absent" if value is None else round(value, 6)


def cmd_detect(config: PipelineConfig, out: Path, args) -> None:
    source = Path(args.input) if args.input else out / "windows_test.fids"
    cache = artifacts.load_windows(_require(source, "windows container"))
    pipe = _build_pipeline(config, out)
    verdicts = detect_windows(pipe, cache["values"], cache["senders"])
    lines = ["index,sender,score,stage1,final"]
    for v in verdicts:
        lines.append(f"{v.index},{v.sender_id},{v.score!r},"
                     f"{v.stage1_label},{v.final_label}")
    (out / "detections.csv").write_text("\n".join(lines) + "\n",
                                        encoding="utf-8")
    n_anom = sum(1 for v in verdicts if v.stage1_label == "anomalous")
    print(f"detect: {len(verdicts)} windows, {n_anom} anomalous "
          f"-> {out / 'detections.csv'}")


def cmd_bench(config: PipelineConfig, out: Path, args) -> None:
    source = Path(args.input) if args.input else out / "windows_test.fids"
    cache = artifacts.load_windows(_require(source, "windows container"))
    pipe = _build_pipeline(config, out, quantized=True)

    def setup(raw):
        return np.ascontiguousarray(pipe.stage1_norm.apply(raw))

    def predict(prepared):
        return [v.final_label for v in
                detect_windows(pipe, cache["values"], cache["senders"],
                               prepared=prepared)]

    report, _ = bench(setup, predict, cache["values"], cache["senders"],
                      repetitions=args.repetitions)
    write_report(out / "bench", report.to_kv())
    print(f"bench: {report.total_windows} windows / "
          f"{report.unique_vehicles} vehicles; per-vehicle "
          f"{report.per_vehicle_s * 1e3:.3f} ms (absolute numbers are "
          "hardware-specific)")


if __name__ == "__main__":
    sys.exit(main())
