"""
Run orchestration for the Endo Key-frame Tool.
Each run_* function ingests its inputs, calls the engine modules, builds a
sealed report, and writes artifacts to the output directory when one is given.
"""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional, Tuple

from endo_keyframe_tool.engine.config import RunConfig
from endo_keyframe_tool.engine.depth import combine_losses, evaluate_pair, load_depth_map
from endo_keyframe_tool.engine.errors import DegenerateInputError, InvalidInputError, InvalidParameterError
from endo_keyframe_tool.engine.ingest import (
    DEPTH_EXTENSIONS,
    SequenceManifest,
    file_digest,
    ingest_sequence,
    list_files,
    write_mask_png,
)
from endo_keyframe_tool.engine.invariants import enforce_invariants
from endo_keyframe_tool.engine.keyframes import score_sequence, select_keyframes, sequence_fused_score
from endo_keyframe_tool.engine.localize import LocalizationResult, iou, localize_sequence, miou
from endo_keyframe_tool.engine.reports import (
    DepthPairReport,
    DepthReport,
    FrameScore,
    LocalizedFrame,
    LocalizeReport,
    ScoreReport,
    SelectionReport,
    TableReport,
    TableRow,
    WeightsReport,
    seal,
    write_json,
    write_scores_csv,
    write_table_csv,
)

logger = logging.getLogger(__name__)


def _score_manifest(manifest: SequenceManifest, config: RunConfig, task: str, with_selection: bool) -> ScoreReport:
    depth_maps = manifest.load_depth_maps(config.depth_png_invert) if config.edge_source == "depth" else None
    series, weights = score_sequence(manifest.frames, config, depth_maps)

    selection = None
    selected = set()
    if with_selection:
        indices = select_keyframes(series.fused, config.policy)
        selected = set(indices)
        selection = SelectionReport(
            mode=config.policy.mode,
            q=config.policy.q,
            k=config.policy.k,
            threshold=config.policy.threshold,
            indices=indices,
            key_frames=len(indices),
        )
        logger.info(f"Selected {len(indices)} of {series.n} frames ({config.policy.mode})")

    names = manifest.file_names()
    frames = [
        FrameScore(
            index=i,
            file=names[i] if i < len(names) else None,
            d_raw=float(series.d_raw[i]),
            s_raw=float(series.s_raw[i]),
            p_raw=float(series.p_raw[i]),
            d_norm=float(series.d_norm[i]),
            s_norm=float(series.s_norm[i]),
            p_norm=float(series.p_norm[i]),
            fused=float(series.fused[i]),
            selected=i in selected,
        )
        for i in range(series.n)
    ]

    invariants_passed, invariant_report = enforce_invariants(series, weights)
    if not invariants_passed:
        logger.warning(f"Invariant check failed: {invariant_report}")

    report = ScoreReport(
        task=task,
        config=config.echo(),
        inputs=dict(manifest.digests),
        sequence_id=manifest.sequence_id,
        n_frames=series.n,
        frames=frames,
        weights=WeightsReport(
            w1=weights.w1, w2=weights.w2, w3=weights.w3,
            d1=weights.d1, s1=weights.s1, p1=weights.p1,
        ),
        sequence_fused_score=sequence_fused_score(weights),
        selection=selection,
        invariants_passed=invariants_passed,
        invariant_report=invariant_report,
    )
    return seal(report)


def _write_score_outputs(report: ScoreReport, out: Optional[str]) -> None:
    if out:
        write_scores_csv(report.frames, os.path.join(out, "scores.csv"))
        write_json(report, os.path.join(out, "report.json"))


def run_score(
    input: str,
    config: Optional[RunConfig] = None,
    out: Optional[str] = None,
    depth: Optional[str] = None,
) -> ScoreReport:
    """Per-frame criteria, weights and fused scores; no selection."""
    config = config or RunConfig()
    manifest = ingest_sequence(input=input, depth=depth)
    report = _score_manifest(manifest, config, "score", with_selection=False)
    _write_score_outputs(report, out)
    return report


def run_select(
    input: str,
    config: Optional[RunConfig] = None,
    out: Optional[str] = None,
    depth: Optional[str] = None,
) -> ScoreReport:
    """Scores plus the key frames chosen by the configured policy."""
    config = config or RunConfig()
    manifest = ingest_sequence(input=input, depth=depth)
    report = _score_manifest(manifest, config, "select", with_selection=True)
    _write_score_outputs(report, out)
    return report


def run_depth_eval(
    depth: str,
    truth: str,
    config: Optional[RunConfig] = None,
    out: Optional[str] = None,
) -> DepthReport:
    """
    Alignment and losses for every (prediction, ground truth) pair.

    Degenerate pairs, and pairs the configured scales cannot be computed on
    (mismatched sizes, too small for k_scales), are reported and skipped. If no
    pair is left the report is still written, then the run fails: with
    DegenerateInputError when any pair was degenerate, else InvalidInputError.
    """
    config = config or RunConfig()
    predictions = list_files(depth, DEPTH_EXTENSIONS)
    ground_truths = list_files(truth, DEPTH_EXTENSIONS)
    if not predictions:
        raise InvalidInputError(f"no depth maps found in {depth}")
    if len(predictions) != len(ground_truths):
        raise InvalidInputError(
            f"{len(predictions)} predictions but {len(ground_truths)} ground-truth maps; lists must be aligned"
        )

    def _evaluate(job: Tuple[int, str, str]) -> DepthPairReport:
        index, pred_path, gt_path = job
        pred = load_depth_map(pred_path, config.depth_png_invert)
        gt = load_depth_map(gt_path, config.depth_png_invert)
        entry = {"index": index, "prediction": os.path.basename(pred_path), "ground_truth": os.path.basename(gt_path)}
        try:
            metrics = evaluate_pair(pred, gt, config.k_scales)
        except DegenerateInputError as e:
            logger.warning(f"Pair {index} ({entry['prediction']}) is degenerate: {e}")
            return DepthPairReport(**entry, status="degenerate", error=str(e))
        except (InvalidInputError, InvalidParameterError) as e:
            logger.warning(f"Pair {index} ({entry['prediction']}) cannot be evaluated: {e}")
            return DepthPairReport(**entry, status="invalid", error=str(e))
        return DepthPairReport(
            **entry, status="ok", s=metrics.s, t=metrics.t, ssi=metrics.ssi, regularizer=metrics.regularizer,
        )

    jobs = list(zip(range(len(predictions)), predictions, ground_truths))
    logger.info(f"Evaluating {len(jobs)} depth pairs with {config.workers} worker(s)")
    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            pairs = list(pool.map(_evaluate, jobs))
    else:
        pairs = [_evaluate(job) for job in jobs]

    evaluated = [p for p in pairs if p.status == "ok"]
    total = None
    if evaluated:
        total = combine_losses([p.ssi for p in evaluated], [p.regularizer for p in evaluated], config.alpha)

    inputs: Dict[str, str] = {}
    for pred_path, gt_path in zip(predictions, ground_truths):
        inputs[f"depth/{os.path.basename(pred_path)}"] = file_digest(pred_path)
        inputs[f"truth/{os.path.basename(gt_path)}"] = file_digest(gt_path)

    report = seal(DepthReport(
        task="depth_eval",
        config=config.echo(),
        inputs=inputs,
        alpha=config.alpha,
        k_scales=config.k_scales,
        pairs=pairs,
        n_evaluated=len(evaluated),
        n_degenerate=sum(1 for p in pairs if p.status == "degenerate"),
        n_invalid=sum(1 for p in pairs if p.status == "invalid"),
        total_loss=total,
    ))
    if out:
        write_json(report, os.path.join(out, "depth_report.json"))
    if not evaluated:
        if report.n_degenerate:
            raise DegenerateInputError(
                f"no depth pair could be evaluated ({report.n_degenerate} degenerate, {report.n_invalid} invalid)"
            )
        raise InvalidInputError(f"none of the {report.n_invalid} depth pairs fit k_scales={config.k_scales}")
    return report


def _mask_name(depth_path: str) -> str:
    return os.path.splitext(os.path.basename(depth_path))[0] + ".png"


def _write_localization(result: LocalizationResult, name: str, out: str, save_edges: bool) -> None:
    write_mask_png(result.region, os.path.join(out, "masks", name))
    if save_edges:
        write_mask_png(result.edges, os.path.join(out, "edges", name))
        write_mask_png(result.refined, os.path.join(out, "boundary", name))


def _localize_manifest(
    manifest: SequenceManifest,
    config: RunConfig,
    task: str,
    out: Optional[str],
    save_edges: bool,
    with_iou: bool,
) -> LocalizeReport:
    depth_maps = manifest.load_depth_maps(config.depth_png_invert)
    logger.info(f"Localizing {len(depth_maps)} depth maps with {config.workers} worker(s)")
    results = localize_sequence(depth_maps, config)

    truths: List = manifest.load_truth_masks() if with_iou else []
    frames = []
    for i, (path, result) in enumerate(zip(manifest.depth_paths, results)):
        name = _mask_name(path)
        if result.empty_edges:
            logger.warning(f"Frame {i} ({os.path.basename(path)}): no depth edges found")
        elif result.open_contour:
            logger.warning(f"Frame {i} ({os.path.basename(path)}): boundary does not enclose a region")
        if out:
            _write_localization(result, name, out, save_edges)
        frames.append(LocalizedFrame(
            index=i,
            file=os.path.basename(path),
            mask=f"masks/{name}",
            edge_pixels=int(result.edges.sum()),
            boundary_pixels=int(result.refined.sum()),
            region_pixels=int(result.region.sum()),
            open_contour=result.open_contour,
            empty_edges=result.empty_edges,
            iou=iou(result.region, truths[i]) if with_iou else None,
        ))

    iou_report = miou([(r.region, t) for r, t in zip(results, truths)]) if with_iou else None
    if iou_report is not None:
        logger.info(f"mIoU={iou_report.miou:.4f} pass_half={iou_report.pass_half}")

    return seal(LocalizeReport(
        task=task,
        config=config.echo(),
        inputs=dict(manifest.digests),
        sequence_id=manifest.sequence_id,
        frames=frames,
        n_open_contours=sum(1 for f in frames if f.open_contour),
        iou=iou_report,
    ))


def run_localize(
    depth: str,
    config: Optional[RunConfig] = None,
    out: Optional[str] = None,
    save_edges: bool = False,
) -> LocalizeReport:
    """Polyp masks from depth maps."""
    config = config or RunConfig()
    manifest = ingest_sequence(depth=depth)
    report = _localize_manifest(manifest, config, "localize", out, save_edges, with_iou=False)
    if out:
        write_json(report, os.path.join(out, "localize_report.json"))
    return report


def run_eval_iou(
    depth: str,
    truth: str,
    config: Optional[RunConfig] = None,
    out: Optional[str] = None,
    save_edges: bool = False,
) -> LocalizeReport:
    """Polyp masks from depth maps, scored against ground-truth masks."""
    config = config or RunConfig()
    if truth is None:
        raise InvalidInputError("eval-iou needs ground-truth masks (--truth)")
    manifest = ingest_sequence(depth=depth, truth=truth)
    report = _localize_manifest(manifest, config, "eval_iou", out, save_edges, with_iou=True)
    if out:
        write_json(report, os.path.join(out, "iou_report.json"))
    return report


def _table_row(name: str, root: str, config: RunConfig, inputs: Dict[str, str]) -> TableRow:
    seq_dir = os.path.join(root, name)
    manifest = ingest_sequence(
        input=os.path.join(seq_dir, "frames"),
        depth=os.path.join(seq_dir, "depth"),
        truth=os.path.join(seq_dir, "truth"),
        sequence_id=name,
    )
    for key, digest in manifest.digests.items():
        inputs[f"{name}/{key}"] = digest

    scores = _score_manifest(manifest, config, "table", with_selection=True)
    key_frames = scores.selection.indices

    scope = key_frames if config.table_iou_scope == "keyframes" else list(range(len(manifest)))
    if not scope:
        logger.warning(f"Sequence {name}: no key frames selected, mIoU reported as 0")
        return TableRow(sequence=name, key_frames=0, miou=0.0, miou_gt_half="No")

    depth_maps = manifest.load_depth_maps(config.depth_png_invert)
    results = localize_sequence([depth_maps[i] for i in scope], config)
    truths = manifest.load_truth_masks()
    report = miou([(result.region, truths[i]) for i, result in zip(scope, results)])
    return TableRow(
        sequence=name,
        key_frames=len(key_frames),
        miou=report.miou,
        miou_gt_half="Yes" if report.pass_half else "No",
    )


def run_table(
    input: str,
    config: Optional[RunConfig] = None,
    out: Optional[str] = None,
) -> TableReport:
    """
    Key-frame count and mIoU per sequence.

    input is a root directory whose subdirectories each hold frames/, depth/ and truth/.
    """
    config = config or RunConfig()
    if not os.path.isdir(input):
        raise InvalidInputError(f"table root {input} is not a directory")
    sequences = sorted(
        name for name in os.listdir(input)
        if os.path.isdir(os.path.join(input, name, "frames"))
    )
    if not sequences:
        raise InvalidInputError(f"no sequence directories with frames/ under {input}")

    inputs: Dict[str, str] = {}
    rows = []
    for name in sequences:
        logger.info(f"Table: sequence {name}")
        rows.append(_table_row(name, input, config, inputs))

    report = seal(TableReport(
        task="table",
        config=config.echo(),
        inputs=inputs,
        iou_scope=config.table_iou_scope,
        rows=rows,
    ))
    if out:
        write_table_csv(rows, os.path.join(out, "table.csv"))
        write_json(report, os.path.join(out, "table.json"))
    return report
