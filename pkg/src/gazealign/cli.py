"""Command-line pipeline: embed -> calibrate -> align -> matrix -> aggregate
-> cluster -> classify -> report.

`run` executes the whole pipeline; the stage subcommands (embed, calibrate,
align, simmatrix, aggregate, cluster, classify, archetypes, synth) produce
the same artifacts when chained by hand, because `run` itself consumes the
files the previous stage wrote.

c and gap are never silently defaulted to any published constants; they are
provider- and data-specific, so the flags demand an explicit value or an
explicit calibration request. All floats in artifacts carry 9 significant
digits, and c is handled at float32 granularity so every artifact
round-trips exactly.

Exit codes: 0 success, 2 config error, 3 data error, 4 internal error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .align import (
    GapInA,
    GapInB,
    MatchStep,
    Metric,
    ScoringParams,
    calibrate_c,
    default_gap,
    local_align,
    symbolic_align,
)
from .analysis import (
    archetype_ranking,
    cluster_expertise_report,
    cut_assignments,
    knn_loo_classify,
    knn_predict,
    similarity_to_distance,
    ward_cluster,
)
from .embed import (
    BuiltinDescriptorProvider,
    PrecomputedProvider,
    dsem_filename,
    embed_dataset,
    write_dsem,
)
from .errors import ConfigError, DataError, GazeAlignError
from .model import Group, load_manifest
from .pairwise import (
    MatrixLevel,
    aggregate_by_subject,
    all_pairs,
    export_matrix,
    load_matrix_csv,
    subject_groups,
)
from .patch import PatchConfig, write_patch_pgm


def _round9(obj):
    if isinstance(obj, float):
        return float(format(obj, ".9g"))
    if isinstance(obj, dict):
        return {k: _round9(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round9(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _round9(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return _round9(float(obj))
    return obj


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(_round9(payload), indent=2) + "\n", encoding="utf-8")


def _parse_metric(name: str) -> Metric:
    try:
        return Metric(name.lower())
    except ValueError:
        raise ConfigError(f"unknown metric {name!r}; choose l1, l2, or cosine") from None


def _f32(v: float) -> float:
    return float(np.float32(v))


# ---------------------------------------------------------------------------
# Stage helpers


def _provider_for(manifest, provider_name: str):
    if provider_name == "builtin":
        return BuiltinDescriptorProvider()
    if provider_name == "dsem":
        if manifest.embedding_dir is None:
            raise ConfigError("provider 'dsem' needs an 'embeddings' dir in the manifest")
        return PrecomputedProvider(manifest.embedding_dir)
    raise ConfigError(f"unknown provider {provider_name!r}")


def stage_embed(manifest, patch_size: int, window_ms, out_dir: Path, dump_patches=None):
    """Builtin-embed the dataset and persist one .dsem per scanpath."""
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg = PatchConfig(patch_size=patch_size)
    embedded = embed_dataset(
        manifest, BuiltinDescriptorProvider(), cfg, window_ms=window_ms
    )
    for e in embedded:
        write_dsem(out_dir / dsem_filename(e.subject_id, e.stimulus_id), e.vectors)
    if dump_patches is not None:
        from .model import truncate_to_window
        from .patch import extract_scanpath_patches

        for sp in manifest.load_all_scanpaths():
            if window_ms is not None:
                sp = truncate_to_window(sp, window_ms)
            img = manifest.load_stimulus(sp.stimulus_id)
            for p in extract_scanpath_patches(img, sp, cfg):
                write_patch_pgm(dump_patches, sp, p)
    return embedded


def _load_embedded(manifest, provider_name: str, patch_size: int, window_ms):
    provider = _provider_for(manifest, provider_name)
    return embed_dataset(
        manifest, provider, PatchConfig(patch_size=patch_size), window_ms=window_ms
    )


def resolve_c(c_arg: str, embedded, metric: Metric):
    """Resolve --c: a number, 'calibrate', or 'calibrate:<stimulus_id>'.

    Bare 'calibrate' uses the lexicographically smallest stimulus id.
    Returns (c, source, stimulus_or_none); c at float32 granularity.
    """
    if c_arg is None:
        raise ConfigError("--c is required: a value, 'calibrate', or 'calibrate:<id>'")
    if c_arg.startswith("calibrate"):
        _, _, stim = c_arg.partition(":")
        if not stim:
            stim = min(e.stimulus_id for e in embedded)
        subset = [e for e in embedded if e.stimulus_id == stim]
        if not subset:
            raise DataError(f"no scanpaths on calibration stimulus {stim!r}")
        return _f32(calibrate_c(subset, metric)), "calibrated", stim
    try:
        value = float(c_arg)
    except ValueError:
        raise ConfigError(f"--c {c_arg!r} is neither a number nor calibrate[:<id>]") from None
    return _f32(value), "explicit", None


def resolve_gap(gap_arg: str, c: float):
    if gap_arg is None or gap_arg == "auto":
        return _f32(default_gap(c)), "auto"
    try:
        value = float(gap_arg)
    except ValueError:
        raise ConfigError(f"--gap {gap_arg!r} is neither a number nor 'auto'") from None
    return _f32(value), "explicit"


def _path_steps_json(path) -> list[dict]:
    out = []
    for step in path:
        if isinstance(step, MatchStep):
            out.append({"step": "match", "a": step.a, "b": step.b})
        elif isinstance(step, GapInB):
            out.append({"step": "gap_in_b", "a": step.a})
        elif isinstance(step, GapInA):
            out.append({"step": "gap_in_a", "b": step.b})
    return out


def stage_simmatrix(embedded, params: ScoringParams, workers: int, out: Path, groups):
    matrix = all_pairs(embedded, params, workers=workers)
    export_matrix(matrix, out / "similarity_scanpath.csv", out / "similarity_scanpath.pgm")
    from . import viz

    viz.similarity_heatmap(matrix, out / "similarity_scanpath.png", groups)
    return matrix


def stage_aggregate(out: Path, groups):
    matrix = load_matrix_csv(out / "similarity_scanpath.csv")
    subject_matrix = aggregate_by_subject(matrix)
    export_matrix(
        subject_matrix, out / "similarity_subject.csv", out / "similarity_subject.pgm"
    )
    from . import viz

    viz.similarity_heatmap(subject_matrix, out / "similarity_subject.png", groups)
    return subject_matrix


def _labeled_subset(matrix, groups):
    """Keys whose subject group is known; unknown keys listed separately."""
    from .pairwise import SimilarityMatrix, split_key

    labeled, unknown = [], []
    for i, key in enumerate(matrix.keys):
        subject = split_key(key)[0] if matrix.level is MatrixLevel.SCANPATH else key
        (labeled if groups.get(subject) in (Group.EXPERT, Group.STUDENT) else unknown).append(i)
    if not unknown:
        return matrix, []
    sub = SimilarityMatrix(
        keys=tuple(matrix.keys[i] for i in labeled),
        values=matrix.values[np.ix_(labeled, labeled)],
        level=matrix.level,
        c=matrix.c,
        metric=matrix.metric,
    )
    return sub, [matrix.keys[i] for i in unknown]


def stage_cluster(out: Path, groups, k: int):
    matrix = load_matrix_csv(out / "similarity_subject.csv")
    labeled, unknown = _labeled_subset(matrix, groups)
    distances = similarity_to_distance(labeled)
    dendrogram, assignments = ward_cluster(distances, labeled.keys, k)
    lines = ["step,cluster_a,cluster_b,distance,size"]
    for step, m in enumerate(dendrogram.merges):
        lines.append(
            f"{step},{m.cluster_a},{m.cluster_b},{format(m.distance, '.9g')},{m.size}"
        )
    (out / "dendrogram.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    report = cluster_expertise_report(assignments, groups) if k == 2 else None
    payload = {
        "assignments": assignments,
        "clusters_k": k,
        "excluded_unknown": unknown,
    }
    if report is not None:
        payload.update(
            {
                "assignments": report.assignments,
                "confusion": report.confusion,
                "tpr_student": report.tpr_student,
                "tpr_expert": report.tpr_expert,
                "accuracy": report.accuracy,
            }
        )
    _write_json(out / "cluster_report.json", payload)
    from . import viz

    viz.dendrogram_figure(dendrogram, out / "dendrogram.png", groups, cut_k=k)
    return report


def stage_classify(out: Path, groups, k: int):
    matrix = load_matrix_csv(out / "similarity_scanpath.csv")
    labeled, unknown = _labeled_subset(matrix, groups)
    report = knn_loo_classify(labeled, groups, k=k)
    payload = {
        "tpr_expert": report.tpr_expert,
        "tpr_student": report.tpr_student,
        "accuracy": report.accuracy,
        "kappa": report.kappa,
        "confusion": report.confusion,
        "per_stimulus": {
            stim: dataclasses.asdict(score)
            for stim, score in report.per_stimulus.items()
        },
        "predictions": report.predictions,
        "neighbors": {k_: list(v) for k_, v in report.neighbors.items()},
        "unlabeled_predictions": (
            knn_predict(matrix, groups, unknown, k=k) if unknown else {}
        ),
    }
    _write_json(out / "knn_report.json", payload)
    return report


def stage_archetypes(out: Path, groups, top_n: int):
    matrix = load_matrix_csv(out / "similarity_scanpath.csv")
    ranking = archetype_ranking(matrix, top_n=top_n)
    lines = ["rank,key,frequency"]
    for rank, (key, freq) in enumerate(ranking, start=1):
        lines.append(f"{rank},{key},{freq}")
    (out / "archetypes.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    from . import viz

    viz.archetype_figure(ranking, out / "archetypes.png", groups)
    return ranking


# ---------------------------------------------------------------------------
# Subcommands


def cmd_synth(args) -> int:
    from .synth import SynthConfig, generate

    cfg = SynthConfig(
        seed=args.seed,
        n_experts=args.experts,
        n_students=args.students,
        n_stimuli=args.stimuli,
        image_size=(args.image_width, args.image_height),
        len_expert=(args.len_expert_min, args.len_expert_max),
        len_student=(args.len_student_min, args.len_student_max),
        n_prototypes=args.prototypes,
        jitter_px=args.jitter,
        swap_prob=args.swap_prob,
    )
    manifest = generate(cfg, args.out)
    print(json.dumps({"manifest": str(Path(args.out) / "manifest.json"),
                      "stimuli": len(manifest.stimuli),
                      "scanpath_files": len(manifest.scanpath_files)}))
    return 0


def cmd_embed(args) -> int:
    manifest = load_manifest(args.manifest)
    out = Path(args.out)
    embedded = stage_embed(
        manifest, args.patch_size, args.window_ms, out,
        dump_patches=args.dump_patches,
    )
    print(json.dumps({"scanpaths": len(embedded),
                      "dim": embedded[0].dim if embedded else None,
                      "out": str(out)}))
    return 0


def cmd_calibrate(args) -> int:
    manifest = load_manifest(args.manifest)
    embedded = _load_embedded(manifest, args.provider, args.patch_size, args.window_ms)
    metric = _parse_metric(args.metric)
    c_arg = args.c if args.c else "calibrate"
    if not c_arg.startswith("calibrate"):
        raise ConfigError("calibrate subcommand expects --c calibrate[:<id>] or no --c")
    c, _, stim = resolve_c(c_arg, embedded, metric)
    print(json.dumps(_round9({"c": c, "stimulus": stim, "metric": metric.value,
                              "gap_auto": default_gap(c)})))
    return 0


def cmd_align(args) -> int:
    manifest = load_manifest(args.manifest)
    embedded = _load_embedded(manifest, args.provider, args.patch_size, args.window_ms)
    by_key = {e.key: e for e in embedded}
    for key in (args.a, args.b):
        if key not in by_key:
            raise DataError(f"scanpath {key!r} not in dataset")
    metric = _parse_metric(args.metric)
    keep = args.matrix_csv is not None or args.matrix_png is not None
    if args.symbolic:
        sps = {sp.key: sp for sp in manifest.load_all_scanpaths()}
        for key in (args.a, args.b):
            if sps[key].aoi_labels is None:
                raise DataError(f"scanpath {key!r} has no aoi labels")
        result = symbolic_align(sps[args.a].aoi_labels, sps[args.b].aoi_labels, keep_matrix=keep)
        c_used, gap_used = 1.0, 2.0
    else:
        c, _, _ = resolve_c(args.c, embedded, metric)
        gap, _ = resolve_gap(args.gap, c)
        params = ScoringParams(c=c, gap=gap, metric=metric)
        result = local_align(by_key[args.a], by_key[args.b], params, keep_matrix=keep)
        c_used, gap_used = c, gap
    payload = {
        "a": args.a,
        "b": args.b,
        "c": c_used,
        "gap": gap_used,
        "score": result.score,
        "normalized": result.normalized,
        "argmax_cell": list(result.argmax_cell),
        "path": _path_steps_json(result.path),
    }
    print(json.dumps(_round9(payload)))
    if args.matrix_csv:
        rows = [
            ",".join(format(v, ".9g") for v in row) for row in result.matrix.values
        ]
        Path(args.matrix_csv).write_text("\n".join(rows) + "\n", encoding="utf-8")
    if args.matrix_png:
        from . import viz

        viz.score_matrix_figure(result.matrix.values, args.matrix_png)
    return 0


def _prepare_matrix_inputs(args):
    manifest = load_manifest(args.manifest)
    embedded = _load_embedded(manifest, args.provider, args.patch_size, args.window_ms)
    metric = _parse_metric(args.metric)
    c, c_source, c_stim = resolve_c(args.c, embedded, metric)
    gap, gap_source = resolve_gap(args.gap, c)
    params = ScoringParams(c=c, gap=gap, metric=metric)
    groups = subject_groups(embedded)
    return manifest, embedded, params, groups, (c_source, c_stim, gap_source)


def cmd_simmatrix(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _, embedded, params, groups, _ = _prepare_matrix_inputs(args)
    matrix = stage_simmatrix(embedded, params, args.workers, out, groups)
    print(json.dumps({"keys": len(matrix.keys), "out": str(out / "similarity_scanpath.csv")}))
    return 0


def cmd_aggregate(args) -> int:
    out = Path(args.out)
    manifest = load_manifest(args.manifest)
    groups = {sp.subject_id: sp.group for sp in manifest.load_all_scanpaths()}
    matrix = stage_aggregate(out, groups)
    print(json.dumps({"subjects": len(matrix.keys), "out": str(out / "similarity_subject.csv")}))
    return 0


def cmd_cluster(args) -> int:
    out = Path(args.out)
    manifest = load_manifest(args.manifest)
    groups = {sp.subject_id: sp.group for sp in manifest.load_all_scanpaths()}
    report = stage_cluster(out, groups, args.clusters)
    summary = {"out": str(out / "cluster_report.json")}
    if report is not None:
        summary["accuracy"] = _round9(report.accuracy)
    print(json.dumps(summary))
    return 0


def cmd_classify(args) -> int:
    out = Path(args.out)
    manifest = load_manifest(args.manifest)
    groups = {sp.subject_id: sp.group for sp in manifest.load_all_scanpaths()}
    report = stage_classify(out, groups, args.knn_k)
    print(json.dumps(_round9({"accuracy": report.accuracy, "kappa": report.kappa,
                              "out": str(out / "knn_report.json")})))
    return 0


def cmd_archetypes(args) -> int:
    out = Path(args.out)
    manifest = load_manifest(args.manifest)
    groups = {sp.subject_id: sp.group for sp in manifest.load_all_scanpaths()}
    ranking = stage_archetypes(out, groups, args.archetype_top_n)
    print(json.dumps({"ranked": len(ranking), "out": str(out / "archetypes.csv")}))
    return 0


def cmd_run(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = load_manifest(args.manifest)

    if args.provider == "builtin":
        stage_embed(manifest, args.patch_size, args.window_ms, out / "embeddings")
        provider = PrecomputedProvider(out / "embeddings")
    else:
        provider = _provider_for(manifest, args.provider)
    embedded = embed_dataset(
        manifest, provider, PatchConfig(patch_size=args.patch_size),
        window_ms=args.window_ms,
    )
    metric = _parse_metric(args.metric)
    c, c_source, c_stim = resolve_c(args.c, embedded, metric)
    gap, gap_source = resolve_gap(args.gap, c)
    params = ScoringParams(c=c, gap=gap, metric=metric)
    groups = subject_groups(embedded)

    stage_simmatrix(embedded, params, args.workers, out, groups)
    stage_aggregate(out, groups)
    cluster_report = stage_cluster(out, groups, args.clusters)
    knn_report = stage_classify(out, groups, args.knn_k)
    stage_archetypes(out, groups, args.archetype_top_n)

    run_record = {
        "manifest": str(args.manifest),
        "provider": args.provider,
        "patch_size": args.patch_size,
        "metric": metric.value,
        "c": {"value": c, "source": c_source, "stimulus": c_stim},
        "gap": {"value": gap, "source": gap_source},
        "window_ms": args.window_ms,
        "workers": args.workers,
        "knn_k": args.knn_k,
        "clusters_k": args.clusters,
        "archetype_top_n": args.archetype_top_n,
        "seed": None,  # the pipeline itself draws no randomness
        "version": __version__,
    }
    _write_json(out / "run.json", run_record)
    summary = {"out": str(out)}
    if cluster_report is not None:
        summary["cluster_accuracy"] = _round9(cluster_report.accuracy)
    summary["knn_accuracy"] = _round9(knn_report.accuracy)
    summary["knn_kappa"] = _round9(knn_report.kappa)
    print(json.dumps(summary))
    return 0


# ---------------------------------------------------------------------------
# Argument parsing


def _add_dataset_flags(p, need_c: bool):
    p.add_argument("--manifest", required=True, help="dataset manifest JSON")
    p.add_argument("--provider", default="builtin", choices=["builtin", "dsem"])
    p.add_argument("--patch-size", type=int, default=100, dest="patch_size")
    p.add_argument("--metric", default="l1")
    p.add_argument("--window-ms", type=float, default=None, dest="window_ms")
    if need_c:
        p.add_argument("--c", default=None, help="number, 'calibrate', or 'calibrate:<id>'")
        p.add_argument("--gap", default="auto", help="number or 'auto' (= 2c)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gazealign",
        description="Scanpath similarity, clustering, and expertise classification",
    )
    parser.add_argument("--version", action="version", version=f"gazealign {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic labeled dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=1234)
    p.add_argument("--experts", type=int, default=12)
    p.add_argument("--students", type=int, default=24)
    p.add_argument("--stimuli", type=int, default=6)
    p.add_argument("--prototypes", type=int, default=4)
    p.add_argument("--image-width", type=int, default=960)
    p.add_argument("--image-height", type=int, default=540)
    p.add_argument("--len-expert-min", type=int, default=8)
    p.add_argument("--len-expert-max", type=int, default=12)
    p.add_argument("--len-student-min", type=int, default=12)
    p.add_argument("--len-student-max", type=int, default=18)
    p.add_argument("--jitter", type=float, default=4.0)
    p.add_argument("--swap-prob", type=float, default=0.1, dest="swap_prob")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("embed", help="builtin-embed a dataset to .dsem files")
    _add_dataset_flags(p, need_c=False)
    p.add_argument("--out", required=True)
    p.add_argument("--dump-patches", default=None, dest="dump_patches")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("calibrate", help="compute the match constant c")
    _add_dataset_flags(p, need_c=False)
    p.add_argument("--c", default=None, help="'calibrate' or 'calibrate:<id>'")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("align", help="align two scanpaths and dump the result")
    _add_dataset_flags(p, need_c=True)
    p.add_argument("--a", required=True, help="subject@stimulus")
    p.add_argument("--b", required=True, help="subject@stimulus")
    p.add_argument("--symbolic", action="store_true", help="use AOI labels, 1/-1/-2 scoring")
    p.add_argument("--matrix-csv", default=None, dest="matrix_csv")
    p.add_argument("--matrix-png", default=None, dest="matrix_png")
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("simmatrix", help="all-pairs scanpath similarity matrix")
    _add_dataset_flags(p, need_c=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simmatrix)

    p = sub.add_parser("aggregate", help="average the scanpath matrix per subject")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="dir holding similarity_scanpath.csv")
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("cluster", help="Ward-cluster the subject matrix")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="dir holding similarity_subject.csv")
    p.add_argument("--clusters", type=int, default=2)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("classify", help="leave-one-subject-and-one-image-out kNN")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="dir holding similarity_scanpath.csv")
    p.add_argument("--knn-k", type=int, default=3, dest="knn_k")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("archetypes", help="reverse top-n archetype ranking")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="dir holding similarity_scanpath.csv")
    p.add_argument("--archetype-top-n", type=int, default=3, dest="archetype_top_n")
    p.set_defaults(func=cmd_archetypes)

    p = sub.add_parser("run", help="full pipeline")
    _add_dataset_flags(p, need_c=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    p.add_argument("--knn-k", type=int, default=3, dest="knn_k")
    p.add_argument("--clusters", type=int, default=2)
    p.add_argument("--archetype-top-n", type=int, default=3, dest="archetype_top_n")
    p.set_defaults(func=cmd_run)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        _emit_error(exc, 2)
        return 2
    except DataError as exc:
        _emit_error(exc, 3)
        return 3
    except GazeAlignError as exc:
        _emit_error(exc, 3)
        return 3
    except Exception as exc:  # pragma: no cover - defensive
        _emit_error(exc, 4)
        return 4


def _emit_error(exc: Exception, code: int) -> None:
    print(
        json.dumps(
            {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
        ),
        file=sys.stderr,
    )


if __name__ == "__main__":
    sys.exit(main())
