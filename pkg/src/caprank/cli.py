"""Command-line entry points: rank, evaluate, synth, report.

Exit status is 0 on full success, 1 when any scene failed, and 2 on
configuration errors. All commands produce byte-identical outputs for a fixed
seed and input, regardless of worker count; wall-clock timings therefore go
to stderr, never into output files.
"""

from __future__ import annotations

import csv
import json
import os
import statistics
import sys
from pathlib import Path

import click

from . import pipeline, reports
from .decomposition import DecompositionConfig, build_matrix
from .errors import CaprankError, InvalidConfigError
from .provider import EmbeddingProvider, ProviderConfig
from .records import load_scenes, write_results
from .synth import SynthConfig, run_benchmark


def _decomposition_options(command):
    options = [
        click.option("--method", type=click.Choice(["svd", "rpca"]), default="svd",
                     show_default=True, help="Decomposition backend."),
        click.option("--variance-threshold", type=float, default=0.95, show_default=True,
                     help="Cumulative variance ratio the retained rank must reach."),
        click.option("--rank-cap", type=int, default=None,
                     help="Maximum retained rank (default: captions-1)."),
        click.option("--rank-override", type=int, default=None,
                     help="Fixed rank, bypassing the variance threshold."),
        click.option("--normalize-rows", is_flag=True,
                     help="Scale each embedding row to unit L2 norm first."),
    ]
    for option in reversed(options):
        command = option(command)
    return command


def _provider_options(command):
    options = [
        click.option("--provider-url", default=None, help="Embedding service endpoint."),
        click.option("--provider-model", default=None, help="Embedding model identifier."),
        click.option("--cache-dir", default=None, help="Embedding cache directory."),
    ]
    for option in reversed(options):
        command = option(command)
    return command


def _build_config(method, variance_threshold, rank_cap, rank_override, normalize_rows):
    try:
        return DecompositionConfig(
            method=method,
            variance_threshold=variance_threshold,
            rank_cap=rank_cap,
            rank_override=rank_override,
            normalize_rows=normalize_rows,
        )
    except InvalidConfigError as exc:
        raise click.UsageError(str(exc)) from None


def _build_provider(provider_url, provider_model, cache_dir):
    if provider_url is None and provider_model is None:
        return None
    if not (provider_url and provider_model):
        raise click.UsageError("--provider-url and --provider-model go together")
    try:
        return EmbeddingProvider(
            ProviderConfig(endpoint=provider_url, model=provider_model, cache_dir=cache_dir)
        )
    except InvalidConfigError as exc:
        raise click.UsageError(str(exc)) from None


def _load_scenes_or_fail(path):
    try:
        return load_scenes(path)
    except FileNotFoundError:
        raise click.UsageError(f"input file not found: {path}") from None
    except CaprankError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)


@click.group()
def main():
    """Rank candidate scene captions by hallucination level via low-rank
    consensus decomposition of their sentence-embedding matrix."""


@main.command()
@click.option("--input", "input_path", required=True, type=click.Path(), help="Scene file (JSON lines).")
@click.option("--output", "output_path", required=True, type=click.Path(), help="Ranking file to write.")
@_decomposition_options
@_provider_options
@click.option("--workers", type=int, default=None, help="Scene-parallel workers (default: cores).")
@click.option("--seed", type=int, default=0, show_default=True, help="Base seed (recorded in summary).")
@click.option("--emit-reports", is_flag=True, help="Also write per-scene decomposition reports.")
@click.option("--report-dir", type=click.Path(), default=None, help="Directory for per-scene reports.")
def rank(input_path, output_path, method, variance_threshold, rank_cap, rank_override,
         normalize_rows, provider_url, provider_model, cache_dir, workers, seed,
         emit_reports, report_dir):
    """Rank each scene's captions and select the most consensus-consistent."""
    config = _build_config(method, variance_threshold, rank_cap, rank_override, normalize_rows)
    provider = _build_provider(provider_url, provider_model, cache_dir)
    if workers is None:
        workers = os.cpu_count() or 1
    if workers < 1:
        raise click.UsageError("--workers must be >= 1")
    if emit_reports and not report_dir:
        raise click.UsageError("--emit-reports requires --report-dir")

    scenes = _load_scenes_or_fail(input_path)
    ranked, failures = pipeline.rank_corpus(scenes, config, provider, workers=workers)
    rows = pipeline.ranking_rows(ranked)
    summary = {
        "scenes": len(scenes),
        "ranked": len(ranked),
        "captions": len(rows),
        "degenerate_scenes": sum(1 for r in ranked if r.ranking.degenerate),
        "failed_scenes": {f.scene_id: f.error for f in sorted(failures, key=lambda f: f.scene_id)},
        "method": method,
        "seed": seed,
    }
    write_results(output_path, rows, summary=summary)

    if emit_reports:
        for scene in ranked:
            scene_dir = Path(report_dir) / scene.scene_id
            matrix = build_matrix(
                list(scene.decomposition.matrix), list(scene.caption_ids)
            )
            reports.emit_decomposition_reports(scene.decomposition, matrix, scene_dir)
            if matrix.n >= 3:
                reports.emit_projection_report(matrix, scene.scores, scene_dir)

    if ranked:
        timings = [r.elapsed for r in ranked]
        click.echo(
            f"ranked {len(ranked)}/{len(scenes)} scenes; "
            f"decompose+score latency median {statistics.median(timings) * 1e3:.2f} ms, "
            f"total {sum(timings) * 1e3:.1f} ms",
            err=True,
        )
    for failure in failures:
        click.echo(f"scene {failure.scene_id} failed: {failure.error}", err=True)
    if failures:
        sys.exit(1)


@main.command()
@click.option("--input", "input_path", required=True, type=click.Path(), help="Labeled scene file.")
@click.option("--rankings", "rankings_path", required=True, type=click.Path(), help="Ranking file from 'rank'.")
@click.option("--output", "output_path", required=True, type=click.Path(), help="Evaluation report to write.")
def evaluate(input_path, rankings_path, output_path):
    """Score rankings against sentence-level hallucination labels."""
    scenes = _load_scenes_or_fail(input_path)
    rows = []
    try:
        with open(rankings_path, encoding="utf-8") as handle:
            for line in handle:
                if not line.strip():
                    continue
                record = json.loads(line)
                if "summary" not in record:
                    rows.append(record)
    except (OSError, ValueError) as exc:
        raise click.UsageError(f"cannot read rankings: {exc}") from None

    evaluations, report, failures = pipeline.evaluate_corpus(scenes, rows)
    out_rows = [
        {
            "scene_id": e.scene_id,
            "selected": e.selected,
            "selected_fraction": e.selected_fraction,
            "correct": e.correct,
            "spearman_rho": e.spearman_rho,
            "undefined_reason": e.undefined_reason,
            "labeled_captions": e.labeled_captions,
            "total_captions": e.total_captions,
            "gt_scores": {k: e.gt_scores[k] for k in sorted(e.gt_scores)},
        }
        for e in evaluations
    ]
    summary = {
        "scenes": report.scene_count,
        "evaluated": report.evaluated_count,
        "accuracy": report.accuracy,
        "positive_rho_fraction": report.correlations.positive_fraction,
        "mean_rho": report.correlations.mean,
        "rho_variance": report.correlations.variance,
        "defined_rho": report.correlations.defined_count,
        "undefined_rho": report.correlations.undefined_count,
        "degenerate_scenes": report.degenerate_count,
        "uncovered_scenes": report.uncovered_count,
        "missing_label_scenes": report.missing_label_count,
        "failed_scenes": {f.scene_id: f.error for f in sorted(failures, key=lambda f: f.scene_id)},
    }
    write_results(output_path, out_rows, summary=summary)
    click.echo(
        f"evaluated {report.scene_count} scenes: accuracy {report.accuracy:.3f}, "
        f"mean rho {report.correlations.mean:.3f} over {report.correlations.defined_count} defined",
        err=True,
    )
    for failure in failures:
        click.echo(f"scene {failure.scene_id} failed: {failure.error}", err=True)
    if failures:
        sys.exit(1)


@main.command()
@click.option("--output", "output_path", required=True, type=click.Path(), help="Benchmark CSV to write.")
@click.option("--n", "captions", type=int, default=10, show_default=True, help="Captions per scene.")
@click.option("--dim", type=int, default=64, show_default=True, help="Embedding dimension.")
@click.option("--consensus-rank", type=int, default=2, show_default=True, help="Planted consensus rank.")
@click.option("--outlier-count", type=int, default=1, show_default=True, help="Planted outliers per scene.")
@click.option("--deltas", default="0.1,0.3,1.0", show_default=True, help="Outlier strengths, comma separated.")
@click.option("--sigmas", default="0.05", show_default=True, help="Noise scales, comma separated.")
@click.option("--methods", default="svd,rpca", show_default=True, help="Backends, comma separated.")
@click.option("--modes", default="dense_shift", show_default=True, help="Outlier modes, comma separated.")
@click.option("--trials", type=int, default=100, show_default=True, help="Trials per grid cell.")
@click.option("--seed", type=int, default=0, show_default=True, help="Base seed for trial generation.")
@click.option("--rank-policy", type=click.Choice(["planted", "adaptive"]), default="planted",
              show_default=True, help="Use the planted rank or adaptive selection for svd.")
@click.option("--workers", type=int, default=1, show_default=True, help="Trial-parallel workers.")
def synth(output_path, captions, dim, consensus_rank, outlier_count, deltas, sigmas,
          methods, modes, trials, seed, rank_policy, workers):
    """Run the planted-outlier benchmark over a parameter grid."""
    try:
        base = SynthConfig(
            captions_per_scene=captions,
            dim=dim,
            consensus_rank=consensus_rank,
            outlier_count=outlier_count,
            seed=seed,
        )
        strengths = [float(x) for x in deltas.split(",") if x]
        noise = [float(x) for x in sigmas.split(",") if x]
        method_list = [m.strip() for m in methods.split(",") if m.strip()]
        mode_list = [m.strip() for m in modes.split(",") if m.strip()]
        if trials < 1 or workers < 1:
            raise InvalidConfigError("--trials and --workers must be >= 1")
        decomposition = DecompositionConfig() if rank_policy == "adaptive" else None
    except (InvalidConfigError, ValueError) as exc:
        raise click.UsageError(str(exc)) from None

    cells = run_benchmark(
        base,
        strengths=strengths,
        sigmas=noise,
        methods=method_list,
        modes=mode_list,
        trials=trials,
        base_seed=seed,
        decomposition=decomposition,
        workers=workers,
    )
    with open(output_path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(
            ["outlier_mode", "method", "delta", "sigma", "trials", "seed",
             "selection_rate", "mean_spearman", "support_precision"]
        )
        for cell in cells:
            writer.writerow(
                [
                    cell.outlier_mode,
                    cell.method,
                    repr(cell.outlier_strength),
                    repr(cell.noise_sigma),
                    cell.trials,
                    cell.seed,
                    repr(cell.selection_rate),
                    repr(cell.mean_spearman),
                    "" if cell.support_precision is None else repr(cell.support_precision),
                ]
            )
    click.echo(f"wrote {len(cells)} benchmark cells to {output_path}", err=True)


@main.command()
@click.option("--input", "input_path", required=True, type=click.Path(), help="Scene file (JSON lines).")
@click.option("--report-dir", required=True, type=click.Path(), help="Directory for report artifacts.")
@_decomposition_options
@click.option("--scene", "scene_ids", multiple=True, help="Only report these scene ids.")
@click.option("--no-figures", is_flag=True, help="Write CSV data only, skip SVG rendering.")
def report(input_path, report_dir, method, variance_threshold, rank_cap, rank_override,
           normalize_rows, scene_ids, no_figures):
    """Emit decomposition and projection reports for labeled or ranked scenes."""
    config = _build_config(method, variance_threshold, rank_cap, rank_override, normalize_rows)
    scenes = _load_scenes_or_fail(input_path)
    if scene_ids:
        wanted = set(scene_ids)
        scenes = [s for s in scenes if s.scene_id in wanted]
        if not scenes:
            raise click.UsageError("no scene matched --scene filter")

    failures = []
    for scene in scenes:
        try:
            ranked = pipeline.rank_scene(scene, config)
            scene_dir = Path(report_dir) / scene.scene_id
            matrix = build_matrix(list(ranked.decomposition.matrix), list(ranked.caption_ids))
            reports.emit_decomposition_reports(
                ranked.decomposition, matrix, scene_dir, render=not no_figures
            )
            if matrix.n >= 3:
                reports.emit_projection_report(
                    matrix, ranked.scores, scene_dir, render=not no_figures
                )
        except CaprankError as exc:
            failures.append((scene.scene_id, f"{exc.__class__.__name__}: {exc}"))
    click.echo(f"reports written for {len(scenes) - len(failures)} scenes", err=True)
    for scene_id, error in failures:
        click.echo(f"scene {scene_id} failed: {error}", err=True)
    if failures:
        sys.exit(1)


if __name__ == "__main__":
    main()
