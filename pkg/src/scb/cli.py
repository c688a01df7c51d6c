"""Command-line entry points.

Subcommands mirror the workflow stages: ``synth`` (desk-scale corpus),
``prepare`` (decode/resample/normalize/trim/pad + PCMF cache), ``pauses``
(pause-annotated transcripts), ``embed`` (baseline provider or external
adapter), ``benchmark`` (repeated stratified evaluation with reports and
figures), ``curate`` (DBSCAN review loop and filtering), and ``report``
(re-render report files from a finished run directory).

Exit codes: 0 success, 1 usage error, 2 partial/failed data, 3 internal
error. Option precedence: command line > config file (--config, scb.toml
key/value text) > built-in default; each run writes the resolved values
next to its outputs.
"""

from __future__ import annotations

import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click
import numpy as np
from click.core import ParameterSource

from . import audioprep, curate as curate_mod, embedkit, evalkit, pausecodec, synth, trainer
from .errors import ScbError
from .manifest import Label, Manifest, SampleRecord, parse_manifest, write_manifest


class PartialFailure(ScbError):
    pass


# ---------------------------------------------------------------- config


def _parse_value(raw: str):
    raw = raw.strip()
    if raw.lower() in ("true", "false"):
        return raw.lower() == "true"
    if len(raw) >= 2 and raw[0] == raw[-1] and raw[0] in "'\"":
        return raw[1:-1]
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        pass
    return raw


def load_config_file(path: Path) -> dict[str, object]:
    """Minimal scb.toml reader: [section] headers and key = value lines."""
    values: dict[str, object] = {}
    section = ""
    for line_no, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            continue
        key, eq, raw = line.partition("=")
        if not eq:
            raise ScbError(f"{path}:{line_no}: expected key = value")
        full = f"{section}.{key.strip()}" if section else key.strip()
        values[full] = _parse_value(raw)
    return values


def resolve_params(ctx: click.Context, **cli_values) -> dict[str, object]:
    """Apply CLI > config file > default precedence for this command."""
    file_cfg: dict[str, object] = ctx.obj or {}
    cmd = ctx.command.name
    out = {}
    for name, val in cli_values.items():
        source = ctx.get_parameter_source(name)
        key = f"{cmd}.{name}"
        if source == ParameterSource.COMMANDLINE or key not in file_cfg:
            out[name] = val
        else:
            out[name] = file_cfg[key]
    return out


def write_snapshot(outdir: Path, command: str, params: dict[str, object]) -> None:
    lines = [f"[{command}]"]
    for key in sorted(params):
        val = params[key]
        if isinstance(val, bool):
            rendered = "true" if val else "false"
        elif isinstance(val, (int, float)):
            rendered = str(val)
        else:
            rendered = f'"{val}"'
        lines.append(f"{key} = {rendered}")
    (outdir / "scb_resolved.toml").write_text("\n".join(lines) + "\n", encoding="utf-8")


def _map_jobs(fn, items, jobs: int):
    """Run fn over items, preserving input order in the results."""
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------- group


@click.group()
@click.option("--config", "config_path", type=click.Path(path_type=Path), default=None,
              help="Key/value config file (default: ./scb.toml if present).")
@click.pass_context
def cli(ctx, config_path):
    """Speech cognition bench: 3-class screening pipelines over speech."""
    if config_path is None and Path("scb.toml").is_file():
        config_path = Path("scb.toml")
    ctx.obj = load_config_file(config_path) if config_path else {}


# ---------------------------------------------------------------- synth


@cli.command("synth")
@click.argument("outdir", type=click.Path(path_type=Path))
@click.option("--n-per-class", default=200, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.pass_context
def cmd_synth(ctx, outdir, n_per_class, seed):
    """Generate a deterministic synthetic corpus (WAV + ASR JSON + manifest)."""
    params = resolve_params(ctx, n_per_class=n_per_class, seed=seed)
    outdir.mkdir(parents=True, exist_ok=True)
    manifest_path = synth.generate_corpus(
        outdir, synth.SynthSpec(n_per_class=params["n_per_class"], seed=params["seed"])
    )
    write_snapshot(outdir, "synth", params)
    click.echo(f"wrote {manifest_path}")


# ---------------------------------------------------------------- prepare


@cli.command("prepare")
@click.argument("manifest_path", type=click.Path(exists=True, path_type=Path))
@click.argument("outdir", type=click.Path(path_type=Path))
@click.option("--target-rate", default=16000, show_default=True)
@click.option("--trim/--no-trim", "trim", default=True, show_default=True,
              help="Trim edge silence before caching.")
@click.option("--pad/--no-pad", "pad", default=False, show_default=True,
              help="Store 30 s padded/truncated clips in the cache.")
@click.option("--clip-seconds", default=30.0, show_default=True)
@click.option("--strict", is_flag=True, help="Abort on the first bad file.")
@click.option("--force", is_flag=True, help="Recompute even if a cache file exists.")
@click.option("--jobs", default=os.cpu_count() or 1, show_default="logical CPUs")
@click.pass_context
def cmd_prepare(ctx, manifest_path, outdir, target_rate, trim, pad, clip_seconds, strict, force, jobs):
    """Decode, resample, normalize, trim, and cache clips as PCMF."""
    params = resolve_params(ctx, target_rate=target_rate, trim=trim, pad=pad,
                            clip_seconds=clip_seconds, strict=strict, force=force, jobs=jobs)
    m = parse_manifest(manifest_path)
    cache_dir = outdir / "cache"
    cache_dir.mkdir(parents=True, exist_ok=True)
    cfg = audioprep.PrepConfig(target_rate=params["target_rate"],
                               clip_seconds=params["clip_seconds"])

    errors: list[tuple[str, str]] = []

    def process(rec: SampleRecord):
        cache_path = cache_dir / f"{rec.uid}.pcmf"
        try:
            if cache_path.exists() and not params["force"]:
                clip, _ = audioprep.read_pcmf(cache_path)
                return rec.uid, audioprep.speech_seconds(clip, cfg), True
            clip = audioprep.decode_wav(m.resolve(rec.audio_path))
            clip = audioprep.resample(clip, params["target_rate"])
            clip = audioprep.peak_normalize(clip)
            if params["trim"]:
                clip = audioprep.trim_silence(clip, cfg)
            # round to cache precision first so reruns that re-measure from
            # the f32 cache reproduce durations.csv byte-for-byte
            clip = audioprep.AudioClip(
                clip.samples.astype("<f4").astype(np.float64), clip.sample_rate
            )
            speech = audioprep.speech_seconds(clip, cfg)
            if params["pad"]:
                clip, valid = audioprep.pad_or_truncate(clip, cfg)
            else:
                valid = len(clip.samples)
            audioprep.write_pcmf(cache_path, clip, valid)
            return rec.uid, speech, False
        except ScbError as e:
            if params["strict"]:
                raise
            errors.append((rec.uid, str(e)))
            return rec.uid, None, False

    results = _map_jobs(process, m.records, params["jobs"])

    durations = ["uid,speech_seconds"]
    out_records = []
    for rec, (uid, speech, _) in zip(m.records, results):
        if speech is None:
            continue
        durations.append(f"{uid},{speech:.3f}")
        out_records.append(
            SampleRecord(uid=rec.uid, audio_path=f"cache/{rec.uid}.pcmf", asr_path=rec.asr_path,
                         age=rec.age, sex=rec.sex, language=rec.language, task=rec.task,
                         label=rec.label)
        )
    (outdir / "durations.csv").write_text("\n".join(durations) + "\n", encoding="utf-8")
    write_manifest(Manifest(records=out_records, root=outdir), outdir / "manifest.csv")
    write_snapshot(outdir, "prepare", params)

    if errors:
        log = "\n".join(f"{uid}: {msg}" for uid, msg in sorted(errors))
        (outdir / "errors.log").write_text(log + "\n", encoding="utf-8")
        raise PartialFailure(f"{len(errors)} of {len(m.records)} files failed; see {outdir / 'errors.log'}")
    click.echo(f"prepared {len(out_records)} clips -> {outdir}")


# ---------------------------------------------------------------- pauses


@cli.command("pauses")
@click.argument("manifest_path", type=click.Path(exists=True, path_type=Path))
@click.argument("outdir", type=click.Path(path_type=Path))
@click.option("--threshold", default=0.05, show_default=True,
              help="Silence detection threshold in seconds.")
@click.option("--short-max", default=0.5, show_default=True)
@click.option("--medium-max", default=2.0, show_default=True)
@click.option("--casing", type=click.Choice(["lower", "keep"]), default="lower", show_default=True)
@click.option("--max-tokens", default=512, show_default=True)
@click.pass_context
def cmd_pauses(ctx, manifest_path, outdir, threshold, short_max, medium_max, casing, max_tokens):
    """Write pause-annotated transcripts plus a pause-stats CSV."""
    params = resolve_params(ctx, threshold=threshold, short_max=short_max,
                            medium_max=medium_max, casing=casing, max_tokens=max_tokens)
    m = parse_manifest(manifest_path)
    text_dir = outdir / "text"
    text_dir.mkdir(parents=True, exist_ok=True)
    cfg = pausecodec.PauseConfig(detect_threshold=params["threshold"],
                                 short_max=params["short_max"],
                                 medium_max=params["medium_max"])

    stats_rows = ["uid,n_short,n_medium,n_long,total_pause_s"]
    out_records = []
    skipped = 0
    failed: list[tuple[str, str]] = []
    for rec in m.records:
        if rec.asr_path is None:
            skipped += 1
            continue
        try:
            transcript = pausecodec.parse_asr(m.resolve(rec.asr_path))
            annotated = pausecodec.annotate(transcript, cfg, casing=params["casing"])
        except ScbError as e:
            failed.append((rec.uid, str(e)))
            continue
        text, _ = pausecodec.render(annotated, max_tokens=params["max_tokens"])
        (text_dir / f"{rec.uid}.txt").write_text(text + "\n", encoding="utf-8")
        s = annotated.pause_stats
        stats_rows.append(f"{rec.uid},{s.n_short},{s.n_medium},{s.n_long},{s.total_pause_s:.3f}")
        out_records.append(
            SampleRecord(uid=rec.uid, audio_path=rec.audio_path, asr_path=f"text/{rec.uid}.txt",
                         age=rec.age, sex=rec.sex, language=rec.language, task=rec.task,
                         label=rec.label)
        )
    (outdir / "pause_stats.csv").write_text("\n".join(stats_rows) + "\n", encoding="utf-8")
    write_manifest(Manifest(records=out_records, root=outdir), outdir / "manifest.csv")
    write_snapshot(outdir, "pauses", params)
    if skipped:
        click.echo(f"skipped {skipped} record(s) without asr_path", err=True)
    if failed:
        log = "\n".join(f"{uid}: {msg}" for uid, msg in failed)
        (outdir / "errors.log").write_text(log + "\n", encoding="utf-8")
        raise PartialFailure(f"{len(failed)} transcript(s) failed; see {outdir / 'errors.log'}")
    click.echo(f"annotated {len(out_records)} transcripts -> {outdir}")


# ---------------------------------------------------------------- embed


@cli.command("embed")
@click.argument("manifest_path", type=click.Path(exists=True, path_type=Path))
@click.option("--provider", default="baseline", show_default=True,
              help="'baseline' or 'adapter:<command with {manifest} and {out}>'.")
@click.option("--out", "out_path", type=click.Path(path_type=Path), required=True)
@click.option("--jobs", default=os.cpu_count() or 1, show_default="logical CPUs")
@click.pass_context
def cmd_embed(ctx, manifest_path, provider, out_path, jobs):
    """Produce an EMB1 embedding file covering every manifest uid."""
    params = resolve_params(ctx, provider=provider, jobs=jobs)
    m = parse_manifest(manifest_path)
    provider = params["provider"]

    if provider == "baseline":
        emb = _baseline_embeddings(m, params["jobs"])
    elif provider.startswith("adapter:"):
        emb = embedkit.run_adapter(provider.split(":", 1)[1], manifest_path,
                                   out_path.parent if out_path.parent != Path("") else Path("."),
                                   expected_uids=m.uids())
    else:
        raise click.UsageError(f"unknown provider {provider!r}")
    out_path.parent.mkdir(parents=True, exist_ok=True)
    embedkit.write_emb(emb, out_path)
    write_snapshot(out_path.parent, "embed", params)
    click.echo(f"wrote {out_path} ({len(emb.vectors)} vectors, dim {emb.dim})")


def _baseline_embeddings(m: Manifest, jobs: int) -> embedkit.EmbeddingSet:
    cfg = audioprep.PrepConfig()

    def one(rec: SampleRecord):
        path = m.resolve(rec.audio_path)
        if not str(path).endswith(".pcmf") or not path.exists():
            raise embedkit.MissingCache(
                f"{rec.uid}: baseline provider needs a prepared PCMF cache, got {rec.audio_path!r}"
            )
        clip, valid = audioprep.read_pcmf(path)
        if valid == len(clip.samples):
            clip, valid = audioprep.pad_or_truncate(clip, cfg)
        return rec.uid, embedkit.baseline_embed(clip, valid)

    pairs = _map_jobs(one, m.records, jobs)
    emb = embedkit.EmbeddingSet(dim=80, provider_id="baseline-mfcc80:pool=valid", pooled=True)
    emb.vectors = {uid: vec for uid, vec in pairs}
    return emb


# ---------------------------------------------------------------- benchmark


@cli.command("benchmark")
@click.argument("manifest_path", type=click.Path(exists=True, path_type=Path))
@click.argument("emb_path", type=click.Path(exists=True, path_type=Path))
@click.argument("outdir", type=click.Path(path_type=Path))
@click.option("--reps", default=5, show_default=True)
@click.option("--seed-base", default=0, show_default=True)
@click.option("--hidden", default=128, show_default=True)
@click.option("--lr", default=0.0005, show_default=True)
@click.option("--batch", default=32, show_default=True)
@click.option("--max-epochs", default=100, show_default=True)
@click.option("--patience", default=5, show_default=True)
@click.option("--class-weights", is_flag=True)
@click.option("--pipeline-label", default="audio", show_default=True)
@click.option("--figures/--no-figures", "figures_on", default=True, show_default=True)
@click.pass_context
def cmd_benchmark(ctx, manifest_path, emb_path, outdir, reps, seed_base, hidden, lr, batch,
                  max_epochs, patience, class_weights, pipeline_label, figures_on):
    """Run the repeated stratified benchmark and write report files."""
    params = resolve_params(ctx, reps=reps, seed_base=seed_base, hidden=hidden, lr=lr,
                            batch=batch, max_epochs=max_epochs, patience=patience,
                            class_weights=class_weights, pipeline_label=pipeline_label,
                            figures_on=figures_on)
    m = parse_manifest(manifest_path)
    emb = embedkit.read_emb(emb_path)
    cfg = trainer.TrainConfig(lr=params["lr"], batch=params["batch"],
                              max_epochs=params["max_epochs"], patience=params["patience"],
                              hidden=params["hidden"], class_weights=params["class_weights"])
    report = evalkit.run_benchmark(m, emb, cfg, n_reps=params["reps"],
                                   seed_base=params["seed_base"],
                                   pipeline=params["pipeline_label"])
    outdir.mkdir(parents=True, exist_ok=True)
    _write_report_files(report, outdir, figures=params["figures_on"])
    write_snapshot(outdir, "benchmark", params)
    agg = report.aggregate()
    click.echo(
        f"accuracy {evalkit.fmt_mean_std(*agg['accuracy'])}  "
        f"macro_auc {evalkit.fmt_mean_std(*agg['macro_auc'])}"
    )


def _write_report_files(report: evalkit.RunReport, outdir: Path, figures: bool = True) -> None:
    (outdir / "report.md").write_text(evalkit.render_report(report, "markdown"), encoding="utf-8")
    (outdir / "report.csv").write_text(evalkit.render_report(report, "csv"), encoding="utf-8")
    for r in report.repetitions:
        rows = ["true,pred_hc,pred_mci,pred_ad"]
        for label, row in zip(("HC", "MCI", "AD"), r.confusion):
            rows.append(label + "," + ",".join(str(v) for v in row))
        (outdir / f"confusion_rep{r.rep}.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    meta = {
        "provider": report.provider,
        "pipeline": report.pipeline,
        "config_digest": report.config_digest,
        "seeds": report.seeds,
        "pooling": report.pooling,
        "repetitions": [
            {
                "rep": r.rep,
                "seed": r.seed,
                "accuracy": r.accuracy,
                "macro_auc": r.macro_auc,
                "auc_skipped": [c.name for c in r.auc_skipped],
            }
            for r in report.repetitions
        ],
    }
    (outdir / "run_meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n",
                                          encoding="utf-8")
    if figures:
        from . import figures as fig

        for r in report.repetitions:
            fig.save_confusion_png(r.confusion, outdir / f"confusion_rep{r.rep}.png",
                                   f"rep {r.rep} (seed {r.seed})")
        fig.save_metrics_png(report, outdir / "metrics.png")


# ---------------------------------------------------------------- report


@cli.command("report")
@click.argument("rundir", type=click.Path(exists=True, path_type=Path))
@click.option("--figures/--no-figures", "figures_on", default=True, show_default=True)
def cmd_report(rundir, figures_on):
    """Re-render report.md and figures from a finished benchmark directory."""
    meta_path = rundir / "run_meta.json"
    if not meta_path.exists():
        raise ScbError(f"{rundir} has no run_meta.json (not a benchmark output directory?)")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    reps = []
    for r in meta["repetitions"]:
        conf_path = rundir / f"confusion_rep{r['rep']}.csv"
        mat = np.zeros((3, 3), dtype=np.int64)
        if conf_path.exists():
            lines = conf_path.read_text(encoding="utf-8").splitlines()[1:]
            for i, line in enumerate(lines[:3]):
                mat[i] = [int(v) for v in line.split(",")[1:4]]
        reps.append(
            evalkit.Repetition(
                rep=r["rep"], seed=r["seed"], accuracy=r["accuracy"], macro_auc=r["macro_auc"],
                auc_skipped=tuple(Label[c] for c in r.get("auc_skipped", [])),
                confusion=mat,
            )
        )
    report = evalkit.RunReport(provider=meta["provider"], pipeline=meta["pipeline"],
                               repetitions=reps, config_digest=meta["config_digest"],
                               seeds=meta["seeds"], pooling=meta.get("pooling", "all"))
    _write_report_files(report, rundir, figures=figures_on)
    agg = report.aggregate()
    click.echo(
        f"accuracy {evalkit.fmt_mean_std(*agg['accuracy'])}  "
        f"macro_auc {evalkit.fmt_mean_std(*agg['macro_auc'])}"
    )


# ---------------------------------------------------------------- curate


@cli.command("curate")
@click.argument("manifest_path", type=click.Path(exists=True, path_type=Path))
@click.argument("emb_path", type=click.Path(exists=True, path_type=Path))
@click.argument("outdir", type=click.Path(path_type=Path))
@click.option("--eps", required=True, type=float, help="DBSCAN radius.")
@click.option("--min-pts", required=True, type=int, help="DBSCAN core threshold.")
@click.option("--metric", type=click.Choice(["euclidean", "cosine"]), default="euclidean",
              show_default=True)
@click.option("--task-map", "task_map_path", type=click.Path(exists=True, path_type=Path),
              default=None, help="cluster_id,task CSV; enables filtering.")
@click.option("--durations", "durations_path", type=click.Path(exists=True, path_type=Path),
              default=None, help="uid,speech_seconds CSV from `prepare`.")
@click.option("--min-speech", default=3.0, show_default=True)
@click.option("--exclude-file", type=click.Path(exists=True, path_type=Path), default=None,
              help="Plain list of uids to drop manually.")
@click.pass_context
def cmd_curate(ctx, manifest_path, emb_path, outdir, eps, min_pts, metric, task_map_path,
               durations_path, min_speech, exclude_file):
    """Cluster transcript embeddings; export a review file or filter the manifest."""
    params = resolve_params(ctx, eps=eps, min_pts=min_pts, metric=metric, min_speech=min_speech)
    m = parse_manifest(manifest_path)
    emb = embedkit.read_emb(emb_path)
    emb.validate_coverage(m.uids())
    vectors = {u: emb.vectors[u] for u in m.uids()}
    assignment = curate_mod.dbscan(
        vectors, curate_mod.DbscanConfig(eps=params["eps"], min_pts=params["min_pts"],
                                         metric=params["metric"])
    )
    outdir.mkdir(parents=True, exist_ok=True)

    if task_map_path is None:
        transcripts = {rec.uid: _excerpt_text(m, rec) for rec in m.records}
        pca_csv = curate_mod.export_cluster_review(assignment, vectors, transcripts,
                                                   outdir / "review.md")
        coords = {}
        for line in pca_csv.read_text(encoding="utf-8").splitlines()[1:]:
            uid, cid, x, y = line.split(",")
            coords[uid] = (float(x), float(y), int(cid))
        from . import figures as fig

        fig.save_pca_png(coords, outdir / "review_pca.png")
        write_snapshot(outdir, "curate", params)
        n_clusters = len([c for c in assignment.clusters() if c != -1])
        click.echo(f"{n_clusters} cluster(s) -> {outdir / 'review.md'}")
        return

    if durations_path is None:
        raise click.UsageError("--durations is required when filtering with --task-map")
    task_map = curate_mod.parse_task_map(task_map_path)
    speech_by_uid = {}
    for line in durations_path.read_text(encoding="utf-8").splitlines()[1:]:
        uid, _, val = line.partition(",")
        speech_by_uid[uid] = float(val)
    manual = set()
    if exclude_file is not None:
        manual = {l.strip() for l in exclude_file.read_text(encoding="utf-8").splitlines() if l.strip()}
    filtered, exclusions = curate_mod.apply_filters(
        m, assignment, task_map, speech_by_uid,
        min_speech_s=params["min_speech"], manual_exclude=manual,
    )
    write_manifest(filtered, outdir / "manifest.csv")
    curate_mod.write_exclusion_log(exclusions, outdir / "exclusions.csv")
    write_snapshot(outdir, "curate", params)
    click.echo(f"kept {len(filtered.records)}, excluded {len(exclusions)} -> {outdir}")


def _excerpt_text(m: Manifest, rec: SampleRecord) -> str:
    if rec.asr_path is None:
        return ""
    path = m.resolve(rec.asr_path)
    if not path.exists():
        return ""
    if str(path).endswith(".txt"):
        return path.read_text(encoding="utf-8").strip()
    try:
        transcript = pausecodec.parse_asr(path)
    except ScbError:
        return ""
    return " ".join(seg.text for seg in transcript.segments if seg.text).strip()


# ---------------------------------------------------------------- entry


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Exit as e:
        return e.exit_code
    except click.ClickException as e:
        e.show()
        return 1
    except click.Abort:
        return 1
    except PartialFailure as e:
        click.echo(f"scb: {e}", err=True)
        return 2
    except ScbError as e:
        click.echo(f"scb: error: {e}", err=True)
        return 2
    except Exception as e:  # pragma: no cover - genuine bugs
        click.echo(f"scb: internal error: {e!r}", err=True)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
