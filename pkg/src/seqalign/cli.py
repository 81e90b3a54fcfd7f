"""Command-line interface.

Subcommands: generate, train, export-embeddings, eval, align, retrieve.
All failures print one ``error: <Kind>: <message>`` line to stderr and
exit nonzero.
"""

from __future__ import annotations

import functools
import sys

import click
import numpy as np

from . import config as cfgmod
from .data import (
    activity_ids,
    load_activity_map,
    load_embeddings,
    load_manifest,
    load_phase_labels,
    load_sequence,
    load_sequences,
    save_embeddings,
)
from .errors import SeqAlignError
from .metrics import evaluate_suite, unit_normalize
from .synthetic import generate_synthetic
from .trainer import align as align_pair
from .trainer import export_embeddings, load_checkpoint, train


def _cli_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (SeqAlignError, ValueError, OSError) as exc:
            message = " ".join(str(exc).split())
            click.echo(f"error: {type(exc).__name__}: {message}", err=True)
            sys.exit(1)

    return wrapper


@click.group()
def main():
    """Self-supervised temporal sequence alignment."""


set_option = click.option(
    "--set",
    "overrides",
    multiple=True,
    metavar="SECTION.KEY=VALUE",
    help="Override a config entry.",
)


def _load_raw(config_path, overrides):
    raw = cfgmod.load_config(config_path)
    return cfgmod.apply_overrides(raw, overrides)


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@set_option
@_cli_errors
def generate(config_path, out_dir, overrides):
    """Generate a synthetic multi-activity dataset."""
    raw = _load_raw(config_path, overrides)
    manifest_path = generate_synthetic(cfgmod.build_synth_config(raw), out_dir)
    click.echo(f"wrote {manifest_path}")


@main.command(name="train")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--data", "manifest_path", type=click.Path(exists=True), required=True)
@click.option("--out", "checkpoint_path", type=click.Path(), required=True)
@set_option
@_cli_errors
def train_cmd(config_path, manifest_path, checkpoint_path, overrides):
    """Train on a dataset manifest and write a checkpoint."""
    raw = _load_raw(config_path, overrides)
    manifest = load_manifest(manifest_path)
    sequences = load_sequences(manifest)
    result = train(
        sequences,
        cfgmod.build_model_config(raw, input_dim=manifest.feature_dim),
        cfgmod.build_augment_config(raw),
        cfgmod.build_loss_config(raw),
        cfgmod.build_train_config(raw),
        checkpoint_path=checkpoint_path,
    )
    final = result.log.epochs[-1].mean_total if result.log.epochs else float("nan")
    click.echo(
        f"wrote {result.checkpoint_path} "
        f"(epochs={len(result.log.epochs)}, final_loss={final:.6f}, "
        f"wall_clock={result.log.wall_clock_s:.1f}s)"
    )


@main.command(name="export-embeddings")
@click.option("--ckpt", "checkpoint_path", type=click.Path(exists=True), required=True)
@click.option("--data", "manifest_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--space", type=click.Choice(["u", "z"]), default=None)
@_cli_errors
def export_cmd(checkpoint_path, manifest_path, out_path, space):
    """Embed every sequence of a manifest into one container file."""
    model, meta = load_checkpoint(checkpoint_path)
    sequences = load_sequences(load_manifest(manifest_path))
    space = space or meta.get("embedding_space", "u")
    save_embeddings(out_path, export_embeddings(model, sequences, space=space))
    click.echo(f"wrote {out_path} ({len(sequences)} sequences, space={space})")


@main.command(name="eval")
@click.option("--emb", "emb_path", type=click.Path(exists=True), required=True)
@click.option("--labels", "labels_dir", type=click.Path(exists=True), required=True)
@click.option("--report", "report_path", type=click.Path(), required=True)
@set_option
@_cli_errors
def eval_cmd(emb_path, labels_dir, report_path, overrides):
    """Score an embedding file against label sidecars."""
    raw = _load_raw(None, overrides)
    embeddings = load_embeddings(emb_path)
    activity_map = load_activity_map(labels_dir)
    missing = sorted(set(embeddings) - set(activity_map))
    if missing:
        raise SeqAlignError(f"labels dir lacks activity entries for {missing}")
    activities, _ = activity_ids({k: activity_map[k] for k in embeddings})
    phases = {sid: load_phase_labels(labels_dir, sid) for sid in embeddings}
    report = evaluate_suite(embeddings, phases, activities, cfgmod.build_metrics_config(raw))
    report.save(report_path)
    for key, value in report.to_flat().items():
        click.echo(f"{key}={value:.6f}")
    for note in report.notes:
        click.echo(f"note: {note}")
    click.echo(f"wrote {report_path}")


@main.command(name="align")
@click.option("--ckpt", "checkpoint_path", type=click.Path(exists=True), required=True)
@click.option("--a", "path_a", type=click.Path(exists=True), required=True)
@click.option("--b", "path_b", type=click.Path(exists=True), required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--space", type=click.Choice(["u", "z"]), default=None)
@_cli_errors
def align_cmd(checkpoint_path, path_a, path_b, out_path, space):
    """Write the frame correspondence between two sequence files."""
    model, meta = load_checkpoint(checkpoint_path)
    seq_a = load_sequence(path_a)
    seq_b = load_sequence(path_b)
    space = space or meta.get("embedding_space", "u")
    result = align_pair(model, seq_a.features, seq_b.features, space=space)
    result.to_csv(out_path)
    click.echo(f"wrote {out_path} ({len(result.assignment)} rows)")


@main.command(name="retrieve")
@click.option("--emb", "emb_path", type=click.Path(exists=True), required=True)
@click.option("--query", required=True, metavar="ID:FRAME")
@click.option("--k", "top_k", type=int, default=5, show_default=True)
@_cli_errors
def retrieve_cmd(emb_path, query, top_k):
    """Nearest frames to a query frame among all other sequences."""
    if top_k < 1:
        raise ValueError("k must be >= 1")
    sid, sep, frame_text = query.rpartition(":")
    if not sep or not sid:
        raise ValueError("query must look like sequence_id:frame")
    embeddings = load_embeddings(emb_path)
    if sid not in embeddings:
        raise ValueError(f"unknown sequence id {sid!r}")
    frame = int(frame_text)
    if not (0 <= frame < embeddings[sid].shape[0]):
        raise ValueError(f"frame {frame} out of range for {sid!r}")

    query_vec = unit_normalize(embeddings[sid][frame : frame + 1])[0]
    owners, frames, rows = [], [], []
    for other in sorted(embeddings):
        if other == sid:
            continue
        mat = unit_normalize(embeddings[other])
        owners.extend([other] * mat.shape[0])
        frames.extend(range(mat.shape[0]))
        rows.append(mat)
    if not rows:
        raise ValueError("no other sequences to retrieve from")
    sims = np.vstack(rows) @ query_vec
    order = np.argsort(-sims, kind="stable")[:top_k]
    for rank, idx in enumerate(order, start=1):
        click.echo(f"{rank}\t{owners[idx]}\t{frames[idx]}\t{sims[idx]:.6f}")


if __name__ == "__main__":
    main()
