"""Command-line interface: ``objdisco discover|eval|match|synth|propose|cache``."""
from __future__ import annotations

import dataclasses
import json
import logging
import sys
from pathlib import Path
from typing import Dict, List

import click
import numpy as np

from . import __version__
from .cache import DescriptorCache
from .config import ConfigError, PipelineConfig
from .dataset import ManifestError, ground_truth, load_manifest, read_image
from .descriptors import extract_patch_descriptors, to_grayscale
from .discovery import ObjectDiscovery
from .evaluation import EmptyEvaluationError, evaluate
from .phm import ProbabilisticHoughMatcher, write_matches_csv
from .proposals import (ProposalParseError, RegionSet, generate_proposals, load_proposals,
                        save_proposals)
from .synth import make_collection, write_collection
from .viz import draw_matches, draw_overlay, heat_map, save_png

logger = logging.getLogger("objdiscovery")

RESULTS_FILE = "results.json"
CONFIG_FILE = "effective_config.txt"


def _dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def config_options(fn):
    """Add one ``--key`` option per :class:`PipelineConfig` field."""
    for f in reversed(dataclasses.fields(PipelineConfig)):
        flag = f.name.replace("_", "-")
        if f.type == "bool":
            opt = click.option(f"--{flag}/--no-{flag}", f.name, default=None,
                               help=f"Override {f.name} (default {f.default}).")
        else:
            kind = int if f.type == "int" else float
            opt = click.option(f"--{flag}", f.name, type=kind, default=None,
                               help=f"Override {f.name} (default {f.default}).")
        fn = opt(fn)
    return click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
                        help="Config file with 'key = value' lines.")(fn)


def build_config(config_path, overrides: Dict) -> PipelineConfig:
    base = PipelineConfig.load(config_path) if config_path else PipelineConfig()
    names = {f.name for f in dataclasses.fields(PipelineConfig)}
    changes = {k: v for k, v in overrides.items() if k in names and v is not None}
    return base.replace(**changes)


@click.group()
@click.version_option(__version__, prog_name="objdisco")
@click.option("-v", "--verbose", count=True, help="Repeat for more logging.")
def main(verbose):
    """Unsupervised object discovery with probabilistic Hough matching."""
    level = logging.WARNING - 10 * min(verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


# -- discover -------------------------------------------------------------------

def _region_set(entry, image, config: PipelineConfig):
    height, width = image.shape[:2]
    if entry.proposal_path is not None:
        return load_proposals(entry.proposal_path, (width, height), entry.image_id,
                              config.max_proposals)
    return generate_proposals((width, height), config.generator, entry.image_id)


@main.command()
@click.argument("manifest", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@click.option("--heatmaps/--no-heatmaps", default=False, help="Also write confidence heat maps.")
@click.option("--overlays/--no-overlays", default=True, help="Write box overlays.")
@click.option("--cache/--no-cache", "use_cache", default=True, help="Use the descriptor cache.")
@click.option("--cache-dir", type=click.Path(file_okay=False), default=None,
              help="Cache directory (default $OBJDISCO_CACHE_DIR or ~/.cache/objdiscovery).")
@config_options
def discover(manifest, out_dir, heatmaps, overlays, use_cache, cache_dir, config_path, **kw):
    """Discover and localize objects in every image of MANIFEST."""
    try:
        config = build_config(config_path, kw)
        entries = load_manifest(manifest)
    except (ConfigError, ManifestError) as exc:
        raise click.ClickException(str(exc))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    config.save(out / CONFIG_FILE)

    images, region_sets, ids, failures = [], [], [], []
    for entry in entries:
        try:
            image = read_image(entry.image_path)
        except (OSError, ValueError) as exc:
            failures.append({"image_id": entry.image_id, "stage": "decode",
                             "error": f"{type(exc).__name__}: {exc}"})
            logger.warning("skipping %s: %s", entry.image_id, exc)
            continue
        try:
            rs = _region_set(entry, image, config)
        except (OSError, ProposalParseError) as exc:
            # keep the image with the full frame as its only region
            failures.append({"image_id": entry.image_id, "stage": "proposals",
                             "error": f"{type(exc).__name__}: {exc}"})
            logger.warning("%s: %s; using the full frame only", entry.image_id, exc)
            height, width = image.shape[:2]
            rs = RegionSet(entry.image_id, np.array([[0.0, 0.0, width, height]]), (width, height))
        images.append(image)
        region_sets.append(rs)
        ids.append(entry.image_id)

    def flush(records):
        _dump_json({"results": records, "failures": failures}, out / RESULTS_FILE)

    if len(images) < 2:
        flush([])
        raise click.ClickException(
            f"need at least two readable images, got {len(images)} ({len(failures)} failed)")

    cache = DescriptorCache(cache_dir) if use_cache else None
    est = ObjectDiscovery.from_config(config, cache=cache)
    est.fit(images, proposals=region_sets, image_ids=ids)
    records = est.records()
    flush(records)

    if overlays:
        (out / "overlays").mkdir(exist_ok=True)
    if heatmaps:
        (out / "heatmaps").mkdir(exist_ok=True)
    psis = _final_confidences(est)
    for image, rec, rs, psi in zip(images, records, est.region_sets_, psis):
        name = f"{rec['image_id']}.png"
        if overlays:
            save_png(draw_overlay(image, rec["box"], rec["part_boxes"]), out / "overlays" / name)
        if heatmaps:
            save_png(heat_map(rs.boxes, psi, rs.image_dims), out / "heatmaps" / name)
    click.echo(f"discovered {len(records)} images ({len(failures)} problems) -> {out / RESULTS_FILE}")


def _final_confidences(est: ObjectDiscovery) -> List[np.ndarray]:
    return [np.asarray(r.confidence) for r in est.results_]


# -- eval ------------------------------------------------------------------------

def load_results(path):
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    records = data["results"] if isinstance(data, dict) else data
    predictions = {str(r["image_id"]): r["box"] for r in records}
    neighbors = {str(r["image_id"]): [str(n) for n in r["neighbors"]] for r in records}
    return predictions, neighbors


@main.command("eval")
@click.argument("results", type=click.Path(exists=True, dir_okay=False))
@click.argument("manifest", type=click.Path(exists=True, dir_okay=False))
@click.option("--mode", type=click.Choice(["separate", "mixed"]), default="mixed")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
def eval_cmd(results, manifest, mode, out_dir):
    """Score RESULTS against the ground truth in MANIFEST."""
    try:
        entries = load_manifest(manifest)
        predictions, neighbors = load_results(results)
    except (ManifestError, KeyError, json.JSONDecodeError) as exc:
        raise click.ClickException(f"cannot read inputs: {exc}")
    gt = ground_truth(entries)
    missing_gt = sorted(i for i, ann in gt.items() if ann.labels and not ann.boxes)
    if missing_gt:
        raise click.ClickException(f"images labeled without ground-truth boxes: {missing_gt}")
    if not any(ann.labels for ann in gt.values()):
        raise click.ClickException("manifest has no ground truth")
    missing_pred = sorted(i for i, ann in gt.items() if ann.boxes and i not in predictions)
    if missing_pred:
        raise click.ClickException(f"images with ground truth but no result: {missing_pred}")
    gt = {i: ann for i, ann in gt.items() if i in predictions}
    try:
        report = evaluate(predictions, gt, neighbors, mode)
    except EmptyEvaluationError as exc:
        raise click.ClickException(str(exc))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "eval.json").write_text(report.to_json(), encoding="utf-8")
    (out / "eval.txt").write_text(report.to_text(), encoding="utf-8")
    if report.confusion is not None:
        (out / "confusion.csv").write_text(report.confusion_csv(), encoding="utf-8")
    click.echo(report.to_text(), nl=False)


# -- match -----------------------------------------------------------------------

def _match_inputs(path, proposals, config: PipelineConfig, image_id: str):
    try:
        image = read_image(path)
    except OSError as exc:
        raise click.ClickException(f"cannot decode {path}: {exc}")
    height, width = image.shape[:2]
    if proposals:
        rs = load_proposals(proposals, (width, height), image_id, config.max_proposals)
    else:
        rs = generate_proposals((width, height), config.generator, image_id)
    desc = extract_patch_descriptors(to_grayscale(image), rs.boxes, config.patch_size)
    return image, rs.with_descriptors(desc)


def _matcher(config: PipelineConfig) -> ProbabilisticHoughMatcher:
    return ProbabilisticHoughMatcher(
        config.dx_bins, config.dy_bins, config.dscale_bins, config.translation_range,
        config.log_scale_range, config.sigma, config.truncation, config.appearance_threshold,
        config.appearance_centered, config.appearance_power)


@main.command()
@click.argument("image_a", type=click.Path(exists=True, dir_okay=False))
@click.argument("image_b", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@click.option("--proposals-a", type=click.Path(exists=True, dir_okay=False))
@click.option("--proposals-b", type=click.Path(exists=True, dir_okay=False))
@click.option("--top", default=20, show_default=True, help="Number of greedy matches.")
@click.option("--dump-hough/--no-dump-hough", default=False, help="Write the raw Hough space.")
@config_options
def match(image_a, image_b, out_dir, proposals_a, proposals_b, top, dump_hough,
          config_path, **kw):
    """Match the regions of IMAGE_A against those of IMAGE_B."""
    try:
        config = build_config(config_path, kw)
    except ConfigError as exc:
        raise click.ClickException(str(exc))
    img_a, rs_a = _match_inputs(image_a, proposals_a, config, "a")
    img_b, rs_b = _match_inputs(image_b, proposals_b, config, "b")
    forward = _matcher(config).fit(rs_a, rs_b)
    backward = _matcher(config).fit(rs_b, rs_a, forward.similarity_.T)
    matches = forward.matches(top)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_matches_csv(matches, out / "matches.csv")
    save_png(draw_matches(img_a, img_b, rs_a.boxes, rs_b.boxes, matches), out / "matches.png")
    save_png(heat_map(rs_a.boxes, forward.region_confidence_, rs_a.image_dims),
             out / "heatmap_a.png")
    save_png(heat_map(rs_b.boxes, backward.region_confidence_, rs_b.image_dims),
             out / "heatmap_b.png")
    save_proposals(rs_a, out / "proposals_a.csv")
    save_proposals(rs_b, out / "proposals_b.csv")
    if dump_hough:
        forward.hough_.dump(out / "hough.bin")
    click.echo(f"{len(rs_a)} x {len(rs_b)} regions, {len(matches)} matches -> {out}")


# -- synth / propose / cache -----------------------------------------------------------

@main.command()
@click.argument("out_dir", type=click.Path(file_okay=False))
@click.option("--classes", default=1, show_default=True, type=click.IntRange(0))
@click.option("--images-per-class", default=40, show_default=True, type=click.IntRange(1))
@click.option("--outliers", default=0, show_default=True, type=click.IntRange(0))
@click.option("--size", default=128, show_default=True, type=click.IntRange(32))
@click.option("--seed", default=0, show_default=True, type=click.IntRange(0))
def synth(out_dir, classes, images_per_class, outliers, size, seed):
    """Write a planted-object collection with exact ground truth to OUT_DIR."""
    if classes == 0 and outliers == 0:
        raise click.ClickException("nothing to generate: no classes and no outliers")
    images = make_collection(classes, images_per_class if classes else 0, outliers, size, seed)
    manifest = write_collection(images, out_dir)
    n_boxes = sum(len(i.boxes) for i in images)
    click.echo(f"{len(images)} images, {n_boxes} ground-truth boxes -> {manifest}")


@main.command()
@click.argument("manifest", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@config_options
def propose(manifest, out_dir, config_path, **kw):
    """Run the built-in proposal generator on every image of MANIFEST.

    Writes one CSV per image plus ``manifest.json`` pointing at them.
    """
    try:
        config = build_config(config_path, kw)
        entries = load_manifest(manifest)
    except (ConfigError, ManifestError) as exc:
        raise click.ClickException(str(exc))
    out = Path(out_dir)
    (out / "proposals").mkdir(parents=True, exist_ok=True)
    records = []
    for entry in entries:
        try:
            image = read_image(entry.image_path)
        except OSError as exc:
            raise click.ClickException(f"cannot decode {entry.image_path}: {exc}")
        height, width = image.shape[:2]
        rs = generate_proposals((width, height), config.generator, entry.image_id)
        rel = f"proposals/{entry.image_id}.csv"
        save_proposals(rs, out / rel)
        click.echo(f"{entry.image_id}: {len(rs)} proposals")
        records.append({
            "image_id": entry.image_id,
            "image_path": str(entry.image_path.resolve()),
            "proposal_path": rel,
            "class_labels": entry.class_labels,
            "ground_truth_boxes": [{"label": lbl, "box": list(box.as_tuple())}
                                   for lbl, box in entry.ground_truth_boxes],
        })
    _dump_json(records, out / "manifest.json")


@main.group()
def cache():
    """Inspect or clear the descriptor cache."""


@cache.command("info")
@click.option("--cache-dir", type=click.Path(file_okay=False), default=None)
def cache_info(cache_dir):
    info = DescriptorCache(cache_dir).info()
    click.echo(f"directory: {info.directory}\nentries: {info.entries}\nbytes: {info.bytes}")


@cache.command("clear")
@click.option("--cache-dir", type=click.Path(file_okay=False), default=None)
def cache_clear(cache_dir):
    removed = DescriptorCache(cache_dir).clear()
    click.echo(f"removed {removed} entries")


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
