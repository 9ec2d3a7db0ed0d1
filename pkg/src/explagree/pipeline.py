"""End-to-end orchestration.

Each stage reads the previous stage's files from the output directory, so
stages can be re-run on their own:

    data/{train,eval}/   images (XATT1) + labels.csv          gen-data
    model.xvit           trained checkpoint + train.json     train
    maps/<image>/        one XATT1 map per method            attribute
    masks/<image>/       one XMSK1 mask per method           binarize
    results/             IoU / CR matrices as CSV            compare
    report/              SVG heatmaps, PGM overlays          report
    manifest.json        run manifest (deterministic)
    timings.json         wall-clock timings (not deterministic)
"""
from __future__ import annotations

import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import _kernels
from .agreement import CR_ORIENTATION, aggregate, pairwise_matrices
from .attribution import (DISPLAY_NAMES, attention_rollout, beyond_attention, gradient_shap,
                          integrated_gradients, kernel_shap, lime_attribution, segment_grid)
from .config import ConfigError, PipelineConfig
from .io import (read_checkpoint, read_image, read_map, read_mask, read_matrix_csv, write_checkpoint,
                 write_map, write_mask, write_matrix_csv, write_pgm)
from .maps import AttributionMap
from .maskpipe import binarize
from .report import render_heatmap, render_overlay
from .shapes import CLASS_NAMES, ShapesDataset, gen_shapes_dataset
from .vit import ToyViT, accuracy, init_params, train

log = logging.getLogger(__name__)

WORKERS_ENV = "EXPLAGREE_WORKERS"
METRIC_NAMES = ("iou", "cr")


def worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV, "").strip()
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{WORKERS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(f"{WORKERS_ENV} must be a positive integer, got {raw!r}")
    return n


def image_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def _write_json(path: Path, obj) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def _read_json(path: Path):
    with open(path, encoding="utf-8") as f:
        return json.load(f)


def _ordered_map(fn, items, workers: int) -> list:
    """``map`` preserving input order; results are collected before any reduction."""
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _class_name(label: int) -> str:
    return CLASS_NAMES[label] if 0 <= label < len(CLASS_NAMES) else "unlabeled"


# --- data & model ---------------------------------------------------------


def gen_data(cfg: PipelineConfig, out: Path) -> dict:
    vcfg = cfg.vit_config()
    summary = {}
    for split, n, seed in (("train", cfg.n_train, cfg.seed), ("eval", cfg.n_eval, cfg.seed + 1)):
        ds = gen_shapes_dataset(n, seed, vcfg)
        d = out / "data" / split
        d.mkdir(parents=True, exist_ok=True)
        rows = ["image_id,label"]
        for i, (img, label) in enumerate(zip(ds.images, ds.labels)):
            image_id = f"{split}_{i:04d}"
            write_map(d / f"{image_id}.xatt", img)
            rows.append(f"{image_id},{int(label)}")
        (d / "labels.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")
        summary[split] = n
    return summary


def load_split(out: Path, split: str) -> tuple[list[str], np.ndarray, np.ndarray]:
    d = out / "data" / split
    lines = (d / "labels.csv").read_text(encoding="utf-8").splitlines()[1:]
    ids, labels = [], []
    for line in lines:
        image_id, label = line.split(",")
        ids.append(image_id)
        labels.append(int(label))
    images = np.stack([read_map(d / f"{i}.xatt") for i in ids])
    return ids, images, np.array(labels, dtype=np.int64)


def train_model(cfg: PipelineConfig, out: Path) -> dict:
    if not (out / "data" / "train" / "labels.csv").exists():
        gen_data(cfg, out)
    _, images, labels = load_split(out, "train")
    params = train(init_params(cfg.vit_config()), ShapesDataset(images, labels), cfg.epochs, cfg.learning_rate,
                   cfg.batch_size, cfg.momentum)
    write_checkpoint(out / "model.xvit", params)
    info = {"train_accuracy": accuracy(params, images, labels), "n_train": int(len(labels))}
    _write_json(out / "train.json", info)
    log.info("training accuracy %.4f", info["train_accuracy"])
    return info


# --- attribution ------------------------------------------------------------


def compute_attribution(method: str, model: ToyViT, image: np.ndarray, target: int,
                        cfg: PipelineConfig, seed: int, image_id: str = "") -> AttributionMap:
    if method == "integrated_gradients":
        return integrated_gradients(model, image, target, steps=cfg.ig_steps, image_id=image_id)
    if method == "gradient_shap":
        return gradient_shap(model, image, target, cfg.gs_samples, cfg.gs_sigma, seed, image_id=image_id)
    if method == "lime":
        return lime_attribution(model.predict_proba, image, target, segment_grid(cfg.image_size, cfg.grid_side),
                                cfg.lime_samples, cfg.lime_lambda, cfg.lime_kernel_width, seed, image_id)
    if method == "kernel_shap":
        return kernel_shap(model.predict_proba, image, target, segment_grid(cfg.image_size, cfg.grid_side),
                           cfg.kshap_samples, False, seed, image_id)
    if method == "attention_rollout":
        return attention_rollout(model.forward(image), image_id)
    if method == "beyond_attention":
        trace, grads = model.attention_gradients(image, target)
        return beyond_attention(trace, grads, target, image_id)
    raise ConfigError(f"unknown method {method!r}")


def _load_inputs(out: Path, images: list | None):
    if images is None:
        if not (out / "data" / "eval" / "labels.csv").exists():
            raise FileNotFoundError("no evaluation data: run gen-data first or pass --images")
        return load_split(out, "eval")
    ids = [f"input_{i:04d}" for i in range(len(images))]
    return ids, np.stack([read_image(p) for p in images]), np.full(len(images), -1, dtype=np.int64)


def attribute(cfg: PipelineConfig, out: Path, images: list | None = None) -> dict:
    model_path = out / "model.xvit"
    if not model_path.exists():
        raise FileNotFoundError(f"{model_path} not found: run train first")
    model = ToyViT(read_checkpoint(model_path))
    ids, imgs, labels = _load_inputs(out, images)
    if cfg.target_policy == "true_label" and np.any(labels < 0):
        raise ConfigError("target_policy=true_label needs labelled images")

    def one(i):
        image_id, image, label = ids[i], imgs[i], int(labels[i])
        predicted = model.forward(image).predicted
        target = predicted if cfg.target_policy == "predicted" else label
        seed = image_seed(cfg.seed, i)
        rec = {"index": i, "image_id": image_id, "label": label, "predicted": predicted,
               "target_class": target, "maps": {}}
        failures = []
        d = out / "maps" / image_id
        d.mkdir(parents=True, exist_ok=True)
        for method in cfg.methods:
            try:
                amap = compute_attribution(method, model, image, target, cfg, seed, image_id)
                path = d / f"{method}.xatt"
                write_map(path, amap)
                rec["maps"][method] = {"path": path.relative_to(out).as_posix(),
                                       "granularity": amap.granularity,
                                       "target_class": amap.target_class}
            except Exception as exc:  # recorded, pipeline continues
                failures.append({"image_id": image_id, "method": method, "stage": "attribute",
                                 "error": f"{type(exc).__name__}: {exc}"})
        return rec, failures

    results = _ordered_map(one, range(len(ids)), worker_count())
    doc = {"images": [r for r, _ in results], "failures": [f for _, fs in results for f in fs]}
    if images is not None:
        src = out / "data" / "inputs"
        src.mkdir(parents=True, exist_ok=True)
        for image_id, img in zip(ids, imgs):
            write_map(src / f"{image_id}.xatt", img)
        doc["input_dir"] = "data/inputs"
    _write_json(out / "attributions.json", doc)
    return doc


def binarize_maps(cfg: PipelineConfig, out: Path) -> dict:
    doc = _read_json(out / "attributions.json")
    bcfg = cfg.binarize_config()
    failures = list(doc["failures"])
    degenerate = {m: 0 for m in cfg.methods}
    for rec in doc["images"]:
        rec["masks"] = {}
        d = out / "masks" / rec["image_id"]
        d.mkdir(parents=True, exist_ok=True)
        for method, info in rec["maps"].items():
            try:
                amap = AttributionMap(read_map(out / info["path"]), method, info["target_class"],
                                      info["granularity"], rec["image_id"])
                mask = binarize(amap, bcfg)
                path = d / f"{method}.xmsk"
                write_mask(path, mask)
                rec["masks"][method] = {"path": path.relative_to(out).as_posix(),
                                        "degenerate": mask.degenerate, "area": mask.area}
                degenerate[method] = degenerate.get(method, 0) + int(mask.degenerate)
            except Exception as exc:
                failures.append({"image_id": rec["image_id"], "method": method, "stage": "binarize",
                                 "error": f"{type(exc).__name__}: {exc}"})
    doc["failures"] = failures
    doc["degenerate_masks"] = degenerate
    _write_json(out / "masks.json", doc)
    return doc


# --- comparison & report ------------------------------------------------------


def _require_pairs(cfg: PipelineConfig) -> None:
    if len(cfg.methods) < 2:
        raise ConfigError(f"need ≥2 methods for pairwise comparison, got {len(cfg.methods)}")


def compare(cfg: PipelineConfig, out: Path) -> dict:
    _require_pairs(cfg)
    doc = _read_json(out / "masks.json")
    methods = list(cfg.methods)
    per_image = {"iou": [], "cr": []}
    groups, skipped = [], []
    for rec in doc["images"]:
        if any(m not in rec.get("masks", {}) for m in methods):
            skipped.append(rec["image_id"])
            continue
        masks = {m: read_mask(out / rec["masks"][m]["path"]) for m in methods}
        iou_m, cr_m = pairwise_matrices(masks)
        per_image["iou"].append(iou_m)
        per_image["cr"].append(cr_m)
        groups.append(_class_name(rec["label"]))
    if not groups:
        raise ConfigError("no image has masks for every enabled method")

    results = out / "results"
    results.mkdir(parents=True, exist_ok=True)
    files, summary = [], {}
    for metric in METRIC_NAMES:
        overall = aggregate(per_image[metric])
        path = results / f"{metric}_overall.csv"
        write_matrix_csv(overall, path)
        files.append(path.relative_to(out).as_posix())
        by_class = aggregate(per_image[metric], "per_class", groups)
        for name, mat in by_class.items():
            path = results / f"{metric}_class_{name}.csv"
            write_matrix_csv(mat, path)
            files.append(path.relative_to(out).as_posix())
        summary[metric] = {
            "n_images": overall.n_images,
            "n_pairs_counted": overall.n_pairs_counted.tolist(),
            "n_excluded": overall.n_excluded.tolist(),
            "class_counts": {name: mat.n_images for name, mat in by_class.items()},
        }
    info = {"methods": methods, "csv": files, "skipped_images": skipped, "metrics": summary,
            "cr_orientation": CR_ORIENTATION, "trend_check": trend_check(aggregate(per_image["iou"]))}
    _write_json(out / "agreement.json", info)
    return info


def trend_check(iou_overall) -> dict:
    """Same-family pairs should agree more than cross-family pairs."""
    pairs = {
        "lime_vs_kernel_shap": ("lime", "kernel_shap"),
        "lime_vs_attention_rollout": ("lime", "attention_rollout"),
        "ig_vs_gradient_shap": ("integrated_gradients", "gradient_shap"),
        "ig_vs_attention_rollout": ("integrated_gradients", "attention_rollout"),
    }
    if not all(a in iou_overall.methods and b in iou_overall.methods for a, b in pairs.values()):
        return {"evaluated": False}
    vals = {k: iou_overall.get(a, b) for k, (a, b) in pairs.items()}
    return {
        "evaluated": True,
        "mean_iou": vals,
        "perturbation_family_holds": vals["lime_vs_kernel_shap"] > vals["lime_vs_attention_rollout"],
        "gradient_family_holds": vals["ig_vs_gradient_shap"] > vals["ig_vs_attention_rollout"],
    }


def report(cfg: PipelineConfig, out: Path) -> dict:
    _require_pairs(cfg)
    agreement_info = _read_json(out / "agreement.json")
    masks_doc = _read_json(out / "masks.json")
    rep = out / "report"
    rep.mkdir(parents=True, exist_ok=True)
    svgs = []
    for csv_rel in agreement_info["csv"]:
        name = Path(csv_rel).stem
        metric = name.split("_", 1)[0]
        mat = read_matrix_csv(out / csv_rel, metric)
        counts = agreement_info["metrics"][metric]
        mat.n_images = (counts["n_images"] if name.endswith("_overall")
                        else counts["class_counts"][name.split("_class_", 1)[1]])
        labels = [DISPLAY_NAMES.get(m, m) for m in mat.methods]
        scope = name.split("_", 1)[1].replace("class_", "class ")
        path = rep / f"{name}.svg"
        render_heatmap(mat, path, labels, f"{metric.upper()} ({scope})")
        svgs.append(path.relative_to(out).as_posix())

    overlays = []
    odir = rep / "overlays"
    odir.mkdir(parents=True, exist_ok=True)
    source_dir = masks_doc.get("input_dir", "data/eval")
    for rec in masks_doc["images"][:cfg.overlay_images]:
        image = read_map(out / source_dir / f"{rec['image_id']}.xatt")
        src = odir / f"{rec['image_id']}_input.pgm"
        write_pgm(src, image)
        overlays.append(src.relative_to(out).as_posix())
        for method, info in rec.get("masks", {}).items():
            path = odir / f"{rec['image_id']}_{method}.pgm"
            render_overlay(image, read_mask(out / info["path"]), path)
            overlays.append(path.relative_to(out).as_posix())

    return {"svg": svgs, "overlays": overlays}


def _manifest(cfg: PipelineConfig, out: Path, report_info: dict) -> dict:
    masks_doc = _read_json(out / "masks.json")
    agreement_info = _read_json(out / "agreement.json")
    train_info = _read_json(out / "train.json") if (out / "train.json").exists() else {}
    snapshot = cfg.snapshot()
    snapshot.pop("out_dir")
    images = []
    for rec in masks_doc["images"]:
        images.append({
            "image_id": rec["image_id"],
            "label": rec["label"],
            "predicted": rec["predicted"],
            "target_class": rec["target_class"],
            "maps": {m: i["path"] for m, i in rec["maps"].items()},
            "masks": {m: i["path"] for m, i in rec.get("masks", {}).items()},
        })
    return {
        "config": snapshot,
        "model": {"path": "model.xvit", **train_info},
        "images": images,
        "n_map_files": sum(len(r["maps"]) for r in images),
        "n_mask_files": sum(len(r["masks"]) for r in images),
        "degenerate_masks": masks_doc.get("degenerate_masks", {}),
        "exclusions": {m: v["n_excluded"] for m, v in agreement_info["metrics"].items()},
        "failures": masks_doc["failures"],
        "cr_orientation": CR_ORIENTATION,
        "results": agreement_info["csv"],
        "report": report_info,
        "trend_check": agreement_info["trend_check"],
    }


def write_report(cfg: PipelineConfig, out: Path) -> dict:
    info = report(cfg, out)
    manifest = _manifest(cfg, out, info)
    _write_json(out / "manifest.json", manifest)
    return manifest


def run_pipeline(cfg: PipelineConfig, out: Path | str | None = None) -> dict:
    """All stages in order; returns the manifest."""
    _require_pairs(cfg)
    out = Path(out or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    timings = {}
    stages = [
        ("gen-data", lambda: gen_data(cfg, out)),
        ("train", lambda: train_model(cfg, out)),
        ("attribute", lambda: attribute(cfg, out)),
        ("binarize", lambda: binarize_maps(cfg, out)),
        ("compare", lambda: compare(cfg, out)),
        ("report", lambda: write_report(cfg, out)),
    ]
    manifest = None
    for name, fn in stages:
        t0 = time.perf_counter()
        manifest = fn()
        timings[name] = round(time.perf_counter() - t0, 3)
        log.info("%s finished in %.2fs", name, timings[name])
    timings["total"] = round(sum(timings.values()), 3)
    _write_json(out / "timings.json", {"seconds": timings, "workers": worker_count(),
                                        "kernel_backend": _kernels.BACKEND})
    return manifest
