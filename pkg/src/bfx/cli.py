"""Pipeline driver tying the stages together.

Subcommands: targets, fuse, extract, eval, tile, split, lossmath, lr,
cutmix. Every stage resolves its configuration as flags over config-file
values over defaults, validates ranges, and echoes the effective config to
a JSON sidecar next to its outputs together with a run manifest (inputs,
outputs, config hash). Writes are atomic, so a failed run leaves no
partial artifacts.

Exit status: 0 on success, 1 on validation/usage errors, 2 on I/O errors.

Paths in sidecars are stored relative to the sidecar's directory, and the
config hash covers only result-affecting parameters (never paths or the
thread count), so reruns of the same computation produce byte-identical
artifacts regardless of where they are written or how wide the pool is.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import annotations, dataprep, evaluate, extract, formats, fusion
from . import targets as targets_mod
from . import trainmath
from .targets import CHANNEL_NAMES, TargetStack

VIEW_SUFFIXES = (("identity", "id"), ("hflip", "hf"), ("vflip", "vf"), ("rot180", "r180"))


class ValidationError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems become exit status 1
        raise ValidationError(message)


# ---------------------------------------------------------------------------
# configuration plumbing
# ---------------------------------------------------------------------------

# per-stage defaults; None marks "must be provided by flag or config file"
STAGE_DEFAULTS: dict[str, dict] = {
    "targets": {"annotations": None, "out_dir": None, "height": 512, "width": 512,
                "format": "pgm", "erosion_iterations": 2, "threads": None},
    "fuse": {"inputs": None, "out": None, "threshold": 0.3, "tta": False, "threads": None},
    "extract": {"input": None, "building": None, "border": None, "spacing": None,
                "mode": "multi", "threshold": 0.3, "min_area": 140, "no_spacing": False,
                "image_id": None, "out_geojson": None, "out_imap": None, "threads": None},
    "eval": {"pred": None, "gt": None, "iou": 0.5, "colormap": None, "csv": None,
             "report": None, "threads": None},
    "tile": {"raster": None, "size": 1024, "nodata": 0, "index": None, "threads": None},
    "split": {"index": None, "k": 5, "out": None, "threads": None},
    "lossmath": {"op": None, "pred": None, "gt": None, "channel": 0, "beta": 1.0,
                 "eps": 1e-4, "gamma1": 0.5, "gamma2": 0.5, "clamp": 1e-7,
                 "w_building": 1.0, "w_border": 2.0, "w_spacing": 2.0, "step": 1e-5,
                 "threads": None},
    "lr": {"schedule": None, "out": None, "total_epochs": 100, "up_epochs": 40,
           "lr_init": 0.0001 / 20, "lr_max": 0.0001, "lr_final": (0.0001 / 20) / 1000,
           "poly_power": 0.9, "poly_lr0": 0.001, "poly_recursive": False, "threads": None},
    "cutmix": {"image_a": None, "masks_a": None, "image_b": None, "masks_b": None,
               "seed": None, "box": None, "out_image": None, "out_masks": None,
               "threads": None},
}

# keys holding paths: relativized in sidecars, excluded from the config hash
STAGE_PATH_KEYS: dict[str, set[str]] = {
    "targets": {"annotations", "out_dir"},
    "fuse": {"inputs", "out"},
    "extract": {"input", "building", "border", "spacing", "out_geojson", "out_imap"},
    "eval": {"pred", "gt", "colormap", "csv", "report"},
    "tile": {"raster", "index"},
    "split": {"index", "out"},
    "lossmath": {"pred", "gt"},
    "lr": {"out"},
    "cutmix": {"image_a", "masks_a", "image_b", "masks_b", "out_image", "out_masks"},
}

STAGE_REQUIRED: dict[str, set[str]] = {
    "targets": {"annotations", "out_dir"},
    "fuse": {"inputs", "out"},
    "extract": {"out_geojson", "out_imap"},
    "eval": {"pred", "gt"},
    "tile": {"raster", "index"},
    "split": {"index"},
    "lossmath": {"op", "pred", "gt"},
    "lr": {"schedule", "out"},
    "cutmix": {"image_a", "masks_a", "image_b", "masks_b", "out_image", "out_masks"},
}


def build_parser() -> _Parser:
    parser = _Parser(prog="bfx", description="Building-footprint extraction pipeline")
    sub = parser.add_subparsers(dest="stage")

    def stage(name, **kw):
        s = sub.add_parser(name, **kw)
        s.add_argument("--config", help="JSON config file; flags override its values")
        s.add_argument("--threads", type=int, help="worker pool size (results never depend on it)")
        return s

    s = stage("targets", help="generate ground-truth channels from annotations")
    s.add_argument("--annotations", help="annotation JSON or GeoJSON")
    s.add_argument("--out-dir", dest="out_dir")
    s.add_argument("--height", type=int)
    s.add_argument("--width", type=int)
    s.add_argument("--format", choices=("pgm", "pmap"))
    s.add_argument("--erosion-iterations", dest="erosion_iterations", type=int)

    s = stage("fuse", help="average probability maps and binarize")
    s.add_argument("inputs", nargs="*", help="PMAP1 files (or fold prefixes with --tta)")
    s.add_argument("--out", help="fused PMAP1 path")
    s.add_argument("--threshold", type=float)
    s.add_argument("--tta", action="store_true", default=None,
                   help="expect 4 views per fold: .id/.hf/.vf/.r180 before the extension")

    s = stage("extract", help="vectorize instances from fused masks")
    s.add_argument("--mode", choices=("single", "multi"))
    s.add_argument("--in", dest="input", help="PMAP1 stack (or building PGM in single mode)")
    s.add_argument("--building", help="building PGM (multi mode without a PMAP)")
    s.add_argument("--border", help="border PGM")
    s.add_argument("--spacing", help="spacing PGM")
    s.add_argument("--threshold", type=float)
    s.add_argument("--min-area", dest="min_area", type=int)
    s.add_argument("--no-spacing", dest="no_spacing", action="store_true", default=None,
                   help="ignore the spacing channel during extraction")
    s.add_argument("--image-id", dest="image_id")
    s.add_argument("--out-geojson", dest="out_geojson")
    s.add_argument("--out-imap", dest="out_imap")

    s = stage("eval", help="object-level scoring of predictions against ground truth")
    s.add_argument("--pred", help="GeoJSON or IMAP1 file, or a directory of them")
    s.add_argument("--gt", help="GeoJSON or IMAP1 file, or a directory of them")
    s.add_argument("--iou", type=float)
    s.add_argument("--colormap", help="output PPM (directory inputs: a directory)")
    s.add_argument("--csv", help="per-image counts CSV")
    s.add_argument("--report", help="JSON report")

    s = stage("tile", help="index a source raster into fixed-size tiles")
    s.add_argument("--raster", help="source PGM raster")
    s.add_argument("--size", type=int)
    s.add_argument("--nodata", type=int)
    s.add_argument("--index", help="output tile-index JSON")

    s = stage("split", help="assign k folds to a tile index")
    s.add_argument("--index", help="tile-index JSON to read")
    s.add_argument("--k", type=int)
    s.add_argument("--out", help="output path (default: rewrite --index)")

    s = stage("lossmath", help="loss values and gradient checks on file pairs")
    s.add_argument("op", nargs="?", choices=("dice", "bce", "channel", "total", "gradcheck"))
    s.add_argument("--pred", help="prediction PMAP1")
    s.add_argument("--gt", nargs="+", help="ground-truth PGM(s), one per channel for 'total'")
    s.add_argument("--channel", type=int)
    s.add_argument("--beta", type=float)
    s.add_argument("--eps", type=float)
    s.add_argument("--gamma1", type=float)
    s.add_argument("--gamma2", type=float)
    s.add_argument("--clamp", type=float)
    s.add_argument("--w-building", dest="w_building", type=float)
    s.add_argument("--w-border", dest="w_border", type=float)
    s.add_argument("--w-spacing", dest="w_spacing", type=float)
    s.add_argument("--step", type=float, help="finite-difference step for gradcheck")

    s = stage("lr", help="dump a learning-rate schedule as CSV")
    s.add_argument("--schedule", choices=("poly", "onecycle"))
    s.add_argument("--out")
    s.add_argument("--total-epochs", dest="total_epochs", type=int)
    s.add_argument("--up-epochs", dest="up_epochs", type=int)
    s.add_argument("--lr-init", dest="lr_init", type=float)
    s.add_argument("--lr-max", dest="lr_max", type=float)
    s.add_argument("--lr-final", dest="lr_final", type=float)
    s.add_argument("--poly-power", dest="poly_power", type=float)
    s.add_argument("--poly-lr0", dest="poly_lr0", type=float)
    s.add_argument("--poly-recursive", dest="poly_recursive", action="store_true", default=None,
                   help="use the literal per-epoch recurrence instead of the closed form")

    s = stage("cutmix", help="paste a box from sample B into sample A")
    s.add_argument("--image-a", dest="image_a", help="PMAP1 image raster")
    s.add_argument("--masks-a", dest="masks_a", help="3-channel PMAP1 target stack")
    s.add_argument("--image-b", dest="image_b")
    s.add_argument("--masks-b", dest="masks_b")
    s.add_argument("--seed", type=int, help="RNG seed (required unless --box is given)")
    s.add_argument("--box", help="explicit half-open box r0,c0,r1,c1")
    s.add_argument("--out-image", dest="out_image")
    s.add_argument("--out-masks", dest="out_masks")
    return parser


def effective_config(stage: str, args: argparse.Namespace) -> dict:
    """Merge defaults <- config file <- explicit flags, then validate."""
    defaults = STAGE_DEFAULTS[stage]
    cfg = dict(defaults)
    if args.config is not None:
        with open(args.config, "r", encoding="utf-8") as f:
            doc = json.load(f)
        if not isinstance(doc, dict):
            raise ValidationError("config file must hold a JSON object")
        for key, value in doc.items():
            k = key.replace("-", "_")
            if k not in defaults:
                raise ValidationError(f"unknown config key {key!r} for stage {stage!r}")
            cfg[k] = value
    for k, v in vars(args).items():
        if k in ("stage", "config") or k not in defaults:
            continue
        if v is None or (k == "inputs" and v == []):
            continue
        cfg[k] = v
    _validate(stage, cfg)
    return cfg


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ValidationError(message)


def _validate(stage: str, cfg: dict) -> None:
    for key in STAGE_REQUIRED[stage]:
        _require(cfg.get(key) is not None, f"{stage}: missing required parameter --{key.replace('_', '-')}")
    multi_path_keys = {"fuse": ("inputs",), "lossmath": ("gt",)}.get(stage, ())
    for key in multi_path_keys:
        # multi-valued path parameters also arrive via config files
        if cfg.get(key) is not None:
            if isinstance(cfg[key], str):
                cfg[key] = [cfg[key]]
            _require(isinstance(cfg[key], list) and all(isinstance(p, str) for p in cfg[key]),
                     f"{stage}: {key} must be a path or list of paths")
    rng_checks = {
        "threshold": lambda v: 0.0 <= v <= 1.0,
        "iou": lambda v: 0.0 <= v <= 1.0,
        "min_area": lambda v: v >= 0,
        "k": lambda v: v >= 2,
        "size": lambda v: v >= 1,
        "nodata": lambda v: 0 <= v <= 255,
        "threads": lambda v: v >= 1,
        "height": lambda v: v >= 1,
        "width": lambda v: v >= 1,
        "channel": lambda v: v >= 0,
        "erosion_iterations": lambda v: v >= 0,
        "seed": lambda v: v >= 0,
        "step": lambda v: v > 0,
        "eps": lambda v: v > 0,
        "clamp": lambda v: 0.0 < v < 0.5,
        "beta": lambda v: v >= 0,
        "total_epochs": lambda v: v >= 2,
        "up_epochs": lambda v: v >= 1,
        "poly_lr0": lambda v: v > 0,
    }
    for key, ok in rng_checks.items():
        if key in cfg and cfg[key] is not None and not ok(cfg[key]):
            raise ValidationError(f"{stage}: parameter {key}={cfg[key]!r} out of range")
    if stage == "cutmix":
        _require(cfg["seed"] is not None or cfg["box"] is not None,
                 "cutmix: --seed is mandatory when no explicit --box is given")
        if cfg["box"] is not None:
            cfg["box"] = _parse_box(cfg["box"])
    if stage == "extract":
        if cfg["mode"] == "multi":
            _require(cfg["input"] is not None or (cfg["building"] and cfg["border"]),
                     "extract: multi mode needs --in or --building/--border")
        else:
            _require(cfg["input"] is not None, "extract: single mode needs --in")
    if stage == "eval":
        _require(any(cfg[k] for k in ("colormap", "csv", "report")),
                 "eval: need at least one of --colormap/--csv/--report")
    if stage == "lossmath" and cfg["op"] != "total":
        _require(len(cfg["gt"]) == 1, f"lossmath {cfg['op']}: expected exactly one --gt mask")


def _parse_box(value) -> list[int]:
    if isinstance(value, (list, tuple)):
        parts = list(value)
    else:
        parts = str(value).split(",")
    if len(parts) != 4:
        raise ValidationError(f"box must be r0,c0,r1,c1, got {value!r}")
    try:
        return [int(p) for p in parts]
    except ValueError:
        raise ValidationError(f"box must hold integers, got {value!r}") from None


# ---------------------------------------------------------------------------
# shared helpers
# ---------------------------------------------------------------------------


def _pool_map(fn, items, threads):
    items = list(items)
    n = threads if threads is not None else (os.cpu_count() or 1)
    if n <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items))  # order-stable collection


def _canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n"


def _channel_name(i: int) -> str:
    return CHANNEL_NAMES[i] if i < len(CHANNEL_NAMES) else f"ch{i}"


def _safe_image_id(image_id: str) -> str:
    if not image_id or any(sep in image_id for sep in ("/", "\\")) or image_id.startswith("."):
        raise ValidationError(f"image id {image_id!r} is not usable as a file stem")
    return image_id


def _finish_run(stage: str, cfg: dict, inputs: list[str], outputs: list[str], primary: str) -> None:
    """Write the effective-config sidecar and the run manifest."""
    base_dir = os.path.dirname(os.path.abspath(primary)) or "."

    def rel(p: str) -> str:
        return os.path.relpath(os.path.abspath(p), base_dir)

    path_keys = STAGE_PATH_KEYS[stage]
    echo = {}
    hashed = {"stage": stage}
    for key in sorted(cfg):
        if key == "threads":
            continue
        value = cfg[key]
        if key in path_keys and value is not None:
            echo[key] = [rel(v) for v in value] if isinstance(value, list) else rel(value)
        else:
            echo[key] = value
            hashed[key] = value
    config_hash = hashlib.sha256(_canonical_json(hashed).encode("utf-8")).hexdigest()

    config_path = primary + ".config.json"
    manifest_path = primary + ".manifest.json"
    formats.atomic_write_text(config_path, _canonical_json(
        {"stage": stage, "config": echo, "config_hash": config_hash}))
    formats.atomic_write_text(manifest_path, _canonical_json(
        {"stage": stage, "inputs": [rel(p) for p in inputs],
         "outputs": [rel(p) for p in outputs], "config_hash": config_hash}))


# ---------------------------------------------------------------------------
# stage runners: each returns (inputs, outputs, primary stem or None)
# ---------------------------------------------------------------------------


def run_targets(cfg: dict):
    with open(cfg["annotations"], "r", encoding="utf-8") as f:
        doc = json.load(f)
    per_image = annotations.ingest_annotations(doc)
    out_dir = cfg["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    items = sorted(per_image.items())
    for image_id, _ in items:
        _safe_image_id(image_id)

    def work(item):
        image_id, rings = item
        return image_id, targets_mod.assemble_targets(
            rings, cfg["height"], cfg["width"], cfg["erosion_iterations"])

    outputs = []
    for image_id, stack in _pool_map(work, items, cfg["threads"]):
        if cfg["format"] == "pmap":
            path = os.path.join(out_dir, f"{image_id}.pmap")
            formats.write_pmap(path, stack.to_probmap())
            outputs.append(path)
        else:
            for name, mask in zip(CHANNEL_NAMES, (stack.building, stack.border, stack.spacing)):
                path = os.path.join(out_dir, f"{image_id}.{name}.pgm")
                formats.write_pgm(path, mask)
                outputs.append(path)
    return [cfg["annotations"]], outputs, os.path.join(out_dir, "targets")


def run_fuse(cfg: dict):
    inputs = []
    outputs = []
    if cfg["tta"]:
        per_fold = []
        for prefix in cfg["inputs"]:
            stem, ext = os.path.splitext(prefix)
            views = {}
            for view, suffix in VIEW_SUFFIXES:
                path = f"{stem}.{suffix}{ext}"
                views[view] = formats.read_pmap(path)
                inputs.append(path)
            folded = fusion.tta_average(views)
            tta_path = f"{stem}.tta{ext}"
            formats.write_pmap(tta_path, folded)  # per-fold intermediate
            outputs.append(tta_path)
            per_fold.append(folded)
        fused = fusion.ensemble_average(per_fold)
    else:
        inputs = list(cfg["inputs"])
        fused = fusion.ensemble_average([formats.read_pmap(p) for p in inputs])

    formats.write_pmap(cfg["out"], fused)
    outputs.append(cfg["out"])
    stem = os.path.splitext(cfg["out"])[0]
    for i in range(fused.shape[0]):
        path = f"{stem}.{_channel_name(i)}.pgm"
        formats.write_pgm(path, fusion.binarize(fused, i, cfg["threshold"]))
        outputs.append(path)
    return inputs, outputs, stem


def run_extract(cfg: dict):
    inputs = []
    if cfg["input"] is not None:
        inputs.append(cfg["input"])
        if cfg["input"].endswith(".pgm"):
            _require(cfg["mode"] == "single", "extract: PGM input is only valid in single mode")
            stack = formats.read_pgm(cfg["input"]).astype(np.float32)[None]
        else:
            stack = formats.read_pmap(cfg["input"])
        default_id = os.path.splitext(os.path.basename(cfg["input"]))[0]
    else:
        planes = [formats.read_pgm(cfg["building"]), formats.read_pgm(cfg["border"])]
        inputs += [cfg["building"], cfg["border"]]
        if cfg["spacing"]:
            planes.append(formats.read_pgm(cfg["spacing"]))
            inputs.append(cfg["spacing"])
        stack = np.stack([p.astype(np.float32) for p in planes])
        default_id = os.path.splitext(os.path.basename(cfg["building"]))[0]
    image_id = cfg["image_id"] if cfg["image_id"] is not None else default_id

    if cfg["mode"] == "single":
        building = fusion.binarize(stack, 0, cfg["threshold"])
        labels = extract.single_class_instances(building, cfg["min_area"])
    else:
        labels = extract.multi_class_instances(
            stack, cfg["threshold"], cfg["min_area"], use_spacing=not cfg["no_spacing"])
    ps = extract.polygonize(labels, image_id)

    formats.atomic_write_text(cfg["out_geojson"], _canonical_json(extract.polygon_set_to_geojson(ps)))
    formats.write_imap(cfg["out_imap"], labels)
    outputs = [cfg["out_geojson"], cfg["out_imap"]]
    return inputs, outputs, os.path.splitext(cfg["out_geojson"])[0]


def _load_instance_map(path: str) -> np.ndarray:
    if path.endswith(".imap"):
        return formats.read_imap(path)
    with open(path, "r", encoding="utf-8") as f:
        doc = json.load(f)
    return evaluate.rasterize_polygon_set(extract.polygon_set_from_geojson(doc))


def _eval_pairs(pred: str, gt: str) -> list[tuple[str, str, str]]:
    if os.path.isdir(pred) != os.path.isdir(gt):
        raise ValidationError("eval: --pred and --gt must both be files or both directories")
    if not os.path.isdir(pred):
        image_id = os.path.splitext(os.path.basename(pred))[0]
        return [(image_id, pred, gt)]
    # bare .json is accepted as a single-file GeoJSON input but not scanned in
    # directory mode, where it would collide with the run sidecars
    known = (".imap", ".geojson")

    def stems(d):
        out = {}
        for name in os.listdir(d):
            stem, ext = os.path.splitext(name)
            if ext in known:
                out[stem] = os.path.join(d, name)
        return out

    pred_stems = stems(pred)
    gt_stems = stems(gt)
    if set(pred_stems) != set(gt_stems):
        missing = set(pred_stems) ^ set(gt_stems)
        raise ValidationError(f"eval: unpaired image ids across directories: {sorted(missing)}")
    if not pred_stems:
        raise ValidationError("eval: no evaluable files found")
    return [(s, pred_stems[s], gt_stems[s]) for s in sorted(pred_stems)]


def run_eval(cfg: dict):
    pairs = _eval_pairs(cfg["pred"], cfg["gt"])
    directory_mode = os.path.isdir(cfg["pred"])
    inputs = [p for _, p, _ in pairs] + [g for _, _, g in pairs]
    outputs = []

    def work(item):
        image_id, pred_path, gt_path = item
        pred_map = _load_instance_map(pred_path)
        gt_map = _load_instance_map(gt_path)
        match = evaluate.match_instances(pred_map, gt_map, cfg["iou"])
        rgb = evaluate.color_map(pred_map, gt_map, match) if cfg["colormap"] else None
        return image_id, match.counts, rgb

    results = _pool_map(work, pairs, cfg["threads"])
    rows = [(image_id, counts) for image_id, counts, _ in results]

    if cfg["colormap"]:
        if directory_mode:
            os.makedirs(cfg["colormap"], exist_ok=True)
            for image_id, _, rgb in results:
                path = os.path.join(cfg["colormap"], f"{image_id}.ppm")
                formats.write_ppm(path, rgb)
                outputs.append(path)
        else:
            formats.write_ppm(cfg["colormap"], results[0][2])
            outputs.append(cfg["colormap"])
    if cfg["csv"]:
        formats.atomic_write_text(cfg["csv"], evaluate.export_per_image_csv(rows))
        outputs.append(cfg["csv"])
    if cfg["report"]:
        total, f1 = evaluate.aggregate_global([c for _, c in rows])
        report = {
            "per_image": [{"image_id": i, "tp": c.tp, "fp": c.fp, "fn": c.fn} for i, c in rows],
            "global": {"tp": total.tp, "fp": total.fp, "fn": total.fn},
            "f1_percent": f1,
        }
        formats.atomic_write_text(cfg["report"], _canonical_json(report))
        outputs.append(cfg["report"])

    primary = cfg["report"] or cfg["csv"] or cfg["colormap"]
    stem = primary if directory_mode and primary == cfg["colormap"] else os.path.splitext(primary)[0]
    return inputs, outputs, stem


def run_tile(cfg: dict):
    values = formats.read_pgm_raw(cfg["raster"])
    h, w = values.shape
    size = cfg["size"]
    nodata = cfg["nodata"]
    records = dataprep.tile_index(h, w, size)

    def probe(rec):
        r0, c0 = rec.origin
        return bool((values[r0:r0 + size, c0:c0 + size] == nodata).all())

    for rec, blank in zip(records, _pool_map(probe, records, cfg["threads"])):
        rec.blank = blank
    formats.atomic_write_text(cfg["index"], _canonical_json([r.to_json() for r in records]))
    return [cfg["raster"]], [cfg["index"]], os.path.splitext(cfg["index"])[0]


def run_split(cfg: dict):
    with open(cfg["index"], "r", encoding="utf-8") as f:
        doc = json.load(f)
    if not isinstance(doc, list):
        raise ValidationError("tile index must be a JSON array of records")
    records = [dataprep.TileRecord.from_json(obj, size=0) for obj in doc]
    assigned = dataprep.kfold_assign(records, cfg["k"])
    out = cfg["out"] or cfg["index"]
    formats.atomic_write_text(out, _canonical_json([r.to_json() for r in assigned]))
    return [cfg["index"]], [out], os.path.splitext(out)[0]


def run_lossmath(cfg: dict):
    params = trainmath.LossParams(cfg["beta"], cfg["eps"], cfg["gamma1"], cfg["gamma2"], cfg["clamp"])
    pred = formats.read_pmap(cfg["pred"])
    gts = [formats.read_pgm(p) for p in cfg["gt"]]
    op = cfg["op"]
    if op == "total":
        _require(len(gts) == pred.shape[0],
                 f"lossmath total: {pred.shape[0]} channels but {len(gts)} --gt masks")
        _require(pred.shape[0] == 3, "lossmath total: expected a 3-channel stack")
        weights = trainmath.ChannelWeights(cfg["w_building"], cfg["w_border"], cfg["w_spacing"])
        losses = [trainmath.channel_loss(pred[i], gts[i], params)[0] for i in range(3)]
        value = trainmath.total_loss(losses, weights)
    else:
        _require(cfg["channel"] < pred.shape[0],
                 f"lossmath: channel {cfg['channel']} out of range for {pred.shape[0]} channels")
        plane = pred[cfg["channel"]]
        if op == "gradcheck":
            value = trainmath.gradient_check(plane, gts[0], params, cfg["step"])
        else:
            fn = {"dice": trainmath.dice_loss, "bce": trainmath.bce_loss,
                  "channel": trainmath.channel_loss}[op]
            value = fn(plane, gts[0], params)[0]
    print(f"{value:.9g}")
    return [cfg["pred"], *cfg["gt"]], [], None


def run_lr(cfg: dict):
    sched = trainmath.ScheduleParams(cfg["total_epochs"], cfg["up_epochs"], cfg["lr_init"],
                                     cfg["lr_max"], cfg["lr_final"], cfg["poly_power"],
                                     cfg["poly_lr0"])
    lines = ["epoch,lr"]
    for epoch in range(cfg["total_epochs"] + 1):
        if cfg["schedule"] == "poly":
            lr = trainmath.lr_poly(epoch, sched, recursive=bool(cfg["poly_recursive"]))
        else:
            lr = trainmath.lr_one_cycle(epoch, sched)
        lines.append(f"{epoch},{lr!r}")
    formats.atomic_write_text(cfg["out"], "\n".join(lines) + "\n")
    return [], [cfg["out"]], os.path.splitext(cfg["out"])[0]


def run_cutmix(cfg: dict):
    image_a = formats.read_pmap(cfg["image_a"])
    masks_a = TargetStack.from_probmap(formats.read_pmap(cfg["masks_a"]))
    image_b = formats.read_pmap(cfg["image_b"])
    masks_b = TargetStack.from_probmap(formats.read_pmap(cfg["masks_b"]))
    if cfg["box"] is not None:
        box = tuple(cfg["box"])
    else:
        h, w = image_a.shape[-2:]
        box = trainmath.sample_cutmix_box(h, w, np.random.default_rng(cfg["seed"]))
    mixed_image, mixed_masks = trainmath.cutmix(image_a, masks_a, image_b, masks_b, box)
    formats.write_pmap(cfg["out_image"], mixed_image)
    formats.write_pmap(cfg["out_masks"], mixed_masks.to_probmap())
    inputs = [cfg["image_a"], cfg["masks_a"], cfg["image_b"], cfg["masks_b"]]
    return inputs, [cfg["out_image"], cfg["out_masks"]], os.path.splitext(cfg["out_image"])[0]


RUNNERS = {
    "targets": run_targets,
    "fuse": run_fuse,
    "extract": run_extract,
    "eval": run_eval,
    "tile": run_tile,
    "split": run_split,
    "lossmath": run_lossmath,
    "lr": run_lr,
    "cutmix": run_cutmix,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.stage is None:
            raise ValidationError("no stage given (see --help)")
        cfg = effective_config(args.stage, args)
        inputs, outputs, primary = RUNNERS[args.stage](cfg)
        if primary is not None:
            _finish_run(args.stage, cfg, inputs, outputs, primary)
        return 0
    except ValueError as exc:
        print(f"bfx: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"bfx: i/o error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
