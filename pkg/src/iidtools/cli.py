"""Command-line front-end: decompose, train, eval, sweep, lut, flatten.

Every command writes a JSON run manifest next to its outputs recording
the full parameter set, per-image results, aggregate statistics, and
wall-clock timings. WHDR is printed as a percentage; CSV files store
fractions.
"""

import argparse
import concurrent.futures
import csv
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import filters as filt
from . import flatten as flat
from . import image as img_ops
from . import judgments as judg
from . import network as net_ops
from . import pipeline as pipe
from . import whdr as whdr_ops

DATA_ROOT_ENV = "IID_DATA_ROOT"


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (
        pipe.ConfigurationError,
        judg.IngestionError,
        net_ops.TrainingError,
        flat.SolverError,
        OSError,
        ValueError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def build_parser():
    parser = argparse.ArgumentParser(
        prog="iid",
        description="Intrinsic image decomposition: predict, filter, evaluate.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("decompose", help="decompose images into reflectance and shading")
    p.add_argument("inputs", nargs="+", help="input PNG images")
    p.add_argument("--predictor", default="rescale:0.55",
                   help="rescale:<a> | net:<weights> | image:<path>")
    p.add_argument("--guidance", default="input", help="input | flat | image:<path>")
    p.add_argument("--filter", default="none", dest="filter_spec",
                   help="none | bilateral[:sigma_s,sigma_r] | guided[:radius,eps]")
    p.add_argument("--repeats", type=int, default=None,
                   help="filter applications (default: 1 when filtering)")
    p.add_argument("--judgments", default=None,
                   help="directory of <id>.json judgment files for per-image WHDR")
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--debug-artifacts", action="store_true",
                   help="also write pre-filter intensity and guidance images")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("train", help="train the per-pixel reflectance network")
    p.add_argument("--data", default=None, help=f"dataset root (or ${DATA_ROOT_ENV})")
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--batch-size", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--delta", type=float, default=0.12)
    p.add_argument("--xi", type=float, default=0.08)
    p.add_argument("--layers", type=int, default=5)
    p.add_argument("--filters", type=int, default=32)
    p.add_argument("--subsample", type=float, default=None,
                   help="keep this fraction of comparisons per image")
    p.add_argument("--subsample-seed", type=int, default=0)
    p.add_argument("--augment-transitive", action="store_true")
    p.add_argument("--limit", type=int, default=None, help="cap the number of training images")
    p.add_argument("--out", default="weights.bin")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate reflectance predictions with WHDR")
    p.add_argument("--judgments", required=True, help="directory of <id>.json files")
    p.add_argument("--predictions", required=True,
                   help="directory of <id>[-r|-R].png reflectance images")
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--linear", action="store_true",
                   help="treat prediction images as linear instead of sRGB-encoded")
    p.add_argument("--out", default="whdr.csv", help="per-image CSV path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="parameter sweeps reported as CSV grids")
    sweep_sub = p.add_subparsers(dest="sweep_kind", required=True)

    q = sweep_sub.add_parser("rescale", help="lower-bound sweep of the rescale baseline")
    q.add_argument("--data", default=None)
    q.add_argument("--split", default="trainval", choices=["train", "val", "trainval", "test", "all"])
    q.add_argument("--a", default="0:1:0.05", help="grid, start:stop:step or comma list")
    q.add_argument("--delta", type=float, default=0.1)
    q.add_argument("--limit", type=int, default=None)
    q.add_argument("--out", default="sweep_rescale.csv")
    q.set_defaults(func=cmd_sweep_rescale)

    q = sweep_sub.add_parser("guided", help="guided-filter radius/epsilon sweep")
    q.add_argument("--data", default=None)
    q.add_argument("--split", default="trainval", choices=["train", "val", "trainval", "test", "all"])
    q.add_argument("--radius", default="1,7,45")
    q.add_argument("--eps", default="3,52")
    q.add_argument("--predictor", default="rescale:0.55")
    q.add_argument("--guidance", default="input", choices=["input", "flat"])
    q.add_argument("--delta", type=float, default=0.1)
    q.add_argument("--limit", type=int, default=None)
    q.add_argument("--out", default="sweep_guided.csv")
    q.set_defaults(func=cmd_sweep_filter, filter_kind="guided")

    q = sweep_sub.add_parser("bilateral", help="bilateral sigma_s/sigma_r sweep")
    q.add_argument("--data", default=None)
    q.add_argument("--split", default="trainval", choices=["train", "val", "trainval", "test", "all"])
    q.add_argument("--sigma-s", default="22,28")
    q.add_argument("--sigma-r", default="15,20")
    q.add_argument("--predictor", default="rescale:0.55")
    q.add_argument("--guidance", default="input", choices=["input", "flat"])
    q.add_argument("--delta", type=float, default=0.1)
    q.add_argument("--limit", type=int, default=None)
    q.add_argument("--out", default="sweep_bilateral.csv")
    q.set_defaults(func=cmd_sweep_filter, filter_kind="bilateral")

    q = sweep_sub.add_parser("hinge", help="retrain over a delta/xi lattice (long)")
    q.add_argument("--data", default=None)
    q.add_argument("--delta", default="0.08,0.10,0.12")
    q.add_argument("--xi", default="0.04,0.08")
    q.add_argument("--epochs", type=int, default=10)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--limit", type=int, default=None)
    q.add_argument("--long-run", action="store_true",
                   help="required acknowledgment that this retrains per grid point")
    q.add_argument("--out", default="sweep_hinge.csv")
    q.set_defaults(func=cmd_sweep_hinge)

    p = sub.add_parser("lut", help="export the network's color lookup table")
    p.add_argument("--weights", required=True)
    p.add_argument("--value", type=int, default=255)
    p.add_argument("--size", type=int, default=256)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_lut)

    p = sub.add_parser("flatten", help="compute the piecewise-flat image")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--alpha", type=float, default=20.0)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--kappa", type=float, default=1.2)
    p.add_argument("--sigma-aff", type=float, default=0.25)
    p.add_argument("--neighborhood", type=int, default=5)
    p.add_argument("--superpixels", type=int, default=1000)
    p.add_argument("--max-iters", type=int, default=30)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_flatten)

    return parser


# ---------------------------------------------------------------------------
# shared helpers

def _write_manifest(out_dir, payload):
    path = Path(out_dir) / "manifest.json"
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, default=_json_default)
        fh.write("\n")
    return str(path)


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if hasattr(obj, "__dataclass_fields__"):
        return {k: getattr(obj, k) for k in obj.__dataclass_fields__}
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _parse_grid(text):
    text = text.strip()
    if ":" in text:
        start, stop, step = (float(v) for v in text.split(":"))
        count = int(np.floor((stop - start) / step + 1e-9)) + 1
        return [start + i * step for i in range(count)]
    return [float(v) for v in text.split(",") if v]


def _data_root(args):
    root = args.data or os.environ.get(DATA_ROOT_ENV)
    if not root:
        raise pipe.ConfigurationError(
            f"no dataset root: pass --data or set ${DATA_ROOT_ENV}"
        )
    return Path(root)


def _scan_dataset(root):
    """Sorted (image_id, image path, judgment path) triples in the root."""
    root = Path(root)
    entries = []
    for json_path in sorted(root.glob("*.json")):
        if json_path.name.endswith(".bin.json"):
            continue
        stem = json_path.stem
        for ext in (".png", ".jpg", ".jpeg"):
            img_path = root / (stem + ext)
            if img_path.exists():
                entries.append((stem, img_path, json_path))
                break
    if not entries:
        raise pipe.ConfigurationError(f"no (image, judgments) pairs found under '{root}'")
    return entries


def _select_split(entries, which):
    ids = [e[0] for e in entries]
    split = judg.split_narihira(ids)
    wanted = {
        "train": set(split.train),
        "val": set(split.validation),
        "trainval": set(split.train) | set(split.validation),
        "test": set(split.test),
        "all": set(ids),
    }[which]
    return [e for e in entries if e[0] in wanted]


def _load_corpus(entries, limit=None):
    corpus = []
    for stem, img_path, json_path in entries[:limit]:
        corpus.append((img_ops.load_linear(img_path), judg.load_iiw_judgments(json_path)))
    return corpus


def _percent(value):
    return "n/a" if value is None else f"{100.0 * value:.2f}%"


def _filter_params(filter_spec, guidance):
    """Parse 'none' | 'bilateral[:s,r]' | 'guided[:radius,eps]' and pick
    guidance-appropriate defaults when parameters are omitted."""
    kind, _, params = filter_spec.partition(":")
    self_guided = guidance == "input"
    if kind == "none":
        return "none", None, None
    if kind == "bilateral":
        if params:
            sigma_s, sigma_r = (float(v) for v in params.split(","))
            bp = filt.BilateralParams(sigma_s, sigma_r)
        else:
            bp = filt.BILATERAL_SELF_GUIDANCE if self_guided else filt.BILATERAL_FLAT_GUIDANCE
        return "bilateral", bp, None
    if kind == "guided":
        if params:
            radius, eps = params.split(",")
            gp = filt.GuidedParams(int(radius), float(eps))
        else:
            gp = filt.GUIDED_SELF_GUIDANCE if self_guided else filt.GUIDED_FLAT_GUIDANCE
        return "guided", None, gp
    raise pipe.ConfigurationError(f"unknown filter {filter_spec!r}")


# ---------------------------------------------------------------------------
# decompose

def _decompose_one(task):
    path, spec, out_dir, debug, judgments_dir, delta = task
    img = img_ops.load_linear(path)
    result = pipe.run_pipeline(img, spec)
    stem = Path(path).stem
    out = Path(out_dir)
    written = []
    for suffix, data in (
        ("-r.png", result.r),
        ("-R.png", result.decomposition.reflectance),
        ("-S.png", result.decomposition.shading),
    ):
        target = out / (stem + suffix)
        if data.ndim == 2:
            img_ops.save_png_gray(data, target)
        else:
            img_ops.save_png_linear(data, target)
        written.append(str(target))
    if debug:
        target = out / (stem + "-r0.png")
        img_ops.save_png_gray(result.r_initial, target)
        written.append(str(target))
        if result.guidance is not None:
            target = out / (stem + "-guidance.png")
            img_ops.save_png_linear(result.guidance, target)
            written.append(str(target))
    score = None
    n_comparisons = 0
    if judgments_dir:
        jpath = Path(judgments_dir) / (stem + ".json")
        if jpath.exists():
            jset = judg.load_iiw_judgments(jpath)
            h, w = result.r.shape
            resolved = judg.resolve_points(jset, w, h)
            n_comparisons = len(resolved)
            score = whdr_ops.whdr(resolved, result.r, whdr_ops.WhdrParams(delta))
    return {
        "image_id": stem,
        "whdr": score,
        "n_comparisons": n_comparisons,
        "outputs": written,
        "timings": result.timings,
    }


def cmd_decompose(args):
    spec = _build_spec(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    _validate_inputs(args, spec)

    tasks = [
        (path, spec, str(out_dir), args.debug_artifacts, args.judgments, args.delta)
        for path in args.inputs
    ]
    start = time.perf_counter()
    if args.jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_decompose_one, tasks))
    else:
        rows = [_decompose_one(t) for t in tasks]
    rows.sort(key=lambda r: r["image_id"])
    elapsed = time.perf_counter() - start

    scores = [row["whdr"] for row in rows]
    mean, median, n_valid, n_excluded = whdr_ops.aggregate_whdr(scores)
    outputs = [f for row in rows for f in row["outputs"]]
    manifest = {
        "command": "decompose",
        "parameters": {
            "predictor": spec.predictor,
            "guidance": spec.guidance,
            "filter": spec.filter,
            "repeats": spec.repeats,
            "bilateral": spec.bilateral,
            "guided": spec.guided,
            "flatten": spec.flatten,
            "delta": args.delta,
            "jobs": args.jobs,
        },
        "per_image": rows,
        "aggregate": {
            "mean_whdr": mean,
            "median_whdr": median,
            "n_valid": n_valid,
            "n_excluded": n_excluded,
        },
        "timings": {"total_s": elapsed},
        "outputs": outputs,
    }
    manifest_path = _write_manifest(out_dir, manifest)
    for row in rows:
        note = f"  WHDR {_percent(row['whdr'])}" if row["whdr"] is not None else ""
        print(f"{row['image_id']}: wrote {len(row['outputs'])} files{note}")
    if mean is not None:
        print(f"mean WHDR {_percent(mean)}, median {_percent(median)} over {n_valid} images")
    print(f"manifest: {manifest_path}")
    return 0


def _build_spec(args):
    kind, bp, gp = _filter_params(args.filter_spec, args.guidance)
    repeats = args.repeats
    if repeats is None:
        repeats = 0 if kind == "none" else 1
    spec_kwargs = {
        "predictor": args.predictor,
        "guidance": args.guidance,
        "filter": kind,
        "repeats": repeats,
    }
    if bp is not None:
        spec_kwargs["bilateral"] = bp
    if gp is not None:
        spec_kwargs["guided"] = gp
    return pipe.PipelineSpec(**spec_kwargs)


def _validate_inputs(args, spec):
    """Fail before writing anything when a referenced file is missing."""
    for path in args.inputs:
        if not Path(path).exists():
            raise pipe.ConfigurationError(f"input image not found: '{path}'")
    kind, _, arg = spec.predictor.partition(":")
    if kind == "net":
        net_ops.load_weights(arg)
    elif kind == "image" and not Path(arg).exists():
        raise pipe.ConfigurationError(f"predictor image not found: '{arg}'")
    if spec.guidance.startswith("image:") and not Path(spec.guidance.partition(":")[2]).exists():
        raise pipe.ConfigurationError(f"guidance image not found: '{spec.guidance.partition(':')[2]}'")


# ---------------------------------------------------------------------------
# train

def cmd_train(args):
    root = _data_root(args)
    entries = _scan_dataset(root)
    ids = [e[0] for e in entries]
    split = judg.split_narihira(ids)

    out_path = Path(args.out)
    out_dir = out_path.parent if out_path.parent != Path("") else Path(".")
    out_dir.mkdir(parents=True, exist_ok=True)
    split_files = []
    for name, id_list in (
        ("train", split.train),
        ("validation", split.validation),
        ("test", split.test),
    ):
        target = out_dir / f"split-{name}.txt"
        target.write_text("".join(f"{i}\n" for i in id_list))
        split_files.append(str(target))

    train_ids = set(split.train)
    train_entries = [e for e in entries if e[0] in train_ids]
    if args.limit:
        train_entries = train_entries[:args.limit]
    if not train_entries:
        print("error: empty training split", file=sys.stderr)
        return 1

    corpus = []
    for stem, img_path, json_path in train_entries:
        jset = judg.load_iiw_judgments(json_path)
        if args.augment_transitive:
            jset = judg.augment_transitive(jset)
        if args.subsample is not None:
            jset = judg.subsample_pairs(jset, args.subsample, args.subsample_seed)
        corpus.append((img_ops.load_linear(img_path), jset))

    config = net_ops.PixelNetConfig(args.layers, args.filters)
    hinge = whdr_ops.HingeParams(args.delta, args.xi)
    start = time.perf_counter()
    net, curve = net_ops.train(
        corpus,
        config=config,
        hinge=hinge,
        epochs=args.epochs,
        batch_size=args.batch_size,
        seed=args.seed,
        learning_rate=args.lr,
    )
    elapsed = time.perf_counter() - start

    net_ops.save_weights(net, out_path)
    curve_path = out_dir / (out_path.name + ".loss.csv")
    with open(curve_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "mean_loss"])
        for epoch, loss in enumerate(curve):
            writer.writerow([epoch, f"{loss:.8f}"])

    manifest = {
        "command": "train",
        "parameters": {
            "data": str(root),
            "epochs": args.epochs,
            "batch_size": args.batch_size,
            "learning_rate": args.lr,
            "hinge": hinge,
            "config": config,
            "subsample": args.subsample,
            "augment_transitive": args.augment_transitive,
            "n_train_images": len(corpus),
        },
        "seed": args.seed,
        "loss_curve": curve,
        "timings": {"train_s": elapsed},
        "outputs": [str(out_path), str(out_path) + ".json", str(curve_path), *split_files],
    }
    manifest_path = _write_manifest(out_dir, manifest)
    print(f"trained {args.epochs} epochs on {len(corpus)} images in {elapsed:.1f}s")
    if curve:
        print(f"final mean training loss {curve[-1]:.6f}")
    print(f"weights: {out_path}\nmanifest: {manifest_path}")
    return 0


# ---------------------------------------------------------------------------
# eval

def _prediction_index(predictions_dir):
    index = {}
    for path in sorted(Path(predictions_dir).glob("*.png")):
        stem = path.stem
        for suffix in ("-r", "-R"):
            if stem.endswith(suffix):
                stem = stem[: -len(suffix)]
                break
        index.setdefault(stem, path)
    return index


def cmd_eval(args):
    predictions = _prediction_index(args.predictions)
    judgment_files = {
        p.stem: p for p in sorted(Path(args.judgments).glob("*.json"))
        if not p.name.endswith(".bin.json")
    }
    shared = sorted(set(predictions) & set(judgment_files))
    if not shared:
        print("error: no overlapping image ids between predictions and judgments",
              file=sys.stderr)
        return 1

    params = whdr_ops.WhdrParams(args.delta)
    rows = []
    start = time.perf_counter()
    for image_id in shared:
        raster = img_ops.load_png(predictions[image_id])
        linear = raster.astype(np.float64) / 255.0 if args.linear else img_ops.srgb_to_linear(raster)
        rmap = img_ops.mean_intensity(linear)
        jset = judg.load_iiw_judgments(judgment_files[image_id])
        h, w = rmap.shape
        resolved = judg.resolve_points(jset, w, h)
        score = whdr_ops.whdr(resolved, rmap, params)
        rows.append(
            {
                "image_id": image_id,
                "n_comparisons": len(resolved),
                "sum_weight": sum(c.weight for c, _, _ in resolved),
                "whdr": score,
            }
        )
    elapsed = time.perf_counter() - start

    mean, median, n_valid, n_excluded = whdr_ops.aggregate_whdr([r["whdr"] for r in rows])
    out_path = Path(args.out)
    if out_path.parent != Path(""):
        out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image_id", "n_comparisons", "sum_weight", "whdr"])
        for row in rows:
            writer.writerow(
                [
                    row["image_id"],
                    row["n_comparisons"],
                    f"{row['sum_weight']:.6f}",
                    "" if row["whdr"] is None else f"{row['whdr']:.8f}",
                ]
            )
    manifest = {
        "command": "eval",
        "parameters": {"delta": args.delta, "linear": args.linear,
                       "judgments": args.judgments, "predictions": args.predictions},
        "per_image": rows,
        "aggregate": {
            "mean_whdr": mean,
            "median_whdr": median,
            "n_valid": n_valid,
            "n_excluded": n_excluded,
        },
        "timings": {"total_s": elapsed},
        "outputs": [str(out_path)],
    }
    manifest_path = _write_manifest(out_path.parent if str(out_path.parent) else ".", manifest)
    print(f"evaluated {n_valid} images ({n_excluded} excluded without valid comparisons)")
    print(f"mean WHDR {_percent(mean)}, median {_percent(median)} at delta={args.delta}")
    print(f"report: {out_path}\nmanifest: {manifest_path}")
    return 0


# ---------------------------------------------------------------------------
# sweeps

def cmd_sweep_rescale(args):
    entries = _select_split(_scan_dataset(_data_root(args)), args.split)
    corpus = _load_corpus(entries, args.limit)
    grid = _parse_grid(args.a)
    if not grid:
        print("error: empty sweep grid", file=sys.stderr)
        return 2
    start = time.perf_counter()
    rows, argmin = pipe.sweep_rescale(corpus, grid, whdr_ops.WhdrParams(args.delta))
    elapsed = time.perf_counter() - start
    _write_sweep_csv(args.out, ["a", "mean_whdr", "n_valid", "is_argmin"],
                     [(f"{a:.6g}", _fraction(m), n) for a, m, n in rows], argmin)
    _sweep_manifest(args, "sweep rescale", rows, argmin, elapsed,
                    {"a_grid": grid, "delta": args.delta, "split": args.split})
    best = rows[argmin] if argmin is not None else None
    if best:
        print(f"argmin a={best[0]:.3g} with mean WHDR {_percent(best[1])}")
    print(f"grid: {args.out}")
    return 0


def cmd_sweep_filter(args):
    entries = _select_split(_scan_dataset(_data_root(args)), args.split)
    corpus = _load_corpus(entries, args.limit)
    if args.filter_kind == "guided":
        grid = [(int(r), float(e)) for r in _parse_grid(args.radius) for e in _parse_grid(args.eps)]
        header = ["radius", "eps", "mean_whdr", "n_valid", "is_argmin"]
    else:
        grid = [(float(s), float(r)) for s in _parse_grid(args.sigma_s) for r in _parse_grid(args.sigma_r)]
        header = ["sigma_s", "sigma_r", "mean_whdr", "n_valid", "is_argmin"]
    if not grid:
        print("error: empty sweep grid", file=sys.stderr)
        return 2

    params = whdr_ops.WhdrParams(args.delta)
    start = time.perf_counter()
    guidances = []
    for img, jset in corpus:
        if args.guidance == "flat":
            guidances.append(flat.flatten(img).image)
        else:
            guidances.append(np.asarray(img, dtype=np.float64))

    rows = []
    for value1, value2 in grid:
        scores = []
        for (img, jset), guidance in zip(corpus, guidances):
            spec_kwargs = {"predictor": args.predictor, "guidance": "input",
                           "filter": args.filter_kind, "repeats": 1}
            if args.filter_kind == "guided":
                spec_kwargs["guided"] = filt.GuidedParams(value1, value2)
            else:
                spec_kwargs["bilateral"] = filt.BilateralParams(value1, value2)
            spec = pipe.PipelineSpec(**spec_kwargs)
            r = pipe._predict(img, spec)
            if args.filter_kind == "guided":
                r = filt.guided_filter(r, img_ops.mean_intensity(guidance), spec.guided)
            else:
                r = filt.joint_bilateral(r, guidance, spec.bilateral)
            h, w = r.shape
            resolved = judg.resolve_points(jset, w, h)
            scores.append(whdr_ops.whdr(resolved, r, params))
        mean, _, n_valid, _ = whdr_ops.aggregate_whdr(scores)
        rows.append((value1, value2, mean, n_valid))
    elapsed = time.perf_counter() - start

    valid = [i for i, row in enumerate(rows) if row[2] is not None]
    argmin = min(valid, key=lambda i: rows[i][2]) if valid else None
    _write_sweep_csv(args.out, header,
                     [(v1, v2, _fraction(m), n) for v1, v2, m, n in rows], argmin)
    _sweep_manifest(args, f"sweep {args.filter_kind}", rows, argmin, elapsed,
                    {"grid": grid, "delta": args.delta, "split": args.split,
                     "predictor": args.predictor, "guidance": args.guidance})
    if argmin is not None:
        v1, v2, m, _ = rows[argmin]
        print(f"argmin ({header[0]}={v1}, {header[1]}={v2}) with mean WHDR {_percent(m)}")
    print(f"grid: {args.out}")
    return 0


def cmd_sweep_hinge(args):
    if not args.long_run:
        print("error: hinge sweeps retrain the network per grid point; "
              "pass --long-run to confirm", file=sys.stderr)
        return 2
    entries = _scan_dataset(_data_root(args))
    train_entries = _select_split(entries, "train")
    val_entries = _select_split(entries, "val")
    corpus = _load_corpus(train_entries, args.limit)
    val_corpus = _load_corpus(val_entries, args.limit)

    rows = []
    start = time.perf_counter()
    for delta in _parse_grid(args.delta):
        for xi in _parse_grid(args.xi):
            net, _ = net_ops.train(
                corpus, hinge=whdr_ops.HingeParams(delta, xi),
                epochs=args.epochs, seed=args.seed,
            )
            scores = []
            for img, jset in val_corpus:
                rmap = net_ops.forward_image(net, img)
                h, w = rmap.shape
                resolved = judg.resolve_points(jset, w, h)
                scores.append(whdr_ops.whdr(resolved, rmap))
            mean, _, n_valid, _ = whdr_ops.aggregate_whdr(scores)
            rows.append((delta, xi, mean, n_valid))
    elapsed = time.perf_counter() - start

    valid = [i for i, row in enumerate(rows) if row[2] is not None]
    argmin = min(valid, key=lambda i: rows[i][2]) if valid else None
    _write_sweep_csv(args.out, ["delta", "xi", "mean_whdr", "n_valid", "is_argmin"],
                     [(d, x, _fraction(m), n) for d, x, m, n in rows], argmin)
    _sweep_manifest(args, "sweep hinge", rows, argmin, elapsed,
                    {"epochs": args.epochs, "seed": args.seed})
    print(f"grid: {args.out}")
    return 0


def _fraction(value):
    return "" if value is None else f"{value:.8f}"


def _write_sweep_csv(path, header, rows, argmin):
    out_path = Path(path)
    if str(out_path.parent) not in ("", "."):
        out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i, row in enumerate(rows):
            writer.writerow([*row, 1 if i == argmin else 0])


def _sweep_manifest(args, command, rows, argmin, elapsed, parameters):
    out_path = Path(args.out)
    manifest = {
        "command": command,
        "parameters": parameters,
        "rows": rows,
        "argmin_row": None if argmin is None else rows[argmin],
        "timings": {"total_s": elapsed},
        "outputs": [str(out_path)],
    }
    _write_manifest(out_path.parent if str(out_path.parent) else ".", manifest)


# ---------------------------------------------------------------------------
# lookup table and flatten

def cmd_lut(args):
    net = net_ops.load_weights(args.weights)
    sweep, prediction = net_ops.lookup_table_image(net, args.value, args.size)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    input_path = out_dir / f"lut-value{args.value}-input.png"
    pred_path = out_dir / f"lut-value{args.value}-r.png"
    img_ops.save_png_linear(sweep, input_path)
    img_ops.save_png_gray(prediction, pred_path)
    manifest = {
        "command": "lut",
        "parameters": {"weights": args.weights, "value": args.value, "size": args.size},
        "outputs": [str(input_path), str(pred_path)],
        "timings": {},
    }
    _write_manifest(out_dir, manifest)
    print(f"wrote {input_path} and {pred_path}")
    return 0


def cmd_flatten(args):
    params = flat.FlattenParams(
        alpha=args.alpha,
        beta=args.beta,
        kappa=args.kappa,
        sigma_aff=args.sigma_aff,
        neighborhood=args.neighborhood,
        n_superpixels=args.superpixels,
        max_iters=args.max_iters,
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = []
    records = []
    start = time.perf_counter()
    for path in args.inputs:
        img = img_ops.load_linear(path)
        result = flat.flatten(img, params)
        stem = Path(path).stem
        flat_path = out_dir / f"{stem}-flat.png"
        img_ops.save_png_linear(result.image, flat_path)
        total, e_local, e_global, e_approx = result.energies[-1]
        meta = {
            "image_id": stem,
            "parameters": params,
            "iterations": len(result.energies) - 1,
            "converged": result.converged,
            "energy": {
                "total": total,
                "local": e_local,
                "global": e_global,
                "approx": e_approx,
            },
        }
        meta_path = out_dir / f"{stem}-flat.json"
        with open(meta_path, "w") as fh:
            json.dump(meta, fh, indent=2, default=_json_default)
            fh.write("\n")
        outputs.extend([str(flat_path), str(meta_path)])
        records.append(meta)
        print(f"{stem}: {len(result.energies) - 1} iterations, final energy {total:.4f}")
    elapsed = time.perf_counter() - start
    manifest = {
        "command": "flatten",
        "parameters": params,
        "per_image": records,
        "timings": {"total_s": elapsed},
        "outputs": outputs,
    }
    _write_manifest(out_dir, manifest)
    return 0


if __name__ == "__main__":
    sys.exit(main())
