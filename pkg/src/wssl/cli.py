"""Command-line entry point.

Subcommands: synth, noise, segment, graph, parse, baseline-lgc, eval,
pipeline and sweep. Exit codes: 0 success, 1 usage, 2 data error,
3 numerical failure.
"""
import argparse
import json
import logging
import os
import shutil
import sys
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import bench, formats, graph, pipeline, plotting
from .config import RunConfig, parse_config, public_keys
from .errors import ConfigError, InvalidInputError, NumericalError, WSSLError

log = logging.getLogger("wssl")


class UsageError(ConfigError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


class StageError(WSSLError):
    def __init__(self, stage, exc):
        super().__init__(f"stage '{stage}' failed: {exc}")
        self.exit_code = getattr(exc, "exit_code", 2)


@contextmanager
def stage(name, timings=None):
    t0 = time.perf_counter()
    try:
        yield
    except WSSLError as exc:
        raise StageError(name, exc) from exc
    except OSError as exc:
        raise StageError(name, InvalidInputError(str(exc))) from exc
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        raise StageError(name, NumericalError(str(exc))) from exc
    if timings is not None:
        timings[name] = round(time.perf_counter() - t0, 6)


@contextmanager
def staged_output(out):
    """Write into a scratch directory; move into ``out`` only on success."""
    out = Path(out)
    tmp = out.parent / f".{out.name}.partial-{os.getpid()}"
    if tmp.exists():
        shutil.rmtree(tmp)
    tmp.mkdir(parents=True)
    try:
        yield tmp
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    out.mkdir(parents=True, exist_ok=True)
    for entry in sorted(tmp.iterdir()):
        dest = out / entry.name
        if dest.is_dir() and not dest.is_symlink():
            shutil.rmtree(dest)
        os.replace(entry, dest)
    tmp.rmdir()


def _write_report(path, report):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(report, fh, indent=2, default=_jsonable)
        fh.write("\n")


def _jsonable(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(type(x))


def _config_from(args):
    overrides = {}
    for key in public_keys():
        dest = key.replace("-", "_")
        val = getattr(args, dest, None)
        if val is not None:
            overrides[key] = val
    return parse_config(getattr(args, "config", None), overrides)


# --- stages shared by subcommands -------------------------------------------------

def do_segment(cfg, images_dir, out_dir, timings):
    files = formats.list_images(images_dir)
    ids = [p.stem for p in files]
    with stage("segment", timings):
        imgs = [formats.read_image(p) for p in files]
        regions, maps = pipeline.segment_collection(
            imgs, ids, K=cfg.n_components, min_region_frac=cfg.min_region_frac, seed=cfg.seed)
        rdir = formats.ensure_dir(Path(out_dir) / "regions")
        for img_id, rmap in zip(ids, maps):
            formats.write_pgm(rdir / f"{img_id}.pgm", rmap, maxval=65535)
        formats.write_regions(Path(out_dir) / "regions.tsv", regions)
    return regions, maps, ids, imgs


def do_graph(cfg, regions, timings, cache_path=None):
    bw = cfg.bandwidth or None
    key = graph.cache_key(regions.features, cfg.k, cfg.m, bw)
    if cache_path and Path(cache_path).exists():
        with stage("graph", timings):
            hit = graph.load_cache(cache_path, key)
        if hit is not None:
            return hit + ({"cache": "hit"},)
    with stage("graph", timings):
        g = graph.build_knn_graph(regions.features, cfg.k, bw)
    with stage("spectral", timings):
        L = graph.normalized_laplacian(g)
        basis = graph.spectral_basis(L, cfg.m, method=cfg.eigen)
        res = graph.basis_residuals(L, basis)
    info = {"n_regions": g.n, "nnz": int(g.W.nnz), "bandwidth": g.bandwidth,
            "eigenvalues": basis.values.tolist(), "max_residual": float(res.max())}
    if cache_path:
        graph.save_cache(cache_path, key, g, basis)
        info["cache"] = "written"
    return g, basis, info


def image_order(region_image_ids):
    seen = []
    for img in region_image_ids:
        if not seen or seen[-1] != img:
            if img in seen:
                raise InvalidInputError(f"regions of image {img!r} are not contiguous")
            seen.append(img)
    return seen


def do_parse(cfg, regions, tags, g, basis, out_dir, timings, region_maps=None, report=None):
    report = {} if report is None else report
    with stage("parse", timings):
        scores, rep = pipeline.parse_regions(
            regions, tags, basis, alpha=cfg.alpha, params=cfg.solver_params(), method=cfg.method,
            region_graph=g, lgc_alpha=cfg.lgc_alpha)
        assigned, zero = bench.assign_labels(scores)
        formats.write_labels(Path(out_dir) / "labels.tsv", assigned, scores)
    report.update(rep)
    report["zero_rows"] = zero
    pred = None
    if region_maps is not None:
        with stage("label-maps", timings):
            pred = bench.region_labels_to_maps(assigned, region_maps)
            pdir = formats.ensure_dir(Path(out_dir) / "pred")
            for img_id, pm in zip(image_order(regions.image_ids), pred):
                formats.write_pgm(pdir / f"{img_id}.pgm", pm, maxval=255)
    if cfg.figures and "solver" in rep:
        fdir = formats.ensure_dir(Path(out_dir) / "figures")
        plotting.plot_convergence(rep["solver"]["objectives"], fdir / "convergence.png")
    return assigned, scores, pred, report


def do_eval(pred_maps, gt_maps, n_categories, out_dir, figures, timings):
    with stage("eval", timings):
        per, avg = bench.evaluate_pixel_accuracy(pred_maps, gt_maps, n_categories or None)
    if out_dir is not None:
        with open(Path(out_dir) / "accuracy.tsv", "w", encoding="utf-8", newline="\n") as fh:
            fh.write("category\taccuracy\n")
            for c, a in per.items():
                fh.write(f"{c}\t{a!r}\n")
            fh.write(f"average\t{avg!r}\n")
        if figures:
            fdir = formats.ensure_dir(Path(out_dir) / "figures")
            plotting.plot_accuracy(per, fdir / "accuracy.png", average=avg)
    return {"per_category": {str(c): a for c, a in per.items()}, "average": avg}


# --- subcommands ------------------------------------------------------------------

def cmd_synth(args):
    cfg = _config_from(args)
    spec = bench.SyntheticSpec(n_images=args.n_images, n_categories=cfg.n_categories or 6,
                               size=args.size, blobs=(args.blobs_min, args.blobs_max), seed=cfg.seed)
    images, gts, tags = bench.synth_dataset(spec)
    with staged_output(cfg.out) as tmp:
        idir, gdir = formats.ensure_dir(tmp / "images"), formats.ensure_dir(tmp / "gt")
        for img_id, im, gt in zip(tags.image_ids, images, gts):
            formats.write_ppm(idir / f"{img_id}.ppm", im)
            formats.write_pgm(gdir / f"{img_id}.pgm", gt, maxval=255)
        formats.write_tags(tmp / "tags.tsv", tags)
    print(f"wrote {len(images)} images, {tags.n_categories} categories to {cfg.out}")


def cmd_noise(args):
    cfg = _config_from(args)
    tags = formats.read_tags(cfg.tags, cfg.n_categories)
    noisy = bench.inject_tag_noise(tags, cfg.noise, seed=cfg.seed)
    changed = sum(a != b for a, b in zip(tags.tags, noisy.tags))
    formats.write_tags(cfg.out, noisy)
    print(f"added a wrong tag to {changed} of {tags.n_images} images -> {cfg.out}")


def cmd_segment(args):
    cfg = _config_from(args)
    timings = {}
    with staged_output(cfg.out) as tmp:
        regions, maps, ids, _ = do_segment(cfg, cfg.images, tmp, timings)
        _write_report(tmp / "report.json", {"config": cfg.to_dict(), "n_images": len(ids),
                                            "n_regions": len(regions), "timings": timings})
    print(f"{len(ids)} images -> {len(regions)} regions in {cfg.out}")


def cmd_graph(args):
    cfg = _config_from(args)
    regions = formats.read_regions(args.regions)
    out = cfg.cache or cfg.out
    if not str(out).endswith(".npz"):
        out = str(Path(out) / "graph.npz")
        formats.ensure_dir(Path(out).parent)
    timings = {}
    _, _, info = do_graph(cfg, regions, timings, cache_path=out)
    print(json.dumps({"graph": out, **{k: v for k, v in info.items() if k != "eigenvalues"},
                      "timings": timings}, indent=2))


def _parse_like(args, method):
    cfg = _config_from(args)
    cfg.method = method
    timings = {}
    with stage("load", timings):
        regions = formats.read_regions(args.regions)
        tags = formats.read_tags(cfg.tags, cfg.n_categories)
        maps = None
        if args.region_maps:
            maps = formats.read_map_dir(args.region_maps, image_order(regions.image_ids))
    report = {"config": cfg.to_dict()}
    with staged_output(cfg.out) as tmp:
        g, basis, info = do_graph(cfg, regions, timings, cache_path=cfg.cache or None)
        report["graph"] = info
        do_parse(cfg, regions, tags, g, basis, tmp, timings, maps, report)
        report["timings"] = timings
        _write_report(tmp / "report.json", report)
    _summary(report)


def cmd_parse(args):
    _parse_like(args, "wssl")


def cmd_baseline(args):
    _parse_like(args, "lgc")


def cmd_eval(args):
    cfg = _config_from(args)
    pred_dir = Path(args.pred)
    ids = sorted(p.stem for p in pred_dir.glob("*.pgm"))
    if not ids:
        raise InvalidInputError(f"{pred_dir}: no .pgm label maps")
    timings = {}
    pred = formats.read_map_dir(pred_dir, ids)
    gt = formats.read_map_dir(cfg.gt, ids)
    out = Path(args.report_dir) if args.report_dir else None
    if out is not None:
        with staged_output(out) as tmp:
            acc = do_eval(pred, gt, cfg.n_categories, tmp, cfg.figures, timings)
            _write_report(tmp / "eval.json", acc)
    else:
        acc = do_eval(pred, gt, cfg.n_categories, None, False, timings)
    for c, a in acc["per_category"].items():
        print(f"{c:>10} : {a:6.2f}")
    print(f"{'average':>10} : {acc['average']:6.2f}")


def cmd_pipeline(args):
    cfg = _config_from(args)
    if not cfg.images or not cfg.tags:
        raise UsageError("pipeline needs images and tags")
    timings = {}
    report = {"config": cfg.to_dict()}
    with staged_output(cfg.out) as tmp:
        regions, maps, ids, imgs = do_segment(cfg, cfg.images, tmp, timings)
        with stage("labels", timings):
            tags = formats.read_tags(cfg.tags, cfg.n_categories)
            if cfg.noise > 0:
                tags = bench.inject_tag_noise(tags, cfg.noise, seed=cfg.seed)
                formats.write_tags(tmp / "tags_used.tsv", tags)
        g, basis, info = do_graph(cfg, regions, timings, cache_path=cfg.cache or None)
        report["graph"] = info
        _, _, pred, _ = do_parse(cfg, regions, tags, g, basis, tmp, timings, maps, report)
        if cfg.gt:
            gt = formats.read_map_dir(cfg.gt, ids)
            report["accuracy"] = do_eval(pred, gt, tags.n_categories, tmp, cfg.figures, timings)
            if cfg.figures:
                fdir = formats.ensure_dir(tmp / "figures")
                for i in range(min(3, len(ids))):
                    plotting.plot_parse(imgs[i], pred[i], fdir / f"parse_{ids[i]}.png", gt=gt[i])
        report["timings"] = timings
        _write_report(tmp / "report.json", report)
    _summary(report)


def cmd_sweep(args):
    cfg = _config_from(args)
    spec = bench.SyntheticSpec(n_images=args.n_images, n_categories=cfg.n_categories or 6,
                               size=args.size)
    levels = [float(x) for x in args.levels.split(",")]
    rows = pipeline.noise_sweep(spec, levels, seeds=range(cfg.seed, cfg.seed + args.seeds),
                                k=cfg.k, m=cfg.m, alpha=cfg.alpha, params=cfg.solver_params(),
                                lgc_alpha=cfg.lgc_alpha,
                                segment_kw={"K": cfg.n_components,
                                            "min_region_frac": cfg.min_region_frac})
    with staged_output(cfg.out) as tmp:
        with open(tmp / "sweep.tsv", "w", encoding="utf-8", newline="\n") as fh:
            fh.write("seed\tnoise\tn_regions\twssl\tlgc\titerations\n")
            for r in rows:
                fh.write(f"{r['seed']}\t{r['noise']!r}\t{r['n_regions']}\t{r['wssl']!r}\t"
                         f"{r['lgc']!r}\t{r['iterations']}\n")
        if cfg.figures:
            plotting.plot_noise_sweep(rows, formats.ensure_dir(tmp / "figures") / "noise_sweep.png")
    for p in levels:
        sel = [r for r in rows if r["noise"] == p]
        print(f"noise {p:5.1f}%  wssl {np.mean([r['wssl'] for r in sel]):6.2f}  "
              f"lgc {np.mean([r['lgc'] for r in sel]):6.2f}")


def _summary(report):
    out = {}
    if "solver" in report:
        s = report["solver"]
        out.update(iterations=s["iterations"], converged=s["converged"])
    if "accuracy" in report:
        out["average_accuracy"] = report["accuracy"]["average"]
    out["timings"] = report.get("timings", {})
    print(json.dumps(out, indent=2))


# --- argument parsing -------------------------------------------------------------

def _config_parent():
    p = _Parser(add_help=False)
    p.add_argument("--config", help="key = value configuration file")
    defaults = RunConfig()
    for key in public_keys():
        dest = key
        field = "lam" if key == "lambda" else key
        default = getattr(defaults, field)
        flags = [f"--{key}"] + ([f"--{key.replace('_', '-')}"] if "_" in key else [])
        p.add_argument(*flags, dest=dest, default=None, metavar=type(default).__name__.upper(),
                       help=f"(default: {default!r})")
    return p


def build_parser():
    parent = _config_parent()
    parser = _Parser(prog="wssl", description="Weakly supervised sparse learning for noisily tagged image parsing.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("synth", parents=[parent], help="generate a synthetic tagged collection")
    p.add_argument("--n_images", "--n-images", type=int, default=60)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--blobs_min", type=int, default=1)
    p.add_argument("--blobs_max", type=int, default=3)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("noise", parents=[parent], help="add wrong tags to a percentage of images")
    p.set_defaults(func=cmd_noise)

    p = sub.add_parser("segment", parents=[parent], help="oversegment images, write regions.tsv")
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("graph", parents=[parent], help="build k-NN graph and spectral basis cache")
    p.add_argument("--regions", required=True)
    p.set_defaults(func=cmd_graph)

    for name, func, text in (("parse", cmd_parse, "run WSSL on a region table"),
                             ("baseline-lgc", cmd_baseline, "run label propagation on a region table")):
        p = sub.add_parser(name, parents=[parent], help=text)
        p.add_argument("--regions", required=True)
        p.add_argument("--region_maps", "--region-maps", default=None,
                       help="directory of 16-bit region maps for per-pixel output")
        p.set_defaults(func=func)

    p = sub.add_parser("eval", parents=[parent], help="pixel accuracy of predicted label maps")
    p.add_argument("--pred", required=True)
    p.add_argument("--report_dir", "--report-dir", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("pipeline", parents=[parent], help="segment, parse and evaluate in one run")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("sweep", parents=[parent], help="synthetic tag-noise sweep, WSSL vs label propagation")
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--levels", default="0,25,50,75,100")
    p.add_argument("--n_images", "--n-images", type=int, default=60)
    p.add_argument("--size", type=int, default=64)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except WSSLError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
