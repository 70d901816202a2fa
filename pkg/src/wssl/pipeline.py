"""In-process orchestration of the parsing stages."""
import time
from dataclasses import dataclass

import numpy as np

from . import bench, graph, labels, segmenter, solver
from .bench import SyntheticSpec
from .errors import InvalidInputError


@dataclass
class RegionSet:
    """All regions of a collection; rows are grouped by image in image order."""

    features: np.ndarray
    image_ids: list
    rho: np.ndarray

    def __len__(self):
        return len(self.rho)

    def local_index(self):
        """Index of each region within its own image."""
        out = np.empty(len(self.rho), dtype=np.int64)
        seen = {}
        for i, img in enumerate(self.image_ids):
            out[i] = seen.get(img, 0)
            seen[img] = out[i] + 1
        return out


def segment_collection(images, image_ids, K=10, min_region_frac=0.005, seed=0):
    """Oversegment every image; returns ``(RegionSet, region_maps)``."""
    feats, ids, rhos, maps = [], [], [], []
    for img, img_id in zip(images, image_ids):
        rmap, pf = segmenter.oversegment(img, K=K, min_region_frac=min_region_frac, seed=seed)
        for d in segmenter.region_descriptors(pf, rmap, img_id):
            feats.append(d.feature)
            ids.append(img_id)
            rhos.append(d.rho)
        maps.append(rmap)
    return RegionSet(np.array(feats), ids, np.array(rhos)), maps


def build_basis(features, k, m, bandwidth=None, eigen_method="auto"):
    g = graph.build_knn_graph(features, k, bandwidth)
    L = graph.normalized_laplacian(g)
    return g, graph.spectral_basis(L, m, method=eigen_method)


def parse_regions(regions, tags, basis, alpha=0.05, params=None, method="wssl",
                  region_graph=None, lgc_alpha=0.99):
    """Smooth tag-derived labels and denoise them.

    Returns ``(scores, report)`` where ``report`` is a dict of diagnostics.
    """
    t0 = time.perf_counter()
    Ybar, ctx = labels.smooth_labels(regions.image_ids, regions.rho, tags, alpha)
    t1 = time.perf_counter()
    report = {"context_warnings": list(ctx.warnings)}
    if method == "wssl":
        scores, rep = solver.wssl_solve(basis, Ybar, params)
        report["solver"] = rep.as_dict()
    elif method == "lgc":
        if region_graph is None:
            raise InvalidInputError("label propagation needs the region graph")
        scores = solver.lgc_baseline(region_graph, Ybar, lgc_alpha)
    else:
        raise InvalidInputError(f"unknown method {method!r}")
    report["timings"] = {"smooth": t1 - t0, "solve": time.perf_counter() - t1}
    return scores, report


def evaluate(scores, region_maps, gt_maps, n_categories):
    assigned, zero = bench.assign_labels(scores)
    pred = bench.region_labels_to_maps(assigned, region_maps)
    per, avg = bench.evaluate_pixel_accuracy(pred, gt_maps, n_categories)
    return bench.ParseResult(region_labels=assigned, pixel_maps=pred, per_category=per,
                             average=avg, zero_rows=zero)


def noise_sweep(spec, noise_levels=(0, 25, 50, 75, 100), seeds=range(10), k=10, m=35,
                alpha=0.05, params=None, lgc_alpha=0.99, segment_kw=None):
    """Accuracy of WSSL and label propagation over tag-noise levels and seeds.

    Each seed draws a fresh synthetic collection; segmentation and the graph
    are shared by all noise levels of that seed. Returns a list of row dicts.
    """
    segment_kw = segment_kw or {}
    rows = []
    for seed in seeds:
        s = SyntheticSpec(**{**spec.__dict__, "seed": int(seed)}) if spec else SyntheticSpec(seed=int(seed))
        images, gts, tags = bench.synth_dataset(s)
        regions, maps = segment_collection(images, tags.image_ids, seed=int(seed), **segment_kw)
        g, basis = build_basis(regions.features, k, m)
        for p in noise_levels:
            noisy = bench.inject_tag_noise(tags, p, seed=int(seed))
            row = {"seed": int(seed), "noise": p, "n_regions": len(regions)}
            for method in ("wssl", "lgc"):
                scores, rep = parse_regions(regions, noisy, basis, alpha, params, method=method,
                                            region_graph=g, lgc_alpha=lgc_alpha)
                row[method] = evaluate(scores, maps, gts, tags.n_categories).average
                if method == "wssl":
                    row["iterations"] = rep["solver"]["iterations"]
            rows.append(row)
    return rows
